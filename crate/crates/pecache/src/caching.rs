//! Cache placements that survive premise erasure.
//!
//! Two families:
//!
//! * **Derivation-constrained caches** store facts (base or derived).
//!   A cached derived fact absorbs every base leaf below it: the query can
//!   be re-derived without those leaves. Placement is layer-prefix style
//!   for uniform erasure and water-filling for per-fact erasure profiles.
//! * **Coded caches** store `r` Reed-Solomon parity symbols over a prime
//!   field for the `kappa` dependency symbols; any `e <= r` erasures among
//!   the dependencies are recovered exactly, and `e > r` never is, so the
//!   failure law is exactly `Pr[Bin(kappa, eps) > r]`.

use crate::datalog::{
    build_dag, coord_bits, derivation_depth, Arch, ArchKind, Depth, DerivationDag, Fact,
};
use crate::erasure::{budget, cost, resilience_threshold, ErasureSpec, NoisyBase};
use crate::numerics::binom_sf;
use crate::{Accounting, Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

// ---------------------------------------------------------------------------
// Prime-field arithmetic
// ---------------------------------------------------------------------------

/// Arithmetic modulo a prime `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gf {
    pub p: u64,
}

impl Gf {
    pub fn new(p: u64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::InvalidParam(format!("{p} is not prime")));
        }
        Ok(Gf { p })
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        (a as u128 * b as u128 % self.p as u128) as u64
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base %= self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat; `a` must be nonzero mod `p`.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(a % self.p != 0);
        self.pow(a, self.p - 2)
    }
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Smallest prime strictly greater than `m` (by Bertrand, below `2m`).
pub fn choose_field_prime(m: u64) -> u64 {
    let mut q = m + 1;
    while !is_prime(q) {
        q += 1;
    }
    q
}

// ---------------------------------------------------------------------------
// Systematic Reed-Solomon erasure code
// ---------------------------------------------------------------------------

/// Lagrange denominators `D_i = prod_{l != i} (x_i - x_l)` for distinct
/// points `xs`.
fn lagrange_denoms(gf: &Gf, xs: &[u64]) -> Vec<u64> {
    let n = xs.len();
    let mut d = vec![1u64; n];
    for i in 0..n {
        for l in 0..n {
            if l != i {
                d[i] = gf.mul(d[i], gf.sub(xs[i], xs[l]));
            }
        }
    }
    d
}

/// Evaluates the unique degree-`< n` polynomial through `(xs, ys)` at `x`
/// (with `x` not among `xs`), given precomputed denominators.
fn lagrange_eval(gf: &Gf, xs: &[u64], ys: &[u64], denoms: &[u64], x: u64) -> u64 {
    let mut w = 1u64;
    for &xl in xs {
        w = gf.mul(w, gf.sub(x, xl));
    }
    let mut acc = 0u64;
    for i in 0..xs.len() {
        let denom = gf.mul(gf.sub(x, xs[i]), denoms[i]);
        acc = gf.add(acc, gf.mul(ys[i], gf.mul(w, gf.inv(denom))));
    }
    acc
}

/// Systematic `(kappa + r, kappa)` Reed-Solomon encode over `GF(prime)`:
/// symbol `j` is the value at evaluation point `j` of the unique
/// degree-`< kappa` polynomial through the message, and the `r` parity
/// symbols are its values at points `kappa..kappa+r`. Requires
/// `kappa + r <= prime` so the points are distinct field elements.
pub fn rs_encode(symbols: &[u64], r: usize, prime: u64) -> Result<Vec<u64>> {
    let gf = Gf::new(prime)?;
    let kappa = symbols.len();
    if kappa == 0 {
        return Err(Error::InvalidParam("empty message".into()));
    }
    if (kappa + r) as u64 > prime {
        return Err(Error::Range(format!(
            "code length {} exceeds field size {prime}",
            kappa + r
        )));
    }
    if symbols.iter().any(|&s| s >= prime) {
        return Err(Error::InvalidParam("symbol outside field".into()));
    }
    let xs: Vec<u64> = (0..kappa as u64).collect();
    let denoms = lagrange_denoms(&gf, &xs);
    Ok((kappa as u64..(kappa + r) as u64)
        .map(|x| lagrange_eval(&gf, &xs, symbols, &denoms, x))
        .collect())
}

/// Erasure decode: `received[j]` is the systematic symbol at position `j`
/// or `None` if erased. Succeeds (returning the full message) iff the
/// number of erasures is at most `r = parity.len()`; recovery
/// interpolates through the surviving systematic symbols plus as many
/// parity symbols as there are erasures.
pub fn rs_decode(received: &[Option<u64>], parity: &[u64], prime: u64) -> Result<Vec<u64>> {
    let gf = Gf::new(prime)?;
    let kappa = received.len();
    let r = parity.len();
    if (kappa + r) as u64 > prime {
        return Err(Error::Range(format!(
            "code length {} exceeds field size {prime}",
            kappa + r
        )));
    }
    let erased: Vec<usize> = (0..kappa).filter(|&j| received[j].is_none()).collect();
    let e = erased.len();
    if e > r {
        return Err(Error::Decode(format!("{e} erasures exceed {r} parity symbols")));
    }
    if e == 0 {
        return Ok(received.iter().map(|s| s.unwrap()).collect());
    }
    let mut xs = Vec::with_capacity(kappa);
    let mut ys = Vec::with_capacity(kappa);
    for (j, s) in received.iter().enumerate() {
        if let Some(y) = s {
            if *y >= prime {
                return Err(Error::InvalidParam("symbol outside field".into()));
            }
            xs.push(j as u64);
            ys.push(*y);
        }
    }
    for i in 0..e {
        xs.push((kappa + i) as u64);
        ys.push(parity[i]);
    }
    let denoms = lagrange_denoms(&gf, &xs);
    let mut out: Vec<u64> = received.iter().map(|s| s.unwrap_or(0)).collect();
    for &j in &erased {
        out[j] = lagrange_eval(&gf, &xs, &ys, &denoms, j as u64);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Exact error laws
// ---------------------------------------------------------------------------

/// Failure probability of an uncoded scheme exposed to `n` independent
/// rate-`eps` erasures: `1 - (1-eps)^n`.
pub fn unc_error_exact(n: u64, eps: f64) -> f64 {
    1.0 - (1.0 - eps).powf(n as f64)
}

/// Failure probability of an MDS-coded cache with `r` parity symbols over
/// `kappa` dependencies: `Pr[Bin(kappa, eps) > r]`.
pub fn coded_error_exact(kappa: u64, eps: f64, r: u64) -> f64 {
    binom_sf(kappa, r.min(kappa), eps)
}

/// Smallest parity count `r` with `Pr[Bin(kappa, eps) > r] <= delta`,
/// by exact binomial CDF inversion.
pub fn min_parity_count(kappa: u64, eps: f64, delta: f64) -> Result<u64> {
    if !(0.0..1.0).contains(&eps) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParam("need eps in [0,1), delta in (0,1)".into()));
    }
    let (mut lo, mut hi) = (0u64, kappa);
    // coded_error_exact is nonincreasing in r; sf(kappa) = 0 <= delta.
    while lo < hi {
        let mid = (lo + hi) / 2;
        if coded_error_exact(kappa, eps, mid) <= delta {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

// ---------------------------------------------------------------------------
// Derivation-constrained caches
// ---------------------------------------------------------------------------

/// A cache of stored facts together with its leaf-protection accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationCache {
    /// Stored facts (base or derived).
    pub facts: BTreeSet<Fact>,
    /// Storage charge in bits under the chosen accounting.
    pub storage_bits: f64,
    /// Base leaves of the target query absorbed or directly protected.
    pub protected_leaves: BTreeSet<u32>,
    /// Leaves the decoder still needs to survive.
    pub exposed_count: u64,
}

fn per_coord_bits(m: u32, accounting: Accounting) -> f64 {
    match accounting {
        Accounting::Ideal => (m as f64).log2(),
        Accounting::Integer => coord_bits(m) as f64,
    }
}

/// Plans a derivation-constrained cache for a query under uniform
/// erasure: leave at most `N*(eps, delta)` leaves exposed.
///
/// Chain queries cache the single shallowest prefix intermediate whose
/// subtree absorbs at least `kappa - N*` distinct leaves; merge queries
/// cache leftmost depth-1 nodes until at most `N*` leaves remain
/// uncovered. With `kappa <= N*` the cache is empty.
pub fn plan_derivation_cache(
    q: &Fact,
    m: u32,
    arch: &Arch,
    eps: f64,
    delta: f64,
    accounting: Accounting,
) -> Result<DerivationCache> {
    let dag = build_dag(q, m, arch)?;
    let n_star = if eps == 0.0 { u64::MAX } else { resilience_threshold(eps, delta)? };
    let kappa = dag.kappa;
    let bits = per_coord_bits(m, accounting);
    if kappa <= n_star {
        return Ok(DerivationCache {
            facts: BTreeSet::new(),
            storage_bits: 0.0,
            protected_leaves: BTreeSet::new(),
            exposed_count: kappa,
        });
    }
    let tuple = match q {
        Fact::Idb { tuple, .. } => tuple,
        Fact::Edb(_) => unreachable!("build_dag rejects base facts"),
    };
    let need = kappa - n_star;
    let mut facts = BTreeSet::new();
    let mut protected: BTreeSet<u32> = BTreeSet::new();
    match arch.kind {
        ArchKind::Chain => {
            let d = q.depth();
            for j in 1..=d {
                let prefix = &tuple[..(arch.k + j - 1) as usize];
                let distinct: BTreeSet<u32> = prefix.iter().copied().collect();
                if distinct.len() as u64 >= need {
                    facts.insert(Fact::idb(j, prefix.to_vec()));
                    protected = distinct;
                    break;
                }
            }
        }
        ArchKind::Merge => {
            let k = arch.k as usize;
            for chunk in tuple.chunks(k) {
                if dag.leaves.iter().filter(|i| !protected.contains(i)).count() as u64 <= n_star {
                    break;
                }
                facts.insert(Fact::idb(1, chunk.to_vec()));
                protected.extend(chunk.iter().copied());
            }
        }
    }
    let storage_bits: f64 = facts
        .iter()
        .map(|f| match f {
            Fact::Idb { tuple, .. } => tuple.len() as f64 * bits,
            Fact::Edb(_) => bits,
        })
        .sum();
    let exposed_count = dag.leaves.difference(&protected).count() as u64;
    Ok(DerivationCache { facts, storage_bits, protected_leaves: protected, exposed_count })
}

/// Water-filling placement for a per-fact erasure profile: protect the
/// `kappa*` most vulnerable leaves directly, where `kappa*` is the least
/// count whose unprotected remainder fits the cost budget `C(delta)`.
/// Ties in cost break toward the lower index.
pub fn water_filling_cache(
    q: &Fact,
    m: u32,
    arch: &Arch,
    spec: &ErasureSpec,
    delta: f64,
    accounting: Accounting,
) -> Result<DerivationCache> {
    spec.validate()?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParam(format!("delta must lie in (0,1), got {delta}")));
    }
    let dag = build_dag(q, m, arch)?;
    let mut leaves: Vec<(u32, f64)> = dag
        .leaves
        .iter()
        .map(|&i| spec.rate(i).map(|e| (i, cost(e))))
        .collect::<Result<_>>()?;
    // Most vulnerable first; ties toward the lower index.
    leaves.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let cap = budget(delta);
    let kappa = leaves.len();
    // kappa*: smallest protected count whose remainder cost fits.
    let mut kappa_star = kappa;
    for t in 0..=kappa {
        let rest: f64 = leaves[t..].iter().map(|&(_, c)| c).sum();
        if rest <= cap {
            kappa_star = t;
            break;
        }
    }
    let protected: BTreeSet<u32> = leaves[..kappa_star].iter().map(|&(i, _)| i).collect();
    let facts: BTreeSet<Fact> = protected.iter().map(|&i| Fact::Edb(i)).collect();
    Ok(DerivationCache {
        storage_bits: kappa_star as f64 * per_coord_bits(m, accounting),
        exposed_count: (kappa - kappa_star) as u64,
        facts,
        protected_leaves: protected,
    })
}

/// Decode under a derivation-constrained cache: the query succeeds iff it
/// is derivable from the surviving (possibly polluted) base plus the
/// cached facts.
pub fn derivation_decode(q: &Fact, noisy: &NoisyBase, cache: &DerivationCache, arch: &Arch) -> Result<bool> {
    let mut kb = noisy.to_kb()?;
    kb.facts.extend(cache.facts.iter().cloned());
    Ok(matches!(derivation_depth(q, &kb, arch), Depth::Finite(_)))
}

/// Structural rigidity: only the part of a cache inside the query's
/// derivation DAG can ever matter, so restrict to it.
pub fn rigidity_restrict(cache: &BTreeSet<Fact>, dag: &DerivationDag) -> BTreeSet<Fact> {
    cache.iter().filter(|f| dag.vertices.contains_key(f)).cloned().collect()
}

/// Exposed leaves of `q` under a cache: the DAG leaves not absorbed by
/// any cached in-DAG fact. Decode succeeds iff every exposed leaf
/// survives.
pub fn exposed_leaves(q: &Fact, m: u32, arch: &Arch, cache: &BTreeSet<Fact>) -> Result<BTreeSet<u32>> {
    let dag = build_dag(q, m, arch)?;
    let mut absorbed: BTreeSet<u32> = BTreeSet::new();
    for f in rigidity_restrict(cache, &dag) {
        match f {
            Fact::Edb(i) => {
                absorbed.insert(i);
            }
            Fact::Idb { ref tuple, .. } => absorbed.extend(tuple.iter().copied()),
        }
    }
    Ok(dag.leaves.difference(&absorbed).copied().collect())
}

// ---------------------------------------------------------------------------
// Coded caches
// ---------------------------------------------------------------------------

mod hex_symbols {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[u64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| format!("{x:x}")).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u64>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| u64::from_str_radix(s, 16).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// A Reed-Solomon parity cache over the dependency leaves of a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodedCache {
    /// Dependency base indices, in ascending order (the systematic word).
    pub dep_indices: Vec<u32>,
    /// Parity symbol count.
    pub r: u64,
    /// Field modulus.
    pub prime: u64,
    /// Parity symbols, hex-encoded on disk.
    #[serde(with = "hex_symbols")]
    pub parity: Vec<u64>,
    /// Storage charge in bits under the chosen accounting.
    pub storage_bits: f64,
}

/// Plans a coded cache: `r* = min_parity_count(kappa, eps, delta)` parity
/// symbols over the smallest prime admitting `kappa + r*` evaluation
/// points (and exceeding `m` so every index is a field element).
pub fn plan_coded_cache(
    deps: &[u32],
    eps: f64,
    delta: f64,
    m: u32,
    accounting: Accounting,
) -> Result<CodedCache> {
    let mut dep_indices = deps.to_vec();
    dep_indices.sort_unstable();
    dep_indices.dedup();
    let kappa = dep_indices.len() as u64;
    if kappa == 0 {
        return Err(Error::InvalidParam("empty dependency set".into()));
    }
    let r = min_parity_count(kappa, eps, delta)?;
    let prime = choose_field_prime((m as u64).max(kappa + r - 1).max(1));
    let symbols: Vec<u64> = dep_indices.iter().map(|&i| i as u64).collect();
    let parity = rs_encode(&symbols, r as usize, prime)?;
    let storage_bits = match accounting {
        Accounting::Ideal => r as f64 * (m as f64).log2(),
        Accounting::Integer => r as f64 * (prime as f64).log2().ceil(),
    };
    Ok(CodedCache { dep_indices, r, prime, parity, storage_bits })
}

/// Decode under a coded cache: recover all dependency indices from the
/// surviving ones plus parity. Fails iff more than `r` dependencies were
/// erased.
pub fn coded_decode(cache: &CodedCache, noisy: &NoisyBase) -> Result<Vec<u32>> {
    let received: Vec<Option<u64>> = cache
        .dep_indices
        .iter()
        .map(|&i| if noisy.survives(i) { Some(i as u64) } else { None })
        .collect();
    let out = rs_decode(&received, &cache.parity, cache.prime)?;
    Ok(out.into_iter().map(|x| x as u32).collect())
}

// ---------------------------------------------------------------------------
// Joint (multi-query) planning
// ---------------------------------------------------------------------------

/// Shared cache plan for `L` dependency sets: size the cache for the
/// union rather than per query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPlan {
    pub l: u64,
    /// Distinct facts in the union of the dependency sets.
    pub n_eff: u64,
    /// Overlap gain `sum |S_l| / n_eff`.
    pub omega: f64,
    /// Parity count sizing the coded route for the union.
    pub r_star: u64,
    pub sigma_coded_bits: f64,
    /// Resilience threshold sizing the uncoded route.
    pub n_star: u64,
    pub sigma_unc_bits: f64,
    pub union_deps: Vec<u32>,
}

pub fn plan_joint(
    dep_sets: &[BTreeSet<u32>],
    eps: f64,
    delta: f64,
    m: u32,
    accounting: Accounting,
) -> Result<JointPlan> {
    if dep_sets.is_empty() {
        return Err(Error::InvalidParam("no dependency sets".into()));
    }
    let mut union: BTreeSet<u32> = BTreeSet::new();
    let mut total = 0u64;
    for s in dep_sets {
        total += s.len() as u64;
        union.extend(s.iter().copied());
    }
    let n_eff = union.len() as u64;
    if n_eff == 0 {
        return Err(Error::InvalidParam("empty union".into()));
    }
    let r_star = min_parity_count(n_eff, eps, delta)?;
    let n_star = resilience_threshold(eps, delta)?;
    let bits = per_coord_bits(m, accounting);
    Ok(JointPlan {
        l: dep_sets.len() as u64,
        n_eff,
        omega: total as f64 / n_eff as f64,
        r_star,
        sigma_coded_bits: r_star as f64 * bits,
        n_star,
        sigma_unc_bits: n_eff.saturating_sub(n_star) as f64 * bits,
        union_deps: union.into_iter().collect(),
    })
}

// ---------------------------------------------------------------------------
// Plan serialization
// ---------------------------------------------------------------------------

/// Current cache-plan file format version.
pub const PLAN_FORMAT_VERSION: u32 = 1;

/// A serializable cache plan of either scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum CachePlan {
    Derivation(DerivationCache),
    Coded(CodedCache),
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    version: u32,
    plan: CachePlan,
}

/// Serializes a plan to the versioned JSON text format.
pub fn plan_to_json(plan: &CachePlan) -> Result<String> {
    serde_json::to_string_pretty(&PlanFile { version: PLAN_FORMAT_VERSION, plan: plan.clone() })
        .map_err(|e| Error::Serde(e.to_string()))
}

/// Parses a plan, rejecting unknown format versions.
pub fn plan_from_json(text: &str) -> Result<CachePlan> {
    let file: PlanFile = serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
    if file.version != PLAN_FORMAT_VERSION {
        return Err(Error::Serde(format!("unsupported plan version {}", file.version)));
    }
    Ok(file.plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erasure::{sample_noisy_base, PollutionSpec};

    #[test]
    fn field_primes() {
        assert_eq!(choose_field_prime(256), 257);
        assert_eq!(choose_field_prime(599), 601);
        assert_eq!(choose_field_prime(2), 3);
        let gf = Gf::new(257).unwrap();
        for a in 1..257u64 {
            assert_eq!(gf.mul(a, gf.inv(a)), 1);
        }
        assert!(Gf::new(256).is_err());
    }

    #[test]
    fn rs_small_exhaustive() {
        // kappa = 5, r = 2 over GF(257): every 2-erasure pattern recovers
        // exactly; every 3-erasure pattern fails.
        let msg = [7u64, 0, 255, 13, 99];
        let parity = rs_encode(&msg, 2, 257).unwrap();
        for i in 0..5 {
            for j in (i + 1)..5 {
                let mut rx: Vec<Option<u64>> = msg.iter().copied().map(Some).collect();
                rx[i] = None;
                rx[j] = None;
                assert_eq!(rs_decode(&rx, &parity, 257).unwrap(), msg);
                for l in (j + 1)..5 {
                    let mut rx3 = rx.clone();
                    rx3[l] = None;
                    assert!(rs_decode(&rx3, &parity, 257).is_err());
                }
            }
        }
    }

    #[test]
    fn rs_rejects_oversized_code() {
        let msg: Vec<u64> = (0..250).collect();
        assert!(rs_encode(&msg, 10, 257).is_err());
        assert!(rs_encode(&msg, 6, 257).is_ok());
    }

    #[test]
    fn exact_error_laws() {
        assert!((unc_error_exact(10, 0.2) - 0.8926258176).abs() < 1e-9);
        assert!((coded_error_exact(500, 0.2, 100) - 0.47327222918231165).abs() < 1e-12);
        assert_eq!(min_parity_count(500, 0.2, 0.1).unwrap(), 112);
        assert_eq!(min_parity_count(5000, 0.1, 0.1).unwrap(), 527);
        assert_eq!(min_parity_count(50, 0.1, 0.1).unwrap(), 8);
        // Defining property of r*.
        let r = min_parity_count(1000, 0.2, 0.1).unwrap();
        assert_eq!(r, 216);
        assert!(coded_error_exact(1000, 0.2, r) <= 0.1);
        assert!(coded_error_exact(1000, 0.2, r - 1) > 0.1);
    }

    #[test]
    fn chain_plan_absorbs_prefix() {
        // Chain, kappa = 500 distinct leaves, eps = 0.2, delta = 0.1:
        // N* = 0, so the whole query is cached: 500 * 8 = 4000 bits.
        let arch = Arch::chain(2).unwrap();
        let tuple: Vec<u32> = (1..=500).collect();
        let q = Fact::idb(499, tuple);
        let plan = plan_derivation_cache(&q, 512, &arch, 0.2, 0.1, Accounting::Ideal).unwrap();
        assert_eq!(plan.exposed_count, 0);
        assert_eq!(plan.facts.len(), 1);
        assert!((plan.storage_bits - 500.0 * 9.0).abs() < 1e-9);

        // With N* = 1 (eps = 0.1) one leaf may stay exposed.
        let tuple: Vec<u32> = (1..=500).collect();
        let q = Fact::idb(499, tuple);
        let plan = plan_derivation_cache(&q, 512, &arch, 0.1, 0.1, Accounting::Ideal).unwrap();
        assert_eq!(plan.exposed_count, 1);
        assert!((plan.storage_bits - 499.0 * 9.0).abs() < 1e-9);
    }

    #[test]
    fn merge_plan_caches_leftmost_nodes() {
        // Merge depth 5, k = 2: 16 depth-1 nodes over 32 distinct leaves.
        // With N* = 4, cache 14 nodes and leave 4 leaves exposed.
        let arch = Arch::merge(2).unwrap();
        let tuple: Vec<u32> = (1..=32).collect();
        let q = Fact::idb(5, tuple);
        // eps, delta with N* = 4: (1-eps)^4 >= 1-delta > (1-eps)^5.
        let (eps, delta) = (0.1, 0.35);
        assert_eq!(resilience_threshold(eps, delta).unwrap(), 4);
        let plan = plan_derivation_cache(&q, 32, &arch, eps, delta, Accounting::Ideal).unwrap();
        assert_eq!(plan.facts.len(), 14);
        assert_eq!(plan.exposed_count, 4);
        assert!((plan.storage_bits - 14.0 * 2.0 * 5.0).abs() < 1e-9);
    }

    #[test]
    fn empty_plan_when_resilient() {
        let arch = Arch::chain(2).unwrap();
        let q = Fact::idb(1, vec![1, 2]);
        let plan = plan_derivation_cache(&q, 4, &arch, 0.01, 0.1, Accounting::Ideal).unwrap();
        assert!(plan.facts.is_empty());
        assert_eq!(plan.exposed_count, 2);
    }

    #[test]
    fn water_filling_uniform_matches_threshold() {
        let arch = Arch::chain(2).unwrap();
        let tuple: Vec<u32> = (1..=10).collect();
        let q = Fact::idb(9, tuple);
        let spec = ErasureSpec::Uniform(0.1);
        let plan = water_filling_cache(&q, 10, &arch, &spec, 0.1, Accounting::Ideal).unwrap();
        // kappa - N* = 10 - 1 = 9 protected; ties break to lower index.
        assert_eq!(plan.protected_leaves.len(), 9);
        assert_eq!(plan.exposed_count, 1);
        assert!(!plan.protected_leaves.contains(&10));
    }

    #[test]
    fn water_filling_protects_vulnerable() {
        let arch = Arch::chain(2).unwrap();
        let q = Fact::idb(3, vec![1, 2, 3, 4]);
        let spec = ErasureSpec::PerFact(vec![0.001, 0.6, 0.001, 0.6]);
        let plan = water_filling_cache(&q, 4, &arch, &spec, 0.1, Accounting::Ideal).unwrap();
        // Both risky leaves must be protected; the two cheap ones fit
        // within C(0.1) = 0.105 (2 * 0.001).
        assert_eq!(plan.protected_leaves, BTreeSet::from([2, 4]));
    }

    #[test]
    fn coded_cache_round_trip() {
        let deps: Vec<u32> = (1..=40).collect();
        let cache = plan_coded_cache(&deps, 0.2, 0.1, 256, Accounting::Ideal).unwrap();
        assert_eq!(cache.prime, 257);
        let spec = ErasureSpec::Uniform(0.2);
        let mut successes = 0;
        for t in 0..200u64 {
            let nb = sample_noisy_base(256, &spec, &PollutionSpec::default(), 3, t).unwrap();
            let erased = deps.iter().filter(|&&i| !nb.survives(i)).count() as u64;
            match coded_decode(&cache, &nb) {
                Ok(rec) => {
                    assert!(erased <= cache.r);
                    assert_eq!(rec, deps);
                    successes += 1;
                }
                Err(_) => assert!(erased > cache.r),
            }
        }
        assert!(successes > 150);
    }

    #[test]
    fn rigidity_and_exposure() {
        let arch = Arch::chain(2).unwrap();
        let q = Fact::idb(3, vec![1, 2, 3, 4]);
        let dag = build_dag(&q, 6, &arch).unwrap();
        let cache: BTreeSet<Fact> = [
            Fact::idb(2, vec![1, 2, 3]),     // in DAG, absorbs 1,2,3
            Fact::idb(2, vec![4, 5, 6]),     // unrelated
            Fact::Edb(6),                    // unrelated
        ]
        .into();
        let restricted = rigidity_restrict(&cache, &dag);
        assert_eq!(restricted, BTreeSet::from([Fact::idb(2, vec![1, 2, 3])]));
        let exposed = exposed_leaves(&q, 6, &arch, &cache).unwrap();
        assert_eq!(exposed, BTreeSet::from([4]));
    }

    #[test]
    fn joint_plan_union() {
        let a: BTreeSet<u32> = (1..=500).collect();
        let b: BTreeSet<u32> = (301..=800).collect();
        let plan = plan_joint(&[a, b], 0.2, 0.1, 256, Accounting::Ideal).unwrap();
        assert_eq!(plan.n_eff, 800);
        assert!((plan.omega - 1000.0 / 800.0).abs() < 1e-12);
        assert_eq!(plan.n_star, 0);
        assert!((plan.sigma_unc_bits - 6400.0).abs() < 1e-9);
    }

    #[test]
    fn plan_serialization_round_trip() {
        let deps: Vec<u32> = (1..=12).collect();
        let coded = plan_coded_cache(&deps, 0.2, 0.1, 256, Accounting::Ideal).unwrap();
        let json = plan_to_json(&CachePlan::Coded(coded.clone())).unwrap();
        assert_eq!(plan_from_json(&json).unwrap(), CachePlan::Coded(coded));

        let arch = Arch::chain(2).unwrap();
        let q = Fact::idb(3, vec![1, 2, 3, 4]);
        let d = plan_derivation_cache(&q, 6, &arch, 0.2, 0.1, Accounting::Ideal).unwrap();
        let json = plan_to_json(&CachePlan::Derivation(d.clone())).unwrap();
        assert_eq!(plan_from_json(&json).unwrap(), CachePlan::Derivation(d));

        let bad = json.replace("\"version\": 1", "\"version\": 9");
        assert!(plan_from_json(&bad).is_err());
    }
}
