//! Ground Datalog over a unary base, for two faithful rule architectures.
//!
//! The base is `B = {A(1), ..., A(m)}`. Both architectures have two rules
//! and are *faithful*: every body variable occurs in the head, so a derived
//! fact determines its entire derivation. For parameter `k >= 2`:
//!
//! * **Chain**: `T_k(x1..xk) <- A(x1), ..., A(xk)` and
//!   `T_{a+1}(x, y) <- T_a(x), A(y)`. The depth-`d` head has arity
//!   `k + d - 1` and the derivation DAG is a path.
//! * **Merge**: `R_1(x1..xk) <- A(x1), ..., A(xk)` and
//!   `R_{d+1}(x, y) <- R_d(x), R_d(y)` with `|x| = |y| = k 2^{d-1}`. The
//!   depth-`d` head has arity `k 2^{d-1}` and, for non-colliding queries,
//!   the DAG is a complete binary tree.

use crate::{Accounting, Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Which of the two rule programs is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchKind {
    Chain,
    Merge,
}

/// A rule architecture: program shape plus the base-rule arity `k >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arch {
    pub kind: ArchKind,
    pub k: u32,
}

impl Arch {
    pub fn new(kind: ArchKind, k: u32) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParam(format!("arch requires k >= 2, got {k}")));
        }
        Ok(Arch { kind, k })
    }

    pub fn chain(k: u32) -> Result<Self> {
        Self::new(ArchKind::Chain, k)
    }

    pub fn merge(k: u32) -> Result<Self> {
        Self::new(ArchKind::Merge, k)
    }

    /// Head arity of the depth-`d` relation (`d >= 1`):
    /// chain `k + d - 1`, merge `k * 2^(d-1)`.
    pub fn arity(&self, d: u32) -> Result<u64> {
        if d == 0 {
            return Err(Error::InvalidParam("depth must be >= 1".into()));
        }
        match self.kind {
            ArchKind::Chain => Ok(self.k as u64 + d as u64 - 1),
            ArchKind::Merge => (self.k as u64)
                .checked_shl(d - 1)
                .filter(|_| d <= 64)
                .ok_or_else(|| Error::Range(format!("merge arity overflows u64 at depth {d}"))),
        }
    }

    /// Distinct-leaf count of a depth-`d` query with pairwise-distinct
    /// coordinates; equals the head arity for both architectures.
    pub fn kappa_of_depth(&self, d: u32) -> Result<u64> {
        self.arity(d)
    }
}

/// A ground fact: a base fact `A(i)` or a derived fact of the depth-`d`
/// head relation with its full coordinate tuple.
///
/// The derived `Ord` is the canonical order used by the atomic-core scan:
/// base facts first (by index), then derived facts by depth, then by
/// lexicographic tuple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Fact {
    Edb(u32),
    Idb { depth: u32, tuple: Vec<u32> },
}

impl Fact {
    pub fn idb(depth: u32, tuple: Vec<u32>) -> Fact {
        Fact::Idb { depth, tuple }
    }

    /// Depth label: 0 for base facts, the relation depth for derived facts.
    pub fn depth(&self) -> u32 {
        match self {
            Fact::Edb(_) => 0,
            Fact::Idb { depth, .. } => *depth,
        }
    }

    /// Checks arity consistency with `arch` and coordinate range `1..=m`.
    pub fn well_formed(&self, arch: &Arch, m: u32) -> Result<()> {
        match self {
            Fact::Edb(i) => {
                if *i < 1 || *i > m {
                    return Err(Error::InvalidParam(format!("base index {i} outside 1..={m}")));
                }
            }
            Fact::Idb { depth, tuple } => {
                let a = arch.arity(*depth)?;
                if tuple.len() as u64 != a {
                    return Err(Error::InvalidParam(format!(
                        "depth-{depth} fact has arity {}, expected {a}",
                        tuple.len()
                    )));
                }
                for &c in tuple {
                    if c < 1 || c > m {
                        return Err(Error::InvalidParam(format!(
                            "coordinate {c} outside 1..={m}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A set of facts over base alphabet `[m]`; may contain derived facts
/// (e.g. cached intermediates) in addition to base facts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub m: u32,
    pub facts: BTreeSet<Fact>,
}

impl KnowledgeBase {
    pub fn new(m: u32, facts: BTreeSet<Fact>) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParam(format!("base size m must be >= 2, got {m}")));
        }
        Ok(KnowledgeBase { m, facts })
    }

    /// The full base `{A(1), ..., A(m)}`.
    pub fn full_base(m: u32) -> Result<Self> {
        Self::new(m, (1..=m).map(Fact::Edb).collect())
    }
}

/// Derivation depth of a fact given a fact set: `Finite(0)` for given
/// facts, otherwise one plus the maximum over the (unique) premise set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Depth {
    Finite(u32),
    Unreachable,
}

impl Depth {
    pub fn finite(&self) -> Option<u32> {
        match self {
            Depth::Finite(d) => Some(*d),
            Depth::Unreachable => None,
        }
    }
}

/// The unique premise set of a derived fact under the last rule that can
/// produce it. Base facts have no premises.
pub fn predecessors(fact: &Fact, arch: &Arch) -> Result<Vec<Fact>> {
    match fact {
        Fact::Edb(_) => Ok(vec![]),
        Fact::Idb { depth, tuple } => {
            let a = arch.arity(*depth)?;
            if tuple.len() as u64 != a {
                return Err(Error::InvalidParam(format!(
                    "depth-{depth} fact has arity {}, expected {a}",
                    tuple.len()
                )));
            }
            if *depth == 1 {
                return Ok(tuple.iter().map(|&c| Fact::Edb(c)).collect());
            }
            match arch.kind {
                ArchKind::Chain => {
                    let (head, last) = tuple.split_at(tuple.len() - 1);
                    Ok(vec![
                        Fact::idb(*depth - 1, head.to_vec()),
                        Fact::Edb(last[0]),
                    ])
                }
                ArchKind::Merge => {
                    let half = tuple.len() / 2;
                    Ok(vec![
                        Fact::idb(*depth - 1, tuple[..half].to_vec()),
                        Fact::idb(*depth - 1, tuple[half..].to_vec()),
                    ])
                }
            }
        }
    }
}

fn depth_memo(q: &Fact, kb: &BTreeSet<Fact>, arch: &Arch, memo: &mut HashMap<Fact, Option<u32>>) -> Option<u32> {
    if kb.contains(q) {
        return Some(0);
    }
    if let Some(v) = memo.get(q) {
        return *v;
    }
    let result = match predecessors(q, arch) {
        Ok(preds) if !preds.is_empty() => {
            let mut worst = 0u32;
            let mut reachable = true;
            for p in &preds {
                match depth_memo(p, kb, arch, memo) {
                    Some(d) => worst = worst.max(d),
                    None => {
                        reachable = false;
                        break;
                    }
                }
            }
            if reachable {
                Some(worst + 1)
            } else {
                None
            }
        }
        _ => None, // base fact not given, or malformed tuple
    };
    memo.insert(q.clone(), result);
    result
}

/// Derivation depth of `q` from `kb.facts`: the first synchronous
/// bottom-up round in which `q` appears (0 if given), or `Unreachable`.
///
/// Faithfulness makes the premise set of every fact unique, so the
/// recursion over [`predecessors`] computes exactly the round index of
/// seminaive evaluation without materializing the closure.
pub fn derivation_depth(q: &Fact, kb: &KnowledgeBase, arch: &Arch) -> Depth {
    let mut memo = HashMap::new();
    match depth_memo(q, &kb.facts, arch, &mut memo) {
        Some(d) => Depth::Finite(d),
        None => Depth::Unreachable,
    }
}

/// Seminaive bottom-up evaluation, returning the facts newly derived in
/// each synchronous round (`rounds[0]` is round 1). Rule bodies fire only
/// when at least one premise entered in the previous round.
pub fn eval_closure_rounds(kb: &KnowledgeBase, arch: &Arch, max_depth: u32) -> Result<Vec<BTreeSet<Fact>>> {
    let mut all = kb.facts.clone();
    let mut delta = kb.facts.clone();
    let edb: Vec<u32> = kb
        .facts
        .iter()
        .filter_map(|f| match f {
            Fact::Edb(i) => Some(*i),
            _ => None,
        })
        .collect();
    let mut rounds = Vec::new();
    for _ in 1..=max_depth {
        let mut new: BTreeSet<Fact> = BTreeSet::new();
        // Base rule: fires only while a base fact is still in the delta.
        if delta.iter().any(|f| matches!(f, Fact::Edb(_))) {
            let mut tuple = vec![0u32; arch.k as usize];
            gen_base_tuples(&edb, &mut tuple, 0, &mut new);
        }
        match arch.kind {
            ArchKind::Chain => {
                for f in &delta {
                    if let Fact::Idb { depth, tuple } = f {
                        for &e in &edb {
                            let mut t = tuple.clone();
                            t.push(e);
                            new.insert(Fact::idb(depth + 1, t));
                        }
                    }
                }
            }
            ArchKind::Merge => {
                for f in &delta {
                    if let Fact::Idb { depth, tuple } = f {
                        for g in &all {
                            if let Fact::Idb { depth: d2, tuple: t2 } = g {
                                if d2 == depth {
                                    let mut left = tuple.clone();
                                    left.extend_from_slice(t2);
                                    new.insert(Fact::idb(depth + 1, left));
                                    let mut right = t2.clone();
                                    right.extend_from_slice(tuple);
                                    new.insert(Fact::idb(depth + 1, right));
                                }
                            }
                        }
                    }
                }
            }
        }
        new.retain(|f| !all.contains(f));
        if new.is_empty() {
            break;
        }
        all.extend(new.iter().cloned());
        delta = new.clone();
        rounds.push(new);
    }
    Ok(rounds)
}

fn gen_base_tuples(edb: &[u32], tuple: &mut Vec<u32>, pos: usize, out: &mut BTreeSet<Fact>) {
    if pos == tuple.len() {
        out.insert(Fact::idb(1, tuple.clone()));
        return;
    }
    for &e in edb {
        tuple[pos] = e;
        gen_base_tuples(edb, tuple, pos + 1, out);
    }
}

/// All facts derivable from `kb.facts` in at most `max_depth` synchronous
/// rounds, including the given facts themselves.
pub fn eval_closure(kb: &KnowledgeBase, arch: &Arch, max_depth: u32) -> Result<BTreeSet<Fact>> {
    let mut all = kb.facts.clone();
    for round in eval_closure_rounds(kb, arch, max_depth)? {
        all.extend(round);
    }
    Ok(all)
}

/// The canonical derivation DAG of a query over the full base `[m]`:
/// the smallest fact set containing the query and closed under premises.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationDag {
    pub root: Fact,
    /// Every vertex (query, intermediates, and base leaves), keyed by its
    /// structural depth stratum.
    pub vertices: BTreeMap<Fact, u32>,
    /// Distinct base-fact indices feeding the query.
    pub leaves: BTreeSet<u32>,
    /// `widths[l-1]` = number of distinct derived vertices at stratum `l`,
    /// for `l = 1..=d`.
    pub widths: Vec<u64>,
    /// `kappa = |leaves|`.
    pub kappa: u64,
    /// Head arity of the query.
    pub arity: u64,
    /// For merge queries: no merge step in the unfolding combines two
    /// identical premises. Vacuously true for chain queries.
    pub non_colliding: bool,
}

fn merge_non_colliding(tuple: &[u32], k: usize) -> bool {
    if tuple.len() <= k {
        return true;
    }
    let half = tuple.len() / 2;
    tuple[..half] != tuple[half..]
        && merge_non_colliding(&tuple[..half], k)
        && merge_non_colliding(&tuple[half..], k)
}

/// Builds the canonical derivation DAG of `q` over the full base `[m]`.
pub fn build_dag(q: &Fact, m: u32, arch: &Arch) -> Result<DerivationDag> {
    q.well_formed(arch, m)?;
    let d = match q {
        Fact::Idb { depth, .. } => *depth,
        Fact::Edb(_) => {
            return Err(Error::InvalidParam("derivation DAG is defined for derived facts".into()))
        }
    };
    let mut vertices: BTreeMap<Fact, u32> = BTreeMap::new();
    let mut stack = vec![q.clone()];
    while let Some(f) = stack.pop() {
        if vertices.contains_key(&f) {
            continue;
        }
        vertices.insert(f.clone(), f.depth());
        for p in predecessors(&f, arch)? {
            stack.push(p);
        }
    }
    let leaves: BTreeSet<u32> = vertices
        .keys()
        .filter_map(|f| match f {
            Fact::Edb(i) => Some(*i),
            _ => None,
        })
        .collect();
    let mut widths = vec![0u64; d as usize];
    for (&ref f, &stratum) in &vertices {
        if matches!(f, Fact::Idb { .. }) {
            widths[stratum as usize - 1] += 1;
        }
    }
    let non_colliding = match (arch.kind, q) {
        (ArchKind::Merge, Fact::Idb { tuple, .. }) => merge_non_colliding(tuple, arch.k as usize),
        _ => true,
    };
    Ok(DerivationDag {
        root: q.clone(),
        kappa: leaves.len() as u64,
        arity: arch.arity(d)?,
        leaves,
        widths,
        non_colliding,
        vertices,
    })
}

/// The atomic core of a fact set: scan in canonical order and drop every
/// fact derivable from the remaining ones. The result has the same
/// consequences and no redundant member.
pub fn atom_core(kb: &KnowledgeBase, arch: &Arch) -> Result<BTreeSet<Fact>> {
    let mut working = kb.facts.clone();
    let scan: Vec<Fact> = kb.facts.iter().cloned().collect();
    for s in scan {
        working.remove(&s);
        let mut memo = HashMap::new();
        if depth_memo(&s, &working, arch, &mut memo).is_none() {
            working.insert(s);
        }
    }
    Ok(working)
}

/// Width in bits of one base-alphabet coordinate: `ceil(log2 m)`.
pub fn coord_bits(m: u32) -> u32 {
    debug_assert!(m >= 2);
    32 - (m - 1).leading_zeros()
}

fn push_gamma(bits: &mut Vec<bool>, n: u32) {
    debug_assert!(n >= 1);
    let len = 32 - n.leading_zeros(); // bit length of n
    for _ in 1..len {
        bits.push(false);
    }
    for i in (0..len).rev() {
        bits.push(n >> i & 1 == 1);
    }
}

fn read_gamma(bits: &[bool], pos: &mut usize) -> Result<u32> {
    let mut zeros = 0usize;
    while *pos < bits.len() && !bits[*pos] {
        zeros += 1;
        *pos += 1;
        if zeros > 31 {
            return Err(Error::Malformed("gamma prefix too long".into()));
        }
    }
    if *pos >= bits.len() {
        return Err(Error::Malformed("truncated gamma code".into()));
    }
    let mut value = 1u32;
    *pos += 1; // leading 1 bit
    for _ in 0..zeros {
        if *pos >= bits.len() {
            return Err(Error::Malformed("truncated gamma code".into()));
        }
        value = value << 1 | bits[*pos] as u32;
        *pos += 1;
    }
    Ok(value)
}

/// Prefix-free derivation-trace code for a derived fact.
///
/// Layout: Elias-gamma code of the depth `d`, then the head tuple as
/// `arity` fixed-width `ceil(log2 m)`-bit coordinates. Faithfulness makes
/// the head tuple a complete trace: chain premises are head prefixes and
/// merge premises are the two head halves. Length is
/// `arity * ceil(log2 m) + 2*floor(log2 d) + 1 <= arity * ceil(log2 m) + 2n`
/// bits for an `n`-step trace.
pub fn encode_trace(q: &Fact, m: u32, arch: &Arch) -> Result<Vec<bool>> {
    q.well_formed(arch, m)?;
    let (d, tuple) = match q {
        Fact::Idb { depth, tuple } => (*depth, tuple),
        Fact::Edb(_) => return Err(Error::InvalidParam("traces encode derived facts".into())),
    };
    let w = coord_bits(m);
    let mut bits = Vec::with_capacity(tuple.len() * w as usize + 16);
    push_gamma(&mut bits, d);
    for &c in tuple {
        let v = c - 1;
        for i in (0..w).rev() {
            bits.push(v >> i & 1 == 1);
        }
    }
    Ok(bits)
}

/// Inverse of [`encode_trace`]; rejects any bit string that is not the
/// exact codeword of a well-formed fact.
pub fn decode_trace(bits: &[bool], m: u32, arch: &Arch) -> Result<Fact> {
    let mut pos = 0usize;
    let d = read_gamma(bits, &mut pos)?;
    let arity = arch.arity(d).map_err(|_| Error::Malformed(format!("depth {d} out of range")))?;
    if arity > 1 << 24 {
        return Err(Error::Malformed(format!("implausible arity {arity}")));
    }
    let w = coord_bits(m) as usize;
    if bits.len() - pos != arity as usize * w {
        return Err(Error::Malformed(format!(
            "expected {} payload bits, found {}",
            arity as usize * w,
            bits.len() - pos
        )));
    }
    let mut tuple = Vec::with_capacity(arity as usize);
    for _ in 0..arity {
        let mut v = 0u32;
        for _ in 0..w {
            v = v << 1 | bits[pos] as u32;
            pos += 1;
        }
        if v >= m {
            return Err(Error::Malformed(format!("coordinate {} outside 1..={m}", v + 1)));
        }
        tuple.push(v + 1);
    }
    let q = Fact::idb(d, tuple);
    q.well_formed(arch, m)
        .map_err(|e| Error::Malformed(e.to_string()))?;
    Ok(q)
}

/// Information capacity at depth `d`: head arity times `log2 m` bits.
pub fn capacity_bits(arch: &Arch, m: u32, d: u32) -> Result<f64> {
    Ok(arch.arity(d)? as f64 * (m as f64).log2())
}

/// A layer-prefix cache: every derived vertex of the query's DAG with
/// stratum `1..=l0`, plus the residual depth it leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPrefixCache {
    pub facts: BTreeSet<Fact>,
    pub residual_depth: u32,
    pub storage_bits: f64,
}

/// Caches the first `l0` derived strata of the query's DAG; re-deriving
/// the query from the full base plus the cache then takes exactly
/// `d - l0` rounds. Storage charges each cached vertex its arity in
/// coordinates.
pub fn layer_prefix_cache(
    q: &Fact,
    m: u32,
    arch: &Arch,
    l0: u32,
    accounting: Accounting,
) -> Result<LayerPrefixCache> {
    let dag = build_dag(q, m, arch)?;
    let d = q.depth();
    if l0 > d {
        return Err(Error::InvalidParam(format!("l0 = {l0} exceeds query depth {d}")));
    }
    let facts: BTreeSet<Fact> = dag
        .vertices
        .iter()
        .filter(|(f, &s)| s >= 1 && s <= l0 && matches!(f, Fact::Idb { .. }))
        .map(|(f, _)| f.clone())
        .collect();
    let per_coord = match accounting {
        Accounting::Ideal => (m as f64).log2(),
        Accounting::Integer => coord_bits(m) as f64,
    };
    let mut storage_bits = 0.0;
    for l in 1..=l0 {
        storage_bits += dag.widths[l as usize - 1] as f64 * arch.arity(l)? as f64 * per_coord;
    }
    let mut base = KnowledgeBase::full_base(m)?;
    base.facts.extend(facts.iter().cloned());
    let residual_depth = match derivation_depth(q, &base, arch) {
        Depth::Finite(r) => r,
        Depth::Unreachable => {
            return Err(Error::InvalidParam("query unreachable from full base".into()))
        }
    };
    debug_assert_eq!(residual_depth, d - l0);
    Ok(LayerPrefixCache { facts, residual_depth, storage_bits })
}

/// Critical refresh frequency: with per-round survival budget `rho_s`, a
/// trace of `len_bits` bits re-derived over `depth` rounds must be
/// refreshed at rate `rho_s * len_bits / depth`.
pub fn critical_frequency(rho_s: f64, len_bits: f64, depth: u32) -> Result<f64> {
    if depth == 0 {
        return Err(Error::InvalidParam("depth must be >= 1".into()));
    }
    if !(rho_s >= 0.0) || !(len_bits >= 0.0) {
        return Err(Error::InvalidParam("rho_s and len_bits must be non-negative".into()));
    }
    Ok(rho_s * len_bits / depth as f64)
}
