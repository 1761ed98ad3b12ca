//! Premise erasure channels over the base `{A(1), ..., A(m)}`.
//!
//! Each base fact `A(i)` is erased independently with probability
//! `eps_i < 1`. Costs are logarithmic: protecting against erasure rate
//! `eps` costs `c(eps) = ln 1/(1-eps)`, and a target failure budget
//! `delta` buys `C(delta) = ln 1/(1-delta)` of total cost.

use crate::datalog::{derivation_depth, Arch, Depth, Fact, KnowledgeBase};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Per-fact erasure probabilities: one rate for all facts, or an explicit
/// profile (entry `i-1` is the rate of `A(i)`). All rates lie in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ErasureSpec {
    Uniform(f64),
    PerFact(Vec<f64>),
}

impl ErasureSpec {
    pub fn validate(&self) -> Result<()> {
        let check = |e: f64| {
            if (0.0..1.0).contains(&e) {
                Ok(())
            } else {
                Err(Error::InvalidParam(format!("erasure rate {e} outside [0, 1)")))
            }
        };
        match self {
            ErasureSpec::Uniform(e) => check(*e),
            ErasureSpec::PerFact(v) => v.iter().try_for_each(|&e| check(e)),
        }
    }

    /// Erasure rate of `A(i)` (1-based).
    pub fn rate(&self, i: u32) -> Result<f64> {
        match self {
            ErasureSpec::Uniform(e) => Ok(*e),
            ErasureSpec::PerFact(v) => v
                .get(i as usize - 1)
                .copied()
                .ok_or_else(|| Error::InvalidParam(format!("no erasure rate for A({i})"))),
        }
    }
}

/// Spurious base facts injected alongside the genuine base; indices must
/// exceed `m`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PollutionSpec {
    pub spurious: Vec<u32>,
}

impl PollutionSpec {
    pub fn validate(&self, m: u32) -> Result<()> {
        for &s in &self.spurious {
            if s <= m {
                return Err(Error::InvalidParam(format!(
                    "spurious index {s} collides with genuine base 1..={m}"
                )));
            }
        }
        Ok(())
    }
}

/// One sampled post-erasure base: survivor mask over `A(1..m)` plus any
/// injected spurious facts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoisyBase {
    pub m: u32,
    pub survivors: Vec<bool>,
    pub spurious: Vec<u32>,
    pub seed: u64,
}

impl NoisyBase {
    pub fn survives(&self, i: u32) -> bool {
        self.survivors.get(i as usize - 1).copied().unwrap_or(false)
    }

    /// Surviving base facts plus spurious facts, as a knowledge base.
    pub fn to_kb(&self) -> Result<KnowledgeBase> {
        let mut facts: BTreeSet<Fact> = (1..=self.m)
            .filter(|&i| self.survives(i))
            .map(Fact::Edb)
            .collect();
        facts.extend(self.spurious.iter().map(|&s| Fact::Edb(s)));
        KnowledgeBase::new(self.m, facts)
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
#[inline]
fn sm64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Counter-based generator: a 64-bit value keyed by (seed, trial, fact).
/// Stateless and order-independent, so parallel trials are reproducible
/// regardless of scheduling.
#[inline]
pub fn counter_u64(seed: u64, trial: u64, fact: u64) -> u64 {
    let a = sm64(seed.wrapping_add(GOLDEN));
    let b = sm64(a ^ trial.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    sm64(b ^ fact.wrapping_mul(0xA24B_AED4_963E_E407))
}

/// Uniform draw in `[0, 1)` keyed by (seed, trial, fact).
#[inline]
pub fn counter_unit(seed: u64, trial: u64, fact: u64) -> f64 {
    (counter_u64(seed, trial, fact) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Samples one noisy base for the given trial: fact `A(i)` survives iff
/// its counter draw is at least `eps_i`; spurious facts are always
/// injected.
pub fn sample_noisy_base(
    m: u32,
    spec: &ErasureSpec,
    pollution: &PollutionSpec,
    seed: u64,
    trial: u64,
) -> Result<NoisyBase> {
    spec.validate()?;
    pollution.validate(m)?;
    let mut survivors = Vec::with_capacity(m as usize);
    for i in 1..=m {
        let u = counter_unit(seed, trial, i as u64);
        survivors.push(u >= spec.rate(i)?);
    }
    Ok(NoisyBase { m, survivors, spurious: pollution.spurious.clone(), seed })
}

/// Protection cost of erasure rate `eps`: `ln 1/(1-eps)`.
pub fn cost(eps: f64) -> f64 {
    -(-eps).ln_1p()
}

/// Cost budget bought by failure tolerance `delta`: `ln 1/(1-delta)`.
pub fn budget(delta: f64) -> f64 {
    cost(delta)
}

/// Resilience threshold `N*(eps, delta)`: the largest number of
/// independently erasable rate-`eps` facts a query may depend on while
/// keeping failure probability at most `delta`; satisfies
/// `(1-eps)^N* >= 1-delta > (1-eps)^(N*+1)`.
pub fn resilience_threshold(eps: f64, delta: f64) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParam(format!("eps must lie in (0,1), got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParam(format!("delta must lie in (0,1), got {delta}")));
    }
    let mut n = (budget(delta) / cost(eps)).floor().max(0.0) as u64;
    // Fix up floating-point knife edges against the defining inequality.
    let surv = |n: u64| (1.0 - eps).powf(n as f64);
    while surv(n + 1) >= 1.0 - delta {
        n += 1;
    }
    while n > 0 && surv(n) < 1.0 - delta {
        n -= 1;
    }
    Ok(n)
}

/// Total vulnerability of a dependency set and the survival probability
/// it implies: `V = sum c(eps_i)`, `P_surv = exp(-V) = prod (1-eps_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vulnerability {
    pub total_cost: f64,
    pub p_surv: f64,
}

pub fn vulnerability(deps: &[u32], spec: &ErasureSpec) -> Result<Vulnerability> {
    spec.validate()?;
    let mut total = 0.0;
    for &i in deps {
        total += cost(spec.rate(i)?);
    }
    Ok(Vulnerability { total_cost: total, p_surv: (-total).exp() })
}

/// Effective base size under budget `delta`: the largest `j` such that
/// the `j` cheapest protection costs sum to at most `C(delta)`. With a
/// uniform rate this equals `min(N*, m)`.
pub fn m_eff(spec: &ErasureSpec, m: u32, delta: f64) -> Result<u64> {
    spec.validate()?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParam(format!("delta must lie in (0,1), got {delta}")));
    }
    let mut costs: Vec<f64> = (1..=m).map(|i| spec.rate(i).map(cost)).collect::<Result<_>>()?;
    costs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cap = budget(delta);
    let mut acc = 0.0;
    let mut j = 0u64;
    for c in costs {
        if acc + c <= cap {
            acc += c;
            j += 1;
        } else {
            break;
        }
    }
    Ok(j)
}

/// Reconstruction depth after losing `lost` from `kb`: the largest
/// derivation depth needed to re-derive any lost fact from the survivors
/// (`Unreachable` if some lost fact cannot be re-derived, 0 if nothing
/// was lost).
pub fn reconstruction_depth(kb: &KnowledgeBase, arch: &Arch, lost: &BTreeSet<Fact>) -> Result<Depth> {
    let mut survivors = kb.clone();
    for f in lost {
        survivors.facts.remove(f);
    }
    let mut worst = 0u32;
    for f in lost {
        match derivation_depth(f, &survivors, arch) {
            Depth::Finite(d) => worst = worst.max(d),
            Depth::Unreachable => return Ok(Depth::Unreachable),
        }
    }
    Ok(Depth::Finite(worst))
}
