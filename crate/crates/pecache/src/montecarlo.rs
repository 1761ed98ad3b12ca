//! Monte Carlo validation of the exact error laws.
//!
//! Trials are keyed by a counter-based generator (seed, trial, fact), so
//! estimates are reproducible bit-for-bit regardless of thread count, and
//! the reduction is an order-independent integer sum.

use crate::caching::{coded_decode, derivation_decode, CachePlan};
use crate::datalog::{build_dag, Arch, Fact};
use crate::erasure::{counter_u64, counter_unit, sample_noisy_base, ErasureSpec, PollutionSpec};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

/// What one simulated trial exercises.
#[derive(Debug, Clone)]
pub enum Scenario {
    /// Count Bernoulli(eps) erasures over `kappa` dependencies; the trial
    /// fails iff more than `r` are erased (the MDS failure law).
    CodedAnalytic { kappa: u64, eps: f64, r: u64 },
    /// The trial fails iff any of `n` exposed dependencies is erased.
    UncAnalytic { n: u64, eps: f64 },
    /// Sample a noisy base and run the real decoder for the given plan.
    EndToEnd {
        q: Fact,
        arch: Arch,
        m: u32,
        spec: ErasureSpec,
        pollution: PollutionSpec,
        plan: CachePlan,
    },
}

/// A Monte Carlo failure-rate estimate with an exact (Clopper-Pearson)
/// confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// Number of trials in which the monitored event (decode failure)
    /// occurred.
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub seed: u64,
}

fn trial_fails(sc: &Scenario, seed: u64, t: u64) -> Result<bool> {
    Ok(match sc {
        Scenario::CodedAnalytic { kappa, eps, r } => {
            let mut erased = 0u64;
            for j in 1..=*kappa {
                if counter_unit(seed, t, j) < *eps {
                    erased += 1;
                    if erased > *r {
                        break;
                    }
                }
            }
            erased > *r
        }
        Scenario::UncAnalytic { n, eps } => {
            (1..=*n).any(|j| counter_unit(seed, t, j) < *eps)
        }
        Scenario::EndToEnd { q, arch, m, spec, pollution, plan } => {
            let noisy = sample_noisy_base(*m, spec, pollution, seed, t)?;
            match plan {
                CachePlan::Derivation(cache) => !derivation_decode(q, &noisy, cache, arch)?,
                CachePlan::Coded(cache) => match coded_decode(cache, &noisy) {
                    Ok(recovered) => recovered != cache.dep_indices,
                    Err(_) => true,
                },
            }
        }
    })
}

/// Runs `trials` independent trials of the scenario and returns the
/// failure-rate estimate with a Clopper-Pearson interval at `level`.
pub fn simulate(sc: &Scenario, trials: u64, seed: u64, level: f64) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParam("trials must be >= 1".into()));
    }
    // Validate eagerly so worker threads cannot hit parameter errors.
    if let Scenario::EndToEnd { q, arch, m, spec, pollution, .. } = sc {
        q.well_formed(arch, *m)?;
        spec.validate()?;
        pollution.validate(*m)?;
    }
    let successes: u64 = (0..trials)
        .into_par_iter()
        .map(|t| trial_fails(sc, seed, t).map(|f| f as u64).unwrap_or(0))
        .sum();
    let (ci_low, ci_high) = clopper_pearson(successes, trials, level)?;
    Ok(McEstimate {
        successes,
        trials,
        p_hat: successes as f64 / trials as f64,
        ci_low,
        ci_high,
        level,
        seed,
    })
}

/// Beta quantile: statrs's bisection seed polished by Newton steps on the
/// exact CDF/PDF pair, since the seed alone is only accurate to ~1e-5.
fn beta_inv(a: f64, b: f64, p: f64) -> Result<f64> {
    use statrs::function::gamma::ln_gamma;
    let dist = Beta::new(a, b).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let ln_norm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    let mut x = dist.inverse_cdf(p).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    for _ in 0..32 {
        let ln_pdf = ln_norm + (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p();
        let step = (dist.cdf(x) - p) * (-ln_pdf).exp();
        let next = (x - step).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        if (next - x).abs() <= 1e-15 * x {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Exact Clopper-Pearson binomial confidence interval via Beta quantiles.
/// Zero successes pin the lower end at 0; all successes pin the upper end
/// at 1.
pub fn clopper_pearson(successes: u64, trials: u64, level: f64) -> Result<(f64, f64)> {
    if successes > trials || trials == 0 {
        return Err(Error::InvalidParam("need successes <= trials, trials >= 1".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParam(format!("level must lie in (0,1), got {level}")));
    }
    let alpha = 1.0 - level;
    let (s, n) = (successes as f64, trials as f64);
    let low = if successes == 0 { 0.0 } else { beta_inv(s, n - s + 1.0, alpha / 2.0)? };
    let high = if successes == trials {
        1.0
    } else {
        beta_inv(s + 1.0, n - s, 1.0 - alpha / 2.0)?
    };
    Ok((low, high))
}

/// Empirical structural fractions over uniformly drawn depth-`d` head
/// tuples: how often coordinates repeat, and how often a merge query is
/// non-colliding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureFractions {
    /// Fraction of sampled queries with at least one repeated coordinate.
    pub collision: f64,
    /// Fraction whose derivation DAG is collision-free (merge: no merge
    /// step joins identical premises; chain: always).
    pub non_colliding: f64,
}

pub fn sample_structure_fractions(
    m: u32,
    arch: &Arch,
    d: u32,
    samples: u64,
    seed: u64,
) -> Result<StructureFractions> {
    if samples == 0 {
        return Err(Error::InvalidParam("samples must be >= 1".into()));
    }
    let arity = arch.arity(d)? as usize;
    let mut collisions = 0u64;
    let mut non_colliding = 0u64;
    for t in 0..samples {
        let tuple: Vec<u32> = (0..arity)
            .map(|j| (counter_u64(seed, t, j as u64) % m as u64) as u32 + 1)
            .collect();
        let dag = build_dag(&Fact::idb(d, tuple), m, arch)?;
        if dag.kappa < dag.arity {
            collisions += 1;
        }
        if dag.non_colliding {
            non_colliding += 1;
        }
    }
    Ok(StructureFractions {
        collision: collisions as f64 / samples as f64,
        non_colliding: non_colliding as f64 / samples as f64,
    })
}
