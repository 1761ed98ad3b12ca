//! The six numerical experiments, written as deterministic CSV.
//!
//! Output starts with `#`-prefixed comment lines echoing the full
//! configuration, then a header row naming columns (with units embedded),
//! then data rows with fixed six-decimal formatting. Identical
//! configurations produce byte-identical output.

use crate::analysis::{
    bahadur_rao_tail, br_prefactor_constant, joint_gains, kl_bernoulli, penalty_ratio,
    resolved_window_prediction, TailSide,
};
use crate::caching::{coded_error_exact, min_parity_count, plan_joint, unc_error_exact};
use crate::datalog::Arch;
use crate::erasure::resilience_threshold;
use crate::montecarlo::{simulate, Scenario};
use crate::numerics::{ln_binom_cdf, phi_inv};
use crate::{Accounting, Error, Result};
use std::io::Write;

/// Configuration shared by all experiments. Optional fields override the
/// experiment's default grid with a single value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub exp: u8,
    pub m: u32,
    pub k: u32,
    pub eps: Option<f64>,
    pub delta: f64,
    pub kappa: Option<u64>,
    pub r: Option<u64>,
    pub trials: u64,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Defaults: `m = 256`, `k = 2`, `delta = 0.1` (0.3 for the
    /// depth-resilience experiment), `trials = 10^6`, `seed = 1`.
    pub fn new(exp: u8) -> Result<Self> {
        if !(1..=6).contains(&exp) {
            return Err(Error::InvalidParam(format!("experiment number {exp} outside 1..=6")));
        }
        Ok(ExperimentConfig {
            exp,
            m: 256,
            k: 2,
            eps: None,
            delta: if exp == 4 { 0.3 } else { 0.1 },
            kappa: None,
            r: None,
            trials: 1_000_000,
            seed: 1,
        })
    }
}

fn echo_config(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "# exp={}", cfg.exp)?;
    writeln!(out, "# m={}", cfg.m)?;
    writeln!(out, "# k={}", cfg.k)?;
    match cfg.eps {
        Some(e) => writeln!(out, "# eps={e}")?,
        None => writeln!(out, "# eps=default")?,
    }
    writeln!(out, "# delta={}", cfg.delta)?;
    match cfg.kappa {
        Some(k) => writeln!(out, "# kappa={k}")?,
        None => writeln!(out, "# kappa=default")?,
    }
    match cfg.r {
        Some(r) => writeln!(out, "# r={r}")?,
        None => writeln!(out, "# r=default")?,
    }
    writeln!(out, "# trials={}", cfg.trials)?;
    writeln!(out, "# seed={}", cfg.seed)?;
    Ok(())
}

fn f(x: f64) -> String {
    format!("{x:.6}")
}

/// Runs the selected experiment, writing CSV to `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    echo_config(cfg, out)?;
    match cfg.exp {
        1 => exp1_penalty(cfg, out),
        2 => exp2_exponents(cfg, out),
        3 => exp3_dispersion(cfg, out),
        4 => exp4_depth(cfg, out),
        5 => exp5_multiquery(cfg, out),
        6 => exp6_table(cfg, out),
        _ => Err(Error::InvalidParam(format!("experiment number {} outside 1..=6", cfg.exp))),
    }
}

/// Convenience wrapper returning the CSV as a string.
pub fn experiment_csv(cfg: &ExperimentConfig) -> Result<String> {
    let mut buf = Vec::new();
    run_experiment(cfg, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Serde(e.to_string()))
}

fn grid_or<T: Copy>(single: Option<T>, grid: &[T]) -> Vec<T> {
    match single {
        Some(v) => vec![v],
        None => grid.to_vec(),
    }
}

/// Experiment 1: uncoded-over-coded storage penalty versus dependency
/// count, exact (CDF inversion) against the second-order expansion.
fn exp1_penalty(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    writeln!(
        out,
        "eps,n_deps,n_star,r_star,sigma_unc_bits,sigma_coded_bits,penalty_exact,penalty_refined"
    )?;
    for eps in grid_or(cfg.eps, &[0.1, 0.2]) {
        for n in grid_or(cfg.kappa, &[50, 100, 200, 500, 1000, 5000]) {
            let p = penalty_ratio(n, eps, cfg.delta, cfg.m)?;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                f(eps),
                n,
                p.n_star,
                p.r_star,
                f(p.sigma_unc_bits),
                f(p.sigma_coded_bits),
                f(p.ratio_exact),
                f(p.ratio_refined)
            )?;
        }
    }
    Ok(())
}

/// Experiment 2: large-deviation exponents and the Bahadur-Rao
/// prefactor. `d_hat` is the exact finite-size exponent `-log2(P_c)/kappa`;
/// `psi = kappa (d_hat - kl)` should track `0.5 log2 kappa + c(alpha)`.
fn exp2_exponents(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    writeln!(
        out,
        "alpha,kappa,kl_bits,d_hat_bits,psi_bits,psi_pred_bits,c_alpha_bits,br_rel_err"
    )?;
    let eps = cfg.eps.unwrap_or(0.3);
    for alpha in [0.20, 0.15, 0.10] {
        let kl = kl_bernoulli(alpha, eps)?;
        let c_alpha = br_prefactor_constant(eps, alpha, TailSide::Lower)?;
        for kappa in grid_or(cfg.kappa, &[100, 200, 500, 1000, 2000, 5000]) {
            let r = (alpha * kappa as f64).round() as u64;
            let ln_pc = ln_binom_cdf(kappa, r, eps);
            let d_hat = -ln_pc / std::f64::consts::LN_2 / kappa as f64;
            let psi = kappa as f64 * (d_hat - kl);
            let psi_pred = 0.5 * (kappa as f64).log2() + c_alpha;
            let br = bahadur_rao_tail(kappa, eps, alpha, TailSide::Lower)?;
            let rel_err = (br.estimate.ln() - ln_pc).exp() - 1.0;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                f(alpha),
                kappa,
                f(kl),
                f(d_hat),
                f(psi),
                f(psi_pred),
                f(c_alpha),
                f(rel_err)
            )?;
        }
    }
    Ok(())
}

/// Experiment 3: dispersion of the coded cache size (the `Delta_c`
/// normal-quantile plateau) and the CLT shape of the critical window.
fn exp3_dispersion(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "kind,kappa,c_window,r,value,prediction")?;
    let eps = cfg.eps.unwrap_or(0.2);
    let theory = phi_inv(1.0 - cfg.delta)? * (eps * (1.0 - eps)).sqrt();
    for kappa in grid_or(cfg.kappa, &[50, 100, 200, 500, 1000, 5000]) {
        let r = min_parity_count(kappa, eps, cfg.delta)?;
        let delta_c = (r as f64 - eps * kappa as f64) / (kappa as f64).sqrt();
        writeln!(out, "delta_c,{kappa},,{},{},{}", r, f(delta_c), f(theory))?;
    }
    let kappa = cfg.kappa.unwrap_or(10_000);
    for c in [-2.0f64, -1.0, 0.0, 1.0, 2.0] {
        let (r, pe_exact, pe_clt) = resolved_window_prediction(kappa, eps, c)?;
        writeln!(out, "pe_window,{kappa},{},{},{},{}", f(c), r, f(pe_exact), f(pe_clt))?;
    }
    Ok(())
}

/// Experiment 4: cache-free depth horizons. Chain reaches `N* - k + 1`,
/// merge only `floor(1 + log2(N*/k))`; the ratio grows like
/// `N*/log2 N*`.
fn exp4_depth(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "eps,n_star,d_max_chain,d_max_merge,ratio,n_star_over_log")?;
    let chain = Arch::chain(cfg.k)?;
    let merge = Arch::merge(cfg.k)?;
    for eps in grid_or(cfg.eps, &[0.02, 0.01, 0.005, 0.002]) {
        let n_star = resilience_threshold(eps, cfg.delta)?;
        let d_chain = crate::analysis::depth_space_report(&chain, 8.0, eps, cfg.delta, 1, cfg.m)?.d_max;
        let d_merge = crate::analysis::depth_space_report(&merge, 8.0, eps, cfg.delta, 1, cfg.m)?.d_max;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            f(eps),
            n_star,
            d_chain,
            d_merge,
            f(d_chain as f64 / d_merge as f64),
            f(n_star as f64 / (n_star as f64).log2())
        )?;
    }
    Ok(())
}

/// The multi-query configurations: (L, alpha, kappa), realized as a
/// shared core of `alpha * kappa` facts plus disjoint private remainders.
pub const EXP5_CONFIGS: [(u64, f64, u64); 9] = [
    (1, 0.0, 500),
    (2, 0.6, 500),
    (2, 0.3, 500),
    (2, 0.0, 500),
    (3, 0.5, 500), // duplicate n_eff = 1000 for the collapse check
    (2, 0.1, 1000),
    (5, 0.0, 500),
    (10, 0.5, 500),
    (10, 0.0, 500),
];

/// Builds the explicit dependency sets of one configuration.
pub fn exp5_dep_sets(l: u64, alpha: f64, kappa: u64) -> Vec<std::collections::BTreeSet<u32>> {
    let core = (alpha * kappa as f64).round() as u32;
    let private = kappa as u32 - core;
    (0..l as u32)
        .map(|q| {
            let mut s: std::collections::BTreeSet<u32> = (1..=core).collect();
            let base = core + q * private;
            s.extend(base + 1..=base + private);
            s
        })
        .collect()
}

/// Experiment 5: multi-query sharing. Penalties computed through the
/// joint plan collapse onto a single curve in `n_eff`; `g1`/`g2` are the
/// first- and second-order sharing gains.
fn exp5_multiquery(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    writeln!(
        out,
        "l,alpha,kappa,n_eff,omega,r_star,sigma_unc_bits,sigma_coded_bits,penalty_exact,penalty_refined,g1,g2"
    )?;
    let eps = cfg.eps.unwrap_or(0.2);
    for &(l, alpha, kappa) in &EXP5_CONFIGS {
        let sets = exp5_dep_sets(l, alpha, kappa);
        let plan = plan_joint(&sets, eps, cfg.delta, cfg.m, Accounting::Ideal)?;
        let refined = penalty_ratio(plan.n_eff, eps, cfg.delta, cfg.m)?.ratio_refined;
        let (g1, g2) = joint_gains(l, kappa, alpha, cfg.delta)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            l,
            f(alpha),
            kappa,
            plan.n_eff,
            f(plan.omega),
            plan.r_star,
            f(plan.sigma_unc_bits),
            f(plan.sigma_coded_bits),
            f(plan.sigma_unc_bits / plan.sigma_coded_bits),
            f(refined),
            f(g1),
            f(g2)
        )?;
    }
    Ok(())
}

/// The Table I rows: (panel, scheme, kappa, eps, parameter) where the
/// parameter is the parity count `r` for coded rows and the exposed-leaf
/// count `N` for uncoded rows.
pub const TABLE1_ROWS: [(char, &str, u64, f64, u64); 14] = [
    ('A', "coded", 500, 0.2, 90),
    ('A', "coded", 500, 0.2, 100),
    ('A', "coded", 500, 0.2, 111),
    ('A', "coded", 500, 0.2, 120),
    ('A', "unc", 500, 0.2, 10),
    ('A', "unc", 500, 0.2, 3),
    ('A', "unc", 500, 0.2, 1),
    ('B', "coded", 100, 0.3, 20),
    ('B', "coded", 100, 0.3, 25),
    ('B', "coded", 100, 0.3, 30),
    ('B', "coded", 100, 0.3, 35),
    ('B', "unc", 100, 0.3, 5),
    ('B', "unc", 100, 0.3, 3),
    ('B', "unc", 100, 0.3, 1),
];

/// Experiment 6: exact failure probabilities for the table of reference
/// operating points, validated by Monte Carlo with exact confidence
/// intervals.
fn exp6_table(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "panel,scheme,kappa,eps,param,pe_exact,pe_mc,ci_low,ci_high,failures,trials")?;
    for &(panel, scheme, kappa, eps, param) in &TABLE1_ROWS {
        let (exact, sc) = match scheme {
            "coded" => (
                coded_error_exact(kappa, eps, param),
                Scenario::CodedAnalytic { kappa, eps, r: param },
            ),
            _ => (unc_error_exact(param, eps), Scenario::UncAnalytic { n: param, eps }),
        };
        let est = simulate(&sc, cfg.trials, cfg.seed, 0.95)?;
        writeln!(
            out,
            "{panel},{scheme},{kappa},{},{param},{},{},{},{},{},{}",
            f(eps),
            f(exact),
            f(est.p_hat),
            f(est.ci_low),
            f(est.ci_high),
            est.successes,
            est.trials
        )?;
    }
    Ok(())
}
