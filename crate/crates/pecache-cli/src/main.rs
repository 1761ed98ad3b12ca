//! Command-line front end: experiment reproduction (`exp`), closed-form
//! calculators (`calc`), Monte Carlo simulation (`simulate`), and cache
//! plan construction (`plan`).
//!
//! All outputs are CSV (or JSON for plans) written to stdout unless
//! `--out` is given; given the same flags and seed, `exp`, `calc`, and
//! `plan` output is byte-identical across runs.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pecache::analysis::{self, Scheme, SigmaMode, TailSide};
use pecache::caching::{
    self, coded_error_exact, min_parity_count, plan_coded_cache, plan_derivation_cache,
    plan_to_json, unc_error_exact, water_filling_cache, CachePlan,
};
use pecache::datalog::{Arch, Fact};
use pecache::erasure::{m_eff, resilience_threshold, sample_noisy_base, ErasureSpec, PollutionSpec};
use pecache::experiments::{run_experiment, ExperimentConfig};
use pecache::montecarlo::{simulate, Scenario};
use pecache::Accounting;
use std::io::Write;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "pecache", about = "Caching under premise erasure: experiments and calculators", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Reproduce one of the six numerical experiments as a CSV table.
    Exp(ExpArgs),
    /// Evaluate a closed-form quantity; prints a one-row CSV.
    Calc {
        #[command(subcommand)]
        op: CalcOp,
    },
    /// Monte Carlo estimate of a failure probability with a 95%
    /// Clopper-Pearson interval (CSV row).
    Simulate {
        #[command(subcommand)]
        scenario: SimScenario,
    },
    /// Construct a cache plan and emit it as versioned JSON.
    Plan {
        #[command(subcommand)]
        kind: PlanKind,
    },
}

#[derive(Args)]
struct ExpArgs {
    /// Experiment number, 1-6.
    #[arg(long)]
    exp: u8,
    /// Base-fact universe size.
    #[arg(long, default_value_t = 256)]
    m: u32,
    /// Rule arity parameter (>= 2).
    #[arg(long, default_value_t = 2)]
    k: u32,
    /// Erasure rate override; defaults to the experiment's own grid.
    #[arg(long)]
    eps: Option<f64>,
    /// Reliability target.
    #[arg(long)]
    delta: Option<f64>,
    /// Dependency-count override.
    #[arg(long)]
    kappa: Option<u64>,
    /// Parity-count override.
    #[arg(long)]
    r: Option<u64>,
    /// Monte Carlo trials (experiment 6).
    #[arg(long)]
    trials: Option<u64>,
    /// Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Lower,
    Upper,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Coded,
    Unc,
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaModeArg {
    Operational,
    Normal,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Chain,
    Merge,
}

impl ArchArg {
    fn build(self, k: u32) -> Result<Arch> {
        Ok(match self {
            ArchArg::Chain => Arch::chain(k)?,
            ArchArg::Merge => Arch::merge(k)?,
        })
    }
}

#[derive(Subcommand)]
enum CalcOp {
    /// Resilience threshold N*(eps, delta).
    Nstar {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Effective base size under a per-fact erasure profile.
    Meff {
        /// Comma-separated per-fact erasure rates (fact i gets the i-th).
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long)]
        delta: f64,
    },
    /// Bernoulli KL divergence D(p || q) in bits.
    Kl {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
    },
    /// Sharp binomial tail estimate and its exact counterpart.
    Br {
        #[arg(long)]
        kappa: u64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = SideArg::Lower)]
        side: SideArg,
    },
    /// Minimum parity count r*(kappa, eps, delta).
    Rstar {
        #[arg(long)]
        kappa: u64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Exact coded failure probability Pr[Bin(kappa, eps) > r].
    CodedPe {
        #[arg(long)]
        kappa: u64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        r: u64,
    },
    /// Exact exposed-dependency failure probability 1 - (1-eps)^n.
    UncPe {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        eps: f64,
    },
    /// Minimal cache size in bits for one scheme.
    Sigma {
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        #[arg(long)]
        kappa: u64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 256)]
        m: u32,
        #[arg(long, value_enum, default_value_t = SigmaModeArg::Operational)]
        mode: SigmaModeArg,
    },
    /// Exact and refined derivation-vs-coded penalty ratios.
    Penalty {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 256)]
        m: u32,
    },
    /// Phase-diagram regime at cache rate rho.
    Regime {
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        eps: f64,
        /// Critical-window offset in rho units; selects the window regime.
        #[arg(long)]
        window_c: Option<f64>,
    },
    /// Image-size upper bound on the success probability.
    ImageBound {
        #[arg(long)]
        sigma_bits: f64,
        #[arg(long)]
        kappa: u64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 256)]
        m: u32,
    },
    /// Strong-converse lower bound on the failure probability.
    Converse {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        kappa: u64,
        #[arg(long, default_value_t = 256)]
        m: u32,
    },
    /// Error exponents of both schemes at cache rate rho.
    Exponents {
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        eps: f64,
    },
    /// Cache-rate and exponent crossover points.
    Crossover {
        #[arg(long)]
        eps: f64,
    },
    /// Exponent-matched cache-rate gap h(E).
    Gap {
        #[arg(long)]
        exponent: f64,
        #[arg(long)]
        eps: f64,
    },
    /// Critical-window operating point rho = eps + c/sqrt(kappa).
    Window {
        #[arg(long)]
        kappa: u64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        c: f64,
    },
    /// Depth-space summary for a fixed cache budget.
    DepthReport {
        #[arg(long, value_enum)]
        arch: ArchArg,
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long)]
        sigma_bits: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        d: u32,
        #[arg(long, default_value_t = 256)]
        m: u32,
    },
    /// Multi-query first- and second-order gains.
    JointGains {
        #[arg(long)]
        l: u64,
        #[arg(long)]
        kappa: u64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Cache sizes serving several reliability targets at once.
    CapacityRegion {
        #[arg(long)]
        n_eff: u64,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_delimiter = ',')]
        delta: Vec<f64>,
        #[arg(long, default_value_t = 256)]
        m: u32,
    },
    /// Per-query limits as the number of queries grows.
    LargeL {
        #[arg(long)]
        kappa: u64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 256)]
        m: u32,
    },
    /// Soundness and capacity shift under base loss and pollution.
    NoisyBase {
        #[arg(long, default_value_t = 256)]
        m: u32,
        #[arg(long)]
        lost: u32,
        #[arg(long)]
        spurious: u32,
        #[arg(long)]
        kappa_t: u64,
    },
    /// Change-of-measure identity check for the strong converse.
    AppendixB {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        gamma: f64,
    },
}

#[derive(Args)]
struct SimCommon {
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, value_enum)]
    arch: ArchArg,
    #[arg(long, default_value_t = 2)]
    k: u32,
    #[arg(long, default_value_t = 256)]
    m: u32,
    /// Derivation depth of the query head.
    #[arg(long)]
    depth: u32,
    /// Comma-separated head-tuple coordinates (1-based fact indices).
    #[arg(long, value_delimiter = ',')]
    tuple: Vec<u32>,
}

impl QueryArgs {
    fn query(&self) -> Result<(Fact, Arch)> {
        let arch = self.arch.build(self.k)?;
        let q = Fact::idb(self.depth, self.tuple.clone());
        q.well_formed(&arch, self.m)?;
        Ok((q, arch))
    }
}

#[derive(Args)]
struct ErasureArgs {
    /// Uniform erasure rate.
    #[arg(long, conflicts_with = "eps_list")]
    eps: Option<f64>,
    /// Comma-separated per-fact erasure rates (length m).
    #[arg(long, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
}

impl ErasureArgs {
    fn spec(&self) -> Result<ErasureSpec> {
        let spec = match (&self.eps, &self.eps_list) {
            (Some(e), None) => ErasureSpec::Uniform(*e),
            (None, Some(v)) => ErasureSpec::PerFact(v.clone()),
            _ => bail!("provide exactly one of --eps or --eps-list"),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum SimScenario {
    /// Binomial erasure count over kappa dependencies, failure iff > r.
    Coded {
        #[arg(long)]
        kappa: u64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        r: u64,
        #[command(flatten)]
        common: SimCommon,
    },
    /// Failure iff any of n exposed dependencies is erased.
    Unc {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        eps: f64,
        #[command(flatten)]
        common: SimCommon,
    },
    /// Sample noisy bases and run the real decoder for a plan file.
    EndToEnd {
        #[command(flatten)]
        query: QueryArgs,
        #[command(flatten)]
        erasure: ErasureArgs,
        /// Comma-separated indices (> m) of spurious injected facts.
        #[arg(long, value_delimiter = ',')]
        spurious: Vec<u32>,
        /// Path to a plan JSON produced by `pecache plan`.
        #[arg(long)]
        plan: std::path::PathBuf,
        /// Also write one survivor-bitmask CSV row per trial here.
        #[arg(long)]
        dump_noise: Option<std::path::PathBuf>,
        #[command(flatten)]
        common: SimCommon,
    },
}

#[derive(Args)]
struct PlanCommon {
    #[arg(long)]
    delta: f64,
    /// Account storage as whole bits per symbol instead of ideal log2 m.
    #[arg(long)]
    integer: bool,
    /// Write the plan JSON here instead of stdout.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Subcommand)]
enum PlanKind {
    /// Cache intermediate derived facts so few base leaves stay exposed.
    Derivation {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long)]
        eps: f64,
        #[command(flatten)]
        common: PlanCommon,
    },
    /// Protect the most vulnerable base leaves under non-uniform erasure.
    WaterFilling {
        #[command(flatten)]
        query: QueryArgs,
        #[command(flatten)]
        erasure: ErasureArgs,
        #[command(flatten)]
        common: PlanCommon,
    },
    /// Systematic MDS parity over an explicit dependency list.
    Coded {
        /// Comma-separated base-fact indices to protect.
        #[arg(long, value_delimiter = ',')]
        deps: Vec<u32>,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 256)]
        m: u32,
        #[command(flatten)]
        common: PlanCommon,
    },
}

/// Shortest-round-trip float formatting; deterministic across runs.
fn f(x: f64) -> String {
    format!("{x}")
}

fn emit(out: &Option<std::path::PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run_calc(op: &CalcOp) -> Result<String> {
    Ok(match op {
        CalcOp::Nstar { eps, delta } => {
            let n = resilience_threshold(*eps, *delta)?;
            format!("eps,delta,n_star\n{},{},{n}\n", f(*eps), f(*delta))
        }
        CalcOp::Meff { eps, delta } => {
            let spec = ErasureSpec::PerFact(eps.clone());
            spec.validate()?;
            let me = m_eff(&spec, eps.len() as u32, *delta)?;
            format!("m,delta,m_eff\n{},{},{me}\n", eps.len(), f(*delta))
        }
        CalcOp::Kl { p, q } => {
            format!("p,q,kl_bits\n{},{},{}\n", f(*p), f(*q), f(analysis::kl_bernoulli(*p, *q)?))
        }
        CalcOp::Br { kappa, eps, alpha, side } => {
            let s = match side {
                SideArg::Lower => TailSide::Lower,
                SideArg::Upper => TailSide::Upper,
            };
            let br = analysis::bahadur_rao_tail(*kappa, *eps, *alpha, s)?;
            let boundary = (*alpha * *kappa as f64).round() as u64;
            let exact = match s {
                TailSide::Lower => pecache::numerics::binom_cdf(*kappa, boundary, *eps),
                TailSide::Upper => {
                    pecache::numerics::binom_sf(*kappa, boundary.saturating_sub(1), *eps)
                }
            };
            format!(
                "kappa,eps,alpha,side,estimate,tilt,exact,prefactor_const_bits\n{kappa},{},{},{},{},{},{},{}\n",
                f(*eps),
                f(*alpha),
                match s {
                    TailSide::Lower => "lower",
                    TailSide::Upper => "upper",
                },
                f(br.estimate),
                f(br.tilt),
                f(exact),
                f(analysis::br_prefactor_constant(*eps, *alpha, s)?),
            )
        }
        CalcOp::Rstar { kappa, eps, delta } => {
            let r = min_parity_count(*kappa, *eps, *delta)?;
            format!("kappa,eps,delta,r_star\n{kappa},{},{},{r}\n", f(*eps), f(*delta))
        }
        CalcOp::CodedPe { kappa, eps, r } => {
            format!(
                "kappa,eps,r,p_e\n{kappa},{},{r},{}\n",
                f(*eps),
                f(coded_error_exact(*kappa, *eps, *r))
            )
        }
        CalcOp::UncPe { n, eps } => {
            format!("n,eps,p_e\n{n},{},{}\n", f(*eps), f(unc_error_exact(*n, *eps)))
        }
        CalcOp::Sigma { scheme, kappa, eps, delta, m, mode } => {
            let sch = match scheme {
                SchemeArg::Coded => Scheme::Coded,
                SchemeArg::Unc => Scheme::Unc,
            };
            let md = match mode {
                SigmaModeArg::Operational => SigmaMode::Operational,
                SigmaModeArg::Normal => SigmaMode::NormalApprox,
            };
            let s = analysis::sigma_star(sch, *kappa, *eps, *delta, *m, md)?;
            format!(
                "scheme,kappa,eps,delta,m,mode,sigma_bits\n{},{kappa},{},{},{m},{},{}\n",
                match sch {
                    Scheme::Coded => "coded",
                    Scheme::Unc => "unc",
                },
                f(*eps),
                f(*delta),
                match md {
                    SigmaMode::Operational => "operational",
                    SigmaMode::NormalApprox => "normal",
                },
                f(s)
            )
        }
        CalcOp::Penalty { n, eps, delta, m } => {
            let p = analysis::penalty_ratio(*n, *eps, *delta, *m)?;
            format!(
                "n,eps,delta,m,n_star,r_star,sigma_unc_bits,sigma_coded_bits,ratio_exact,ratio_refined\n{n},{},{},{m},{},{},{},{},{},{}\n",
                f(*eps),
                f(*delta),
                p.n_star,
                p.r_star,
                f(p.sigma_unc_bits),
                f(p.sigma_coded_bits),
                f(p.ratio_exact),
                f(p.ratio_refined)
            )
        }
        CalcOp::Regime { scheme, rho, eps, window_c } => {
            let sch = match scheme {
                SchemeArg::Coded => Scheme::Coded,
                SchemeArg::Unc => Scheme::Unc,
            };
            let r = analysis::classify_regime(sch, *rho, *eps, *window_c)?;
            format!(
                "scheme,rho,eps,regime\n{},{},{},{r:?}\n",
                match sch {
                    Scheme::Coded => "coded",
                    Scheme::Unc => "unc",
                },
                f(*rho),
                f(*eps)
            )
        }
        CalcOp::ImageBound { sigma_bits, kappa, eps, m } => {
            format!(
                "sigma_bits,kappa,eps,m,p_c_upper\n{},{kappa},{},{m},{}\n",
                f(*sigma_bits),
                f(*eps),
                f(analysis::image_size_bound(*sigma_bits, *kappa, *eps, *m)?)
            )
        }
        CalcOp::Converse { gamma, kappa, m } => {
            format!(
                "gamma,kappa,m,p_e_lower\n{},{kappa},{m},{}\n",
                f(*gamma),
                f(analysis::strong_converse_lb(*gamma, *kappa, *m)?)
            )
        }
        CalcOp::Exponents { rho, eps } => {
            let (c, u) = analysis::exponent_landscape(*rho, *eps)?;
            format!(
                "rho,eps,coded_exp_bits,unc_exp_bits\n{},{},{},{}\n",
                f(*rho),
                f(*eps),
                f(c),
                f(u)
            )
        }
        CalcOp::Crossover { eps } => {
            format!(
                "eps,rho_star,e_star\n{},{},{}\n",
                f(*eps),
                f(analysis::crossover_rho(*eps)?),
                f(analysis::crossover_exponent(*eps)?)
            )
        }
        CalcOp::Gap { exponent, eps } => {
            format!(
                "exponent_bits,eps,h\n{},{},{}\n",
                f(*exponent),
                f(*eps),
                f(analysis::exponent_gap(*exponent, *eps)?)
            )
        }
        CalcOp::Window { kappa, eps, c } => {
            let (r, exact, clt) = analysis::resolved_window_prediction(*kappa, *eps, *c)?;
            format!(
                "kappa,eps,c,r,p_e_exact,p_e_clt\n{kappa},{},{},{r},{},{}\n",
                f(*eps),
                f(*c),
                f(exact),
                f(clt)
            )
        }
        CalcOp::DepthReport { arch, k, sigma_bits, eps, delta, d, m } => {
            let a = arch.build(*k)?;
            let rep = analysis::depth_space_report(&a, *sigma_bits, *eps, *delta, *d, *m)?;
            format!(
                "arch,k,sigma_bits,eps,delta,d,m,d_star,width_coded_scale,width_unc_scale,alpha_of_d,d_max\n{},{k},{},{},{},{d},{m},{},{},{},{},{}\n",
                match arch {
                    ArchArg::Chain => "chain",
                    ArchArg::Merge => "merge",
                },
                f(*sigma_bits),
                f(*eps),
                f(*delta),
                f(rep.d_star),
                f(rep.width_coded_scale),
                f(rep.width_unc_scale),
                f(rep.alpha_of_d),
                rep.d_max
            )
        }
        CalcOp::JointGains { l, kappa, alpha, delta } => {
            let (g1, g2) = analysis::joint_gains(*l, *kappa, *alpha, *delta)?;
            format!(
                "l,kappa,alpha,delta,g1,g2\n{l},{kappa},{},{},{},{}\n",
                f(*alpha),
                f(*delta),
                f(g1),
                f(g2)
            )
        }
        CalcOp::CapacityRegion { n_eff, eps, delta, m } => {
            let (coded, unc) = analysis::capacity_region_sigma(*n_eff, *eps, delta, *m)?;
            format!(
                "n_eff,eps,m,sigma_coded_bits,sigma_unc_bits\n{n_eff},{},{m},{},{}\n",
                f(*eps),
                f(coded),
                f(unc)
            )
        }
        CalcOp::LargeL { kappa, alpha, eps, m } => {
            let (coded, unc, penalty) = analysis::large_l_limits(*kappa, *alpha, *eps, *m)?;
            format!(
                "kappa,alpha,eps,m,per_query_coded_bits,per_query_unc_bits,penalty\n{kappa},{},{},{m},{},{},{}\n",
                f(*alpha),
                f(*eps),
                f(coded),
                f(unc),
                f(penalty)
            )
        }
        CalcOp::NoisyBase { m, lost, spurious, kappa_t } => {
            let s = analysis::noisy_base_stats(*m, *lost, *spurious, *kappa_t)?;
            format!(
                "m,lost,spurious,kappa_t,m_tilde,sound_fraction,capacity_shift_bits\n{m},{lost},{spurious},{kappa_t},{},{},{}\n",
                s.m_tilde,
                f(s.sound_fraction),
                f(s.capacity_shift_bits)
            )
        }
        CalcOp::AppendixB { eps, gamma } => {
            let c = analysis::appendix_b_check(*eps, *gamma)?;
            format!(
                "eps,gamma,u_star,u_star_closed,neg_g_star_bits,kl_bits\n{},{},{},{},{},{}\n",
                f(*eps),
                f(*gamma),
                f(c.u_star),
                f(c.u_star_closed),
                f(c.neg_g_star),
                f(c.kl)
            )
        }
    })
}

fn run_simulate(scenario: &SimScenario) -> Result<String> {
    let header = "scenario,params,trials,p_hat,ci_low,ci_high,seed,wall_ms\n";
    let start = Instant::now();
    let (name, params, sc, common) = match scenario {
        SimScenario::Coded { kappa, eps, r, common } => (
            "coded",
            format!("kappa={kappa};eps={};r={r}", f(*eps)),
            Scenario::CodedAnalytic { kappa: *kappa, eps: *eps, r: *r },
            common,
        ),
        SimScenario::Unc { n, eps, common } => (
            "unc",
            format!("n={n};eps={}", f(*eps)),
            Scenario::UncAnalytic { n: *n, eps: *eps },
            common,
        ),
        SimScenario::EndToEnd { query, erasure, spurious, plan, dump_noise, common } => {
            let (q, arch) = query.query()?;
            let spec = erasure.spec()?;
            let pollution = PollutionSpec { spurious: spurious.clone() };
            pollution.validate(query.m)?;
            let text = std::fs::read_to_string(plan)
                .with_context(|| format!("reading {}", plan.display()))?;
            let plan: CachePlan = caching::plan_from_json(&text)?;
            if let Some(path) = dump_noise {
                let mut dump = String::new();
                for t in 0..common.trials {
                    let noisy = sample_noisy_base(query.m, &spec, &pollution, common.seed, t)?;
                    let mask: Vec<&str> =
                        noisy.survivors.iter().map(|&b| if b { "1" } else { "0" }).collect();
                    dump.push_str(&format!("{t},{}\n", mask.join(",")));
                }
                std::fs::write(path, dump)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            (
                "end_to_end",
                format!("depth={};arity={};m={}", query.depth, query.tuple.len(), query.m),
                Scenario::EndToEnd { q, arch, m: query.m, spec, pollution, plan },
                common,
            )
        }
    };
    let est = simulate(&sc, common.trials, common.seed, common.level)?;
    let wall_ms = start.elapsed().as_millis();
    Ok(format!(
        "{header}{name},{params},{},{},{},{},{},{wall_ms}\n",
        est.trials,
        f(est.p_hat),
        f(est.ci_low),
        f(est.ci_high),
        est.seed
    ))
}

fn run_plan(kind: &PlanKind) -> Result<(String, Option<std::path::PathBuf>)> {
    let (plan, common) = match kind {
        PlanKind::Derivation { query, eps, common } => {
            let (q, arch) = query.query()?;
            let acct = if common.integer { Accounting::Integer } else { Accounting::Ideal };
            (
                CachePlan::Derivation(plan_derivation_cache(
                    &q,
                    query.m,
                    &arch,
                    *eps,
                    common.delta,
                    acct,
                )?),
                common,
            )
        }
        PlanKind::WaterFilling { query, erasure, common } => {
            let (q, arch) = query.query()?;
            let spec = erasure.spec()?;
            let acct = if common.integer { Accounting::Integer } else { Accounting::Ideal };
            (
                CachePlan::Derivation(water_filling_cache(
                    &q,
                    query.m,
                    &arch,
                    &spec,
                    common.delta,
                    acct,
                )?),
                common,
            )
        }
        PlanKind::Coded { deps, eps, m, common } => {
            let acct = if common.integer { Accounting::Integer } else { Accounting::Ideal };
            (CachePlan::Coded(plan_coded_cache(deps, *eps, common.delta, *m, acct)?), common)
        }
    };
    let mut text = plan_to_json(&plan)?;
    text.push('\n');
    Ok((text, common.out.clone()))
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match &cli.cmd {
        Cmd::Exp(a) => {
            let mut cfg = ExperimentConfig::new(a.exp)?;
            cfg.m = a.m;
            cfg.k = a.k;
            cfg.eps = a.eps;
            if let Some(d) = a.delta {
                cfg.delta = d;
            }
            cfg.kappa = a.kappa;
            cfg.r = a.r;
            if let Some(t) = a.trials {
                cfg.trials = t;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            match &a.out {
                Some(path) => {
                    let mut file = std::fs::File::create(path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    run_experiment(&cfg, &mut file)?;
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    run_experiment(&cfg, &mut lock)?;
                }
            }
        }
        Cmd::Calc { op } => emit(&None, &run_calc(op)?)?,
        Cmd::Simulate { scenario } => emit(&None, &run_simulate(scenario)?)?,
        Cmd::Plan { kind } => {
            let (text, out) = run_plan(kind)?;
            emit(&out, &text)?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
