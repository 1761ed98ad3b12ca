//! Closed-form and asymptotic analysis of cache error probabilities.
//!
//! All information quantities are in bits (`log2`) unless a function
//! documents otherwise; erasure costs remain in nats as in [`crate::erasure`].

use crate::caching::min_parity_count;
use crate::datalog::{Arch, ArchKind};
use crate::erasure::resilience_threshold;
use crate::numerics::{ln_binom_pmf, phi_inv, phi_sf};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Bernoulli KL divergence `D(p || q)` in bits, with `0 log 0 = 0`.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParam(format!(
            "kl_bernoulli needs p in [0,1], q in (0,1); got p={p}, q={q}"
        )));
    }
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).log2() };
    Ok(term(p, q) + term(1.0 - p, 1.0 - q))
}

/// Which binomial tail a sharp estimate targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailSide {
    /// `Pr[Bin <= alpha kappa]` with `alpha < eps`.
    Lower,
    /// `Pr[Bin >= alpha kappa]` with `alpha > eps`.
    Upper,
}

/// A Bahadur-Rao tail estimate with its exponential tilt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrTail {
    pub estimate: f64,
    /// Tilt `t* = ln[alpha(1-eps) / (eps(1-alpha))]`.
    pub tilt: f64,
}

/// Sharp (Bahadur-Rao) large-deviation estimate of a binomial tail:
/// `2^{-kappa D(alpha||eps)} / (F sqrt(2 pi kappa alpha (1-alpha)))`
/// with lattice factor `F = 1 - e^{t*}` on the lower side and
/// `F = 1 - e^{-t*}` on the upper side.
pub fn bahadur_rao_tail(kappa: u64, eps: f64, alpha: f64, side: TailSide) -> Result<BrTail> {
    if !(eps > 0.0 && eps < 1.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParam("eps and alpha must lie in (0,1)".into()));
    }
    match side {
        TailSide::Lower if alpha >= eps => {
            return Err(Error::InvalidParam(format!(
                "lower tail needs alpha < eps (alpha={alpha}, eps={eps})"
            )))
        }
        TailSide::Upper if alpha <= eps => {
            return Err(Error::InvalidParam(format!(
                "upper tail needs alpha > eps (alpha={alpha}, eps={eps})"
            )))
        }
        _ => {}
    }
    let tilt = (alpha * (1.0 - eps) / (eps * (1.0 - alpha))).ln();
    let lattice = match side {
        TailSide::Lower => 1.0 - tilt.exp(),
        TailSide::Upper => 1.0 - (-tilt).exp(),
    };
    let d = kl_bernoulli(alpha, eps)?;
    let k = kappa as f64;
    let estimate = (-k * d * std::f64::consts::LN_2).exp()
        / (lattice * (2.0 * std::f64::consts::PI * k * alpha * (1.0 - alpha)).sqrt());
    Ok(BrTail { estimate, tilt })
}

/// The constant part of the Bahadur-Rao log-prefactor:
/// `Psi(kappa) = kappa (D_hat - D) -> 1/2 log2 kappa + c(alpha)` with
/// `c(alpha) = log2(F sqrt(2 pi alpha (1-alpha)))`.
pub fn br_prefactor_constant(eps: f64, alpha: f64, side: TailSide) -> Result<f64> {
    let tail = bahadur_rao_tail(1, eps, alpha, side)?;
    let lattice = match side {
        TailSide::Lower => 1.0 - tail.tilt.exp(),
        TailSide::Upper => 1.0 - (-tail.tilt).exp(),
    };
    Ok((lattice * (2.0 * std::f64::consts::PI * alpha * (1.0 - alpha)).sqrt()).log2())
}

/// Moderate-deviation error estimate at cache rate `rho = eps + a/sqrt(kappa)`:
/// `P_e ~ Phi_bar(a / sqrt(eps(1-eps)))`. (`kappa` only fixes the scaling
/// regime; the limit law does not depend on it.)
pub fn moderate_dev_pe(_kappa: u64, eps: f64, a: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParam("eps must lie in (0,1)".into()));
    }
    Ok(phi_sf(a / (eps * (1.0 - eps)).sqrt()))
}

/// Caching scheme selector for the size/penalty formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Coded,
    Unc,
}

/// How the minimal cache size is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaMode {
    /// Exact CDF inversion (`r* log2 m` for coded, `(kappa-N*)+ log2 m`
    /// uncoded).
    Operational,
    /// Second-order normal approximation with dispersion
    /// `V = eps(1-eps)(log2 m)^2`:
    /// `kappa eps log2 m + sqrt(kappa V) PhiInv(1-delta) + 1/2 log2 kappa`.
    NormalApprox,
}

/// Minimal cache size in bits for failure probability `delta`.
pub fn sigma_star(scheme: Scheme, kappa: u64, eps: f64, delta: f64, m: u32, mode: SigmaMode) -> Result<f64> {
    let log_m = (m as f64).log2();
    match scheme {
        Scheme::Unc => {
            let n_star = resilience_threshold(eps, delta)?;
            Ok(kappa.saturating_sub(n_star) as f64 * log_m)
        }
        Scheme::Coded => match mode {
            SigmaMode::Operational => {
                Ok(min_parity_count(kappa, eps, delta)? as f64 * log_m)
            }
            SigmaMode::NormalApprox => {
                let k = kappa as f64;
                let v = eps * (1.0 - eps) * log_m * log_m;
                Ok(k * eps * log_m + (k * v).sqrt() * phi_inv(1.0 - delta)? + 0.5 * k.log2())
            }
        },
    }
}

/// Exact and refined penalty of forgoing coding for one query with `n`
/// independent dependencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyReport {
    pub n: u64,
    pub eps: f64,
    pub delta: f64,
    pub m: u32,
    pub n_star: u64,
    pub r_star: u64,
    pub sigma_unc_bits: f64,
    pub sigma_coded_bits: f64,
    /// `sigma_unc / sigma_coded` with both sides by exact CDF inversion.
    pub ratio_exact: f64,
    /// Second-order expansion
    /// `1/eps - N*/(eps n) - PhiInv(1-delta) sqrt(1-eps) / (eps^{3/2} sqrt(n))`.
    pub ratio_refined: f64,
}

pub fn penalty_ratio(n: u64, eps: f64, delta: f64, m: u32) -> Result<PenaltyReport> {
    if n == 0 {
        return Err(Error::InvalidParam("n must be >= 1".into()));
    }
    let n_star = resilience_threshold(eps, delta)?;
    let r_star = min_parity_count(n, eps, delta)?;
    let log_m = (m as f64).log2();
    let sigma_unc_bits = n.saturating_sub(n_star) as f64 * log_m;
    let sigma_coded_bits = r_star as f64 * log_m;
    let nf = n as f64;
    let ratio_refined = 1.0 / eps - n_star as f64 / (eps * nf)
        - phi_inv(1.0 - delta)? * (1.0 - eps).sqrt() / (eps.powf(1.5) * nf.sqrt());
    Ok(PenaltyReport {
        n,
        eps,
        delta,
        m,
        n_star,
        r_star,
        ratio_exact: sigma_unc_bits / sigma_coded_bits,
        sigma_unc_bits,
        sigma_coded_bits,
        ratio_refined,
    })
}

/// Phase of the error-probability landscape at cache rate `rho` (cache
/// bits per dependency bit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseRegime {
    /// Coded, deep sub-capacity: `rho < eps - eta`, error -> 1 exponentially.
    C1,
    /// Coded, just below capacity.
    C2,
    /// Coded, critical window `rho = eps + Theta(1/sqrt(kappa))`.
    C3,
    /// Coded, just above capacity.
    C4,
    /// Coded, deep super-capacity: `rho > eps + eta`, error -> 0 exponentially.
    C5,
    /// Uncoded, sub-full cache: error -> 1.
    U1,
    /// Uncoded, near-full cache: `Theta(1)` error.
    U2,
    /// Uncoded, full cache `rho = 1`: zero error.
    U3,
}

/// Fixed classification margin on the cache rate.
pub const PHASE_ETA: f64 = 0.01;

/// Classifies the operating point. `window_c`, if given, is the half-width
/// of the critical window in `rho` units (callers typically pass
/// `c/sqrt(kappa)`); without it only `rho == eps` classifies as critical.
/// The uncoded near-full band `1 - rho <= eta` plays the role of the
/// `(1-rho) kappa = Theta(1)` regime at finite sizes.
pub fn classify_regime(scheme: Scheme, rho: f64, eps: f64, window_c: Option<f64>) -> Result<PhaseRegime> {
    if !(eps > 0.0 && eps < 1.0) || !(0.0..=1.0 + 1e-12).contains(&rho) {
        return Err(Error::InvalidParam("need eps in (0,1) and rho in [0,1]".into()));
    }
    Ok(match scheme {
        Scheme::Coded => {
            let w = window_c.unwrap_or(0.0);
            let dev = rho - eps;
            if dev.abs() <= w {
                PhaseRegime::C3
            } else if dev < -PHASE_ETA {
                PhaseRegime::C1
            } else if dev > PHASE_ETA {
                PhaseRegime::C5
            } else if dev < 0.0 {
                PhaseRegime::C2
            } else {
                PhaseRegime::C4
            }
        }
        Scheme::Unc => {
            if rho >= 1.0 {
                PhaseRegime::U3
            } else if 1.0 - rho <= PHASE_ETA {
                PhaseRegime::U2
            } else {
                PhaseRegime::U1
            }
        }
    })
}

/// Image-size upper bound on decode success with `sigma_bits` of cache:
/// `P_c <= E[min(1, 2^sigma / m^E)]` over `E ~ Bin(kappa, eps)`, summed
/// exactly.
pub fn image_size_bound(sigma_bits: f64, kappa: u64, eps: f64, m: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidParam("eps must lie in [0,1)".into()));
    }
    let log_m = (m as f64).log2();
    let mut total = 0.0;
    for e in 0..=kappa {
        let ln_cap = ((sigma_bits - e as f64 * log_m) * std::f64::consts::LN_2).min(0.0);
        total += (ln_binom_pmf(kappa, e, eps) + ln_cap).exp();
    }
    Ok(total.min(1.0))
}

/// Strong-converse lower bound on the error of any `sigma <= (eps-gamma)
/// kappa log2 m`-bit cache: `1 - e^{-gamma^2 kappa / 2} - m^{1 - gamma
/// kappa / 2}`, clamped to `[0, 1]`.
pub fn strong_converse_lb(gamma: f64, kappa: u64, m: u32) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParam("gamma must lie in (0,1)".into()));
    }
    let k = kappa as f64;
    let lb = 1.0
        - (-gamma * gamma * k / 2.0).exp()
        - ((1.0 - gamma * k / 2.0) * (m as f64).ln()).exp();
    Ok(lb.clamp(0.0, 1.0))
}

/// Error exponents at cache rate `rho`: coded `D(rho || eps)`, uncoded
/// `(1-rho) |log2(1-eps)|`.
pub fn exponent_landscape(rho: f64, eps: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParam("rho must lie in [0,1]".into()));
    }
    Ok((kl_bernoulli(rho, eps)?, (1.0 - rho) * (1.0 - eps).log2().abs()))
}

fn bisect(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    // Invariant: f(lo) and f(hi) have opposite signs.
    let f_lo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The cache rate `rho* in (eps, 1)` where the two exponents cross.
pub fn crossover_rho(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParam("eps must lie in (0,1)".into()));
    }
    let f = |r: f64| {
        let (c, u) = exponent_landscape(r, eps).unwrap();
        c - u
    };
    // At rho -> eps+ the coded exponent vanishes below the uncoded one;
    // at rho -> 1- it dominates.
    Ok(bisect(eps + 1e-12, 1.0 - 1e-12, 1e-10, f))
}

/// Cache rate the coded scheme needs for target exponent `E` (the root of
/// `D(rho || eps) = E` above `eps`).
pub fn rho_code_of_exponent(exp: f64, eps: f64) -> Result<f64> {
    let max = kl_bernoulli(1.0, eps)?;
    if !(exp > 0.0 && exp < max) {
        return Err(Error::InvalidParam(format!("exponent must lie in (0, {max})")));
    }
    Ok(bisect(eps + 1e-15, 1.0, 1e-12, |r| kl_bernoulli(r, eps).unwrap() - exp))
}

/// Cache rate the uncoded scheme needs for target exponent `E`.
pub fn rho_unc_of_exponent(exp: f64, eps: f64) -> Result<f64> {
    let slope = (1.0 - eps).log2().abs();
    if !(exp > 0.0 && exp < slope) {
        return Err(Error::InvalidParam(format!("exponent must lie in (0, {slope})")));
    }
    Ok(1.0 - exp / slope)
}

/// Rate ratio `h(E) = rho_unc(E) / rho_code(E)`: strictly decreasing,
/// `h(0+) = 1/eps`, and crossing 1 at a unique `E*`.
pub fn exponent_gap(exp: f64, eps: f64) -> Result<f64> {
    Ok(rho_unc_of_exponent(exp, eps)? / rho_code_of_exponent(exp, eps)?)
}

/// The unique exponent `E*` with `h(E*) = 1`.
pub fn crossover_exponent(eps: f64) -> Result<f64> {
    let slope = (1.0 - eps).log2().abs();
    Ok(bisect(1e-10, slope - 1e-10, 1e-10, |e| exponent_gap(e, eps).unwrap() - 1.0))
}

/// Critical-window operating point at `rho = eps + c/sqrt(kappa)`:
/// returns the parity count `r = floor(eps kappa + c sqrt(kappa))`, the
/// exact failure probability `Pr[Bin(kappa, eps) > r]`, and the CLT
/// prediction `Phi_bar(c / sqrt(eps(1-eps)))`.
pub fn resolved_window_prediction(kappa: u64, eps: f64, c: f64) -> Result<(u64, f64, f64)> {
    if !(eps > 0.0 && eps < 1.0) || kappa == 0 {
        return Err(Error::InvalidParam("need eps in (0,1), kappa >= 1".into()));
    }
    let r = (eps * kappa as f64 + c * (kappa as f64).sqrt()).floor().max(0.0) as u64;
    let pe_exact = crate::numerics::binom_sf(kappa, r.min(kappa), eps);
    Ok((r, pe_exact, moderate_dev_pe(kappa, eps, c)?))
}

/// Depth-space summary for a fixed cache budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSpaceReport {
    pub kind: ArchKind,
    /// Depth at which the budget meets the coded capacity line:
    /// chain `r/eps - k + 1`, merge `1 + log2(r / (eps k))`, with
    /// `r = sigma_bits / log2 m`.
    pub d_star: f64,
    /// Representative scale of the coded critical-window width in depth:
    /// chain `sqrt(d*)`, merge `2^{-d*/2}`.
    pub width_coded_scale: f64,
    /// Representative scale of the uncoded window: chain `1/eps`,
    /// merge `log2(1/delta)`.
    pub width_unc_scale: f64,
    /// Budget-to-dependency ratio `r / kappa(d)` at the requested depth.
    pub alpha_of_d: f64,
    /// Deepest depth servable with zero cache: chain `N* - k + 1`,
    /// merge `floor(1 + log2(N*/k))`.
    pub d_max: i64,
}

pub fn depth_space_report(
    arch: &Arch,
    sigma_bits: f64,
    eps: f64,
    delta: f64,
    d: u32,
    m: u32,
) -> Result<DepthSpaceReport> {
    if !(sigma_bits >= 0.0) {
        return Err(Error::InvalidParam("sigma_bits must be non-negative".into()));
    }
    let r = sigma_bits / (m as f64).log2();
    let n_star = resilience_threshold(eps, delta)?;
    let k = arch.k as f64;
    let (d_star, width_coded_scale, width_unc_scale, d_max) = match arch.kind {
        ArchKind::Chain => {
            let ds = r / eps - k + 1.0;
            (
                ds,
                ds.max(0.0).sqrt(),
                1.0 / eps,
                n_star as i64 - arch.k as i64 + 1,
            )
        }
        ArchKind::Merge => {
            if r <= 0.0 {
                return Err(Error::InvalidParam("merge d* needs sigma_bits > 0".into()));
            }
            let ds = 1.0 + (r / (eps * k)).log2();
            (
                ds,
                (2.0f64).powf(-ds / 2.0),
                (1.0 / delta).log2(),
                (1.0 + (n_star as f64 / k).log2()).floor() as i64,
            )
        }
    };
    Ok(DepthSpaceReport {
        kind: arch.kind,
        d_star,
        width_coded_scale,
        width_unc_scale,
        alpha_of_d: r / arch.kappa_of_depth(d)? as f64,
        d_max,
    })
}

/// First- and second-order multi-query gains for `L` queries of `kappa`
/// dependencies with pairwise common-core overlap `alpha`:
/// `G1 = L kappa / n_eff` and
/// `G2 = L sqrt(kappa) PhiInv(1-delta/L) / (sqrt(n_eff) PhiInv(1-delta))`.
pub fn joint_gains(l: u64, kappa: u64, alpha: f64, delta: f64) -> Result<(f64, f64)> {
    if l == 0 || kappa == 0 || !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParam("need l, kappa >= 1 and alpha in [0,1]".into()));
    }
    let lf = l as f64;
    let n_eff = (lf - (lf - 1.0) * alpha) * kappa as f64;
    let g1 = lf * kappa as f64 / n_eff;
    let g2 = lf * (kappa as f64).sqrt() * phi_inv(1.0 - delta / lf)?
        / (n_eff.sqrt() * phi_inv(1.0 - delta)?);
    Ok((g1, g2))
}

/// Cache sizes serving every target in `delta_list` simultaneously: the
/// tightest (smallest) delta binds both routes.
pub fn capacity_region_sigma(n_eff: u64, eps: f64, delta_list: &[f64], m: u32) -> Result<(f64, f64)> {
    let delta_min = delta_list
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !delta_min.is_finite() {
        return Err(Error::InvalidParam("empty delta list".into()));
    }
    let log_m = (m as f64).log2();
    let coded = min_parity_count(n_eff, eps, delta_min)? as f64 * log_m;
    let unc = n_eff.saturating_sub(resilience_threshold(eps, delta_min)?) as f64 * log_m;
    Ok((coded, unc))
}

/// Per-query cache sizes in the `L -> infinity` limit with overlap
/// `alpha`: coded `eps (1-alpha) kappa log2 m`, uncoded
/// `(1-alpha) kappa log2 m`, penalty `1/eps`.
pub fn large_l_limits(kappa: u64, alpha: f64, eps: f64, m: u32) -> Result<(f64, f64, f64)> {
    if !(eps > 0.0 && eps < 1.0) || !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParam("need eps in (0,1), alpha in [0,1]".into()));
    }
    let base = (1.0 - alpha) * kappa as f64 * (m as f64).log2();
    Ok((eps * base, base, 1.0 / eps))
}

/// Soundness and capacity shift when `l` genuine base facts are lost and
/// `p` spurious ones injected, for queries with `kappa_t` leaves drawn
/// from the polluted base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyBaseStats {
    pub m_tilde: u64,
    /// Probability a uniform `kappa_t`-leaf query is sound (uses no
    /// spurious fact): `((m-l)/m_tilde)^kappa_t`.
    pub sound_fraction: f64,
    /// `kappa_t log2(m_tilde / m)` bits.
    pub capacity_shift_bits: f64,
}

pub fn noisy_base_stats(m: u32, l: u32, p: u32, kappa_t: u64) -> Result<NoisyBaseStats> {
    if l >= m {
        return Err(Error::InvalidParam(format!("need l < m (l={l}, m={m})")));
    }
    let m_tilde = (m - l) as u64 + p as u64;
    if m_tilde < 2 {
        return Err(Error::InvalidParam("polluted base too small".into()));
    }
    Ok(NoisyBaseStats {
        m_tilde,
        sound_fraction: ((m - l) as f64 / m_tilde as f64).powf(kappa_t as f64),
        capacity_shift_bits: kappa_t as f64 * (m_tilde as f64 / m as f64).log2(),
    })
}

/// Numeric verification of the change-of-measure identity behind the
/// strong converse: minimizing `g0(u) = u(eps-gamma) + log2(1-eps+eps
/// 2^{-u})` over `u >= 0` gives `-g0(u*) = D(eps-gamma || eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixBCheck {
    /// Numeric golden-section minimizer.
    pub u_star: f64,
    /// Closed form `-log2 alpha` with `alpha = eps'(1-eps)/(eps(1-eps'))`,
    /// `eps' = eps - gamma`.
    pub u_star_closed: f64,
    pub neg_g_star: f64,
    pub kl: f64,
}

pub fn appendix_b_check(eps: f64, gamma: f64) -> Result<AppendixBCheck> {
    if !(eps > 0.0 && eps < 1.0) || !(gamma > 0.0 && gamma < eps) {
        return Err(Error::InvalidParam("need 0 < gamma < eps < 1".into()));
    }
    let eps_p = eps - gamma;
    let g0 = |u: f64| u * (eps - gamma) + (1.0 - eps + eps * (2.0f64).powf(-u)).log2();
    let alpha = eps_p * (1.0 - eps) / (eps * (1.0 - eps_p));
    let u_star_closed = -alpha.log2();
    // Golden-section search on a bracket comfortably containing u*.
    let (mut a, mut b) = (0.0f64, 2.0 * u_star_closed + 8.0);
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - inv_phi * (b - a), a + inv_phi * (b - a));
    let (mut fc, mut fd) = (g0(c), g0(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = g0(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = g0(d);
        }
    }
    let u_star = 0.5 * (a + b);
    Ok(AppendixBCheck {
        u_star,
        u_star_closed,
        neg_g_star: -g0(u_star),
        kl: kl_bernoulli(eps_p, eps)?,
    })
}
