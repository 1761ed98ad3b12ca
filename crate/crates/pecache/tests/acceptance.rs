//! Acceptance suite: one test per headline claim, each printing a
//! `ACCEPTANCE n (...): PASS` line when its checks hold.

use pecache::analysis::{
    appendix_b_check, bahadur_rao_tail, br_prefactor_constant, image_size_bound, joint_gains,
    kl_bernoulli, penalty_ratio, resolved_window_prediction, sigma_star, strong_converse_lb,
    Scheme, SigmaMode, TailSide,
};
use pecache::caching::{
    choose_field_prime, coded_error_exact, min_parity_count, plan_joint, rs_decode, rs_encode,
    unc_error_exact, water_filling_cache,
};
use pecache::datalog::{build_dag, derivation_depth, Arch, Depth, Fact};
use pecache::erasure::{budget, cost, counter_unit, resilience_threshold, ErasureSpec};
use pecache::experiments::{exp5_dep_sets, EXP5_CONFIGS, TABLE1_ROWS};
use pecache::montecarlo::{simulate, Scenario};
use pecache::numerics::{binom_cdf, binom_sf, ln_binom_cdf};
use pecache::Accounting;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::time::Instant;

/// Exact failure probabilities of the 14 reference operating points,
/// rounded to 3 decimals.
const TABLE1_PE: [f64; 14] = [
    0.856, 0.473, 0.100, 0.012, 0.893, 0.488, 0.200, // Panel A
    0.984, 0.837, 0.451, 0.116, 0.832, 0.657, 0.300, // Panel B
];

#[test]
fn acceptance_01_table1_reproduction() {
    let start = Instant::now();
    for (&(_, scheme, kappa, eps, param), &expected) in TABLE1_ROWS.iter().zip(&TABLE1_PE) {
        let (exact, sc) = match scheme {
            "coded" => (
                coded_error_exact(kappa, eps, param),
                Scenario::CodedAnalytic { kappa, eps, r: param },
            ),
            _ => (unc_error_exact(param, eps), Scenario::UncAnalytic { n: param, eps }),
        };
        assert!(
            ((exact * 1000.0).round() / 1000.0 - expected).abs() < 1e-12,
            "{scheme} kappa={kappa} param={param}: exact {exact} != {expected}"
        );
        let est = simulate(&sc, 1_000_000, 1, 0.95).unwrap();
        assert!(
            est.ci_low <= exact && exact <= est.ci_high,
            "{scheme} kappa={kappa} param={param}: CI [{}, {}] misses {exact}",
            est.ci_low,
            est.ci_high
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "Table reproduction took {elapsed:?}");
    println!("ACCEPTANCE 1 (Table I exact values and Monte Carlo CIs, < 60 s): PASS");
}

#[test]
fn acceptance_02_single_query_penalty() {
    for &(eps, n, expected) in
        &[(0.1, 50u64, 6.12), (0.1, 5000, 9.49), (0.2, 50, 3.57), (0.2, 5000, 4.83)]
    {
        let p = penalty_ratio(n, eps, 0.1, 256).unwrap();
        assert!(
            (p.ratio_exact - expected).abs() <= 0.03,
            "eps={eps} n={n}: {} vs {expected}",
            p.ratio_exact
        );
    }
    println!("ACCEPTANCE 2 (single-query penalty ratios at m=256, delta=0.1): PASS");
}

#[test]
fn acceptance_03_exponents_and_prefactors() {
    for &(alpha, kl, c_alpha) in
        &[(0.20, 0.0371, -1.26), (0.15, 0.0881, -0.93), (0.10, 0.1678, -0.84)]
    {
        assert!((kl_bernoulli(alpha, 0.3).unwrap() - kl).abs() <= 5e-4, "alpha={alpha}");
        let boundary = (alpha * 5000.0).round() as u64;
        let exact = ln_binom_cdf(5000, boundary, 0.3);
        let br = bahadur_rao_tail(5000, 0.3, alpha, TailSide::Lower).unwrap();
        let rel = ((br.estimate.ln() - exact).exp() - 1.0).abs();
        assert!(rel <= 0.02, "alpha={alpha}: rel err {rel}");
        let c = br_prefactor_constant(0.3, alpha, TailSide::Lower).unwrap();
        assert!((c - c_alpha).abs() <= 0.05, "alpha={alpha}: c {c} vs {c_alpha}");
    }
    println!("ACCEPTANCE 3 (KL exponents, sharp tail estimate, prefactor constants): PASS");
}

#[test]
fn acceptance_04_dispersion() {
    for &kappa in &[500u64, 1000, 5000] {
        let r = min_parity_count(kappa, 0.2, 0.1).unwrap();
        let delta_c = (r as f64 - 0.2 * kappa as f64) / (kappa as f64).sqrt();
        let tol = 1.0 / (kappa as f64).sqrt();
        assert!(
            (delta_c - 0.513).abs() <= tol,
            "kappa={kappa}: delta_c {delta_c} not within {tol} of 0.513"
        );
    }
    // The derivation-constrained size has no sqrt(kappa) term: second
    // differences in kappa are exactly linear.
    let log_m = 8.0;
    for &(k1, k2) in &[(500u64, 1000u64), (1000, 5000), (500, 5000)] {
        let s1 = sigma_star(Scheme::Unc, k1, 0.2, 0.1, 256, SigmaMode::Operational).unwrap();
        let s2 = sigma_star(Scheme::Unc, k2, 0.2, 0.1, 256, SigmaMode::Operational).unwrap();
        assert_eq!(s2 - s1, (k2 - k1) as f64 * log_m);
    }
    println!("ACCEPTANCE 4 (coded dispersion constant; exact linear uncoded scaling): PASS");
}

#[test]
fn acceptance_05_depth_resilience() {
    let expected = [(0.02, 4.00), (0.01, 6.80), (0.005, 11.67), (0.002, 25.29)];
    for &(eps, ratio) in &expected {
        let n_star = resilience_threshold(eps, 0.3).unwrap();
        let d_chain = n_star as f64 - 2.0 + 1.0;
        let d_merge = (1.0 + (n_star as f64 / 2.0).log2()).floor();
        assert!(
            (d_chain / d_merge - ratio).abs() <= 0.01,
            "eps={eps}: {} vs {ratio}",
            d_chain / d_merge
        );
        if eps == 0.002 {
            assert_eq!(d_chain, 177.0);
            assert_eq!(d_merge, 7.0);
        }
    }
    println!("ACCEPTANCE 5 (architecture-dependent maximum cache-free depth): PASS");
}

#[test]
fn acceptance_06_multi_query() {
    // Penalties from the joint plan, grouped by realized union size.
    let mut by_neff: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
    for &(l, alpha, kappa) in EXP5_CONFIGS.iter() {
        let sets = exp5_dep_sets(l, alpha, kappa);
        let plan = plan_joint(&sets, 0.2, 0.1, 256, Accounting::Ideal).unwrap();
        let exact = plan.sigma_unc_bits / plan.sigma_coded_bits;
        let refined = penalty_ratio(plan.n_eff, 0.2, 0.1, 256).unwrap().ratio_refined;
        assert!(
            (refined / exact - 1.0).abs() <= 0.02,
            "({l},{alpha},{kappa}): refined {refined} vs exact {exact}"
        );
        by_neff.entry(plan.n_eff).or_default().push(exact);
    }
    // Configs sharing n_eff collapse onto one point of the curve.
    let mut collided = false;
    for (n_eff, penalties) in &by_neff {
        let (lo, hi) = penalties
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        assert!(hi / lo - 1.0 <= 0.02, "n_eff={n_eff}: spread {penalties:?}");
        collided |= penalties.len() > 1;
    }
    assert!(collided, "expected at least one shared n_eff in the grid");
    let (_, g2) = joint_gains(2, 500, 0.0, 0.1).unwrap();
    assert!((g2 - 1.81).abs() <= 0.01, "G2 {g2}");
    println!("ACCEPTANCE 6 (multi-query penalties collapse in n_eff; sharing gain G2): PASS");
}

/// All subsets of `pool` as bitmask-indexed fact sets.
fn subsets(pool: &[Fact]) -> impl Iterator<Item = BTreeSet<Fact>> + '_ {
    (0u32..1 << pool.len()).map(move |mask| {
        pool.iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, f)| f.clone())
            .collect()
    })
}

#[test]
fn acceptance_07_rigidity() {
    let m = 4u32;
    let cases: Vec<(Arch, Fact, Vec<Fact>)> = vec![
        (
            Arch::chain(2).unwrap(),
            Fact::idb(3, vec![1, 2, 3, 4]),
            vec![Fact::idb(1, vec![3, 4]), Fact::idb(2, vec![2, 3, 4])],
        ),
        (
            Arch::chain(2).unwrap(),
            Fact::idb(2, vec![2, 3, 1]),
            vec![Fact::idb(1, vec![1, 4]), Fact::idb(2, vec![4, 4, 4])],
        ),
        (
            Arch::merge(2).unwrap(),
            Fact::idb(2, vec![1, 2, 3, 4]),
            vec![Fact::idb(1, vec![2, 3]), Fact::idb(1, vec![4, 1])],
        ),
    ];
    let mut checked = 0u64;
    for (arch, q, unrelated) in &cases {
        let dag = build_dag(q, m, arch).unwrap();
        for f in unrelated {
            assert!(!dag.vertices.contains_key(f), "unrelated fact sits in the DAG");
        }
        let mut pool: Vec<Fact> = dag.vertices.keys().cloned().collect();
        pool.extend(unrelated.iter().cloned());
        for mask in 0u32..1 << m {
            let survivors: BTreeSet<Fact> =
                (1..=m).filter(|i| mask & (1 << (i - 1)) != 0).map(Fact::Edb).collect();
            for cache in subsets(&pool) {
                let mut kb_full = pecache::datalog::KnowledgeBase {
                    m,
                    facts: survivors.union(&cache).cloned().collect(),
                };
                let with_full =
                    matches!(derivation_depth(q, &kb_full, arch), Depth::Finite(_));
                kb_full.facts = survivors
                    .iter()
                    .cloned()
                    .chain(cache.iter().filter(|f| dag.vertices.contains_key(f)).cloned())
                    .collect();
                let with_restricted =
                    matches!(derivation_depth(q, &kb_full, arch), Depth::Finite(_));
                assert_eq!(
                    with_full, with_restricted,
                    "mask={mask:04b} cache={cache:?} query={q:?}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked >= 3 * 16 * 256, "only {checked} combinations checked");
    println!("ACCEPTANCE 7 (out-of-DAG cache facts never change decodability): PASS");
}

#[test]
fn acceptance_08_mds_property() {
    // Exhaustive: every erasure pattern at small lengths over GF(257).
    for kappa in 1usize..=8 {
        let symbols: Vec<u64> = (0..kappa as u64).map(|i| (31 * i + 7) % 257).collect();
        for r in 0usize..=4 {
            let parity = rs_encode(&symbols, r, 257).unwrap();
            for pattern in 0u32..1 << kappa {
                let received: Vec<Option<u64>> = symbols
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| if pattern & (1 << i) != 0 { None } else { Some(s) })
                    .collect();
                let erased = pattern.count_ones() as usize;
                match rs_decode(&received, &parity, 257) {
                    Ok(decoded) => {
                        assert!(erased <= r, "kappa={kappa} r={r}: decoded beyond budget");
                        assert_eq!(decoded, symbols);
                    }
                    Err(_) => assert!(erased > r, "kappa={kappa} r={r} pattern={pattern:b}"),
                }
            }
        }
    }
    // Randomized at scale. A 600-symbol codeword does not fit in
    // GF(257); the nearest prime admitting it is 601.
    let kappa = 500usize;
    let r = 100usize;
    let prime = choose_field_prime(kappa as u64 + r as u64 - 1);
    assert_eq!(prime, 601);
    let symbols: Vec<u64> = (0..kappa as u64).map(|i| (i * i + 3) % prime).collect();
    let parity = rs_encode(&symbols, r, prime).unwrap();
    let outcomes: (u64, u64) = (0u64..10_000)
        .into_par_iter()
        .map(|trial| {
            // Alternate erasure rates so both decode outcomes occur often.
            let eps = if trial % 2 == 0 { 0.12 } else { 0.24 };
            let received: Vec<Option<u64>> = symbols
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    if counter_unit(42, trial, i as u64) < eps {
                        None
                    } else {
                        Some(s)
                    }
                })
                .collect();
            let erased = received.iter().filter(|x| x.is_none()).count();
            match rs_decode(&received, &parity, prime) {
                Ok(decoded) => {
                    assert!(erased <= r, "trial {trial}: decoded with {erased} erasures");
                    assert_eq!(decoded, symbols);
                    (1, 0)
                }
                Err(_) => {
                    assert!(erased > r, "trial {trial}: failed with {erased} erasures");
                    (0, 1)
                }
            }
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    assert!(outcomes.0 > 1000 && outcomes.1 > 1000, "unbalanced outcomes {outcomes:?}");
    println!("ACCEPTANCE 8 (MDS erasure decoding succeeds exactly up to the parity budget): PASS");
}

#[test]
fn acceptance_09_appendix_b_identity() {
    let mut points = 0;
    for &eps in &[0.1, 0.2, 0.3, 0.4, 0.45] {
        for &frac in &[0.2, 0.4, 0.6, 0.8] {
            let gamma = frac * eps;
            let c = appendix_b_check(eps, gamma).unwrap();
            assert!(
                (c.neg_g_star - c.kl).abs() <= 1e-9,
                "eps={eps} gamma={gamma}: |{} - {}|",
                c.neg_g_star,
                c.kl
            );
            points += 1;
        }
    }
    assert_eq!(points, 20);
    println!("ACCEPTANCE 9 (change-of-measure identity to 1e-9 on a 20-point grid): PASS");
}

#[test]
fn acceptance_10_bounds_and_water_filling() {
    // Bounds ordering on a 50-point grid.
    let mut points = 0;
    for &kappa in &[50u64, 100, 200, 500, 1000] {
        for &eps in &[0.1, 0.2, 0.3, 0.4, 0.5] {
            for &frac in &[0.5, 1.5] {
                let r = (frac * eps * kappa as f64).floor() as u64;
                let bound = image_size_bound(r as f64 * 8.0, kappa, eps, 256).unwrap();
                let exact_success = binom_cdf(kappa, r.min(kappa), eps);
                assert!(bound >= exact_success - 1e-12, "kappa={kappa} eps={eps} r={r}");

                let gamma = eps / 4.0;
                let lb = strong_converse_lb(gamma, kappa, 256).unwrap();
                let r_conv = ((eps - gamma) * kappa as f64).floor() as u64;
                assert!(
                    lb <= binom_sf(kappa, r_conv, eps) + 1e-12,
                    "kappa={kappa} eps={eps}"
                );
                points += 1;
            }
        }
    }
    assert_eq!(points, 50);

    // Water-filling vs exhaustive subset optimum on 100 random profiles.
    let arch = Arch::chain(2).unwrap();
    for profile in 0u64..100 {
        let kappa = 4 + (profile % 9) as usize; // 4..=12
        let rates: Vec<f64> =
            (0..kappa).map(|i| 0.01 + 0.79 * counter_unit(13, profile, i as u64)).collect();
        let delta = 0.05 + 0.5 * counter_unit(13, profile, 999);
        let q = Fact::idb(kappa as u32 - 1, (1..=kappa as u32).collect());
        let spec = ErasureSpec::PerFact(rates.clone());
        let cache =
            water_filling_cache(&q, kappa as u32, &arch, &spec, delta, Accounting::Ideal)
                .unwrap();
        let b = budget(delta);
        let best = (0u32..1 << kappa)
            .filter(|s| {
                (0..kappa)
                    .filter(|i| s & (1 << i) == 0)
                    .map(|i| cost(rates[i]))
                    .sum::<f64>()
                    <= b
            })
            .map(|s| s.count_ones())
            .min()
            .unwrap();
        assert_eq!(cache.facts.len() as u32, best, "profile {profile}");
    }
    println!("ACCEPTANCE 10 (bound ordering on 50-point grid; optimal water-filling): PASS");
}

#[test]
fn acceptance_11_clt_window() {
    for &c in &[-1.0f64, 0.0, 1.0, 2.0] {
        let (_, exact, clt) = resolved_window_prediction(10_000, 0.2, c).unwrap();
        assert!((exact - clt).abs() <= 0.02, "c={c}: |{exact} - {clt}|");
    }
    println!("ACCEPTANCE 11 (normal approximation inside the critical window): PASS");
}
