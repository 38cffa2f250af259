//! Closed forms checked against independent reference computations.

mod common;

use common::*;
use dtd_lab::analysis::bounds::{
    consensus_bound_constant, delta, find_kstar, largest_valid_alpha, psi_constant, psi_diminishing,
    stepsize_conditions, ConstantStepInputs, DiminishingInputs, ProblemConstants, PsiVariant,
};
use dtd_lab::analysis::metrics::error_metrics;
use dtd_lab::analysis::mixing::{tau_from_c, tv_mixing_time};
use dtd_lab::exact::{approximation_quality, compute_a, compute_b, compute_u, FixedPointOracle};
use dtd_lab::features::{normalize_features, weighted_norm, FeatureMap};
use dtd_lab::linalg::singular_values_desc;
use dtd_lab::mdp::{
    expected_reward_vector, random_mdp, stationary_distribution, true_value, validate_chain, GarnetParams,
    MarkovChain, StationaryDist,
};
use dtd_lab::network::{generate_graph, metropolis_weights, GraphKind};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_features(s: usize, l: usize, seed: u64) -> FeatureMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::from_fn(s, l, |_, _| rng.sample::<f64, _>(StandardNormal));
    normalize_features(&raw).unwrap()
}

#[test]
fn two_state_stationary_by_hand() {
    let chain = MarkovChain::from_rows(&[vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap();
    let pi = stationary_distribution(&chain).unwrap();
    // Balance: 0.1 π₀ = 0.5 π₁.
    assert!((pi.pi()[0] - 5.0 / 6.0).abs() < 1e-14);
    assert!((pi.pi()[1] - 1.0 / 6.0).abs() < 1e-14);
}

#[test]
fn stationary_matches_matrix_power() {
    let mdp = instance(5, 2, 0.9, 1.0, 11);
    let pi = stationary_distribution(mdp.chain()).unwrap();
    let row = power_row(mdp.chain().transition(), 1000);
    for i in 0..5 {
        assert!((pi.pi()[i] - row[i]).abs() < 1e-8);
    }
}

#[test]
fn expected_rewards_by_direct_summation() {
    let mdp = instance(3, 2, 0.5, 2.0, 3);
    for v in 0..2 {
        let r = expected_reward_vector(&mdp, v).unwrap();
        let p = mdp.chain().transition();
        for i in 0..3 {
            let hand = p[(i, 0)] * mdp.reward(v, i, 0) + p[(i, 1)] * mdp.reward(v, i, 1) + p[(i, 2)] * mdp.reward(v, i, 2);
            assert!((r[i] - hand).abs() < 1e-15);
        }
    }
}

#[test]
fn true_value_matches_truncated_discounted_sum() {
    let gamma = 0.8;
    let mdp = instance(4, 2, gamma, 1.0, 5);
    let j = true_value(&mdp).unwrap();
    let rbar = average_reward(&mdp);
    // γᴷR/(1−γ) < 1e-10.
    let k_max = ((1e-10 * (1.0 - gamma)).ln() / gamma.ln()).ceil() as usize + 1;
    let pr = rows(mdp.chain().transition());
    let mut term = rbar.clone();
    let mut acc = rbar.clone();
    for _ in 0..k_max {
        term = matvec(&pr, &term).into_iter().map(|x| gamma * x).collect();
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += t;
        }
    }
    for i in 0..4 {
        assert!((j[i] - acc[i]).abs() < 1e-9, "{} vs {}", j[i], acc[i]);
    }
}

#[test]
fn sampling_frequency_within_binomial_error() {
    let chain = MarkovChain::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 1_000_000;
    let hits = (0..n).filter(|_| chain.sample_next(0, &mut rng) == 1).count();
    let freq = hits as f64 / n as f64;
    let se = (0.25 / n as f64).sqrt();
    assert!((freq - 0.5).abs() < 3.0 * se, "frequency {freq}");
}

#[test]
fn dense_generated_chain_validates() {
    let mdp = random_mdp(GarnetParams { num_states: 5, num_agents: 3, branching: 5, reward_bound: 1.0, gamma: 0.9, seed: 7 })
        .unwrap();
    assert!(validate_chain(mdp.chain()).is_ok());
    let p = mdp.chain().transition();
    assert!(p.iter().all(|&x| x > 0.0));
}

#[test]
fn gaussian_features_normalised_to_unit_max_row() {
    let fm = random_features(6, 3, 1);
    let max = (0..6).map(|i| fm.matrix().row(i).norm()).fold(0.0, f64::max);
    assert!((max - 1.0).abs() < 1e-12);
    let sv = singular_values_desc(fm.matrix());
    assert_eq!(sv.len(), 3);
    assert!(sv[2] > 1e-6);
}

#[test]
fn weighted_norm_by_arithmetic() {
    let d = StationaryDist::new(DVector::from_vec(vec![5.0 / 6.0, 1.0 / 6.0])).unwrap();
    let n = weighted_norm(&DVector::from_vec(vec![1.0, 2.0]), &d);
    assert!((n - 1.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn projection_solves_weighted_normal_equations() {
    let mdp = instance(5, 1, 0.9, 1.0, 21);
    let d = stationary_distribution(mdp.chain()).unwrap();
    let fm = random_features(5, 2, 4);
    let x = DVector::from_vec(vec![1.0, -0.5, 2.0, 0.3, -1.2]);
    let w = fm.projection_weights(&d, &x).unwrap();
    let pi: Vec<f64> = d.pi().iter().copied().collect();
    let gram = phi_t_d_m_phi(&fm, &pi, &identity(5));
    let rhs = phi_t_d_x(&fm, &pi, x.as_slice());
    let w_ref = gauss_solve(&gram, &rhs);
    for a in 0..2 {
        assert!((w[a] - w_ref[a]).abs() < 1e-12);
    }
    // No perturbation of the minimiser lowers the weighted residual.
    let resid = |w: &[f64]| weighted_norm(&(x.clone() - fm.matrix() * dvec(w)), &d);
    let best = resid(&w_ref);
    for (da, db) in [(1e-4, 0.0), (-1e-4, 0.0), (0.0, 1e-4), (0.0, -1e-4)] {
        assert!(resid(&[w_ref[0] + da, w_ref[1] + db]) > best);
    }
}

#[test]
fn u_matches_truncated_series() {
    let mdp = instance(3, 1, 0.9, 1.0, 8);
    let u = compute_u(mdp.chain(), 0.9, 0.5).unwrap();
    let oracle = series_u(mdp.chain().transition(), 0.9, 0.5);
    assert!(max_abs_diff(&oracle, &u) < 1e-12);
}

#[test]
fn tabular_td0_operator_is_negative_definite() {
    let gamma = 0.7;
    let mdp = instance(4, 1, gamma, 1.0, 2);
    let d = stationary_distribution(mdp.chain()).unwrap();
    let u = compute_u(mdp.chain(), gamma, 0.0).unwrap();
    let a = compute_a(&FeatureMap::identity(4), &d, &u).unwrap();
    let p = mdp.chain().transition();
    let expected = DMatrix::from_fn(4, 4, |i, j| d.pi()[i] * (gamma * p[(i, j)] - if i == j { 1.0 } else { 0.0 }));
    assert!((&a - expected).amax() < 1e-14);
    let sym = rows(&((&a + a.transpose()) * 0.5));
    assert!(*jacobi_eigenvalues(&sym).last().unwrap() < 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let x = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
        assert!(x.dot(&(&a * &x)) < 0.0);
    }
}

#[test]
fn a_matches_triple_loop() {
    let (gamma, lambda) = (0.85, 0.4);
    let mdp = instance(5, 1, gamma, 1.0, 17);
    let d = stationary_distribution(mdp.chain()).unwrap();
    let fm = random_features(5, 2, 9);
    let u = compute_u(mdp.chain(), gamma, lambda).unwrap();
    let a = compute_a(&fm, &d, &u).unwrap();
    let pi: Vec<f64> = d.pi().iter().copied().collect();
    let mut um = series_u(mdp.chain().transition(), gamma, lambda);
    for (i, row) in um.iter_mut().enumerate() {
        row[i] -= 1.0;
    }
    assert!(max_abs_diff(&phi_t_d_m_phi(&fm, &pi, &um), &a) < 1e-12);
}

#[test]
fn b_matches_truncated_series() {
    let (gamma, lambda) = (0.9, 0.7);
    let mdp = instance(6, 3, gamma, 1.0, 12);
    let d = stationary_distribution(mdp.chain()).unwrap();
    let fm = random_features(6, 3, 2);
    let pi: Vec<f64> = d.pi().iter().copied().collect();
    for v in 0..3 {
        let r = reward_vector(&mdp, v);
        let b = compute_b(&fm, &d, mdp.chain(), &dvec(&r), gamma, lambda).unwrap();
        let series = series_resolvent_apply(mdp.chain().transition(), gamma * lambda, &r);
        let oracle = phi_t_d_x(&fm, &pi, &series);
        for a in 0..3 {
            assert!((b[a] - oracle[a]).abs() < 1e-12);
        }
    }
}

#[test]
fn fixed_point_satisfies_projected_bellman_equation() {
    let (gamma, lambda) = (0.9, 0.5);
    let mdp = instance(8, 3, gamma, 1.0, 30);
    let fm = random_features(8, 3, 6);
    let oracle = FixedPointOracle::build(&mdp, &fm, lambda).unwrap();
    let phi_theta = fm.value_estimate(&oracle.theta_star).unwrap();
    let y = oracle.lambda_operator(&mdp, &phi_theta).unwrap();
    let py = fm.project(&oracle.stationary, &y).unwrap();
    assert!(weighted_norm(&(py - phi_theta), &oracle.stationary) <= 1e-8);
}

#[test]
fn td0_sandwich_upper_factor() {
    let gamma = 0.9;
    let mdp = instance(8, 2, gamma, 1.0, 41);
    let fm = random_features(8, 2, 3);
    let oracle = FixedPointOracle::build(&mdp, &fm, 0.0).unwrap();
    let j = true_value(&mdp).unwrap();
    let q = approximation_quality(&oracle, &j, &fm, &oracle.stationary).unwrap();
    let pj = fm.project(&oracle.stationary, &j).unwrap();
    let lower = weighted_norm(&(pj - &j), &oracle.stationary);
    let actual = weighted_norm(&(fm.value_estimate(&oracle.theta_star).unwrap() - &j), &oracle.stationary);
    assert!((q.lower - lower).abs() < 1e-14 && (q.actual - actual).abs() < 1e-14);
    assert!(actual <= lower / (1.0 - gamma) + 1e-12);
}

#[test]
fn complete_pair_averages_exactly() {
    let w = metropolis_weights(&generate_graph(GraphKind::Complete, 2, 0).unwrap()).unwrap();
    assert_eq!(w.matrix(), &DMatrix::from_element(2, 2, 0.5));
    assert!(w.sigma2().abs() < 1e-15);
}

#[test]
fn ring_of_four_matches_circulant_spectrum() {
    let w = metropolis_weights(&generate_graph(GraphKind::Ring, 4, 0).unwrap()).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let adjacent = (i + 1) % 4 == j || (j + 1) % 4 == i;
            let expected = if i == j || adjacent { 1.0 / 3.0 } else { 0.0 };
            assert!((w.matrix()[(i, j)] - expected).abs() < 1e-15);
        }
    }
    // Circulant eigenvalues 1/3 + (2/3) cos(2πj/4).
    let mut mags: Vec<f64> =
        (0..4).map(|j| (1.0 / 3.0 + 2.0 / 3.0 * (std::f64::consts::PI * j as f64 / 2.0).cos()).abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    assert!((w.sigma2() - mags[1]).abs() < 1e-12);
    let jac = jacobi_eigenvalues(&rows(w.matrix()));
    assert!((w.sigma2() - jac[2].abs().max(jac[0].abs())).abs() < 1e-12);
}

#[test]
fn erdos_renyi_connected_and_reproducible() {
    let g1 = generate_graph(GraphKind::ErdosRenyi { p: 0.5 }, 8, 13).unwrap();
    let g2 = generate_graph(GraphKind::ErdosRenyi { p: 0.5 }, 8, 13).unwrap();
    assert!(g1.is_connected());
    assert_eq!(g1.edges(), g2.edges());
}

#[test]
fn delta_by_arithmetic() {
    let d = delta(0.0, 0.05, 0.9, 0.0).unwrap();
    assert!((d - 0.095).abs() < 1e-15);
}

fn seeded_constants(seed: u64) -> ProblemConstants {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ProblemConstants {
        gamma: rng.random_range(0.1..0.95),
        lambda: rng.random_range(0.0..1.0),
        reward_bound: rng.random_range(0.0..5.0),
        sigma2: rng.random_range(0.0..0.9),
        sigma_min: rng.random_range(0.01..1.0),
        theta_star_norm: rng.random_range(0.0..3.0),
        num_agents: rng.random_range(1..10),
        mixing_c: rng.random_range(0.3..4.0),
    }
}

fn reference(c: &ProblemConstants) -> Reference {
    Reference {
        gamma: c.gamma,
        lambda: c.lambda,
        r: c.reward_bound,
        sigma2: c.sigma2,
        sigma_min: c.sigma_min,
        theta_star: c.theta_star_norm,
        n: c.num_agents as f64,
        c: c.mixing_c,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn psi_at_zero_data() {
    let c = ProblemConstants {
        gamma: 0.5,
        lambda: 0.5,
        reward_bound: 0.0,
        sigma2: 0.5,
        sigma_min: 0.1,
        theta_star_norm: 0.0,
        num_agents: 4,
        mixing_c: 1.0,
    };
    let (psi1, psi2) = psi_constant(&c, 0, PsiVariant::Derivation);
    assert_eq!(psi1, 144.0);
    assert_eq!(psi2, 2.0);
}

#[test]
fn psi_constants_match_second_implementation() {
    for seed in 0..50 {
        let c = seeded_constants(seed);
        let r = reference(&c);
        for tau in [0u64, 1, 7, 40] {
            let (p1, p2) = psi_constant(&c, tau, PsiVariant::Derivation);
            let (_, p2s) = psi_constant(&c, tau, PsiVariant::Statement);
            assert!(rel(p1, r.psi1(tau as f64)) < 1e-13);
            assert!(rel(p2, r.psi2(tau as f64, 2.0)) < 1e-13);
            assert!(rel(p2s, r.psi2(tau as f64, 1.0)) < 1e-13);
        }
        let (p3, p4) = psi_diminishing(&c);
        assert!(rel(p3, r.psi3()) < 1e-13);
        assert!(rel(p4, r.psi4()) < 1e-13);
    }
}

#[test]
fn constant_step_rhs_matches_second_implementation_at_mixing_time() {
    let mut checked = 0;
    for seed in 0..200 {
        let mut c = seeded_constants(seed);
        c.sigma_min = c.sigma_min.min(0.2);
        let tau = tau_from_c(c.mixing_c, 0.01).max(1);
        let alpha = 0.9 * stepsize_conditions(&c, 1.0, tau).clauses.iter().map(|k| k.limit).fold(f64::INFINITY, f64::min);
        let inputs = ConstantStepInputs {
            consts: c,
            alpha,
            tau,
            theta0_sq: 3.0,
            mean0_err_sq: 0.7,
            variant: PsiVariant::Derivation,
        };
        let r = reference(&c);
        for k in [tau, tau + 10, 10 * tau + 1000] {
            let got = inputs.rhs(k).unwrap();
            let want = r.constant_step_bound(alpha, tau as f64, 3.0, 0.7, k as f64);
            assert!(rel(got, want) < 1e-12, "seed {seed}, k {k}: {got} vs {want}");
            checked += 1;
        }
        let bound = consensus_bound_constant(&c, alpha, 2.0, 5).unwrap();
        let d = r.delta(alpha);
        let want = d.powi(5) * 2.0 + r.n.sqrt() * r.r * alpha / ((1.0 - r.gamma * r.lambda) * (1.0 - d));
        assert!(rel(bound, want) < 1e-13);
    }
    assert_eq!(checked, 600);
}

#[test]
fn diminishing_step_rhs_matches_second_implementation() {
    for seed in 0..100 {
        let c = seeded_constants(seed);
        let r = reference(&c);
        let alpha0 = 1.0 / c.sigma_min;
        let alpha_ref = 0.5 * (1.0 - c.sigma2) * (1.0 - c.gamma * c.lambda) / (1.0 + c.gamma);
        let kstar = 1000;
        let inputs =
            DiminishingInputs { consts: c, alpha0, alpha_ref, kstar, theta_kstar_sq: 2.0, mean_kstar_err_sq: 0.4 };
        for k in [kstar, 2 * kstar, 123_457] {
            let got = inputs.rhs(k).unwrap();
            let want = r.diminishing_step_bound(alpha0, alpha_ref, kstar as f64, 2.0, 0.4, k as f64);
            assert!(rel(got, want) < 1e-12, "seed {seed}: {got} vs {want}");
        }
    }
}

#[test]
fn largest_alpha_matches_grid_search() {
    let mdp = instance(10, 4, 0.5, 1.0, 7);
    let fm = FeatureMap::aggregation(10, 4).unwrap();
    let oracle = FixedPointOracle::build(&mdp, &fm, 0.5).unwrap();
    let w = metropolis_weights(&generate_graph(GraphKind::Ring, 4, 0).unwrap()).unwrap();
    let c0 = tv_mixing_time(mdp.chain(), &oracle.stationary, 0.01).unwrap().c;
    let c = ProblemConstants {
        gamma: 0.5,
        lambda: 0.5,
        reward_bound: 1.0,
        sigma2: w.sigma2(),
        sigma_min: oracle.sigma_min,
        theta_star_norm: oracle.theta_star.norm(),
        num_agents: 4,
        mixing_c: c0,
    };
    let tau_of = |a: f64| Ok(tau_from_c(c0, a));
    let ratio = 0.9;
    let got = largest_valid_alpha(&c, tau_of, 1.0, 1e-12, ratio).unwrap();

    // Independent grid scan with the reference clause limits.
    let r = reference(&c);
    let passes = |a: f64| {
        let t = tau_from_c(c0, a) as f64;
        let one = 1.0 - r.gamma * r.lambda;
        a < one / (1.0 + r.gamma) * (1.0 - r.sigma2)
            && (t == 0.0 || a < one * 2f64.ln() / ((1.0 + r.gamma) * t))
            && a < r.sigma_min / r.psi1(t)
    };
    let mut a = 1.0;
    while !passes(a) {
        a *= ratio;
    }
    assert!(got.pass());
    assert!(rel(got.alpha, a) < 1e-12, "{} vs {a}", got.alpha);
    assert!(!passes(a / ratio));
}

#[test]
fn kstar_matches_brute_force_scan() {
    for seed in 0..30 {
        let mut c = seeded_constants(seed);
        c.mixing_c = 0.3 + (seed % 5) as f64 * 0.3;
        c.sigma_min = 0.5 + 0.01 * seed as f64;
        c.reward_bound = (seed % 3) as f64 * 0.5;
        c.theta_star_norm = 0.5;
        let alpha0 = 1.0 / c.sigma_min;
        let alpha_ref = 0.1;
        let r = reference(&c);
        let kstar = find_kstar(&c, alpha0, alpha_ref, 50_000_000).unwrap();
        let horizon = (kstar * 4).max(5000);
        let brute = r.kstar_brute(alpha0, alpha_ref, horizon);
        assert_eq!(kstar, brute, "seed {seed}");
    }
}

#[test]
fn tv_mixing_time_matches_brute_force_scan() {
    let mdp = instance(5, 1, 0.9, 1.0, 19);
    let pi = stationary_distribution(mdp.chain()).unwrap();
    let alpha = 0.01;
    let est = tv_mixing_time(mdp.chain(), &pi, alpha).unwrap();
    let p = rows(mdp.chain().transition());
    let mut pk = identity(5);
    let mut k = 0u64;
    loop {
        let d = (0..5)
            .map(|i| 0.5 * (0..5).map(|j| (pk[i][j] - pi.pi()[j]).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if d <= alpha {
            break;
        }
        pk = matmul(&pk, &p);
        k += 1;
    }
    assert_eq!(est.tau, k);
}

#[test]
fn metrics_antipodal_pair() {
    let u = DVector::from_vec(vec![0.6, -0.8, 2.0]);
    let m = error_metrics(&[u.clone(), -u.clone()], &DVector::zeros(3));
    assert!((m.mse - u.norm_squared()).abs() < 1e-15);
    assert!((m.consensus_error - 2f64.sqrt() * u.norm()).abs() < 1e-15);
}

#[test]
fn metrics_match_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, l) = (7, 4);
    let thetas: Vec<DVector<f64>> =
        (0..n).map(|_| DVector::from_fn(l, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
    let star = DVector::from_fn(l, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m = error_metrics(&thetas, &star);
    let mut mean = vec![0.0; l];
    for t in &thetas {
        for j in 0..l {
            mean[j] += t[j] / n as f64;
        }
    }
    let (mut mse, mut ce) = (0.0, 0.0);
    for t in &thetas {
        for j in 0..l {
            mse += (t[j] - star[j]).powi(2) / n as f64;
            ce += (t[j] - mean[j]).powi(2);
        }
    }
    assert!((m.mse - mse).abs() < 1e-12);
    assert!((m.consensus_error - ce.sqrt()).abs() < 1e-12);
}
