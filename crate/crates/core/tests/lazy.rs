mod common;

use common::*;
use john_ellipsoid::lazy::chi2::{
    chi2_drift_check, chi2_moment, chi2_product_bound, chi2_product_bound_inf, Tail,
};
use john_ellipsoid::lazy::{
    approx_quadratic, reset_weights, reset_weights_sequential, solve_lazy, LazyConfig, ResetMode,
};
use john_ellipsoid::linalg::gram;
use john_ellipsoid::{Error, Matrix};
use proptest::prelude::*;

fn forms_of(h: &john_ellipsoid::lazy::QuadraticHistory<f64>) -> Vec<Matrix> {
    h.forms.iter().map(|f| f.matrix().clone()).collect()
}

#[test]
fn identity_history_stays_at_identity() {
    let d = 4;
    let a = Matrix::identity(d);
    let cfg = LazyConfig::new(0.2);
    let plan = cfg.plan(d, d).unwrap();
    let h = approx_quadratic(&a, &[1.0; 4], 5, &cfg, &plan, 3).unwrap();
    assert_eq!(h.forms.len(), 6);
    for f in &h.forms {
        let (lo, hi) = spectral_sandwich(&Matrix::identity(d), f.matrix());
        assert!(lo >= 0.8 && hi <= 1.2, "({lo}, {hi})");
    }
    let v = product_weight_replay(&a, &forms_of(&h)[..5], &[1.0; 4]);
    for vt in &v {
        assert!(vt.iter().all(|&x| (x - 1.0).abs() <= 0.2));
    }
}

#[test]
fn zero_rounds_is_initial_gram() {
    let a = random_matrix(50, 3, 1);
    let w0: Vec<f64> = (0..50).map(|i| 0.01 + i as f64 * 1e-3).collect();
    let cfg = LazyConfig::new(0.25);
    let plan = cfg.plan(50, 3).unwrap();
    let h = approx_quadratic(&a, &w0, 0, &cfg, &plan, 9).unwrap();
    assert_eq!(h.forms.len(), 1);
    assert!(rel_frobenius(h.forms[0].matrix(), &naive_gram(&a, &w0)) < 1e-14);
}

#[test]
fn quadratics_track_full_replay() {
    let (n, d) = (2000, 10);
    let cfg = LazyConfig::new(0.25);
    let plan = cfg.plan(n, d).unwrap();
    let w0 = vec![d as f64 / n as f64; n];
    for seed in 0..5 {
        let a = random_matrix(n, d, 300 + seed);
        let h = approx_quadratic(&a, &w0, 3, &cfg, &plan, seed).unwrap();
        let forms = forms_of(&h);
        let v = product_weight_replay(&a, &forms[..3], &w0);
        for t in 1..=3 {
            let (lo, hi) = spectral_sandwich(&naive_gram(&a, &v[t]), &forms[t]);
            assert!(lo >= 0.75 && hi <= 1.25, "seed {seed}, t = {t}: ({lo}, {hi})");
        }
    }
}

#[test]
fn low_accuracy_weights_stay_within_drift_band() {
    let (n, d) = (2000, 10);
    let mut cfg = LazyConfig::new(0.25);
    cfg.trace = true;
    let plan = cfg.plan(n, d).unwrap();
    let band = (n as f64).powf(2.0 * cfg.theta);
    let w0 = vec![d as f64 / n as f64; n];
    for seed in 0..10 {
        let a = random_matrix(n, d, 900 + seed);
        let h = approx_quadratic(&a, &w0, 3, &cfg, &plan, seed).unwrap();
        let v = product_weight_replay(&a, &forms_of(&h)[..3], &w0);
        for (t, u) in h.low_accuracy.iter().enumerate() {
            for i in 0..n {
                let r = u[i] / v[t + 1][i];
                assert!(r >= 1.0 / band && r <= band, "seed {seed}, t {}, row {i}: {r}", t + 1);
            }
        }
    }
}

#[test]
fn approx_quadratic_errors() {
    let a = random_matrix(20, 2, 4);
    let cfg = LazyConfig::new(0.25);
    let plan = cfg.plan(20, 2).unwrap();
    let mut w0 = vec![0.1; 20];
    w0[3] = 0.0;
    assert!(approx_quadratic(&a, &w0, 2, &cfg, &plan, 1).is_err());
    assert!(approx_quadratic(&a, &[0.1; 19], 2, &cfg, &plan, 1).is_err());

    // Sampling probabilities so small that every draw is empty.
    let mut starving = cfg.clone();
    starving.sample.alpha_const = 1e12;
    let err = approx_quadratic(&a, &[0.1; 20], 1, &starving, &plan, 1).unwrap_err();
    assert!(matches!(err, Error::RankDeficientSample { attempts: 4 }), "{err}");
}

#[test]
fn identity_reset_concentrates() {
    let d = 3;
    let a = Matrix::identity(d);
    let mut cfg = LazyConfig::new(0.25);
    cfg.reset = ResetMode::Sketched;
    let plan = cfg.plan(d, d).unwrap();
    assert!(!plan.exact_reset);
    let slack = cfg.eps / (plan.blocks * plan.inner) as f64;
    let h = approx_quadratic(&a, &[1.0; 3], 0, &cfg, &plan, 0).unwrap();
    let good = (0..100)
        .filter(|&seed| {
            let w = reset_weights(&a, &h, &[1.0; 3], 1, &plan, seed).unwrap();
            w[0].iter().all(|&x| (x - 1.0).abs() <= slack)
        })
        .count();
    assert!(good >= 95, "{good}/100");
}

#[test]
fn exact_reset_matches_product_weights() {
    let (n, d) = (300, 5);
    let a = random_matrix(n, d, 17);
    let mut cfg = LazyConfig::new(0.25);
    cfg.reset = ResetMode::Exact;
    let plan = cfg.plan(n, d).unwrap();
    let w0 = vec![d as f64 / n as f64; n];
    let h = approx_quadratic(&a, &w0, 3, &cfg, &plan, 5).unwrap();
    let w = reset_weights(&a, &h, &w0, 4, &plan, 5).unwrap();
    let v = product_weight_replay(&a, &forms_of(&h)[..4], &w0);
    for t in 1..=4 {
        for i in 0..n {
            assert!((w[t - 1][i] - v[t][i]).abs() <= 1e-10 * v[t][i]);
        }
    }
}

#[test]
fn default_reset_on_1000x8_within_eps() {
    let (n, d) = (1000, 8);
    let mut cfg = LazyConfig::new(0.25);
    cfg.total_override = Some(20);
    let plan = cfg.plan(n, d).unwrap();
    assert!(plan.blocks * plan.inner >= 20);
    let w0 = vec![d as f64 / n as f64; n];
    let rounds = plan.inner;
    let good = (0..100)
        .filter(|&seed| {
            let a = random_matrix(n, d, 4000 + seed);
            let h = approx_quadratic(&a, &w0, rounds - 1, &cfg, &plan, seed).unwrap();
            let w = reset_weights(&a, &h, &w0, rounds, &plan, seed).unwrap();
            let v = product_weight_replay(&a, &forms_of(&h)[..rounds], &w0);
            (1..=rounds).all(|t| (0..n).all(|i| (w[t - 1][i] / v[t][i] - 1.0).abs() <= cfg.eps))
        })
        .count();
    assert!(good >= 95, "{good}/100");
}

#[test]
fn projected_reset_error_shrinks_with_m() {
    let (n, d) = (1000, 8);
    let a = random_matrix(n, d, 71);
    let mut cfg = LazyConfig::new(0.25);
    cfg.reset = ResetMode::Sketched;
    cfg.m = Some(4000);
    let plan = cfg.plan(n, d).unwrap();
    let w0 = vec![d as f64 / n as f64; n];
    let good = (0..20)
        .filter(|&seed| {
            let h = approx_quadratic(&a, &w0, 2, &cfg, &plan, seed).unwrap();
            let w = reset_weights(&a, &h, &w0, 3, &plan, seed).unwrap();
            let v = product_weight_replay(&a, &forms_of(&h)[..3], &w0);
            (0..n).all(|i| (w[2][i] / v[3][i] - 1.0).abs() <= 0.25)
        })
        .count();
    assert!(good >= 19, "{good}/20");
}

#[test]
fn reset_argument_checks() {
    let a = random_matrix(30, 3, 2);
    let cfg = LazyConfig::new(0.25);
    let plan = cfg.plan(30, 3).unwrap();
    let h = approx_quadratic(&a, &[0.1; 30], 1, &cfg, &plan, 1).unwrap();
    assert!(reset_weights(&a, &h, &[0.1; 29], 1, &plan, 1).is_err());
    assert!(reset_weights(&a, &h, &[0.1; 30], 3, &plan, 1).is_err());
    assert!(reset_weights(&random_matrix(30, 4, 2), &h, &[0.1; 30], 1, &plan, 1).is_err());
}

#[test]
fn lazy_identity_and_stacks() {
    let r = solve_lazy(&Matrix::identity(5), &LazyConfig::new(0.25).with_certificate()).unwrap();
    assert!(r.certificate.unwrap().passed());
    let (lo, hi) = spectral_sandwich(&Matrix::identity(5), r.quadratic.matrix());
    assert!(lo >= 0.75 && hi <= 1.25);

    let a = identity_stack(100, 2);
    let r = solve_lazy(&a, &LazyConfig::new(0.25).with_seed(4).with_certificate()).unwrap();
    assert!(r.weights.iter().all(|&w| (w - 0.01).abs() <= 0.25 * 0.01));
    let (lo, hi) = spectral_sandwich(&Matrix::identity(2), r.quadratic.matrix());
    assert!(lo >= 0.75 && hi <= 1.25, "({lo}, {hi})");
    assert!(r.certificate.unwrap().passed());
}

#[test]
fn lazy_certificate_on_5000x20() {
    let a = random_matrix(5000, 20, 55);
    let r = solve_lazy(&a, &LazyConfig::new(0.25).with_seed(1).with_certificate()).unwrap();
    let c = r.certificate.unwrap();
    assert!(c.max_row_form <= 1.25 + 0.05 * 0.25, "{c:?}");
    assert!(c.weight_mass <= 20.0 + 1e-6);
    assert!(c.passed());
    assert_eq!(r.iterations, LazyConfig::new(0.25).plan(5000, 20).unwrap().total);
}

#[test]
fn lazy_is_seed_deterministic() {
    let a = random_matrix(400, 6, 5);
    let cfg = LazyConfig::new(0.25).with_seed(99);
    let r1 = solve_lazy(&a, &cfg).unwrap();
    let r2 = solve_lazy(&a, &cfg).unwrap();
    assert_eq!(r1.weights.as_slice(), r2.weights.as_slice());
    assert_eq!(r1.quadratic.matrix(), r2.quadratic.matrix());
}

#[test]
fn lazy_config_validation() {
    let a = random_matrix(30, 3, 2);
    let mut bad = LazyConfig::new(0.25);
    bad.theta = 0.3;
    assert!(solve_lazy(&a, &bad).is_err());
    let mut bad = LazyConfig::new(0.25);
    bad.k = Some(1);
    assert!(solve_lazy(&a, &bad).is_err());
    let mut bad = LazyConfig::new(0.25);
    bad.m = Some(0);
    assert!(solve_lazy(&a, &bad).is_err());
    assert!(solve_lazy(&a, &LazyConfig::new(1.5)).is_err());
}

#[test]
fn plan_invariants() {
    for (n, d, eps) in [(500, 5, 0.1), (5000, 50, 0.25), (50_000, 200, 0.25), (10, 10, 0.5)] {
        let cfg = LazyConfig::new(eps);
        let p = cfg.plan(n, d).unwrap();
        let required = john_ellipsoid::fixed_point::iteration_count(4.0, eps, n, d);
        assert!(p.blocks * p.inner >= required);
        assert_eq!((0..p.blocks).map(|b| p.block_len(b)).sum::<usize>(), p.total);
        assert!(p.inner as f64 <= (0.1 * (n as f64).log2()).ceil().max(1.0));
        assert_eq!(p.k, 80);
        assert!(p.m >= 1);
    }
}

#[test]
fn chi2_moment_examples() {
    for k in [1, 2, 3, 10, 80, 1000] {
        assert_eq!(chi2_moment(0.0, k).unwrap(), 1.0);
        let c1 = chi2_moment(1.0, k).unwrap();
        assert!((c1 - k as f64).abs() <= 1e-12 * k as f64, "k = {k}: {c1}");
    }
    assert!(chi2_product_bound(1e-12, 20, 3, 2.0, Tail::Upper).unwrap() > 0.999);
}

#[test]
fn chi2_bound_against_exact_gamma_ratio() {
    // Gamma(20) / Gamma(10) = 10 * 11 * ... * 19, an exact integer.
    let (s, k, t) = (10.0, 20, 5);
    let r = 1e6f64.powf(0.1);
    let ratio: f64 = (10..20).map(|x| x as f64).product();
    let c = 2f64.powi(10) * ratio;
    let want = c.powi(t as i32) * r.powf(-s);
    let got = chi2_product_bound(s, k, t, r, Tail::Upper).unwrap();
    assert!((got - want).abs() <= 1e-10 * want, "{got} vs {want}");
    let lower = chi2_product_bound(5.0, 20, 2, r, Tail::Lower).unwrap();
    // E[X^-5] for chi^2_20 is Gamma(5) / (2^5 Gamma(10)) = 24 / (32 * 362880).
    let lw = (24.0f64 / (32.0 * 362_880.0)).powi(2) * r.powf(-5.0);
    assert!((lower - lw).abs() <= 1e-10 * lw);
}

#[test]
fn chi2_large_t_stays_finite_in_log_space() {
    let b = chi2_product_bound(0.5, 80, 1_000_000, 1e300, Tail::Lower).unwrap();
    assert!(b.is_finite());
    let (_, inf) = chi2_product_bound_inf(80, 1_000_000, 1e300, Tail::Upper, 40.0).unwrap();
    assert!(inf.is_finite() || inf.is_infinite());
}

#[test]
fn drift_trivial_and_vacuous_regimes() {
    assert_eq!(chi2_drift_check(80, 0, 1_000_000, 0.1, 1000, 1).unwrap().rate(), 0.0);
    let c = chi2_drift_check(2, 50, 1_000_000, 0.05, 10_000, 2).unwrap();
    assert!(c.rate() > 0.9, "rate {}", c.rate());
    assert!(chi2_drift_check(80, 3, 1_000_000, 0.1, 500, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bound_decreases_in_r(k in 1usize..200, t in 0usize..50, frac in 0.01f64..0.99, r1 in 1.01f64..1e6, grow in 1.0f64..1e3, upper in any::<bool>()) {
        let half = k as f64 / 2.0;
        let (s, tail) = if upper { (frac * 3.0 * half, Tail::Upper) } else { (frac * half, Tail::Lower) };
        let b1 = chi2_product_bound(s, k, t, r1, tail).unwrap();
        let b2 = chi2_product_bound(s, k, t, r1 * grow, tail).unwrap();
        prop_assert!(b2 <= b1 * (1.0 + 1e-12));
    }

    #[test]
    fn batched_reset_equals_sequential(seed in 0u64..10_000, n in 12usize..80, d in 1usize..5, rounds in 1usize..4, sketched in any::<bool>()) {
        let a = random_matrix(n, d, seed);
        let mut cfg = LazyConfig::new(0.25);
        if sketched {
            cfg.reset = ResetMode::Sketched;
            cfg.m = Some(37);
        }
        let plan = cfg.plan(n, d).unwrap();
        let w0 = vec![d as f64 / n as f64; n];
        let h = approx_quadratic(&a, &w0, rounds - 1, &cfg, &plan, seed).unwrap();
        let batched = reset_weights(&a, &h, &w0, rounds, &plan, seed).unwrap();
        let seq = reset_weights_sequential(&a, &h, &w0, rounds, &plan, seed).unwrap();
        for (x, y) in batched.iter().flatten().zip(seq.iter().flatten()) {
            prop_assert!((x - y).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn first_form_is_initial_gram(seed in 0u64..10_000, n in 6usize..60, d in 1usize..5) {
        let a = random_matrix(n, d, seed);
        let w0: Vec<f64> = (0..n).map(|i| 0.1 + (i % 5) as f64).collect();
        let cfg = LazyConfig::new(0.3);
        let plan = cfg.plan(n, d).unwrap();
        let h = approx_quadratic(&a, &w0, 2, &cfg, &plan, seed).unwrap();
        let q0 = gram(&a, &w0).unwrap();
        prop_assert_eq!(h.forms[0].matrix(), q0.matrix());
        prop_assert_eq!(h.forms.len(), 3);
    }
}
