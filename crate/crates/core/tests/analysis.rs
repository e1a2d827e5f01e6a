use illposed_core::analysis::*;
use illposed_core::ensemble::{run_ensemble, DataSource, Method, SolverConfig};
use illposed_core::linalg::{self, Matrix};
use illposed_core::operators::{self, surrogate_for, AssumptionConstants, ForwardOp, MeasureOptions, Nonlinearity, RowOperator};
use illposed_core::problems::{add_noise, NoisyData, Problem};
use illposed_core::rng;
use illposed_core::solvers::{default_eta0, RunOptions, Schedule, StoppingRule};
use illposed_core::{make_phillips, Error};
use proptest::prelude::*;

fn tiny(n: usize, seed: u64, delta0: f64) -> (Problem, NoisyData) {
    let mut r = rng::seeded(seed);
    let a = Matrix::from_row_major(n, n, rng::normal_vec(&mut r, n * n)).unwrap();
    let op = ForwardOp::linear(a).unwrap();
    let x_dag = rng::normal_vec(&mut r, n);
    let y_dag = op.apply(&x_dag).unwrap();
    let p = Problem { name: "tiny".into(), op, x_dag, y_dag, grid: (0..n).map(|i| i as f64).collect() };
    let d = add_noise(&p, delta0, seed + 1).unwrap();
    (p, d)
}

fn tiny_schedule(p: &Problem, lambda0: f64) -> Schedule {
    Schedule::new(default_eta0(p, 1.0).unwrap() / (1.0 + lambda0), 0.1, lambda0, 0.2).unwrap()
}

#[test]
fn enumeration_matches_closed_form_on_random_instances() {
    for seed in 0..20 {
        let (p, d) = tiny(3, seed, 0.1);
        let g = operators::truncate_svd(p.op.matrix(), 2, Nonlinearity::Identity).unwrap();
        for (gopt, lambda0) in [(None, 0.0), (Some(&g), 0.5)] {
            let r = enumerate_mean_error(&p, &d, gopt, &tiny_schedule(&p, lambda0), 4).unwrap();
            assert!(r.max_abs_gap < 1e-12, "seed {seed}: gap {:e}", r.max_abs_gap);
        }
    }
}

#[test]
fn enumeration_base_case_and_budget() {
    let (p, d) = tiny(3, 1, 0.1);
    let r = enumerate_mean_error(&p, &d, None, &tiny_schedule(&p, 0.0), 0).unwrap();
    assert!(r.max_abs_gap < 1e-14);
    assert!(r.enumerated_mean.iter().zip(&p.x_dag).all(|(e, x)| *e == -x));
    assert!(matches!(
        enumerate_mean_error(&p, &d, None, &tiny_schedule(&p, 0.0), 14),
        Err(Error::BudgetExceeded { .. })
    ));
    let sq = illposed_core::squared_variant(&p).unwrap();
    assert!(matches!(enumerate_mean_error(&sq, &d, None, &tiny_schedule(&p, 0.0), 2), Err(Error::NotLinear)));
}

#[test]
fn closed_form_rejects_unrelated_surrogate() {
    let (p, d) = tiny(3, 2, 0.1);
    let (other, _) = tiny(3, 99, 0.1);
    let g = operators::truncate_svd(other.op.matrix(), 2, Nonlinearity::Identity).unwrap();
    assert!(enumerate_mean_error(&p, &d, Some(&g), &tiny_schedule(&p, 0.5), 2).is_err());
}

#[test]
fn phi_bound_documented_case() {
    let a = Matrix::diag(&[1.0, 0.5, 0.1]);
    let s = Schedule::new(0.5, 0.1, 0.0, 0.0).unwrap();
    let r = phi_bound_check(&a, None, &s, 0, 50, 0.5).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.lhs > 0.0);
}

#[test]
fn phi_bound_randomized() {
    let mut r = rng::seeded(2024);
    for _ in 0..100 {
        let n = 1 + rng::draw_index(&mut r, 8);
        let b: Vec<f64> = (0..n).map(|_| rng::standard_normal(&mut r).abs()).collect();
        let rank = rng::draw_index(&mut r, n + 1);
        let bt: Vec<f64> = b.iter().enumerate().map(|(t, v)| if t < rank { *v } else { 0.0 }).collect();
        let lambda0 = rng::standard_normal(&mut r).abs();
        let top = b.iter().map(|v| v * (1.0 + lambda0)).fold(0.0, f64::max);
        let s = Schedule::new(0.99 / top, 0.5 * rng::standard_normal(&mut r).abs().min(1.9), lambda0, 0.3).unwrap();
        let k = 1 + rng::draw_index(&mut r, 200) as u64;
        let j = rng::draw_index(&mut r, k as usize) as u64;
        let s_val = 2.0 * rng::standard_normal(&mut r).abs();
        let res = phi_bound_spectral(&b, &bt, &s, j, k, s_val).unwrap();
        assert!(res.pass, "{res:?} with s = {s_val}, j = {j}, k = {k}");
    }
}

#[test]
fn bias_variance_identity_holds() {
    let p = make_phillips(60).unwrap();
    let g = surrogate_for(&p.op, 10).unwrap();
    let d = add_noise(&p, 1e-2, 4).unwrap();
    let cfg = SolverConfig {
        method: Method::Dsgd,
        schedule: Schedule::new(default_eta0(&p, 1.0).unwrap(), 0.0, 1.0, 0.0).unwrap(),
        stop: StoppingRule::MaxEpochs(10),
        options: RunOptions { keep_iterates: true, ..Default::default() },
    };
    let e = run_ensemble(&p, &DataSource::Shared(d.clone()), Some(&g), &cfg, 6, 3).unwrap();
    for epoch in &e.epochs {
        let bv = bias_variance(&e, *epoch, &p.x_dag).unwrap();
        assert!((bv.bias_sq + bv.variance - bv.total).abs() <= 1e-10 * bv.total);
    }
    assert!(matches!(bias_variance(&e, 0.5, &p.x_dag), Err(Error::EpochNotRecorded(_))));
    let single = run_ensemble(&p, &DataSource::Shared(d), Some(&g), &cfg, 1, 3).unwrap();
    let bv = bias_variance(&single, 10.0, &p.x_dag).unwrap();
    assert_eq!(bv.variance, 0.0);
    assert_eq!(bv.bias_sq, bv.total);
}

#[test]
fn pathwise_recursion_holds_on_phillips() {
    let p = make_phillips(100).unwrap();
    let g = surrogate_for(&p.op, 10).unwrap();
    let d = add_noise(&p, 1e-2, 6).unwrap();
    let c = AssumptionConstants::measure(&p.op, Some(&g), &p.x_dag, &p.y_dag, MeasureOptions::default()).unwrap();
    let s = Schedule::new(default_eta0(&p, 1.0).unwrap(), 0.0, 1.0, 0.0).unwrap();
    for seed in 0..3 {
        let r = check_pathwise_recursion(&p, &d, Some(&g), &s, StoppingRule::MaxEpochs(10), seed, &c).unwrap();
        assert_eq!(r.violations, 0, "{r:?}");
        assert_eq!(r.iterations_checked, 1000);
    }
}

#[test]
fn rho_contains_the_run() {
    let p = make_phillips(200).unwrap();
    let g = surrogate_for(&p.op, 10).unwrap();
    let d = add_noise(&p, 1e-2, 6).unwrap();
    let c = AssumptionConstants::measure(&p.op, Some(&g), &p.x_dag, &p.y_dag, MeasureOptions::default()).unwrap();
    let s = Schedule::new(default_eta0(&p, 1.0).unwrap(), 0.3, 1e-6, 0.6).unwrap();
    let k = 2000;
    let rho = rho_radius(&c, &s, k, linalg::norm2(&p.x_dag), d.delta, p.n()).unwrap();
    assert!(rho.is_finite() && rho < 10.0 * linalg::norm2(&p.x_dag), "{rho}");
    let r = check_pathwise_recursion(&p, &d, Some(&g), &s, StoppingRule::APriori(k), 1, &c).unwrap();
    assert!(r.max_sq_error.sqrt() <= rho, "{} > {rho}", r.max_sq_error.sqrt());
    let mut prev = 0.0;
    for kd in [1, 10, 100, 1000] {
        let v = rho_radius(&c, &s, kd, 1.0, 0.1, p.n()).unwrap();
        assert!(v >= prev);
        prev = v;
    }
}

#[test]
fn stability_sweep_scales_with_noise() {
    let p = make_phillips(60).unwrap();
    let g = surrogate_for(&p.op, 10).unwrap();
    let s = Schedule::new(default_eta0(&p, 1.0).unwrap(), 0.0, 1.0, 0.0).unwrap();
    let levels = [1e-2, 5e-3, 2.5e-3, 0.0];
    let r = stability_sweep(&p, Some(&g), &s, 3, 4, 3, &levels).unwrap();
    assert_eq!(r[3].distance, Some(0.0));
    let d: Vec<f64> = r.iter().map(|e| e.distance.unwrap()).collect();
    assert!(d[0] > d[1] && d[1] > d[2] && d[2] > d[3]);
    assert!((d[0] / d[1] - 2.0).abs() < 1e-6);
    assert!(stability_sweep(&p, None, &s, 3, 4, 3, &[1e-3, 1e-2]).is_err());
}

#[test]
fn noise_terms_vanish_in_degenerate_cases() {
    let (p, _) = tiny(4, 5, 0.0);
    let exact = NoisyData::exact(&p);
    let m = noise_moments_at(&p, &exact, None, 0.0, &p.x_dag, 0.0, 50, 1).unwrap();
    assert_eq!((m.n1_sq, m.n1_sq_exact), (0.0, 0.0));
    let (q, qd) = tiny(1, 6, 0.1);
    let m = noise_moments_at(&q, &qd, None, 0.0, &[0.3], 0.0, 20, 1).unwrap();
    assert!(m.n1_sq.abs() < 1e-28);
}

#[test]
fn noise_moments_respect_bounds() {
    let (p, d) = tiny(4, 8, 0.1);
    let g = operators::truncate_svd(p.op.matrix(), 2, Nonlinearity::Identity).unwrap();
    let s = tiny_schedule(&p, 0.5);
    let m = stochastic_noise_moments(&p, &d, Some(&g), &s, 5, 20_000, 3).unwrap();
    assert!(m.within_bounds(), "{m:?}");
    assert!((m.n1_sq - m.n1_sq_exact).abs() <= 5.0 * m.n1_se + 1e-12);
}

#[test]
fn fitted_exponent_for_source_condition_is_negative() {
    let p = illposed_core::make_gravity(60, 0.25).unwrap();
    let mut r = rng::seeded(3);
    let w = rng::normal_vec(&mut r, 60);
    let f = illposed_core::problems::make_source_fixture(&p.op, 0.25, w, vec![0.0; 60]).unwrap();
    let q = f.apply_to(&p).unwrap();
    let cfg = SolverConfig {
        method: Method::Sgd,
        schedule: Schedule::new(default_eta0(&q, 1.0).unwrap(), 0.1, 0.0, 0.0).unwrap(),
        stop: StoppingRule::MaxEpochs(100),
        options: RunOptions::default(),
    };
    let e = run_ensemble(&q, &DataSource::Shared(NoisyData::exact(&q)), None, &cfg, 4, 1).unwrap();
    let series: Vec<(f64, f64)> = e.epochs.iter().copied().zip(e.mean_sq_error.iter().copied()).filter(|p| p.0 > 0.0).collect();
    let fit = fit_decay(&series, None).unwrap();
    assert!(fit.slope < 0.0);
    assert_eq!(exact_data_exponent(0.25, 0.1), 0.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_laws_are_recovered(c in 0.1f64..100.0, beta in -2.0f64..2.0, len in 10usize..200) {
        let series: Vec<(f64, f64)> = (1..=len).map(|k| (k as f64, c * (k as f64).powf(beta))).collect();
        let fit = fit_decay(&series, None).unwrap();
        prop_assert!((fit.slope - beta).abs() < 1e-10);
        prop_assert!(fit.r_squared >= 0.0 && fit.r_squared <= 1.0);
    }

    #[test]
    fn phi_bound_holds_for_valid_configurations(seed in any::<u64>(), s_val in 0.0f64..3.0) {
        let mut r = rng::seeded(seed);
        let n = 1 + rng::draw_index(&mut r, 6);
        let b: Vec<f64> = (0..n).map(|_| rng::standard_normal(&mut r).abs() + 1e-6).collect();
        let top = b.iter().copied().fold(0.0, f64::max);
        let s = Schedule::new(1.0 / (2.0 * top), 0.3, 1.0, 0.0).unwrap();
        let k = 2 + rng::draw_index(&mut r, 100) as u64;
        let res = phi_bound_spectral(&b, &b, &s, 1, k, s_val).unwrap();
        prop_assert!(res.pass, "{:?}", res);
    }
}
