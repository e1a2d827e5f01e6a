use illposed_core::ensemble::{run_ensemble, DataSource, Method, SolverConfig};
use illposed_core::linalg;
use illposed_core::operators::{surrogate_for, RowOperator};
use illposed_core::solvers::*;
use illposed_core::{add_noise, make_gravity, make_phillips, Error, NoisyData};
use proptest::prelude::*;

fn sgd_schedule(p: &illposed_core::Problem, c0: f64, alpha: f64, lambda0: f64) -> Schedule {
    Schedule::new(default_eta0(p, c0).unwrap(), alpha, lambda0, 0.0).unwrap()
}

#[test]
fn regularization_with_zero_weight_is_plain_sgd() {
    let p = make_phillips(40).unwrap();
    let data = add_noise(&p, 1e-2, 3).unwrap();
    let g = surrogate_for(&p.op, 5).unwrap();
    let s = sgd_schedule(&p, 1.0, 0.1, 0.0);
    let opts = RunOptions::default();
    let plain = dsgd_run(&p, &data, None, &s, StoppingRule::MaxEpochs(5), 9, &opts).unwrap();
    let with_g = dsgd_run(&p, &data, Some(&g), &s, StoppingRule::MaxEpochs(5), 9, &opts).unwrap();
    assert_eq!(plain.iterate_final, with_g.iterate_final);
    assert_eq!(plain.best, with_g.best);
    let errs = |t: &Trajectory| t.snapshots.iter().map(|s| s.sq_error).collect::<Vec<_>>();
    assert_eq!(errs(&plain), errs(&with_g));
}

#[test]
fn dlm_without_weight_is_lm() {
    let p = make_gravity(30, 0.25).unwrap();
    let data = add_noise(&p, 1e-2, 3).unwrap();
    let g = surrogate_for(&p.op, 5).unwrap();
    let s = Schedule::constant(paper_landweber_step(&p, 1.0).unwrap()).unwrap();
    let a = landweber_run(&p, &data, None, &s, StoppingRule::MaxEpochs(40), &RunOptions::default()).unwrap();
    let b = landweber_run(&p, &data, Some(&g), &s, StoppingRule::MaxEpochs(40), &RunOptions::default()).unwrap();
    assert_eq!(a.iterate_final, b.iterate_final);
}

#[test]
fn epoch_cost_is_exact() {
    let p = make_phillips(25).unwrap();
    let data = add_noise(&p, 1e-2, 1).unwrap();
    let g = surrogate_for(&p.op, 4).unwrap();
    let sgd = dsgd_run(&p, &data, None, &sgd_schedule(&p, 1.0, 0.0, 0.0), StoppingRule::MaxEpochs(3), 0, &RunOptions::default()).unwrap();
    assert_eq!((sgd.index_draws, sgd.row_gradients), (75, 75));
    let dsgd = dsgd_run(&p, &data, Some(&g), &sgd_schedule(&p, 1.0, 0.0, 1.0), StoppingRule::MaxEpochs(3), 0, &RunOptions::default()).unwrap();
    assert_eq!((dsgd.index_draws, dsgd.row_gradients), (75, 150));
}

#[test]
fn best_matches_per_iteration_snapshots() {
    let p = make_phillips(20).unwrap();
    let data = add_noise(&p, 5e-2, 2).unwrap();
    let opts = RunOptions { record: Recording::PerIteration, ..Default::default() };
    let t = dsgd_run(&p, &data, None, &sgd_schedule(&p, 1.0, 0.0, 0.0), StoppingRule::MaxEpochs(30), 4, &opts).unwrap();
    let min = t.snapshots.iter().map(|s| s.sq_error).fold(f64::INFINITY, f64::min);
    assert_eq!(t.best.sq_error, min);
    let at = t.snapshots.iter().find(|s| s.sq_error == min).unwrap();
    assert_eq!(at.epoch, t.best.epoch);
    assert_eq!(t.best.epoch, t.best.iteration as f64 / 20.0);
}

#[test]
fn epoch_snapshots_are_exact_errors() {
    let p = make_gravity(30, 0.25).unwrap();
    let data = add_noise(&p, 1e-2, 2).unwrap();
    let opts = RunOptions { keep_iterates: true, ..Default::default() };
    let t = dsgd_run(&p, &data, None, &sgd_schedule(&p, 1.0, 0.0, 0.0), StoppingRule::MaxEpochs(4), 4, &opts).unwrap();
    assert_eq!(t.snapshots.len(), 5);
    for s in &t.snapshots {
        let x = s.iterate.as_ref().unwrap();
        let err = linalg::dist_sq(x, &p.x_dag);
        assert!((err - s.sq_error).abs() <= 1e-12 * err.max(1e-300));
        let r = linalg::rms_sq(&linalg::sub(&p.op.apply(x).unwrap(), &data.y_delta));
        assert!((r - s.sq_residual_f).abs() <= 1e-12 * r.max(1e-300));
        assert!(s.sq_error >= t.best.sq_error);
    }
}

#[test]
fn landweber_residual_is_monotone() {
    let p = make_phillips(80).unwrap();
    let data = add_noise(&p, 1e-2, 8).unwrap();
    let s = Schedule::constant(paper_landweber_step(&p, 1.0).unwrap()).unwrap();
    let t = landweber_run(&p, &data, None, &s, StoppingRule::MaxEpochs(200), &RunOptions::default()).unwrap();
    for w in t.snapshots.windows(2) {
        assert!(w[1].sq_residual_f <= w[0].sq_residual_f * (1.0 + 1e-14));
    }
}

#[test]
fn large_constant_steps_diverge_loudly() {
    let p = make_phillips(40).unwrap();
    let data = add_noise(&p, 1e-2, 8).unwrap();
    let s = sgd_schedule(&p, 200.0, 0.0, 0.0);
    match dsgd_run(&p, &data, None, &s, StoppingRule::MaxEpochs(50), 1, &RunOptions::default()) {
        Err(Error::Diverged { iteration }) => assert!(iteration >= 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn ensemble_of_landweber_runs_is_degenerate() {
    let p = make_gravity(30, 0.25).unwrap();
    let data = add_noise(&p, 1e-2, 8).unwrap();
    let cfg = SolverConfig {
        method: Method::Lm,
        schedule: Schedule::constant(paper_landweber_step(&p, 1.0).unwrap()).unwrap(),
        stop: StoppingRule::MaxEpochs(20),
        options: RunOptions::default(),
    };
    let e = run_ensemble(&p, &DataSource::Shared(data), None, &cfg, 4, 0).unwrap();
    assert!(e.trials.windows(2).all(|w| w[0].iterate_final == w[1].iterate_final));
}

#[test]
fn ensemble_mean_is_exact_average() {
    let p = make_phillips(30).unwrap();
    let cfg = SolverConfig {
        method: Method::Sgd,
        schedule: sgd_schedule(&p, 1.0, 0.1, 0.0),
        stop: StoppingRule::MaxEpochs(6),
        options: RunOptions::default(),
    };
    let e = run_ensemble(&p, &DataSource::Redraw { delta0: 1e-2 }, None, &cfg, 5, 11).unwrap();
    for (j, m) in e.mean_sq_error.iter().enumerate() {
        let sum: f64 = e.trials.iter().map(|t| t.snapshots[j].sq_error).sum();
        assert_eq!(*m, sum / 5.0);
    }
    let again = run_ensemble(&p, &DataSource::Redraw { delta0: 1e-2 }, None, &cfg, 5, 11).unwrap();
    assert_eq!(e.mean_sq_error, again.mean_sq_error);
    assert_ne!(e.trials[0].iterate_final, e.trials[1].iterate_final);
}

#[test]
fn ensemble_reports_diverging_trial() {
    let p = make_phillips(30).unwrap();
    let cfg = SolverConfig {
        method: Method::Sgd,
        schedule: sgd_schedule(&p, 200.0, 0.0, 0.0),
        stop: StoppingRule::MaxEpochs(20),
        options: RunOptions::default(),
    };
    let data = NoisyData::exact(&p);
    let err = run_ensemble(&p, &DataSource::Shared(data), None, &cfg, 3, 0).unwrap_err();
    assert!(matches!(err, Error::TrialDiverged { trial: 0, .. }), "{err:?}");
}

#[test]
fn k_star_monotone_in_noise() {
    let mut prev = 0;
    for e in 1..60 {
        let delta = 10f64.powf(-(e as f64) / 10.0);
        let (k, _) = apriori_k_star(delta.min(0.99), 1.0, 0.3, 0.2, 0.05).unwrap();
        assert!(k >= prev);
        prev = k;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn schedules_are_positive_and_nonincreasing(eta0 in 1e-3f64..10.0, alpha in 0.0f64..0.99, lambda0 in 0.0f64..5.0, ap in 0.0f64..2.0) {
        let s = Schedule::new(eta0, alpha, lambda0, ap).unwrap();
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for k in 1..200u64 {
            let (e, l) = (s.eta_at(k).unwrap(), s.lambda_at(k).unwrap());
            prop_assert!(e > 0.0 && l >= 0.0);
            prop_assert!(e <= prev.0 && l <= prev.1);
            prev = (e, l);
        }
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>()) {
        let p = make_phillips(16).unwrap();
        let data = add_noise(&p, 1e-2, seed).unwrap();
        let g = surrogate_for(&p.op, 3).unwrap();
        let s = sgd_schedule(&p, 1.0, 0.1, 1.0);
        let a = dsgd_run(&p, &data, Some(&g), &s, StoppingRule::MaxEpochs(3), seed, &RunOptions::default()).unwrap();
        let b = dsgd_run(&p, &data, Some(&g), &s, StoppingRule::MaxEpochs(3), seed, &RunOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}
