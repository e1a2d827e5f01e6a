//! Verification suites: numerical oracles, pathwise invariants and rates.
//!
//! Each check is also usable on its own; the acceptance tests call them with
//! fixed parameters.

use illposed_core::analysis::{
    bias_variance, check_pathwise_recursion, enumerate_mean_error, exact_data_exponent, fit_decay, phi_bound_spectral,
    rho_radius, stability_sweep, stochastic_noise_moments,
};
use illposed_core::linalg::{self, Matrix};
use illposed_core::operators::{surrogate_for, truncate_svd, MeasureOptions, RowOperator};
use illposed_core::problems::{make_source_fixture, NoisyData};
use illposed_core::rng;
use illposed_core::solvers::{apriori_k_star, default_eta0, RunOptions, StoppingRule};
use illposed_core::{
    add_noise, make_gravity, make_phillips, run_ensemble, squared_variant, AssumptionConstants, DataSource, ForwardOp,
    Method, Nonlinearity, Problem, Schedule, SolverConfig,
};

use crate::experiment::num;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Oracles,
    Invariants,
    Rates,
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: &'static str,
    pub pass: bool,
    pub value: f64,
    /// Human-readable acceptance condition on `value`.
    pub threshold: String,
}

pub const REPORT_HEADER: &str = "suite,check,status,value,threshold";

pub fn report_csv(checks: &[Check]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for c in checks {
        let status = if c.pass { "pass" } else { "fail" };
        out.push_str(&format!("{},{},{status},{},{}\n", c.suite, c.name, num(c.value), c.threshold));
    }
    out
}

fn random_linear(n: usize, seed: u64, delta0: f64) -> Result<(Problem, NoisyData), CliError> {
    let mut r = rng::seeded(seed);
    let a = Matrix::from_row_major(n, n, rng::normal_vec(&mut r, n * n))?;
    let op = ForwardOp::linear(a)?;
    let x_dag = rng::normal_vec(&mut r, n);
    let y_dag = op.apply(&x_dag)?;
    let p = Problem { name: format!("random-{seed}"), op, x_dag, y_dag, grid: (0..n).map(|i| i as f64).collect() };
    let d = add_noise(&p, delta0, seed.wrapping_add(1))?;
    Ok((p, d))
}

/// Largest gap between enumerated and closed-form mean errors over
/// `instances` random `3 × 3` systems, each with and without a rank-2 surrogate.
pub fn mean_recursion_gap(instances: u64, k: usize, seed: u64) -> Result<f64, CliError> {
    let mut worst: f64 = 0.0;
    for m in 0..instances {
        let (p, d) = random_linear(3, seed.wrapping_mul(1000).wrapping_add(m), 0.1)?;
        let g = truncate_svd(p.op.matrix(), 2, Nonlinearity::Identity)?;
        let eta0 = default_eta0(&p, 1.0)?;
        for (gopt, lambda0) in [(None, 0.0), (Some(&g), 0.5)] {
            let s = Schedule::new(eta0 / (1.0 + lambda0), 0.1, lambda0, 0.2)?;
            worst = worst.max(enumerate_mean_error(&p, &d, gopt, &s, k)?.max_abs_gap);
        }
    }
    Ok(worst)
}

/// Smallest relative slack of the spectral filter bound over random
/// configurations with `η₀ max_t b_t(1 + λ₀) ≤ 1`.
pub fn phi_bound_min_slack(configs: usize, seed: u64) -> Result<f64, CliError> {
    let mut r = rng::seeded(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..configs {
        let n = 1 + rng::draw_index(&mut r, 8);
        let b: Vec<f64> = (0..n).map(|_| rng::standard_normal(&mut r).abs()).collect();
        let rank = rng::draw_index(&mut r, n + 1);
        let bt: Vec<f64> = b.iter().enumerate().map(|(t, v)| if t < rank { *v } else { 0.0 }).collect();
        let lambda0 = rng::standard_normal(&mut r).abs();
        let top = b.iter().map(|v| v * (1.0 + lambda0)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let alpha = (0.5 * rng::standard_normal(&mut r).abs()).min(0.95);
        let s = Schedule::new(1.0 / top, alpha, lambda0, 0.3)?;
        let k = 1 + rng::draw_index(&mut r, 200) as u64;
        let j = rng::draw_index(&mut r, k as usize) as u64;
        let s_val = 2.0 * rng::standard_normal(&mut r).abs();
        let res = phi_bound_spectral(&b, &bt, &s, j, k, s_val)?;
        worst = worst.min((res.rhs - res.lhs) / res.rhs.abs().max(1.0));
    }
    Ok(worst)
}

/// Largest relative violation of `bias² + variance = total` over every
/// recorded epoch of a DSGD ensemble on phillips.
pub fn bias_variance_gap(n: usize, trials: usize, epochs: u64, seed: u64) -> Result<f64, CliError> {
    let p = make_phillips(n)?;
    let g = surrogate_for(&p.op, 10.min(n))?;
    let d = add_noise(&p, 1e-2, seed.wrapping_add(illposed_core::ensemble::NOISE_SEED_OFFSET))?;
    let cfg = SolverConfig {
        method: Method::Dsgd,
        schedule: Schedule::new(default_eta0(&p, 1.0)?, 0.1, 1.0, 0.0)?,
        stop: StoppingRule::MaxEpochs(epochs),
        options: RunOptions { keep_iterates: true, ..Default::default() },
    };
    let e = run_ensemble(&p, &DataSource::Shared(d), Some(&g), &cfg, trials, seed)?;
    let mut worst: f64 = 0.0;
    for epoch in &e.epochs {
        let bv = bias_variance(&e, *epoch, &p.x_dag)?;
        worst = worst.max((bv.bias_sq + bv.variance - bv.total).abs() / bv.total.max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Largest relative gap `‖∇_fd − ∇‖/‖∇‖` between the analytic row gradient and
/// central differences at random points near the solution of squared-phillips.
pub fn gradient_fd_gap(n: usize, points: usize, seed: u64) -> Result<f64, CliError> {
    let p = squared_variant(&make_phillips(n)?)?;
    let mut r = rng::seeded(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x: Vec<f64> = p.x_dag.iter().map(|v| v + 0.3 * rng::standard_normal(&mut r)).collect();
        let i = rng::draw_index(&mut r, n);
        let grad = p.op.row_gradient_step(i, &x, 1.0)?;
        let mut fd = vec![0.0; n];
        let mut y = x.clone();
        for j in 0..n {
            y[j] = x[j] + h;
            let plus = p.op.row_value(i, &y)?;
            y[j] = x[j] - h;
            let minus = p.op.row_value(i, &y)?;
            y[j] = x[j];
            fd[j] = (plus - minus) / (2.0 * h);
        }
        let norm = linalg::norm2(&grad);
        if norm > 0.0 {
            worst = worst.max(linalg::dist_sq(&fd, &grad).sqrt() / norm);
        }
    }
    Ok(worst)
}

/// Iteration-wise energy recursion on phillips with measured constants.
/// Returns `(violations, iterations checked, worst relative slack)`.
pub fn pathwise_violations(n: usize, trials: u64, epochs: u64, seed: u64) -> Result<(u64, u64, f64), CliError> {
    let p = make_phillips(n)?;
    let g = surrogate_for(&p.op, 10.min(n))?;
    let d = add_noise(&p, 1e-2, seed.wrapping_add(illposed_core::ensemble::NOISE_SEED_OFFSET))?;
    let c = AssumptionConstants::measure(&p.op, Some(&g), &p.x_dag, &p.y_dag, MeasureOptions::default())?;
    let s = Schedule::new(default_eta0(&p, 1.0)?, 0.0, 1.0, 0.0)?;
    let (mut violations, mut checked, mut slack) = (0, 0, f64::INFINITY);
    for t in 0..trials {
        let r = check_pathwise_recursion(&p, &d, Some(&g), &s, StoppingRule::MaxEpochs(epochs), seed.wrapping_add(t), &c)?;
        violations += r.violations;
        checked += r.iterations_checked;
        slack = slack.min(r.worst_relative_slack);
    }
    Ok((violations, checked, slack))
}

/// Ratio `max_k ‖e_k‖ / ρ` for a decaying-step DSGD run on phillips; at most 1
/// when the run stays in the ball of the stability analysis. The weight is
/// small enough that `e^{nΣc_k}` stays finite; `NaN` if `ρ` overflows anyway.
pub fn rho_containment(n: usize, iterations: u64, seed: u64) -> Result<f64, CliError> {
    let p = make_phillips(n)?;
    let g = surrogate_for(&p.op, 10.min(n))?;
    let d = add_noise(&p, 1e-2, seed.wrapping_add(illposed_core::ensemble::NOISE_SEED_OFFSET))?;
    let c = AssumptionConstants::measure(&p.op, Some(&g), &p.x_dag, &p.y_dag, MeasureOptions::default())?;
    let s = Schedule::new(default_eta0(&p, 1.0)?, 0.3, 1e-6, 0.6)?;
    let rho = rho_radius(&c, &s, iterations, linalg::norm2(&p.x_dag), d.delta, p.n())?;
    if !rho.is_finite() {
        return Ok(f64::NAN);
    }
    let r = check_pathwise_recursion(&p, &d, Some(&g), &s, StoppingRule::APriori(iterations), seed, &c)?;
    Ok(r.max_sq_error.sqrt() / rho)
}

/// Terminal distances to the exact-data run for `δ₀ = 10⁻² · 2^{-j}`,
/// `j = 0..=halvings`, on one fixed index path. `None` marks divergence.
pub fn stability_distances(n: usize, epochs: u64, halvings: u32, seed: u64) -> Result<Vec<Option<f64>>, CliError> {
    let p = make_phillips(n)?;
    let g = surrogate_for(&p.op, 10.min(n))?;
    let s = Schedule::new(default_eta0(&p, 1.0)?, 0.0, 1.0, 0.0)?;
    let levels: Vec<f64> = (0..=halvings).map(|j| 1e-2 * 0.5f64.powi(j as i32)).collect();
    let sweep = stability_sweep(&p, Some(&g), &s, seed, seed.wrapping_add(1), epochs, &levels)?;
    Ok(sweep.into_iter().map(|e| e.distance).collect())
}

pub fn nonincreasing(d: &[Option<f64>]) -> bool {
    d.iter().all(Option::is_some) && d.windows(2).all(|w| w[1] <= w[0])
}

/// Monte Carlo noise moments against their bounds on a small random system.
/// Returns the larger of the two estimate-to-bound ratios.
pub fn noise_moment_ratio(seed: u64) -> Result<(bool, f64), CliError> {
    let (p, d) = random_linear(4, seed.wrapping_add(8), 0.1)?;
    let g = truncate_svd(p.op.matrix(), 2, Nonlinearity::Identity)?;
    let s = Schedule::new(default_eta0(&p, 1.0)? / 1.5, 0.1, 0.5, 0.2)?;
    let m = stochastic_noise_moments(&p, &d, Some(&g), &s, 5, 20_000, seed)?;
    let ratio = (m.n1_sq / m.n1_bound_sq.max(f64::MIN_POSITIVE)).max(m.n2_sq / m.n2_bound_sq.max(f64::MIN_POSITIVE));
    Ok((m.within_bounds(), ratio))
}

/// Fitted log-log slope of the mean squared error of SGD on exact data for a
/// source-condition fixture `x† = (A*A/n)^ν w` on gravity, with `w` Gaussian.
pub fn exact_data_slope(n: usize, nu: f64, alpha: f64, epochs: u64, trials: usize, seed: u64) -> Result<f64, CliError> {
    let base = make_gravity(n, illposed_core::problems::DEFAULT_GRAVITY_DEPTH)?;
    let mut r = rng::seeded(seed.wrapping_add(3));
    let w = rng::normal_vec(&mut r, n);
    let fixture = make_source_fixture(&base.op, nu, w, vec![0.0; n])?;
    let p = fixture.apply_to(&base)?;
    let cfg = SolverConfig {
        method: Method::Sgd,
        schedule: Schedule::new(default_eta0(&p, 1.0)?, alpha, 0.0, 0.0)?,
        stop: StoppingRule::MaxEpochs(epochs),
        options: RunOptions::default(),
    };
    let e = run_ensemble(&p, &DataSource::Shared(NoisyData::exact(&p)), None, &cfg, trials, seed)?;
    let series: Vec<(f64, f64)> =
        e.epochs.iter().copied().zip(e.mean_sq_error.iter().copied()).filter(|(k, _)| *k > 0.0).collect();
    Ok(fit_decay(&series, None)?.slope)
}

/// Worst slope error when fitting exact power laws.
pub fn power_law_recovery(seed: u64) -> Result<f64, CliError> {
    let mut r = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let beta = -2.0 + 4.0 * (rng::draw_index(&mut r, 10_001) as f64 / 10_000.0);
        let c = 0.1 + rng::standard_normal(&mut r).abs();
        let series: Vec<(f64, f64)> = (1..=100).map(|k| (k as f64, c * (k as f64).powf(beta))).collect();
        worst = worst.max((fit_decay(&series, None)?.slope - beta).abs());
    }
    Ok(worst)
}

fn k_star_monotone() -> Result<bool, CliError> {
    let mut prev = 0;
    for e in 1..60 {
        let delta = 10f64.powf(-(e as f64) / 10.0);
        let (k, _) = apriori_k_star(delta, 1.0, 0.25, 0.1, 0.05)?;
        if k < prev {
            return Ok(false);
        }
        prev = k;
    }
    Ok(true)
}

fn check(suite: &'static str, name: &'static str, pass: bool, value: f64, threshold: impl Into<String>) -> Check {
    Check { suite, name, pass, value, threshold: threshold.into() }
}

pub fn oracles(seed: u64) -> Result<Vec<Check>, CliError> {
    let gap = mean_recursion_gap(20, 4, seed)?;
    let slack = phi_bound_min_slack(100, seed)?;
    let bv = bias_variance_gap(200, 10, 50, seed)?;
    let fd = gradient_fd_gap(50, 50, seed)?;
    Ok(vec![
        check("oracles", "mean_recursion_enumeration", gap < 1e-12, gap, "max_abs_gap < 1e-12"),
        check("oracles", "phi_bound", slack >= -1e-12, slack, "min relative slack >= -1e-12"),
        check("oracles", "bias_variance_identity", bv <= 1e-10, bv, "relative gap <= 1e-10"),
        check("oracles", "squared_gradient_fd", fd <= 1e-6, fd, "relative gap <= 1e-6"),
    ])
}

pub fn invariants(seed: u64) -> Result<Vec<Check>, CliError> {
    let (violations, _, _) = pathwise_violations(200, 10, 20, seed)?;
    let rho = rho_containment(200, 2000, seed)?;
    let dist = stability_distances(200, 5, 12, seed)?;
    let mono = nonincreasing(&dist);
    let last = dist.last().copied().flatten().unwrap_or(f64::NAN);
    let (within, ratio) = noise_moment_ratio(seed)?;
    Ok(vec![
        check("invariants", "pathwise_energy_recursion", violations == 0, violations as f64, "violations == 0"),
        check("invariants", "rho_containment", rho <= 1.0, rho, "max error / rho <= 1"),
        check("invariants", "noise_stability_monotone", mono, last, "distances nonincreasing as noise halves"),
        check("invariants", "noise_moment_bounds", within, ratio, "estimates within bounds + 3 SE"),
    ])
}

pub fn rates(seed: u64) -> Result<Vec<Check>, CliError> {
    let (nu, alpha) = (0.25, 0.1);
    let beta = exact_data_exponent(nu, alpha);
    let slope = exact_data_slope(200, nu, alpha, 500, 10, seed)?;
    let fit = power_law_recovery(seed)?;
    let kmono = k_star_monotone()?;
    Ok(vec![
        // The theorem bounds the error by c k^{-β}; decay at least that fast is
        // consistent with it.
        check("rates", "exact_data_decay", slope <= -0.7 * beta, slope, format!("slope <= {}", num(-0.7 * beta))),
        check("rates", "power_law_fit", fit < 1e-10, fit, "slope error < 1e-10"),
        check("rates", "stopping_index_monotone", kmono, if kmono { 1.0 } else { 0.0 }, "k* nonincreasing in delta"),
    ])
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Check>, CliError> {
    Ok(match suite {
        Suite::Oracles => oracles(seed)?,
        Suite::Invariants => invariants(seed)?,
        Suite::Rates => rates(seed)?,
        Suite::All => {
            let mut all = oracles(seed)?;
            all.extend(invariants(seed)?);
            all.extend(rates(seed)?);
            all
        }
    })
}
