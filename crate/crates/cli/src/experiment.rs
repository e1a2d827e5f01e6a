//! Running one configured ensemble and rendering its CSV outputs.

use illposed_core::analysis::bias_variance;
use illposed_core::ensemble::NOISE_SEED_OFFSET;
use illposed_core::operators::surrogate_for;
use illposed_core::problems::{by_name, DEFAULT_GRAVITY_DEPTH};
use illposed_core::solvers::{default_eta0, paper_landweber_step, RunOptions, StoppingRule};
use illposed_core::{add_noise, run_ensemble, DataSource, Ensemble, Error, Problem, Schedule, SolverConfig};

use crate::config::{recording_name, ExperimentConfig};
use crate::CliError;

pub const SUMMARY_HEADER: &str = "problem,n,delta0,method,c0,alpha,alpha_prime,lambda0,rank,trials,max_epochs,seed,record,best_error,best_epoch,final_error,epochs_run,diverged";
pub const TRAJECTORY_HEADER: &str = "epoch,mean_sq_error,mean_sq_residual_F,mean_sq_residual_G,bias_sq,variance";

/// Shortest round-trip rendering.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    /// Smallest recorded value of the mean squared error curve.
    pub best_error: Option<f64>,
    pub best_epoch: Option<f64>,
    pub final_error: Option<f64>,
    pub epochs_run: Option<f64>,
    pub diverged: bool,
}

impl ResultRow {
    pub fn from_ensemble(e: &Ensemble) -> Self {
        let (j, best) = e
            .mean_sq_error
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, v)| if v < acc.1 { (j, v) } else { acc });
        Self {
            best_error: Some(best),
            best_epoch: Some(e.epochs[j]),
            final_error: e.mean_sq_error.last().copied(),
            epochs_run: e.epochs.last().copied(),
            diverged: false,
        }
    }

    pub fn diverged() -> Self {
        Self { best_error: None, best_epoch: None, final_error: None, epochs_run: None, diverged: true }
    }
}

/// Landweber runs are deterministic given the data, so one trial stands for all.
pub fn effective_trials(cfg: &ExperimentConfig) -> usize {
    if cfg.method.is_stochastic() {
        cfg.trials
    } else {
        1
    }
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem, CliError> {
    Ok(by_name(&cfg.problem, cfg.n, DEFAULT_GRAVITY_DEPTH)?)
}

pub fn solver_config(p: &Problem, cfg: &ExperimentConfig) -> Result<SolverConfig, CliError> {
    let eta0 = if cfg.method.is_stochastic() {
        default_eta0(p, cfg.c0)?
    } else {
        paper_landweber_step(p, cfg.step_factor)?
    };
    let alpha = if cfg.method.is_stochastic() { cfg.alpha } else { 0.0 };
    Ok(SolverConfig {
        method: cfg.method,
        schedule: Schedule::new(eta0, alpha, cfg.lambda0, cfg.alpha_prime)?,
        stop: StoppingRule::OracleBest { max_epochs: cfg.max_epochs },
        options: RunOptions { record: cfg.record, keep_iterates: cfg.bias_variance, x1: None },
    })
}

/// Outcome of an ensemble: `Err(CliError::Diverged)` is folded into the row.
pub struct RunOutcome {
    pub row: ResultRow,
    pub ensemble: Option<Ensemble>,
    pub divergence: Option<String>,
}

pub fn execute(p: &Problem, cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let data = add_noise(p, cfg.delta0, cfg.seed.wrapping_add(NOISE_SEED_OFFSET))?;
    let g = if cfg.method.is_data_driven() { Some(surrogate_for(&p.op, cfg.rank)?) } else { None };
    let solver = solver_config(p, cfg)?;
    match run_ensemble(p, &DataSource::Shared(data), g.as_ref(), &solver, effective_trials(cfg), cfg.seed) {
        Ok(e) => Ok(RunOutcome { row: ResultRow::from_ensemble(&e), ensemble: Some(e), divergence: None }),
        Err(err @ (Error::TrialDiverged { .. } | Error::Diverged { .. })) => {
            Ok(RunOutcome { row: ResultRow::diverged(), ensemble: None, divergence: Some(err.to_string()) })
        }
        Err(e) => Err(e.into()),
    }
}

pub fn summary_csv(cfg: &ExperimentConfig, row: &ResultRow) -> String {
    let fields = [
        cfg.problem.clone(),
        cfg.n.to_string(),
        num(cfg.delta0),
        cfg.method.name().to_string(),
        num(cfg.c0),
        num(cfg.alpha),
        num(cfg.alpha_prime),
        num(cfg.lambda0),
        cfg.rank.to_string(),
        cfg.trials.to_string(),
        cfg.max_epochs.to_string(),
        cfg.seed.to_string(),
        recording_name(cfg.record),
        opt(row.best_error),
        opt(row.best_epoch),
        opt(row.final_error),
        opt(row.epochs_run),
        row.diverged.to_string(),
    ];
    format!("{SUMMARY_HEADER}\n{}\n", fields.join(","))
}

pub fn trajectory_csv(e: &Ensemble, x_dag: &[f64]) -> Result<String, CliError> {
    let mut out = String::with_capacity(64 * (e.epochs.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for (j, epoch) in e.epochs.iter().enumerate() {
        let (bias, var) = if e.mean_iterates.is_some() {
            let bv = bias_variance(e, *epoch, x_dag)?;
            (Some(bv.bias_sq), Some(bv.variance))
        } else {
            (None, None)
        };
        let fields = [
            num(*epoch),
            num(e.mean_sq_error[j]),
            num(e.mean_sq_residual_f[j]),
            opt(e.mean_sq_residual_g[j]),
            opt(bias),
            opt(var),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out)
}
