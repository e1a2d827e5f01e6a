//! Independent repeated runs and their per-epoch averages.
//!
//! Trials may execute in parallel; results are collected in trial order and
//! reduced sequentially, so statistics do not depend on the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operators::DataDrivenOp;
use crate::problems::{add_noise, NoisyData, Problem};
use crate::solvers::{dsgd_run, landweber_run, RunOptions, Schedule, StoppingRule, Trajectory};

/// Offset between index-draw seeds and per-trial noise seeds.
pub const NOISE_SEED_OFFSET: u64 = 1_000_000;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "ILLPOSED_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Lm,
    Dlm,
    Sgd,
    Dsgd,
}

impl Method {
    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::Sgd | Method::Dsgd)
    }

    pub fn is_data_driven(self) -> bool {
        matches!(self, Method::Dlm | Method::Dsgd)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Lm => "lm",
            Method::Dlm => "dlm",
            Method::Sgd => "sgd",
            Method::Dsgd => "dsgd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lm" => Some(Method::Lm),
            "dlm" => Some(Method::Dlm),
            "sgd" => Some(Method::Sgd),
            "dsgd" => Some(Method::Dsgd),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub method: Method,
    pub schedule: Schedule,
    pub stop: StoppingRule,
    pub options: RunOptions,
}

/// Where each trial's data comes from.
#[derive(Clone, Debug)]
pub enum DataSource {
    /// One realization shared by every trial.
    Shared(NoisyData),
    /// Fresh noise per trial, seeded `base_seed + NOISE_SEED_OFFSET + m`.
    Redraw { delta0: f64 },
}

#[derive(Clone, Debug)]
pub struct Ensemble {
    pub trials: Vec<Trajectory>,
    pub epochs: Vec<f64>,
    pub mean_sq_error: Vec<f64>,
    pub mean_sq_residual_f: Vec<f64>,
    pub mean_sq_residual_g: Vec<Option<f64>>,
    /// Mean iterate per snapshot, when trials kept their iterates.
    pub mean_iterates: Option<Vec<Vec<f64>>>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Snapshot position of `epoch`.
    pub fn epoch_index(&self, epoch: f64) -> Result<usize> {
        self.epochs
            .iter()
            .position(|e| (e - epoch).abs() <= 1e-12 * epoch.abs().max(1.0))
            .ok_or(Error::EpochNotRecorded(epoch))
    }

    pub fn mean_best_sq_error(&self) -> f64 {
        self.trials.iter().map(|t| t.best.sq_error).sum::<f64>() / self.len() as f64
    }

    pub fn mean_best_epoch(&self) -> f64 {
        self.trials.iter().map(|t| t.best.epoch).sum::<f64>() / self.len() as f64
    }

    pub fn mean_final_sq_error(&self) -> f64 {
        self.trials.iter().map(Trajectory::final_sq_error).sum::<f64>() / self.len() as f64
    }

    pub fn from_trials(trials: Vec<Trajectory>) -> Result<Self> {
        let first = trials.first().ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
        let epochs: Vec<f64> = first.snapshots.iter().map(|s| s.epoch).collect();
        for t in &trials {
            if t.snapshots.len() != epochs.len() || t.snapshots.iter().zip(&epochs).any(|(s, e)| s.epoch != *e) {
                return Err(Error::InvalidArgument("trials recorded different epochs".into()));
            }
        }
        let m = trials.len() as f64;
        let mean = |f: &dyn Fn(&Trajectory, usize) -> f64| -> Vec<f64> {
            (0..epochs.len()).map(|j| trials.iter().map(|t| f(t, j)).sum::<f64>() / m).collect()
        };
        let mean_sq_error = mean(&|t, j| t.snapshots[j].sq_error);
        let mean_sq_residual_f = mean(&|t, j| t.snapshots[j].sq_residual_f);
        let mean_sq_residual_g = (0..epochs.len())
            .map(|j| {
                trials
                    .iter()
                    .map(|t| t.snapshots[j].sq_residual_g)
                    .sum::<Option<f64>>()
                    .map(|s| s / m)
            })
            .collect();
        let kept = trials.iter().all(|t| t.snapshots.iter().all(|s| s.iterate.is_some()));
        let mean_iterates = kept.then(|| {
            (0..epochs.len())
                .map(|j| {
                    let n = first.iterate_final.len();
                    let mut acc = vec![0.0; n];
                    for t in &trials {
                        let x = t.snapshots[j].iterate.as_ref().expect("kept");
                        acc.iter_mut().zip(x).for_each(|(a, v)| *a += v);
                    }
                    acc.iter_mut().for_each(|a| *a /= m);
                    acc
                })
                .collect()
        });
        Ok(Self { trials, epochs, mean_sq_error, mean_sq_residual_f, mean_sq_residual_g, mean_iterates })
    }
}

/// Thread count from `ILLPOSED_THREADS`, defaulting to the logical core count.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_trial(
    p: &Problem,
    data: &NoisyData,
    g: Option<&DataDrivenOp>,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<Trajectory> {
    let g = if cfg.method.is_data_driven() { g } else { None };
    if cfg.method.is_data_driven() && g.is_none() {
        return Err(Error::InvalidArgument(format!("{} needs a data-driven operator", cfg.method.name())));
    }
    if cfg.method.is_stochastic() {
        dsgd_run(p, data, g, &cfg.schedule, cfg.stop, seed, &cfg.options)
    } else {
        let mut t = landweber_run(p, data, g, &cfg.schedule, cfg.stop, &cfg.options)?;
        t.seed = seed;
        Ok(t)
    }
}

/// Runs `trials` independent trajectories; trial `m` draws indices with seed
/// `base_seed + m`.
pub fn run_ensemble(
    p: &Problem,
    source: &DataSource,
    g: Option<&DataDrivenOp>,
    cfg: &SolverConfig,
    trials: usize,
    base_seed: u64,
) -> Result<Ensemble> {
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let one = |m: usize| -> Result<Trajectory> {
        let seed = base_seed.wrapping_add(m as u64);
        let out = match source {
            DataSource::Shared(data) => run_trial(p, data, g, cfg, seed),
            DataSource::Redraw { delta0 } => {
                let noise_seed = base_seed.wrapping_add(NOISE_SEED_OFFSET).wrapping_add(m as u64);
                run_trial(p, &add_noise(p, *delta0, noise_seed)?, g, cfg, seed)
            }
        };
        out.map_err(|e| match e {
            Error::Diverged { iteration } => Error::TrialDiverged { trial: m, iteration },
            other => other,
        })
    };
    let threads = thread_count().min(trials);
    let results: Vec<Result<Trajectory>> = if threads <= 1 {
        (0..trials).map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| (0..trials).into_par_iter().map(one).collect())
    };
    Ensemble::from_trials(results.into_iter().collect::<Result<Vec<_>>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_phillips;
    use crate::solvers::default_eta0;

    #[test]
    fn single_trial_matches_trajectory() {
        let p = make_phillips(16).unwrap();
        let data = add_noise(&p, 1e-2, 5).unwrap();
        let cfg = SolverConfig {
            method: Method::Sgd,
            schedule: Schedule::constant(default_eta0(&p, 1.0).unwrap()).unwrap(),
            stop: StoppingRule::MaxEpochs(5),
            options: RunOptions::default(),
        };
        let e = run_ensemble(&p, &DataSource::Shared(data.clone()), None, &cfg, 1, 40).unwrap();
        let t = dsgd_run(&p, &data, None, &cfg.schedule, cfg.stop, 40, &cfg.options).unwrap();
        assert_eq!(e.trials[0], t);
        let errs: Vec<f64> = t.snapshots.iter().map(|s| s.sq_error).collect();
        assert_eq!(e.mean_sq_error, errs);
    }

    #[test]
    fn data_driven_method_requires_operator() {
        let p = make_phillips(8).unwrap();
        let cfg = SolverConfig {
            method: Method::Dsgd,
            schedule: Schedule::constant(0.1).unwrap(),
            stop: StoppingRule::MaxEpochs(1),
            options: RunOptions::default(),
        };
        assert!(run_ensemble(&p, &DataSource::Redraw { delta0: 0.0 }, None, &cfg, 2, 0).is_err());
    }
}
