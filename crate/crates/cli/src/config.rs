//! Experiment configuration: built-in defaults, an optional `key=value` file,
//! and command-line flags, applied in that order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use illposed_core::solvers::{paper_landweber_factor, LandweberPreset, Recording};
use illposed_core::Method;

use crate::CliError;

pub const PROBLEMS: [&str; 5] = ["phillips", "gravity", "shaw", "squared-phillips", "squared-shaw"];

/// Keys accepted in a config file, matching the long flag names with `-`
/// replaced by `_`.
pub const KEYS: [&str; 17] = [
    "problem",
    "n",
    "delta0",
    "method",
    "c0",
    "alpha",
    "alpha_prime",
    "lambda0",
    "rank",
    "trials",
    "max_epochs",
    "seed",
    "record",
    "step_factor",
    "bias_variance",
    "paper_scale",
    "out",
];

pub const DESK_N: usize = 200;
pub const DESK_EPOCHS: u64 = 2000;
pub const PAPER_N: usize = 1000;
pub const PAPER_EPOCHS_LANDWEBER: u64 = 1_000_000;
pub const PAPER_EPOCHS_STOCHASTIC: u64 = 100_000;

/// Raw settings before validation.
pub type Settings = BTreeMap<String, String>;

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config_text(text: &str) -> Result<Settings, CliError> {
    let mut out = Settings::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", no + 1)))?;
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("config line {}: unknown key `{}`", no + 1, k.trim())));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<Settings, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

fn get<T: std::str::FromStr>(s: &Settings, key: &str) -> Result<Option<T>, CliError> {
    s.get(key)
        .map(|v| v.parse::<T>().map_err(|_| CliError::Usage(format!("{key}: cannot parse `{v}`"))))
        .transpose()
}

fn get_bool(s: &Settings, key: &str) -> Result<bool, CliError> {
    match s.get(key).map(String::as_str) {
        None | Some("false") | Some("0") => Ok(false),
        Some("true") | Some("1") => Ok(true),
        Some(v) => Err(CliError::Usage(format!("{key}: expected true or false, got `{v}`"))),
    }
}

pub fn parse_recording(v: &str) -> Result<Recording, CliError> {
    match v {
        "epoch" => Ok(Recording::PerEpoch),
        "iteration" => Ok(Recording::PerIteration),
        _ => v
            .strip_prefix("every:")
            .and_then(|k| k.parse::<u64>().ok())
            .filter(|k| *k > 0)
            .map(Recording::EveryEpochs)
            .ok_or_else(|| CliError::Usage(format!("record: expected epoch, iteration or every:K, got `{v}`"))),
    }
}

pub fn recording_name(r: Recording) -> String {
    match r {
        Recording::PerEpoch => "epoch".into(),
        Recording::PerIteration => "iteration".into(),
        Recording::EveryEpochs(k) => format!("every:{k}"),
    }
}

/// `c₀` used for the benchmark tables of each problem.
pub fn default_c0(problem: &str, method: Method) -> f64 {
    match (problem, method) {
        ("shaw", _) => 2.0,
        ("squared-phillips", Method::Sgd) => 2.0,
        ("squared-shaw", Method::Sgd) => 4.0 / 3.0,
        ("squared-shaw", _) => 2.0 / 3.0,
        _ => 1.0,
    }
}

/// Surrogate rank used for the benchmark tables of each problem.
pub fn default_rank(problem: &str) -> usize {
    if problem.ends_with("shaw") {
        6
    } else {
        10
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: String,
    pub n: usize,
    pub delta0: f64,
    pub method: Method,
    pub c0: f64,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub lambda0: f64,
    /// Surrogate rank; 0 means no data-driven operator.
    pub rank: usize,
    pub trials: usize,
    pub max_epochs: u64,
    pub seed: u64,
    pub record: Recording,
    /// Landweber step multiplier on `1/‖F'(x†)‖_F²`.
    pub step_factor: f64,
    /// Keep iterates so the trajectory CSV can carry bias and variance.
    pub bias_variance: bool,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_settings(s: &Settings) -> Result<Self, CliError> {
        let problem = s.get("problem").cloned().unwrap_or_else(|| "phillips".into());
        if !PROBLEMS.contains(&problem.as_str()) {
            return Err(CliError::Usage(format!("problem: unknown problem `{problem}`")));
        }
        let method = match s.get("method") {
            None => Method::Dsgd,
            Some(m) => Method::parse(m).ok_or_else(|| CliError::Usage(format!("method: unknown method `{m}`")))?,
        };
        let paper = get_bool(s, "paper_scale")?;
        let n = get::<usize>(s, "n")?.unwrap_or(if paper { PAPER_N } else { DESK_N });
        if n == 0 {
            return Err(CliError::Usage("n: must be positive".into()));
        }
        let epochs_default = match (paper, method.is_stochastic()) {
            (false, _) => DESK_EPOCHS,
            (true, true) => PAPER_EPOCHS_STOCHASTIC,
            (true, false) => PAPER_EPOCHS_LANDWEBER,
        };
        let max_epochs = get::<u64>(s, "max_epochs")?.unwrap_or(epochs_default);
        if max_epochs == 0 {
            return Err(CliError::Usage("max_epochs: must be positive".into()));
        }
        let delta0 = get::<f64>(s, "delta0")?.unwrap_or(1e-2);
        if !(delta0 >= 0.0 && delta0.is_finite()) {
            return Err(CliError::Usage(format!("delta0: must be nonnegative, got {delta0}")));
        }
        let c0 = get::<f64>(s, "c0")?.unwrap_or_else(|| default_c0(&problem, method));
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(CliError::Usage(format!("c0: must be positive, got {c0}")));
        }
        let alpha = get::<f64>(s, "alpha")?.unwrap_or(0.0);
        if !(0.0..1.0).contains(&alpha) {
            return Err(CliError::Usage(format!("alpha: must lie in [0, 1), got {alpha}")));
        }
        let alpha_prime = get::<f64>(s, "alpha_prime")?.unwrap_or(0.0);
        if !(alpha_prime >= 0.0 && alpha_prime.is_finite()) {
            return Err(CliError::Usage(format!("alpha_prime: must be nonnegative, got {alpha_prime}")));
        }
        let lambda0 = get::<f64>(s, "lambda0")?;
        let rank = get::<usize>(s, "rank")?;
        let (lambda0, rank) = if method.is_data_driven() {
            let rank = rank.unwrap_or_else(|| default_rank(&problem));
            if rank == 0 {
                return Err(CliError::Usage(format!("rank: {} needs a surrogate rank of at least 1", method.name())));
            }
            let lambda0 = lambda0.unwrap_or(1.0);
            if !(lambda0 >= 0.0 && lambda0.is_finite()) {
                return Err(CliError::Usage(format!("lambda0: must be nonnegative, got {lambda0}")));
            }
            (lambda0, rank)
        } else {
            if lambda0.is_some_and(|l| l != 0.0) {
                return Err(CliError::Usage(format!("lambda0: {} has no regularization term, lambda0 must be 0", method.name())));
            }
            (0.0, rank.unwrap_or(0))
        };
        if rank > n {
            return Err(CliError::Usage(format!("rank: {rank} exceeds n = {n}")));
        }
        let trials = get::<usize>(s, "trials")?.unwrap_or(10);
        if trials == 0 {
            return Err(CliError::Usage("trials: must be positive".into()));
        }
        let preset = if method.is_data_driven() { LandweberPreset::Dlm } else { LandweberPreset::Lm };
        let step_factor = get::<f64>(s, "step_factor")?.unwrap_or_else(|| paper_landweber_factor(&problem, preset));
        if !(step_factor > 0.0 && step_factor.is_finite()) {
            return Err(CliError::Usage(format!("step_factor: must be positive, got {step_factor}")));
        }
        let record = s.get("record").map(|v| parse_recording(v)).transpose()?.unwrap_or(Recording::PerEpoch);
        Ok(Self {
            problem,
            n,
            delta0,
            method,
            c0,
            alpha,
            alpha_prime,
            lambda0,
            rank,
            trials,
            max_epochs,
            seed: get::<u64>(s, "seed")?.unwrap_or(0),
            record,
            step_factor,
            bias_variance: get_bool(s, "bias_variance")?,
            out: s.get("out").map(PathBuf::from),
        })
    }
}
