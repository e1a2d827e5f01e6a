//! Command-line driver: `run`, `table`, `verify` and `problems`.
//!
//! Exit codes: 0 success, 1 usage error, 2 divergence, 3 verification
//! failure, 4 any other runtime error (I/O, numerical setup).

pub mod config;
pub mod experiment;
pub mod tables;
pub mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use illposed_core::linalg::Svd;
use illposed_core::operators::RowOperator;
use illposed_core::problems::{by_name, DEFAULT_GRAVITY_DEPTH};

use crate::config::{read_config_file, ExperimentConfig, Settings, PROBLEMS};
use crate::experiment::{num, summary_csv, trajectory_csv};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("diverged: {0}")]
    Diverged(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Core(#[from] illposed_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::Verification(_) => EXIT_VERIFY,
            CliError::Core(_) | CliError::Io(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "illposed", version, about = "Stochastic and Landweber-type iterative regularization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one ensemble and write its summary and trajectory.
    Run(RunArgs),
    /// Reproduce one of the benchmark comparison tables (1 to 9).
    Table(TableArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// List the test problems and their singular value spectra.
    Problems(ProblemsArgs),
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// key=value file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub delta0: Option<f64>,
    /// lm, dlm, sgd or dsgd.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub c0: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub alpha_prime: Option<f64>,
    #[arg(long)]
    pub lambda0: Option<f64>,
    /// Surrogate rank N.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// epoch, iteration or every:K.
    #[arg(long)]
    pub record: Option<String>,
    /// Landweber step as a multiple of 1/‖F'(x†)‖_F².
    #[arg(long)]
    pub step_factor: Option<f64>,
    /// Keep iterates and add bias and variance to the trajectory.
    #[arg(long)]
    pub bias_variance: bool,
    /// n = 1000 and the long epoch limits.
    #[arg(long)]
    pub paper_scale: bool,
    /// Directory for summary.csv and trajectory.csv; summary goes to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn settings(&self) -> Result<Settings, CliError> {
        let mut s = match &self.config {
            Some(p) => read_config_file(p)?,
            None => Settings::new(),
        };
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                s.insert(k.to_string(), v);
            }
        };
        put("problem", self.problem.clone());
        put("n", self.n.map(|v| v.to_string()));
        put("delta0", self.delta0.map(num));
        put("method", self.method.clone());
        put("c0", self.c0.map(num));
        put("alpha", self.alpha.map(num));
        put("alpha_prime", self.alpha_prime.map(num));
        put("lambda0", self.lambda0.map(num));
        put("rank", self.rank.map(|v| v.to_string()));
        put("trials", self.trials.map(|v| v.to_string()));
        put("max_epochs", self.max_epochs.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("record", self.record.clone());
        put("step_factor", self.step_factor.map(num));
        put("bias_variance", self.bias_variance.then(|| "true".into()));
        put("paper_scale", self.paper_scale.then(|| "true".into()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct TableArgs {
    pub id: u8,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Epoch limit for the stochastic methods.
    #[arg(long)]
    pub max_epochs: Option<u64>,
    /// Epoch limit for Landweber.
    #[arg(long)]
    pub lm_epochs: Option<u64>,
    /// Only these noise levels (repeatable).
    #[arg(long = "delta0")]
    pub deltas: Vec<f64>,
    /// Only these step decay exponents (repeatable).
    #[arg(long = "alpha")]
    pub alphas: Vec<f64>,
    #[arg(long)]
    pub paper_scale: bool,
    /// Wide table CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// One row per cell with configuration, divergence and exclusion flags.
    #[arg(long)]
    pub rows: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: verify::Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ProblemsArgs {
    #[arg(long, default_value_t = config::DESK_N)]
    pub n: usize,
    /// Print every singular value of this problem instead of the overview.
    #[arg(long)]
    pub spectrum: Option<String>,
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn cmd_run(args: &RunArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let cfg = ExperimentConfig::from_settings(&args.settings()?)?;
    let start = Instant::now();
    let p = experiment::build_problem(&cfg)?;
    let outcome = experiment::execute(&p, &cfg)?;
    let summary = summary_csv(&cfg, &outcome.row);
    match &cfg.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            write_file(&dir.join("summary.csv"), &summary)?;
            if let Some(e) = &outcome.ensemble {
                write_file(&dir.join("trajectory.csv"), &trajectory_csv(e, &p.x_dag)?)?;
            }
        }
        None => stdout.write_all(summary.as_bytes())?,
    }
    writeln!(stderr, "wall_time_s={:.3}", start.elapsed().as_secs_f64())?;
    match outcome.divergence {
        Some(msg) => Err(CliError::Diverged(msg)),
        None => Ok(()),
    }
}

pub fn cmd_table(args: &TableArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let spec = tables::spec(args.id)?;
    let (n, stoch, lw) = if args.paper_scale {
        (config::PAPER_N, config::PAPER_EPOCHS_STOCHASTIC, config::PAPER_EPOCHS_LANDWEBER)
    } else {
        (config::DESK_N, config::DESK_EPOCHS, config::DESK_EPOCHS)
    };
    let opts = tables::TableOptions {
        n: args.n.unwrap_or(n),
        trials: args.trials,
        seed: args.seed,
        max_epochs: args.max_epochs.unwrap_or(stoch),
        landweber_epochs: args.lm_epochs.unwrap_or(lw),
        deltas: args.deltas.clone(),
        alphas: args.alphas.clone(),
    };
    if opts.trials == 0 || opts.n == 0 || opts.max_epochs == 0 || opts.landweber_epochs == 0 {
        return Err(CliError::Usage("table: n, trials and epoch limits must be positive".into()));
    }
    for d in &opts.deltas {
        if !tables::DELTAS.contains(d) {
            return Err(CliError::Usage(format!("delta0: {d} is not a table noise level")));
        }
    }
    for a in &opts.alphas {
        if !tables::ALPHAS.contains(a) {
            return Err(CliError::Usage(format!("alpha: {a} is not a table step decay")));
        }
    }
    let start = Instant::now();
    let result = tables::run_table(spec, &opts)?;
    let wide = result.wide_csv();
    match &args.out {
        Some(path) => write_file(path, &wide)?,
        None => stdout.write_all(wide.as_bytes())?,
    }
    if let Some(path) = &args.rows {
        write_file(path, &result.rows_csv())?;
    }
    writeln!(stderr, "wall_time_s={:.3}", start.elapsed().as_secs_f64())?;
    if result.any_diverged() {
        return Err(CliError::Diverged("at least one table cell diverged".into()));
    }
    Ok(())
}

pub fn cmd_verify(args: &VerifyArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let start = Instant::now();
    let checks = verify::run_suite(args.suite, args.seed)?;
    stdout.write_all(verify::report_csv(&checks).as_bytes())?;
    writeln!(stderr, "wall_time_s={:.3}", start.elapsed().as_secs_f64())?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}

pub fn cmd_problems(args: &ProblemsArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if args.n == 0 {
        return Err(CliError::Usage("n: must be positive".into()));
    }
    if let Some(name) = &args.spectrum {
        if !PROBLEMS.contains(&name.as_str()) {
            return Err(CliError::Usage(format!("spectrum: unknown problem `{name}`")));
        }
        let p = by_name(name, args.n, DEFAULT_GRAVITY_DEPTH)?;
        let svd = Svd::new(p.op.matrix())?;
        writeln!(stdout, "index,sigma")?;
        for (i, s) in svd.sigma.iter().enumerate() {
            writeln!(stdout, "{},{}", i + 1, num(*s))?;
        }
        return Ok(());
    }
    writeln!(stdout, "problem,n,nonlinearity,sigma_max,sigma_min,condition,numerical_rank")?;
    for name in PROBLEMS {
        let p = by_name(name, args.n, DEFAULT_GRAVITY_DEPTH)?;
        let s = Svd::new(p.op.matrix())?.sigma;
        let (max, min) = (s[0], s[s.len() - 1]);
        let rank = s.iter().filter(|v| **v > 1e-12 * max).count();
        writeln!(
            stdout,
            "{name},{},{},{},{},{},{rank}",
            args.n,
            if p.nonlinearity().is_linear() { "linear" } else { "squared" },
            num(max),
            num(min),
            num(max / min)
        )?;
    }
    Ok(())
}

pub fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, stdout, stderr),
        Command::Table(a) => cmd_table(a, stdout, stderr),
        Command::Verify(a) => cmd_verify(a, stdout, stderr),
        Command::Problems(a) => cmd_problems(a, stdout),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
