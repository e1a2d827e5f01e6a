//! Acceptance criteria for the whole workspace, each with its runtime budget.
//!
//! Every criterion is evaluated at fixed parameters and a fixed seed; a
//! criterion passes only if its numerical condition holds within budget.

use std::time::{Duration, Instant};

use illposed_cli::config::{ExperimentConfig, Settings};
use illposed_cli::experiment::{build_problem, execute};
use illposed_cli::tables::{run_table, spec, TableOptions};
use illposed_cli::verify;
use illposed_cli::CliError;
use illposed_core::ensemble::THREADS_ENV;

/// Seed used by every criterion.
pub const SEED: u64 = 17;

pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    pub budget: Duration,
    pub check: fn() -> Result<Verdict, CliError>,
}

pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    pub elapsed: Duration,
    pub detail: String,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} {}: {} [{:.2}s]",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

pub fn evaluate(c: &Criterion) -> Outcome {
    let start = Instant::now();
    let result = (c.check)();
    let elapsed = start.elapsed();
    let (pass, mut detail) = match result {
        Ok(v) => (v.pass, v.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let in_budget = elapsed <= c.budget;
    if !in_budget {
        detail.push_str(&format!("; over budget of {}s", c.budget.as_secs()));
    }
    Outcome { id: c.id, title: c.title, pass: pass && in_budget, elapsed, detail }
}

fn verdict(pass: bool, detail: String) -> Result<Verdict, CliError> {
    Ok(Verdict { pass, detail })
}

fn oracle_equivalence() -> Result<Verdict, CliError> {
    let gap = verify::mean_recursion_gap(20, 4, SEED)?;
    verdict(gap < 1e-12, format!("max_abs_gap = {gap:e} (< 1e-12)"))
}

fn bias_variance_identity() -> Result<Verdict, CliError> {
    let gap = verify::bias_variance_gap(200, 10, 50, SEED)?;
    verdict(gap <= 1e-10, format!("max relative gap = {gap:e} (<= 1e-10)"))
}

fn pathwise_recursion() -> Result<Verdict, CliError> {
    let (violations, checked, slack) = verify::pathwise_violations(200, 10, 20, SEED)?;
    verdict(violations == 0, format!("{violations} violations in {checked} iterations, worst slack {slack:e}"))
}

fn phi_bound() -> Result<Verdict, CliError> {
    let slack = verify::phi_bound_min_slack(100, SEED)?;
    verdict(slack >= -1e-12, format!("min relative slack = {slack:e} (>= -1e-12)"))
}

fn exact_data_rate() -> Result<Verdict, CliError> {
    let slope = verify::exact_data_slope(200, 0.25, 0.1, 500, 10, SEED)?;
    let target = -illposed_core::analysis::exact_data_exponent(0.25, 0.1);
    let (lo, hi) = (1.3 * target, 0.7 * target);
    verdict((lo..=hi).contains(&slope), format!("fitted slope = {slope:.4}, required [{lo:.3}, {hi:.3}]"))
}

fn stability() -> Result<Verdict, CliError> {
    let d = verify::stability_distances(200, 5, 12, SEED)?;
    let mono = verify::nonincreasing(&d);
    let last = d.last().copied().flatten().unwrap_or(f64::NAN);
    verdict(mono && last < 1e-6, format!("nonincreasing = {mono}, final distance = {last:e} (< 1e-6)"))
}

fn run_config(method: &str, max_epochs: u64) -> Result<ExperimentConfig, CliError> {
    let settings: Settings = [
        ("problem", "phillips".to_string()),
        ("n", "1000".into()),
        ("delta0", "0.01".into()),
        ("method", method.into()),
        ("trials", "10".into()),
        ("max_epochs", max_epochs.to_string()),
        ("seed", SEED.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    ExperimentConfig::from_settings(&settings)
}

fn table_reproduction() -> Result<Verdict, CliError> {
    let sgd = run_config("sgd", 100)?;
    let p = build_problem(&sgd)?;
    let s = execute(&p, &sgd)?.row;
    let lm = execute(&p, &run_config("lm", 5000)?)?.row;
    let (se, sk, le) = (s.best_error.unwrap_or(f64::NAN), s.best_epoch.unwrap_or(f64::NAN), lm.best_error.unwrap_or(f64::NAN));
    let within = |v: f64, r: f64| v >= r / 3.0 && v <= r * 3.0;
    verdict(
        within(se, 2.40e-1) && sk < 20.0 && within(le, 1.28e-1),
        format!(
            "SGD e = {se:.3e} at epoch {sk} (ref 2.40e-1, epoch < 20); LM e = {le:.3e} at epoch {} (ref 1.28e-1)",
            lm.best_epoch.unwrap_or(f64::NAN)
        ),
    )
}

fn dsgd_vs_sgd(table: u8, delta0: f64) -> Result<(f64, f64), CliError> {
    let opts = TableOptions {
        n: 1000,
        trials: 10,
        seed: SEED,
        max_epochs: 300,
        landweber_epochs: 1,
        deltas: vec![delta0],
        alphas: vec![0.1],
    };
    let t = run_table(spec(table)?, &opts)?;
    let row = &t.rows[0];
    let err = |label: &str| {
        let i = t.spec.variants.iter().position(|v| v.label == label).expect("variant");
        row.cells[i].as_ref().and_then(|c| c.row.best_error).unwrap_or(f64::NAN)
    };
    Ok((err("dsgd"), err("sgd")))
}

fn ordering() -> Result<Verdict, CliError> {
    let (pd, ps) = dsgd_vs_sgd(1, 1e-3)?;
    let (sd, ss) = dsgd_vs_sgd(3, 1e-2)?;
    verdict(
        pd < ps && sd < ss,
        format!("phillips DSGD {pd:.4e} vs SGD {ps:.4e}; shaw DSGD {sd:.4e} vs SGD {ss:.4e}"),
    )
}

fn run_cli(dir: &std::path::Path, threads: &str) -> Result<(Vec<u8>, Vec<u8>), CliError> {
    std::env::set_var(THREADS_ENV, threads);
    let args = [
        "illposed", "run", "--problem", "phillips", "--n", "200", "--method", "dsgd", "--trials", "6",
        "--max-epochs", "20", "--seed", "5", "--bias-variance", "--out",
    ];
    let mut argv: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    argv.push(dir.display().to_string());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = illposed_cli::main_with(argv, &mut out, &mut err);
    std::env::remove_var(THREADS_ENV);
    if code != 0 {
        return Err(CliError::Usage(String::from_utf8_lossy(&err).into_owned()));
    }
    Ok((std::fs::read(dir.join("summary.csv"))?, std::fs::read(dir.join("trajectory.csv"))?))
}

fn determinism() -> Result<Verdict, CliError> {
    let base = std::env::temp_dir().join(format!("illposed-accept-{}", std::process::id()));
    let runs: Vec<(Vec<u8>, Vec<u8>)> = [("a", "1"), ("b", "1"), ("c", "3")]
        .iter()
        .map(|(name, threads)| run_cli(&base.join(name), threads))
        .collect::<Result<_, _>>()?;
    std::fs::remove_dir_all(&base).ok();
    let same = runs.windows(2).all(|w| w[0] == w[1]);
    verdict(same, format!("3 runs (threads 1, 1, 3) byte-identical = {same}"))
}

fn gradient_check() -> Result<Verdict, CliError> {
    let gap = verify::gradient_fd_gap(50, 50, SEED)?;
    verdict(gap <= 1e-6, format!("max relative gap = {gap:e} (<= 1e-6)"))
}

pub fn criteria() -> Vec<Criterion> {
    let s = Duration::from_secs;
    vec![
        Criterion { id: 1, title: "oracle equivalence", budget: s(5), check: oracle_equivalence },
        Criterion { id: 2, title: "bias-variance identity", budget: s(10), check: bias_variance_identity },
        Criterion { id: 3, title: "pathwise energy recursion", budget: s(10), check: pathwise_recursion },
        Criterion { id: 4, title: "spectral filter bound", budget: s(2), check: phi_bound },
        Criterion { id: 5, title: "exact-data rate", budget: s(30), check: exact_data_rate },
        Criterion { id: 6, title: "noise stability", budget: s(5), check: stability },
        Criterion { id: 7, title: "table reproduction", budget: s(60), check: table_reproduction },
        Criterion { id: 8, title: "DSGD/SGD ordering", budget: s(120), check: ordering },
        Criterion { id: 9, title: "determinism", budget: s(10), check: determinism },
        Criterion { id: 10, title: "nonlinear gradients", budget: s(2), check: gradient_check },
    ]
}
