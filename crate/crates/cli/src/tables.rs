//! Benchmark tables: three noise-by-step-size grids per problem comparing
//! DSGD variants against SGD and, in the first group, Landweber.
//!
//! Tables 1–3 compare DSGD, SGD and LM; 4–6 vary the decay `α'` of the
//! regularization weight; 7–9 vary the surrogate rank `N`. Within each group
//! the problems are phillips, gravity and shaw.

use illposed_core::Method;

use crate::config::{default_c0, default_rank, ExperimentConfig};
use crate::experiment::{build_problem, execute, num, ResultRow};
use crate::CliError;

pub const DELTAS: [f64; 4] = [1e-3, 5e-3, 1e-2, 5e-2];
pub const ALPHAS: [f64; 3] = [0.0, 0.1, 0.3];
pub const ROWS_HEADER: &str =
    "table,problem,delta0,alpha,variant,method,c0,alpha_prime,lambda0,rank,best_error,best_epoch,final_error,epochs_run,diverged,excluded";

#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub label: String,
    pub method: Method,
    pub alpha_prime: f64,
    /// Requested rank; clamped to `n` at run time.
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableSpec {
    pub id: u8,
    pub problem: &'static str,
    pub c0: f64,
    pub variants: Vec<Variant>,
}

impl TableSpec {
    pub fn columns(&self) -> usize {
        2 + 2 * self.variants.len()
    }

    pub fn header(&self) -> String {
        let mut h = vec!["delta0".to_string(), "alpha".to_string()];
        for v in &self.variants {
            h.push(format!("e_{}", v.label));
            h.push(format!("k_{}", v.label));
        }
        h.join(",")
    }

    /// Rows whose step size is too small to reach the optimum within the
    /// epoch budget; they are emitted but marked as not meaningful.
    pub fn excluded(&self, delta0: f64, alpha: f64) -> bool {
        self.problem == "shaw" && delta0 == 1e-3 && alpha == 0.3
    }
}

fn dsgd(label: String, alpha_prime: f64, rank: usize) -> Variant {
    Variant { label, method: Method::Dsgd, alpha_prime, rank }
}

fn plain(method: Method) -> Variant {
    Variant { label: method.name().into(), method, alpha_prime: 0.0, rank: 0 }
}

pub fn spec(id: u8) -> Result<TableSpec, CliError> {
    let problem = match id {
        1 | 4 | 7 => "phillips",
        2 | 5 | 8 => "gravity",
        3 | 6 | 9 => "shaw",
        _ => return Err(CliError::Usage(format!("table: unknown table id {id}, expected 1 to 9"))),
    };
    let rank = default_rank(problem);
    let variants = match id {
        1..=3 => vec![dsgd("dsgd".into(), 0.0, rank), plain(Method::Sgd), plain(Method::Lm)],
        4..=6 => {
            let mut v: Vec<Variant> = [0.0, 0.1, 0.3, 0.5].iter().map(|ap| dsgd(format!("dsgd_ap{ap:?}"), *ap, rank)).collect();
            v.push(plain(Method::Sgd));
            v
        }
        _ => {
            let ranks: [usize; 4] = if problem == "shaw" { [3, 4, 6, 1000] } else { [3, 5, 10, 1000] };
            let mut v: Vec<Variant> = ranks.iter().map(|r| dsgd(format!("dsgd_n{r}"), 0.0, *r)).collect();
            v.push(plain(Method::Sgd));
            v
        }
    };
    Ok(TableSpec { id, problem, c0: default_c0(problem, Method::Sgd), variants })
}

#[derive(Clone, Debug)]
pub struct TableOptions {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub max_epochs: u64,
    pub landweber_epochs: u64,
    /// Restrict to these noise levels / decay exponents; empty keeps all.
    pub deltas: Vec<f64>,
    pub alphas: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TableCell {
    pub variant: usize,
    pub config: ExperimentConfig,
    pub row: ResultRow,
}

#[derive(Clone, Debug)]
pub struct TableRow {
    pub delta0: f64,
    pub alpha: f64,
    pub excluded: bool,
    /// `None` where a variant has no entry (Landweber has no step decay).
    pub cells: Vec<Option<TableCell>>,
}

pub struct TableResult {
    pub spec: TableSpec,
    pub rows: Vec<TableRow>,
}

impl TableResult {
    pub fn any_diverged(&self) -> bool {
        self.rows.iter().flat_map(|r| r.cells.iter().flatten()).any(|c| c.row.diverged)
    }

    pub fn wide_csv(&self) -> String {
        let mut out = self.spec.header();
        out.push('\n');
        for r in &self.rows {
            let mut f = vec![num(r.delta0), num(r.alpha)];
            for c in &r.cells {
                match c {
                    Some(c) => {
                        f.push(c.row.best_error.map(num).unwrap_or_default());
                        f.push(c.row.best_epoch.map(num).unwrap_or_default());
                    }
                    None => f.extend([String::new(), String::new()]),
                }
            }
            out.push_str(&f.join(","));
            out.push('\n');
        }
        out
    }

    pub fn rows_csv(&self) -> String {
        let mut out = format!("{ROWS_HEADER}\n");
        let o = |v: Option<f64>| v.map(num).unwrap_or_default();
        for r in &self.rows {
            for c in r.cells.iter().flatten() {
                let cfg = &c.config;
                let f = [
                    self.spec.id.to_string(),
                    cfg.problem.clone(),
                    num(r.delta0),
                    num(r.alpha),
                    self.spec.variants[c.variant].label.clone(),
                    cfg.method.name().into(),
                    num(cfg.c0),
                    num(cfg.alpha_prime),
                    num(cfg.lambda0),
                    cfg.rank.to_string(),
                    o(c.row.best_error),
                    o(c.row.best_epoch),
                    o(c.row.final_error),
                    o(c.row.epochs_run),
                    c.row.diverged.to_string(),
                    r.excluded.to_string(),
                ];
                out.push_str(&f.join(","));
                out.push('\n');
            }
        }
        out
    }
}

fn cell_config(spec: &TableSpec, v: &Variant, opts: &TableOptions, delta0: f64, alpha: f64) -> ExperimentConfig {
    let stochastic = v.method.is_stochastic();
    ExperimentConfig {
        problem: spec.problem.into(),
        n: opts.n,
        delta0,
        method: v.method,
        c0: spec.c0,
        alpha: if stochastic { alpha } else { 0.0 },
        alpha_prime: v.alpha_prime,
        lambda0: if v.method.is_data_driven() { 1.0 } else { 0.0 },
        rank: v.rank.min(opts.n),
        trials: opts.trials,
        max_epochs: if stochastic { opts.max_epochs } else { opts.landweber_epochs },
        seed: opts.seed,
        record: illposed_core::Recording::PerEpoch,
        step_factor: 1.0,
        bias_variance: false,
        out: None,
    }
}

pub fn run_table(spec: TableSpec, opts: &TableOptions) -> Result<TableResult, CliError> {
    let base = ExperimentConfig { n: opts.n, ..cell_config(&spec, &spec.variants[0], opts, DELTAS[0], 0.0) };
    let p = build_problem(&base)?;
    let keep = |list: &[f64], v: f64| list.is_empty() || list.contains(&v);
    let mut rows = Vec::new();
    for &delta0 in DELTAS.iter().filter(|d| keep(&opts.deltas, **d)) {
        for &alpha in ALPHAS.iter().filter(|a| keep(&opts.alphas, **a)) {
            let mut cells = Vec::with_capacity(spec.variants.len());
            for (i, v) in spec.variants.iter().enumerate() {
                if !v.method.is_stochastic() && alpha != 0.0 {
                    cells.push(None);
                    continue;
                }
                let config = cell_config(&spec, v, opts, delta0, alpha);
                let row = execute(&p, &config)?.row;
                cells.push(Some(TableCell { variant: i, config, row }));
            }
            rows.push(TableRow { delta0, alpha, excluded: spec.excluded(delta0, alpha), cells });
        }
    }
    Ok(TableResult { spec, rows })
}
