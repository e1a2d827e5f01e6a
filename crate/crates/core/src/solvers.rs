//! Iteration kernels: stochastic gradient descent with optional data-driven
//! regularization (SGD / DSGD) and the full-gradient Landweber counterparts
//! (LM / DLM), together with schedules, stopping rules and trajectory records.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::operators::{DataDrivenOp, Nonlinearity, RowOperator};
use crate::problems::{NoisyData, Problem};
use crate::rng;

/// Iterates with `‖x‖` above this are declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// `η_k = η₀ k^{-α}` and `λ_k = λ₀ k^{-α'}` for `k ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub eta0: f64,
    pub alpha: f64,
    pub lambda0: f64,
    pub alpha_prime: f64,
}

impl Schedule {
    pub fn new(eta0: f64, alpha: f64, lambda0: f64, alpha_prime: f64) -> Result<Self> {
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta0 must be positive, got {eta0}")));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1), got {alpha}")));
        }
        if !(lambda0 >= 0.0 && lambda0.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda0 must be nonnegative, got {lambda0}")));
        }
        if !(alpha_prime >= 0.0 && alpha_prime.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha_prime must be nonnegative, got {alpha_prime}")));
        }
        Ok(Self { eta0, alpha, lambda0, alpha_prime })
    }

    /// Constant step, no regularization.
    pub fn constant(eta0: f64) -> Result<Self> {
        Self::new(eta0, 0.0, 0.0, 0.0)
    }

    pub fn eta_at(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Err(Error::InvalidArgument("schedules are indexed from k = 1".into()));
        }
        Ok(self.eta(k))
    }

    pub fn lambda_at(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Err(Error::InvalidArgument("schedules are indexed from k = 1".into()));
        }
        Ok(self.lambda(k))
    }

    #[inline]
    pub(crate) fn eta(&self, k: u64) -> f64 {
        if self.alpha == 0.0 {
            self.eta0
        } else {
            self.eta0 * (k as f64).powf(-self.alpha)
        }
    }

    #[inline]
    pub(crate) fn lambda(&self, k: u64) -> f64 {
        if self.lambda0 == 0.0 || self.alpha_prime == 0.0 {
            self.lambda0
        } else {
            self.lambda0 * (k as f64).powf(-self.alpha_prime)
        }
    }
}

/// `‖F_i'(x†)‖` for each row: `‖a_i‖` when linear, `2|⟨a_i, x†⟩| ‖a_i‖` when squared.
pub fn row_gradient_norms(p: &Problem) -> Vec<f64> {
    let a = p.op.matrix();
    (0..p.n())
        .map(|i| {
            let row = a.row(i);
            let d = p.nonlinearity().derivative(linalg::dot(row, &p.x_dag)).abs();
            d * linalg::norm2(row)
        })
        .collect()
}

/// `η₀ = c₀ / (2 max_i ‖F_i'(x†)‖²)`.
pub fn default_eta0(p: &Problem, c0: f64) -> Result<f64> {
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::InvalidArgument(format!("c0 must be positive, got {c0}")));
    }
    let m = row_gradient_norms(p).into_iter().fold(0.0, f64::max);
    if m == 0.0 {
        return Err(Error::InvalidArgument("every row gradient vanishes".into()));
    }
    Ok(c0 / (2.0 * m * m))
}

/// Which full-gradient method a Landweber step preset is meant for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LandweberPreset {
    Lm,
    Dlm,
}

/// Multiplier `c` in the constant step `c / ‖K‖_F²` used for the benchmark
/// tables, with `K = A` for linear problems and `K = F'(x†)` for squared ones.
pub fn paper_landweber_factor(problem_name: &str, preset: LandweberPreset) -> f64 {
    match (problem_name, preset) {
        ("squared-shaw", LandweberPreset::Lm) => 2.0 / 3.0,
        ("squared-shaw", LandweberPreset::Dlm) => 1.0 / 3.0,
        (name, LandweberPreset::Dlm) if name.starts_with("squared-") => 0.5,
        _ => 1.0,
    }
}

/// Constant Landweber step for `landweber_run` realizing `factor / ‖K‖_F²` on
/// the unscaled stacked gradient. Since `full_gradient` carries `1/n`, the
/// returned value is `factor · n / ‖K‖_F²`.
pub fn paper_landweber_step(p: &Problem, factor: f64) -> Result<f64> {
    let fro_sq: f64 = row_gradient_norms(p).iter().map(|v| v * v).sum();
    if fro_sq == 0.0 {
        return Err(Error::InvalidArgument("forward Jacobian vanishes at the reference solution".into()));
    }
    Ok(factor * p.n() as f64 / fro_sq)
}

/// When to stop iterating.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StoppingRule {
    MaxEpochs(u64),
    /// Stop after exactly this many iterations.
    APriori(u64),
    /// Run `max_epochs` and report the iterate with the smallest true error.
    OracleBest { max_epochs: u64 },
}

impl StoppingRule {
    pub fn max_iterations(&self, n: usize, stochastic: bool) -> Result<u64> {
        let per_epoch = if stochastic { n as u64 } else { 1 };
        match *self {
            StoppingRule::MaxEpochs(e) | StoppingRule::OracleBest { max_epochs: e } => {
                if e == 0 {
                    return Err(Error::InvalidArgument("epoch limit must be at least 1".into()));
                }
                e.checked_mul(per_epoch).ok_or_else(|| Error::InvalidArgument("epoch limit overflows".into()))
            }
            StoppingRule::APriori(k) => {
                if k == 0 {
                    return Err(Error::InvalidArgument("a priori stopping index must be at least 1".into()));
                }
                Ok(k)
            }
        }
    }
}

/// `k* = ⌊(δ/‖w‖)^{-2/(min((1+2ν)(1−α), 1) + ε)}⌋`, clamped below at 1.
/// Returns the index and whether the clamp was applied.
pub fn apriori_k_star(delta: f64, w_norm: f64, nu: f64, alpha: f64, epsilon: f64) -> Result<(u64, bool)> {
    if !(delta > 0.0 && w_norm > 0.0) {
        return Err(Error::InvalidArgument("delta and ‖w‖ must be positive".into()));
    }
    if !(nu > 0.0 && nu < 0.5) {
        return Err(Error::InvalidArgument(format!("nu must lie in (0, 1/2), got {nu}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(k_star_unchecked(delta / w_norm, nu, alpha, epsilon))
}

pub(crate) fn k_star_unchecked(ratio: f64, nu: f64, alpha: f64, epsilon: f64) -> (u64, bool) {
    let gamma = ((1.0 + 2.0 * nu) * (1.0 - alpha)).min(1.0);
    let k = ratio.powf(-2.0 / (gamma + epsilon)).floor();
    if k < 1.0 {
        (1, true)
    } else if k >= u64::MAX as f64 {
        (u64::MAX, false)
    } else {
        (k as u64, false)
    }
}

/// Snapshot density. Best-error tracking is per iteration regardless.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recording {
    PerIteration,
    PerEpoch,
    EveryEpochs(u64),
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub record: Recording,
    /// Store the iterate with every snapshot (needed for bias-variance).
    pub keep_iterates: bool,
    /// Initial guess; zero when absent.
    pub x1: Option<Vec<f64>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { record: Recording::PerEpoch, keep_iterates: false, x1: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    /// Fractional epoch `k/n` (stochastic) or `k` (Landweber).
    pub epoch: f64,
    pub iteration: u64,
    /// `‖x_k − x†‖²` (Euclidean).
    pub sq_error: f64,
    /// `‖F(x_k) − y^δ‖²` (RMS).
    pub sq_residual_f: f64,
    /// `‖G(x_k) − y^δ‖²` (RMS), absent without a surrogate.
    pub sq_residual_g: Option<f64>,
    pub iterate: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Best {
    pub sq_error: f64,
    pub iteration: u64,
    pub epoch: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub iterate_final: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub best: Best,
    pub iterations_run: u64,
    pub index_draws: u64,
    pub row_gradients: u64,
}

impl Trajectory {
    pub fn final_sq_error(&self) -> f64 {
        self.snapshots.last().map_or(f64::NAN, |s| s.sq_error)
    }

    pub fn epochs_run(&self) -> f64 {
        self.snapshots.last().map_or(0.0, |s| s.epoch)
    }
}

/// State handed to a per-iteration observer.
pub struct StepInfo<'a> {
    pub iteration: u64,
    /// Drawn row, or `None` for full-gradient steps.
    pub index: Option<usize>,
    pub eta: f64,
    pub lambda: f64,
    pub sq_error_before: f64,
    pub sq_error: f64,
    pub iterate: &'a [f64],
}

fn check_inputs(p: &Problem, data: &NoisyData, g: Option<&DataDrivenOp>, opts: &RunOptions) -> Result<Vec<f64>> {
    let n = p.n();
    p.op.check_vec(&data.y_delta)?;
    if let Some(g) = g {
        if g.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: g.dim() });
        }
    }
    match &opts.x1 {
        Some(x1) => {
            p.op.check_vec(x1)?;
            if x1.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("initial guess"));
            }
            Ok(x1.clone())
        }
        None => Ok(vec![0.0; n]),
    }
}

struct Recorder<'a> {
    p: &'a Problem,
    y: &'a [f64],
    g: Option<&'a DataDrivenOp>,
    keep_iterates: bool,
    per_epoch: u64,
    snapshots: Vec<Snapshot>,
}

impl Recorder<'_> {
    fn record(&mut self, iteration: u64, x: &[f64], sq_error: f64) {
        let residual = |op: &dyn RowOperator| {
            let fx = op.matrix().mul_vec(x);
            let f = op.nonlinearity();
            fx.iter().zip(self.y).map(|(t, y)| (f.value(*t) - y).powi(2)).sum::<f64>() / fx.len() as f64
        };
        let sq_residual_f = residual(&self.p.op);
        let sq_residual_g = self.g.map(|g| residual(g));
        self.snapshots.push(Snapshot {
            epoch: iteration as f64 / self.per_epoch as f64,
            iteration,
            sq_error,
            sq_residual_f,
            sq_residual_g,
            iterate: self.keep_iterates.then(|| x.to_vec()),
        });
    }
}

fn is_snapshot(record: Recording, k: u64, per_epoch: u64, last: u64) -> bool {
    k == last
        || match record {
            Recording::PerIteration => true,
            Recording::PerEpoch => k % per_epoch == 0,
            Recording::EveryEpochs(m) => k % (m.max(1) * per_epoch) == 0,
        }
}

/// `x −= c·a` (and `x −= d·b`), returning `(‖x − x†‖², ‖x‖²)` after the update.
#[inline]
fn step_and_measure(x: &mut [f64], x_dag: &[f64], c: f64, a: &[f64], second: Option<(f64, &[f64])>) -> (f64, f64) {
    let mut se = [0.0f64; 4];
    let mut sx = [0.0f64; 4];
    let n = x.len();
    let (x_dag, a) = (&x_dag[..n], &a[..n]);
    let b = second.map(|(d, b)| (d, &b[..n]));
    let split = n - n % 4;
    for q in (0..split).step_by(4) {
        for l in 0..4 {
            let j = q + l;
            let upd = match b {
                None => c * a[j],
                Some((d, b)) => c * a[j] + d * b[j],
            };
            let v = x[j] - upd;
            x[j] = v;
            let e = v - x_dag[j];
            se[l] += e * e;
            sx[l] += v * v;
        }
    }
    for j in split..n {
        let upd = match b {
            None => c * a[j],
            Some((d, b)) => c * a[j] + d * b[j],
        };
        let v = x[j] - upd;
        x[j] = v;
        let e = v - x_dag[j];
        se[j - split] += e * e;
        sx[j - split] += v * v;
    }
    ((se[0] + se[2]) + (se[1] + se[3]), (sx[0] + sx[2]) + (sx[1] + sx[3]))
}

fn diverged(sq_error: f64, sq_norm: f64) -> bool {
    !(sq_error.is_finite() && sq_norm.is_finite()) || sq_norm > DIVERGENCE_NORM * DIVERGENCE_NORM
}

/// Stochastic iteration `x_{k+1} = x_k − η_k (F_i'(x_k)*(F_i(x_k) − y^δ_i) + λ_k G_i'(x_k)*(G_i(x_k) − y^δ_i))`
/// with `i` uniform. Without `g`, or whenever `λ_k = 0`, the regularization term is
/// skipped entirely, so such runs coincide bitwise with plain SGD.
pub fn dsgd_run(
    p: &Problem,
    data: &NoisyData,
    g: Option<&DataDrivenOp>,
    s: &Schedule,
    stop: StoppingRule,
    seed: u64,
    opts: &RunOptions,
) -> Result<Trajectory> {
    dsgd_run_observed(p, data, g, s, stop, seed, opts, |_| {})
}

#[allow(clippy::too_many_arguments)]
pub fn dsgd_run_observed(
    p: &Problem,
    data: &NoisyData,
    g: Option<&DataDrivenOp>,
    s: &Schedule,
    stop: StoppingRule,
    seed: u64,
    opts: &RunOptions,
    mut observe: impl FnMut(&StepInfo),
) -> Result<Trajectory> {
    let mut x = check_inputs(p, data, g, opts)?;
    let n = p.n();
    let last = stop.max_iterations(n, true)?;
    let y = &data.y_delta;
    let a: &Matrix = p.op.matrix();
    let f = p.nonlinearity();
    let mut rng = rng::seeded(seed);
    let mut rec = Recorder { p, y, g, keep_iterates: opts.keep_iterates, per_epoch: n as u64, snapshots: Vec::new() };

    let mut sq_error = linalg::dist_sq(&x, &p.x_dag);
    rec.record(0, &x, sq_error);
    let mut best = Best { sq_error, iteration: 0, epoch: 0.0 };
    let mut row_gradients = 0u64;

    for k in 1..=last {
        let i = rng::draw_index(&mut rng, n);
        let eta = s.eta(k);
        let lambda = s.lambda(k);
        let row = a.row(i);
        let t = linalg::dot(row, &x);
        let c = eta * f.derivative(t) * (f.value(t) - y[i]);
        row_gradients += 1;
        let second = match g {
            Some(g) if lambda != 0.0 => {
                let grow = g.matrix().row(i);
                let gf = g.nonlinearity();
                let tg = linalg::dot(grow, &x);
                row_gradients += 1;
                Some((eta * lambda * gf.derivative(tg) * (gf.value(tg) - y[i]), grow))
            }
            _ => None,
        };
        let before = sq_error;
        let (se, sx) = step_and_measure(&mut x, &p.x_dag, c, row, second);
        if diverged(se, sx) {
            return Err(Error::Diverged { iteration: k });
        }
        sq_error = se;
        if sq_error < best.sq_error {
            best = Best { sq_error, iteration: k, epoch: k as f64 / n as f64 };
        }
        observe(&StepInfo { iteration: k, index: Some(i), eta, lambda, sq_error_before: before, sq_error, iterate: &x });
        if is_snapshot(opts.record, k, n as u64, last) {
            rec.record(k, &x, sq_error);
        }
    }

    Ok(Trajectory {
        seed,
        iterate_final: x,
        snapshots: rec.snapshots,
        best,
        iterations_run: last,
        index_draws: last,
        row_gradients,
    })
}

/// Full-gradient iteration `x_{k+1} = x_k − η_k (F'(x_k)*(F(x_k) − y^δ) + λ_k G'(x_k)*(G(x_k) − y^δ))`
/// with RMS-scaled gradients. One iteration is one epoch; no randomness is used.
pub fn landweber_run(
    p: &Problem,
    data: &NoisyData,
    g: Option<&DataDrivenOp>,
    s: &Schedule,
    stop: StoppingRule,
    opts: &RunOptions,
) -> Result<Trajectory> {
    landweber_run_observed(p, data, g, s, stop, opts, |_| {})
}

pub fn landweber_run_observed(
    p: &Problem,
    data: &NoisyData,
    g: Option<&DataDrivenOp>,
    s: &Schedule,
    stop: StoppingRule,
    opts: &RunOptions,
    mut observe: impl FnMut(&StepInfo),
) -> Result<Trajectory> {
    let mut x = check_inputs(p, data, g, opts)?;
    let n = p.n();
    let last = stop.max_iterations(n, false)?;
    let y = &data.y_delta;
    let mut rec = Recorder { p, y, g, keep_iterates: opts.keep_iterates, per_epoch: 1, snapshots: Vec::new() };

    let mut sq_error = linalg::dist_sq(&x, &p.x_dag);
    rec.record(0, &x, sq_error);
    let mut best = Best { sq_error, iteration: 0, epoch: 0.0 };
    let mut row_gradients = 0u64;

    for k in 1..=last {
        let eta = s.eta(k);
        let lambda = s.lambda(k);
        let grad_f = p.op.full_gradient(&x, y)?;
        row_gradients += n as u64;
        let grad_g = match g {
            Some(g) if lambda != 0.0 => {
                row_gradients += n as u64;
                Some(g.full_gradient(&x, y)?)
            }
            _ => None,
        };
        let before = sq_error;
        let (se, sx) = match &grad_g {
            None => step_and_measure(&mut x, &p.x_dag, eta, &grad_f, None),
            Some(gg) => step_and_measure(&mut x, &p.x_dag, eta, &grad_f, Some((eta * lambda, gg))),
        };
        if diverged(se, sx) {
            return Err(Error::Diverged { iteration: k });
        }
        sq_error = se;
        if sq_error < best.sq_error {
            best = Best { sq_error, iteration: k, epoch: k as f64 };
        }
        observe(&StepInfo { iteration: k, index: None, eta, lambda, sq_error_before: before, sq_error, iterate: &x });
        if is_snapshot(opts.record, k, 1, last) {
            rec.record(k, &x, sq_error);
        }
    }

    Ok(Trajectory {
        seed: 0,
        iterate_final: x,
        snapshots: rec.snapshots,
        best,
        iterations_run: last,
        index_draws: 0,
        row_gradients,
    })
}

/// Whether the nonlinearity of `p` is the identity; several checks only apply then.
pub fn is_linear(p: &Problem) -> bool {
    p.nonlinearity() == Nonlinearity::Identity
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::ForwardOp;

    fn scalar_problem() -> Problem {
        Problem {
            name: "scalar".into(),
            op: ForwardOp::linear(Matrix::identity(1)).unwrap(),
            x_dag: vec![0.0],
            y_dag: vec![0.0],
            grid: vec![0.0],
        }
    }

    #[test]
    fn schedule_examples() {
        let s = Schedule::new(1.0, 0.5, 0.0, 0.0).unwrap();
        assert_eq!(s.eta_at(4).unwrap(), 0.5);
        assert!(s.eta_at(0).is_err());
        let c = Schedule::new(0.3, 0.0, 2.0, 0.0).unwrap();
        assert!((1..50).all(|k| c.eta_at(k).unwrap() == 0.3 && c.lambda_at(k).unwrap() == 2.0));
        let d = Schedule::new(1.0, 0.1, 0.0, 0.0).unwrap();
        assert!((d.eta_at(1024).unwrap() - 0.5).abs() < 1e-15);
        assert!(Schedule::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(Schedule::new(1.0, 1.0, 0.0, 0.0).is_err());
        assert!(Schedule::new(1.0, 0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn default_eta0_examples() {
        let mut p = scalar_problem();
        p.op = ForwardOp::linear(Matrix::identity(2)).unwrap();
        p.x_dag = vec![0.0; 2];
        assert_eq!(default_eta0(&p, 1.0).unwrap(), 0.5);
        p.op = ForwardOp::linear(Matrix::diag(&[2.0, 1.0])).unwrap();
        assert_eq!(default_eta0(&p, 2.0).unwrap(), 0.25);
        let sq = Problem {
            op: ForwardOp::new(Matrix::identity(1), Nonlinearity::Square).unwrap(),
            x_dag: vec![3.0],
            y_dag: vec![9.0],
            ..scalar_problem()
        };
        assert!((default_eta0(&sq, 1.0).unwrap() - 1.0 / 72.0).abs() < 1e-16);
        p.op = ForwardOp::linear(Matrix::zeros(2, 2)).unwrap();
        assert!(default_eta0(&p, 1.0).is_err());
    }

    #[test]
    fn scalar_contraction() {
        let p = scalar_problem();
        let data = NoisyData::exact(&p);
        let s = Schedule::constant(0.5).unwrap();
        let opts = RunOptions { x1: Some(vec![1.0]), record: Recording::PerIteration, ..Default::default() };
        let t = dsgd_run(&p, &data, None, &s, StoppingRule::APriori(3), 1, &opts).unwrap();
        assert_eq!(t.iterate_final, vec![0.125]);
        assert_eq!(t.snapshots.len(), 4);
        assert_eq!(t.best.sq_error, 0.125 * 0.125);
        assert_eq!(t.snapshots[3].epoch, 3.0);
    }

    #[test]
    fn k_star_examples() {
        assert_eq!(k_star_unchecked(1e-2, 0.25, 1.0 / 3.0, 0.0), (10000, false));
        assert_eq!(apriori_k_star(1e-2, 1.0, 0.25, 0.5, f64::INFINITY).unwrap().0, 1);
        assert_eq!(apriori_k_star(2.0, 1.0, 0.25, 0.5, 0.1).unwrap(), (1, true));
        assert!(apriori_k_star(0.0, 1.0, 0.25, 0.5, 0.1).is_err());
    }

    #[test]
    fn landweber_identity_halves_error() {
        let p = Problem {
            op: ForwardOp::linear(Matrix::identity(2)).unwrap(),
            x_dag: vec![1.0, -2.0],
            y_dag: vec![1.0, -2.0],
            grid: vec![0.0, 1.0],
            name: "id".into(),
        };
        let data = NoisyData::exact(&p);
        let s = Schedule::constant(1.0).unwrap();
        let t = landweber_run(&p, &data, None, &s, StoppingRule::MaxEpochs(5), &RunOptions::default()).unwrap();
        for w in t.snapshots.windows(2) {
            assert!((w[1].sq_error / w[0].sq_error - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn divergence_reports_iteration() {
        let p = scalar_problem();
        let mut data = NoisyData::exact(&p);
        data.y_delta = vec![1.0];
        let s = Schedule::constant(100.0).unwrap();
        let err = dsgd_run(&p, &data, None, &s, StoppingRule::MaxEpochs(100), 0, &RunOptions::default());
        assert!(matches!(err, Err(Error::Diverged { iteration }) if iteration > 1 && iteration < 20));
    }
}
