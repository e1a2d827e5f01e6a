//! Error metrics and numerical checks of the error recursions.
//!
//! Data-space norms are RMS norms and solution-space norms Euclidean, as in
//! the rest of the crate. Spectral quantities use `B_F = n⁻¹AᵀA` and
//! `B_G = n⁻¹ÃᵀÃ`, whose eigenvalues are `σ_t²/n` and `σ̃_t²/n`.

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Svd};
use crate::operators::{AssumptionConstants, DataDrivenOp, RowOperator};
use crate::problems::{NoisyData, Problem};
use crate::rng;
use crate::solvers::{self, RunOptions, Schedule, StoppingRule};

/// Largest number of index paths `enumerate_mean_error` will visit.
pub const ENUMERATION_BUDGET: f64 = 2e6;

/// Largest `samples · n` product accepted by the noise-moment estimator.
pub const MONTE_CARLO_BUDGET: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasVariance {
    /// `‖x̄ − x†‖²`.
    pub bias_sq: f64,
    /// `M⁻¹ Σ_m ‖x_m − x̄‖²`.
    pub variance: f64,
    /// `M⁻¹ Σ_m ‖x_m − x†‖²`.
    pub total: f64,
}

/// Empirical bias-variance split of the iterates recorded at `epoch`.
pub fn bias_variance(e: &Ensemble, epoch: f64, x_dag: &[f64]) -> Result<BiasVariance> {
    let j = e.epoch_index(epoch)?;
    let mean = e.mean_iterates.as_ref().ok_or(Error::EpochNotRecorded(epoch))?[j].as_slice();
    if mean.len() != x_dag.len() {
        return Err(Error::DimensionMismatch { expected: mean.len(), found: x_dag.len() });
    }
    let m = e.len() as f64;
    let mut variance = 0.0;
    let mut total = 0.0;
    for t in &e.trials {
        let x = t.snapshots[j].iterate.as_ref().ok_or(Error::EpochNotRecorded(epoch))?;
        variance += linalg::dist_sq(x, mean);
        total += linalg::dist_sq(x, x_dag);
    }
    Ok(BiasVariance { bias_sq: linalg::dist_sq(mean, x_dag), variance: variance / m, total: total / m })
}

/// `β = min(2ν(1−α), α)`: decay exponent of the mean squared error for exact data.
pub fn exact_data_exponent(nu: f64, alpha: f64) -> f64 {
    (2.0 * nu * (1.0 - alpha)).min(alpha)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `log value = intercept + slope · log k` over the
/// points with `k` inside `window` (default: the last half of the k range).
pub fn fit_decay(series: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<DecayFit> {
    let window = match window {
        Some(w) => w,
        None => {
            let k_max = series.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            (k_max / 2.0, k_max)
        }
    };
    let pts: Vec<(f64, f64)> =
        series.iter().copied().filter(|(k, _)| *k >= window.0 && *k <= window.1).collect();
    if pts.len() < 5 {
        return Err(Error::InvalidArgument(format!("need at least 5 points in the window, got {}", pts.len())));
    }
    if pts.iter().any(|(k, v)| !(*k > 0.0 && *v > 0.0)) {
        return Err(Error::InvalidArgument("decay fits need positive abscissae and values".into()));
    }
    let logs: Vec<(f64, f64)> = pts.iter().map(|(k, v)| (k.ln(), v.ln())).collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(DecayFit { slope, intercept, window, r_squared, points: pts.len() })
}

/// Spectral data for closed-form computations: `A`'s right singular basis and
/// the eigenvalues of `B_F`, `B_G` in it.
#[derive(Clone, Debug)]
pub struct SharedSpectrum {
    pub basis: Vec<Vec<f64>>,
    pub b_f: Vec<f64>,
    pub b_g: Vec<f64>,
}

impl SharedSpectrum {
    /// Diagonalizes `B_F` and expresses `B_G` in the same basis, rejecting
    /// surrogates whose Gram matrix is not diagonal there.
    pub fn new(a: &Matrix, g: Option<&DataDrivenOp>) -> Result<Self> {
        let n = a.rows();
        let svd = Svd::new(a)?;
        if svd.len() != a.cols() {
            return Err(Error::InvalidArgument("closed forms need a square forward matrix".into()));
        }
        let b_f: Vec<f64> = svd.sigma.iter().map(|s| s * s / n as f64).collect();
        let b_g = match g {
            None => vec![0.0; b_f.len()],
            Some(g) => {
                let gm = g.matrix();
                let images: Vec<Vec<f64>> = svd.right.iter().map(|v| gm.mul_vec(v)).collect();
                let scale = images.iter().map(|u| linalg::norm2_sq(u)).fold(0.0, f64::max).max(1e-300);
                for (p, u) in images.iter().enumerate() {
                    for w in images.iter().skip(p + 1) {
                        if linalg::dot(u, w).abs() > 1e-9 * scale {
                            return Err(Error::InvalidArgument(
                                "surrogate does not share the forward operator's singular basis".into(),
                            ));
                        }
                    }
                }
                images.iter().map(|u| linalg::norm2_sq(u) / n as f64).collect()
            }
        };
        Ok(Self { basis: svd.right, b_f, b_g })
    }

    fn coords(&self, v: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|phi| linalg::dot(phi, v)).collect()
    }

    fn synth(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.basis[0].len()];
        for (ct, phi) in c.iter().zip(&self.basis) {
            linalg::axpy(*ct, phi, &mut out);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct MeanRecursionReport {
    pub k_checked: usize,
    /// `E e_{k+1}` from the spectral closed form.
    pub closed_form_mean: Vec<f64>,
    /// `E e_{k+1}` averaged over every index path.
    pub enumerated_mean: Vec<f64>,
    pub max_abs_gap: f64,
}

/// Compares the closed-form mean error after `k` steps (from `x₁ = 0`) with an
/// exhaustive average over all `n^k` equally likely index paths.
pub fn enumerate_mean_error(
    p: &Problem,
    data: &NoisyData,
    g: Option<&DataDrivenOp>,
    s: &Schedule,
    k: usize,
) -> Result<MeanRecursionReport> {
    if !solvers::is_linear(p) || g.is_some_and(|g| !g.nonlinearity().is_linear()) {
        return Err(Error::NotLinear);
    }
    let n = p.n();
    p.op.check_vec(&data.y_delta)?;
    let paths = (n as f64).powi(k as i32);
    if paths > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded { paths, budget: ENUMERATION_BUDGET });
    }
    let e1: Vec<f64> = p.x_dag.iter().map(|v| -v).collect();
    let enumerated_mean = enumerate_paths(p, data, g, s, k, &e1);
    let closed_form_mean = closed_form_mean(p, data, g, s, k, &e1)?;
    let max_abs_gap = enumerated_mean.iter().zip(&closed_form_mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(MeanRecursionReport { k_checked: k, closed_form_mean, enumerated_mean, max_abs_gap })
}

fn enumerate_paths(p: &Problem, data: &NoisyData, g: Option<&DataDrivenOp>, s: &Schedule, k: usize, e1: &[f64]) -> Vec<f64> {
    fn walk(
        depth: usize,
        k: usize,
        x: &[f64],
        ctx: &(&Matrix, Option<&Matrix>, &[f64], &Schedule),
        acc: &mut [f64],
    ) {
        if depth == k {
            linalg::axpy(1.0, x, acc);
            return;
        }
        let (a, g, y, s) = *ctx;
        let step = depth as u64 + 1;
        let eta = s.eta(step);
        let lambda = s.lambda(step);
        for i in 0..a.rows() {
            let mut next = x.to_vec();
            let row = a.row(i);
            linalg::axpy(-eta * (linalg::dot(row, x) - y[i]), row, &mut next);
            if let Some(g) = g {
                let grow = g.row(i);
                linalg::axpy(-eta * lambda * (linalg::dot(grow, x) - y[i]), grow, &mut next);
            }
            walk(depth + 1, k, &next, ctx, acc);
        }
    }
    let n = p.n();
    let x1: Vec<f64> = e1.iter().zip(&p.x_dag).map(|(e, x)| e + x).collect();
    let mut acc = vec![0.0; n];
    let ctx = (p.op.matrix(), g.map(|g| g.matrix()), data.y_delta.as_slice(), s);
    walk(0, k, &x1, &ctx, &mut acc);
    let paths = (n as f64).powi(k as i32);
    acc.iter().zip(&p.x_dag).map(|(v, xd)| v / paths - xd).collect()
}

/// `Π₁ᵏ e₁ − Σ_j η_j Π_{j+1}ᵏ (K_F* v_F + λ_j K_G* v_G)` with `K* v = n⁻¹Aᵀv`,
/// `v_F = −ξ` and `v_G = G(x†) − y† − ξ`.
fn closed_form_mean(p: &Problem, data: &NoisyData, g: Option<&DataDrivenOp>, s: &Schedule, k: usize, e1: &[f64]) -> Result<Vec<f64>> {
    let n = p.n();
    let spec = SharedSpectrum::new(p.op.matrix(), g)?;
    let xi: Vec<f64> = data.y_delta.iter().zip(&p.y_dag).map(|(a, b)| a - b).collect();
    let v_f: Vec<f64> = xi.iter().map(|v| -v).collect();
    let kf_v = spec.coords(&scaled_adjoint(p.op.matrix(), &v_f, n));
    let kg_v = match g {
        Some(g) => {
            let gx = g.apply(&p.x_dag)?;
            let v_g: Vec<f64> = (0..n).map(|i| gx[i] - p.y_dag[i] - xi[i]).collect();
            spec.coords(&scaled_adjoint(g.matrix(), &v_g, n))
        }
        None => vec![0.0; n],
    };
    let factor = |i: usize, t: usize| 1.0 - s.eta(i as u64) * (spec.b_f[t] + s.lambda(i as u64) * spec.b_g[t]);
    let product = |from: usize, t: usize| (from..=k).map(|i| factor(i, t)).product::<f64>();
    let c1 = spec.coords(e1);
    let mut c: Vec<f64> = (0..n).map(|t| product(1, t) * c1[t]).collect();
    for j in 1..=k {
        let eta = s.eta(j as u64);
        let lambda = s.lambda(j as u64);
        for t in 0..n {
            c[t] -= eta * product(j + 1, t) * (kf_v[t] + lambda * kg_v[t]);
        }
    }
    Ok(spec.synth(&c))
}

fn scaled_adjoint(a: &Matrix, v: &[f64], n: usize) -> Vec<f64> {
    a.tr_mul_vec(v).into_iter().map(|x| x / n as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiBound {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `max_t b_t^s Π_{i=j+1}^k (1 − η_i(b_t + λ_i b̃_t)) ≤ (s / (e Σ_{i=j+1}^k η_i))^s`
/// for spectra `b` of `B_F` and `b̃` of `B_G` (same basis), with `0⁰ = 1`.
pub fn phi_bound_spectral(b: &[f64], b_tilde: &[f64], s: &Schedule, j: u64, k: u64, s_val: f64) -> Result<PhiBound> {
    if b.len() != b_tilde.len() {
        return Err(Error::DimensionMismatch { expected: b.len(), found: b_tilde.len() });
    }
    if j >= k {
        return Err(Error::InvalidArgument(format!("need j < k, got j = {j}, k = {k}")));
    }
    if !(s_val >= 0.0) {
        return Err(Error::InvalidArgument(format!("exponent must be nonnegative, got {s_val}")));
    }
    let mut lhs: f64 = 0.0;
    for (bt, gt) in b.iter().zip(b_tilde) {
        if *bt < 0.0 || *gt < 0.0 {
            return Err(Error::InvalidArgument("spectra must be nonnegative".into()));
        }
        let mut prod = pow0(*bt, s_val);
        for i in j + 1..=k {
            let q = s.eta(i) * (bt + s.lambda(i) * gt);
            if q > 1.0 + 1e-15 {
                return Err(Error::InvalidArgument(format!("step normalization violated at i = {i}: {q}")));
            }
            prod *= 1.0 - q;
        }
        lhs = lhs.max(prod);
    }
    let sum_eta: f64 = (j + 1..=k).map(|i| s.eta(i)).sum();
    let rhs = pow0(s_val / (std::f64::consts::E * sum_eta), s_val);
    Ok(PhiBound { lhs, rhs, pass: lhs <= rhs + 1e-12 })
}

/// [`phi_bound_spectral`] with spectra taken from `A` and a truncated-SVD surrogate.
pub fn phi_bound_check(a: &Matrix, g: Option<&DataDrivenOp>, s: &Schedule, j: u64, k: u64, s_val: f64) -> Result<PhiBound> {
    let spec = SharedSpectrum::new(a, g)?;
    phi_bound_spectral(&spec.b_f, &spec.b_g, s, j, k, s_val)
}

fn pow0(base: f64, exp: f64) -> f64 {
    if exp == 0.0 {
        1.0
    } else {
        base.powf(exp)
    }
}

/// `(c_k, d_k)` of the one-step error recursion:
/// `c_k = 2η_kλ_k max(1, L_G²)(3/2 + 2η_kλ_k L_G²)`,
/// `d_k = (1+η_F)² η_k / (2(1 − L_F²η_k − η_F))`.
pub fn recursion_coefficients(c: &AssumptionConstants, eta: f64, lambda: f64) -> Result<(f64, f64)> {
    let margin = 1.0 - c.l_f * c.l_f * eta - c.eta_f;
    if !(margin > 0.0) {
        return Err(Error::InfeasibleConstants(format!("1 − L_F²η − η_F = {margin} is not positive")));
    }
    let el = eta * lambda;
    let lg2 = c.l_g * c.l_g;
    let ck = 2.0 * el * lg2.max(1.0) * (1.5 + 2.0 * el * lg2);
    let dk = (1.0 + c.eta_f).powi(2) * eta / (2.0 * margin);
    Ok((ck, dk))
}

/// Radius `ρ` with `ρ² = e^{nΣc_j}(‖e₁‖² + (C_max+δ)² + nδ²Σd_j) − (C_max+δ)²`,
/// sums over `j = 1..=k_delta`.
pub fn rho_radius(c: &AssumptionConstants, s: &Schedule, k_delta: u64, e1_norm: f64, delta: f64, n: usize) -> Result<f64> {
    let (mut sum_c, mut sum_d) = (0.0, 0.0);
    for j in 1..=k_delta {
        let (cj, dj) = recursion_coefficients(c, s.eta(j), s.lambda(j))?;
        sum_c += cj;
        sum_d += dj;
    }
    let nf = n as f64;
    let shift = (c.c_max + delta).powi(2);
    let rho_sq = (nf * sum_c).exp() * (e1_norm * e1_norm + shift + nf * delta * delta * sum_d) - shift;
    Ok(rho_sq.max(0.0).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathwiseReport {
    pub iterations_checked: u64,
    pub violations: u64,
    /// Smallest `rhs − lhs` relative to `max(rhs, 1)`.
    pub worst_relative_slack: f64,
    pub max_sq_error: f64,
}

/// Runs the stochastic solver and checks
/// `‖e_{k+1}‖² ≤ (1 + nc_k)‖e_k‖² + nc_k(C_max+δ)² + nd_kδ²` at every iteration,
/// allowing a `1e-12` relative rounding margin.
#[allow(clippy::too_many_arguments)]
pub fn check_pathwise_recursion(
    p: &Problem,
    data: &NoisyData,
    g: Option<&DataDrivenOp>,
    s: &Schedule,
    stop: StoppingRule,
    seed: u64,
    c: &AssumptionConstants,
) -> Result<PathwiseReport> {
    let nf = p.n() as f64;
    let delta = data.delta;
    let shift = (c.c_max + delta).powi(2);
    let mut report = PathwiseReport { iterations_checked: 0, violations: 0, worst_relative_slack: f64::INFINITY, max_sq_error: 0.0 };
    let mut failure = None;
    let opts = RunOptions::default();
    solvers::dsgd_run_observed(p, data, g, s, stop, seed, &opts, |step| {
        let lambda = if g.is_some() { step.lambda } else { 0.0 };
        match recursion_coefficients(c, step.eta, lambda) {
            Ok((ck, dk)) => {
                let rhs = (1.0 + nf * ck) * step.sq_error_before + nf * ck * shift + nf * dk * delta * delta;
                let slack = (rhs - step.sq_error) / rhs.max(1.0);
                report.iterations_checked += 1;
                report.worst_relative_slack = report.worst_relative_slack.min(slack);
                report.max_sq_error = report.max_sq_error.max(step.sq_error);
                if slack < -1e-12 {
                    report.violations += 1;
                }
            }
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityEntry {
    pub delta0: f64,
    /// `‖x_K^δ − x_K‖`, or `None` when the noisy run diverged.
    pub distance: Option<f64>,
}

/// Runs the stochastic solver on one fixed index path (`path_seed`) with data
/// `y† + δ₀‖y†‖_∞ξ` for each `δ₀` (one fixed draw `ξ` from `noise_seed`) and
/// reports the distance of the terminal iterate to the exact-data run.
#[allow(clippy::too_many_arguments)]
pub fn stability_sweep(
    p: &Problem,
    g: Option<&DataDrivenOp>,
    s: &Schedule,
    path_seed: u64,
    noise_seed: u64,
    epochs: u64,
    delta0_list: &[f64],
) -> Result<Vec<StabilityEntry>> {
    if delta0_list.windows(2).any(|w| w[1] > w[0]) || delta0_list.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::InvalidArgument("noise levels must be nonnegative and sorted decreasing".into()));
    }
    let stop = StoppingRule::MaxEpochs(epochs);
    let opts = RunOptions { record: solvers::Recording::EveryEpochs(epochs), ..Default::default() };
    let exact = NoisyData::exact(p);
    let reference = solvers::dsgd_run(p, &exact, g, s, stop, path_seed, &opts)?.iterate_final;
    let scale = linalg::max_abs(&p.y_dag);
    let mut rng = rng::seeded(noise_seed);
    let xi = rng::normal_vec(&mut rng, p.n());
    delta0_list
        .iter()
        .map(|&d0| {
            let distance = if d0 == 0.0 {
                Some(0.0)
            } else {
                let noise = xi.iter().map(|v| d0 * scale * v).collect();
                let data = NoisyData::from_noise(p, noise, d0, noise_seed)?;
                match solvers::dsgd_run(p, &data, g, s, stop, path_seed, &opts) {
                    Ok(t) => Some(linalg::dist_sq(&t.iterate_final, &reference).sqrt()),
                    Err(Error::Diverged { .. }) => None,
                    Err(e) => return Err(e),
                }
            };
            Ok(StabilityEntry { delta0: d0, distance })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseMoments {
    pub samples: usize,
    /// Monte Carlo mean of `‖N_{k,1}‖²` and its standard error.
    pub n1_sq: f64,
    pub n1_se: f64,
    pub n2_sq: f64,
    pub n2_se: f64,
    /// Exact expectations over the uniform index, for reference.
    pub n1_sq_exact: f64,
    pub n2_sq_exact: f64,
    /// Squared right-hand sides `n(1 + c_R²λ)²‖B_F^½ e‖²` and `n(c_Rλ C_max + (c_Rλ + 1)δ)²`.
    pub n1_bound_sq: f64,
    pub n2_bound_sq: f64,
}

impl NoiseMoments {
    /// `estimate ≤ bound² + 3 SE` for both terms.
    pub fn within_bounds(&self) -> bool {
        self.n1_sq <= self.n1_bound_sq + 3.0 * self.n1_se && self.n2_sq <= self.n2_bound_sq + 3.0 * self.n2_se
    }
}

/// Iteration noise terms at a fixed iterate `x` for a linear problem:
///
/// `N₁ = K_F e − (a_i·e)φ_i + λR(K_G e − (ã_i·e)φ_i)`,
/// `N₂ = E v_F − v_{F,i}φ_i + λR(E v_G − v_{G,i}φ_i)`,
///
/// with `φ_i = √n e_i`, `K_H = n^{-1/2}H`, `v_{F,i} = −ξ_i`,
/// `v_{G,i} = G_i(x†) − y†_i − ξ_i` and `R` the projector onto the surrogate's
/// left singular vectors (so `c_R = 1`).
#[allow(clippy::too_many_arguments)]
pub fn noise_moments_at(
    p: &Problem,
    data: &NoisyData,
    g: Option<&DataDrivenOp>,
    lambda: f64,
    x: &[f64],
    c_max: f64,
    samples: usize,
    seed: u64,
) -> Result<NoiseMoments> {
    if !solvers::is_linear(p) || g.is_some_and(|g| !g.nonlinearity().is_linear()) {
        return Err(Error::NotLinear);
    }
    let n = p.n();
    p.op.check_vec(x)?;
    if samples < 2 {
        return Err(Error::InvalidArgument("at least two samples are required".into()));
    }
    if samples as f64 * n as f64 > MONTE_CARLO_BUDGET {
        return Err(Error::BudgetExceeded { paths: samples as f64 * n as f64, budget: MONTE_CARLO_BUDGET });
    }
    let nf = n as f64;
    let root = nf.sqrt();
    let lambda = if g.is_some() { lambda } else { 0.0 };
    let e = linalg::sub(x, &p.x_dag);
    let xi = linalg::sub(&data.y_delta, &p.y_dag);
    let ae = p.op.matrix().mul_vec(&e);
    let (ge, v_g) = match g {
        Some(g) => {
            let gx = g.apply(&p.x_dag)?;
            (g.matrix().mul_vec(&e), (0..n).map(|i| gx[i] - p.y_dag[i] - xi[i]).collect())
        }
        None => (vec![0.0; n], vec![0.0; n]),
    };
    let v_f: Vec<f64> = xi.iter().map(|v| -v).collect();
    let project = |v: &[f64]| -> Vec<f64> {
        match g {
            Some(g) => {
                let mut out = vec![0.0; n];
                for u in g.left_vectors() {
                    linalg::axpy(linalg::dot(u, v), u, &mut out);
                }
                out
            }
            None => vec![0.0; n],
        }
    };
    // Means over the index of (H e)_i φ_i and v_i φ_i are n^{-1/2}(He) and n^{-1/2}v.
    let mean_f1: Vec<f64> = ae.iter().map(|v| v / root).collect();
    let mean_g1: Vec<f64> = ge.iter().map(|v| v / root).collect();
    let mean_f2: Vec<f64> = v_f.iter().map(|v| v / root).collect();
    let mean_g2: Vec<f64> = v_g.iter().map(|v| v / root).collect();
    let terms = |i: usize| -> (f64, f64) {
        let spike = |mean: &[f64], value: f64| -> Vec<f64> {
            let mut d = mean.to_vec();
            d[i] -= value * root;
            d
        };
        let combine = |f: Vec<f64>, gpart: Vec<f64>| -> f64 {
            let rg = project(&gpart);
            f.iter().zip(&rg).map(|(a, b)| (a + lambda * b).powi(2)).sum()
        };
        let n1 = combine(spike(&mean_f1, ae[i]), spike(&mean_g1, ge[i]));
        let n2 = combine(spike(&mean_f2, v_f[i]), spike(&mean_g2, v_g[i]));
        (n1, n2)
    };
    let mut rng = rng::seeded(seed);
    let (mut s1, mut q1, mut s2, mut q2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        let (a, b) = terms(rng::draw_index(&mut rng, n));
        s1 += a;
        q1 += a * a;
        s2 += b;
        q2 += b * b;
    }
    let m = samples as f64;
    let se = |s: f64, q: f64| ((q / m - (s / m).powi(2)).max(0.0) * m / (m - 1.0) / m).sqrt();
    let (mut e1, mut e2) = (0.0, 0.0);
    for i in 0..n {
        let (a, b) = terms(i);
        e1 += a;
        e2 += b;
    }
    let c_r = if g.is_some() { 1.0 } else { 0.0 };
    let bf_half_sq = linalg::norm2_sq(&ae) / nf;
    let delta = linalg::rms(&xi);
    Ok(NoiseMoments {
        samples,
        n1_sq: s1 / m,
        n1_se: se(s1, q1),
        n2_sq: s2 / m,
        n2_se: se(s2, q2),
        n1_sq_exact: e1 / nf,
        n2_sq_exact: e2 / nf,
        n1_bound_sq: nf * (1.0 + c_r * c_r * lambda).powi(2) * bf_half_sq,
        n2_bound_sq: nf * (c_r * lambda * c_max + (c_r * lambda + 1.0) * delta).powi(2),
    })
}

/// [`noise_moments_at`] at the iterate `x_k` of a stochastic run (`k ≥ 1`, `x₁ = 0`)
/// with the regularization weight `λ_k`.
#[allow(clippy::too_many_arguments)]
pub fn stochastic_noise_moments(
    p: &Problem,
    data: &NoisyData,
    g: Option<&DataDrivenOp>,
    s: &Schedule,
    k: u64,
    samples: usize,
    seed: u64,
) -> Result<NoiseMoments> {
    let x = if k <= 1 {
        vec![0.0; p.n()]
    } else {
        solvers::dsgd_run(p, data, g, s, StoppingRule::APriori(k - 1), seed, &RunOptions::default())?.iterate_final
    };
    let c_max = match g {
        Some(g) => linalg::rms(&linalg::sub(&g.apply(&p.x_dag)?, &p.y_dag)),
        None => 0.0,
    };
    noise_moments_at(p, data, g, s.lambda_at(k.max(1))?, &x, c_max, samples, seed.wrapping_add(1))
}
