//! Forward operators `F_i(x) = f(⟨a_i, x⟩)`, their truncated-SVD surrogates,
//! and numerical diagnostics for the structural assumptions the convergence
//! theory relies on (gradient bounds, tangential cone, range invariance,
//! shared singular basis).
//!
//! Rows are stored unscaled. Row indices are zero-based.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Svd};
use crate::rng;

/// Component-wise outer function `f` in `F_i(x) = f(⟨a_i, x⟩)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Nonlinearity {
    Identity,
    Square,
}

impl Nonlinearity {
    #[inline]
    pub fn value(self, t: f64) -> f64 {
        match self {
            Nonlinearity::Identity => t,
            Nonlinearity::Square => t * t,
        }
    }

    #[inline]
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Nonlinearity::Identity => 1.0,
            Nonlinearity::Square => 2.0 * t,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Nonlinearity::Identity => 0,
            Nonlinearity::Square => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Nonlinearity::Identity),
            1 => Some(Nonlinearity::Square),
            _ => None,
        }
    }

    pub fn is_linear(self) -> bool {
        self == Nonlinearity::Identity
    }
}

/// Row-wise access shared by the true model `F` and the surrogate `G`.
///
/// All provided methods work on unscaled rows; `full_gradient` carries the
/// `1/n` factor of the RMS-scaled stacking.
pub trait RowOperator: Send + Sync {
    fn matrix(&self) -> &Matrix;
    fn nonlinearity(&self) -> Nonlinearity;

    fn dim(&self) -> usize {
        self.matrix().rows()
    }

    fn check_vec(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: v.len() });
        }
        Ok(())
    }

    fn check_row(&self, i: usize) -> Result<()> {
        if i >= self.dim() {
            return Err(Error::IndexOutOfRange { index: i, len: self.dim() });
        }
        Ok(())
    }

    /// `F(x)` component-wise (unscaled).
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_vec(x)?;
        let f = self.nonlinearity();
        Ok(self.matrix().mul_vec(x).into_iter().map(|t| f.value(t)).collect())
    }

    /// `F_i(x)`.
    fn row_value(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_row(i)?;
        self.check_vec(x)?;
        Ok(self.nonlinearity().value(linalg::dot(self.matrix().row(i), x)))
    }

    /// `F_i'(x)* r = f'(⟨a_i, x⟩) · r · a_i`.
    fn row_gradient_step(&self, i: usize, x: &[f64], r: f64) -> Result<Vec<f64>> {
        self.check_row(i)?;
        self.check_vec(x)?;
        let a = self.matrix().row(i);
        let c = self.nonlinearity().derivative(linalg::dot(a, x)) * r;
        Ok(a.iter().map(|v| c * v).collect())
    }

    /// `F'(x)*(F(x) − y)` under the RMS scaling, i.e. `n⁻¹ Σ_i F_i'(x)*(F_i(x) − y_i)`.
    fn full_gradient(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_vec(x)?;
        self.check_vec(y)?;
        let n = self.dim();
        let f = self.nonlinearity();
        let a = self.matrix();
        let mut g = vec![0.0; a.cols()];
        for i in 0..n {
            let t = linalg::dot(a.row(i), x);
            let c = f.derivative(t) * (f.value(t) - y[i]);
            if c != 0.0 {
                linalg::axpy(c, a.row(i), &mut g);
            }
        }
        let inv = 1.0 / n as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        Ok(g)
    }

    /// Unscaled Jacobian rows `F_i'(x) = f'(⟨a_i, x⟩) a_iᵀ`.
    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.check_vec(x)?;
        let a = self.matrix();
        let f = self.nonlinearity();
        let scales: Vec<f64> = a.mul_vec(x).into_iter().map(|t| f.derivative(t)).collect();
        Ok(Matrix::from_fn(a.rows(), a.cols(), |i, j| scales[i] * a.get(i, j)))
    }

    /// `max_i ‖a_i‖`.
    fn max_row_norm(&self) -> f64 {
        let a = self.matrix();
        (0..a.rows()).map(|i| linalg::norm2(a.row(i))).fold(0.0, f64::max)
    }
}

/// The true forward model: a square matrix wrapped by a component-wise nonlinearity.
#[derive(Clone, Debug)]
pub struct ForwardOp {
    a: Matrix,
    nonlinearity: Nonlinearity,
}

impl ForwardOp {
    pub fn new(a: Matrix, nonlinearity: Nonlinearity) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::InvalidArgument(format!(
                "forward matrix must be square, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if a.rows() == 0 {
            return Err(Error::InvalidArgument("empty forward matrix".into()));
        }
        if !a.is_finite() {
            return Err(Error::NonFinite("forward matrix"));
        }
        Ok(Self { a, nonlinearity })
    }

    pub fn linear(a: Matrix) -> Result<Self> {
        Self::new(a, Nonlinearity::Identity)
    }

    pub fn with_nonlinearity(&self, nonlinearity: Nonlinearity) -> Self {
        Self { a: self.a.clone(), nonlinearity }
    }
}

impl RowOperator for ForwardOp {
    fn matrix(&self) -> &Matrix {
        &self.a
    }

    fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }
}

/// Rank-`N` truncated-SVD surrogate `G = f ∘ Ã_N` with `Ã_N = Σ_{j<N} σ_j ψ_j φ_jᵀ`.
///
/// The induced matrix is kept densely so that row operations cost `O(n)`.
#[derive(Clone, Debug)]
pub struct DataDrivenOp {
    sigma: Vec<f64>,
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
    nonlinearity: Nonlinearity,
    induced: Matrix,
}

const ORTHONORMAL_TOL: f64 = 1e-8;

impl DataDrivenOp {
    /// Assemble from explicit singular triplets. Rejects non-orthonormal bases and
    /// singular values that are not positive and nonincreasing.
    pub fn from_parts(
        sigma: Vec<f64>,
        left: Vec<Vec<f64>>,
        right: Vec<Vec<f64>>,
        nonlinearity: Nonlinearity,
    ) -> Result<Self> {
        let rank = sigma.len();
        if rank == 0 || left.len() != rank || right.len() != rank {
            return Err(Error::InvalidArgument("rank must be positive and match the basis sizes".into()));
        }
        let n = right[0].len();
        if left.iter().chain(&right).any(|v| v.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: 0 });
        }
        if rank > n {
            return Err(Error::InvalidArgument(format!("rank {rank} exceeds dimension {n}")));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) || sigma.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument("singular values must be positive and nonincreasing".into()));
        }
        for basis in [&left, &right] {
            let gap = orthonormality_gap(basis);
            if gap > ORTHONORMAL_TOL {
                return Err(Error::InvalidArgument(format!("basis not orthonormal (gap {gap:e})")));
            }
        }
        let svd = Svd { sigma, left, right };
        let induced = svd.reconstruct(rank, n, n);
        let Svd { sigma, left, right } = svd;
        Ok(Self { sigma, left, right, nonlinearity, induced })
    }

    /// Keep the leading `rank` triplets of an existing decomposition.
    pub fn from_svd(svd: &Svd, rank: usize, nonlinearity: Nonlinearity) -> Result<Self> {
        let n = svd.right.first().map_or(0, Vec::len);
        if rank == 0 || rank > n {
            return Err(Error::InvalidArgument(format!("rank {rank} outside 1..={n}")));
        }
        let kept = svd.sigma.iter().take(rank).filter(|s| **s > 0.0).count();
        if kept < rank {
            return Err(Error::InvalidArgument(format!(
                "rank {rank} requested but only {kept} positive singular values"
            )));
        }
        let induced = svd.reconstruct(rank, n, n);
        Ok(Self {
            sigma: svd.sigma[..rank].to_vec(),
            left: svd.left[..rank].to_vec(),
            right: svd.right[..rank].to_vec(),
            nonlinearity,
            induced,
        })
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn left_vectors(&self) -> &[Vec<f64>] {
        &self.left
    }

    pub fn right_vectors(&self) -> &[Vec<f64>] {
        &self.right
    }
}

impl RowOperator for DataDrivenOp {
    fn matrix(&self) -> &Matrix {
        &self.induced
    }

    fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }
}

/// Best rank-`rank` approximation of `a`, wrapped with `nonlinearity`.
pub fn truncate_svd(a: &Matrix, rank: usize, nonlinearity: Nonlinearity) -> Result<DataDrivenOp> {
    if rank == 0 || rank > a.rows().min(a.cols()) {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} outside 1..={}",
            a.rows().min(a.cols())
        )));
    }
    let svd = Svd::new(a)?;
    DataDrivenOp::from_svd(&svd, rank, nonlinearity)
}

/// Surrogate for `op` sharing its nonlinearity.
pub fn surrogate_for(op: &ForwardOp, rank: usize) -> Result<DataDrivenOp> {
    truncate_svd(op.matrix(), rank, op.nonlinearity())
}

/// `max_{j,k} |⟨v_j, v_k⟩ − δ_jk|`.
pub fn orthonormality_gap(basis: &[Vec<f64>]) -> f64 {
    let mut gap: f64 = 0.0;
    for (j, u) in basis.iter().enumerate() {
        for (k, v) in basis.iter().enumerate().skip(j) {
            let target = if j == k { 1.0 } else { 0.0 };
            gap = gap.max((linalg::dot(u, v) - target).abs());
        }
    }
    gap
}

/// Outcome of the shared-singular-basis check.
#[derive(Clone, Debug)]
pub struct SharedBasisReport {
    /// `max_j σ̃_j / σ_{m(j)}` where `m(j)` is the best-matching singular vector of `F`.
    pub c_r: f64,
    /// Largest angle (radians) between a right vector of `G` and its best match.
    pub max_angle: f64,
    pub angles: Vec<f64>,
    /// Index of the matched right singular vector of `F` for each vector of `G`.
    pub matches: Vec<usize>,
    /// `max_angle < 1e-8` and `c_r ≤ 1 + 1e-10`.
    pub pass: bool,
    /// `false` when the check ran on linearizations of a nonlinear pair, where
    /// exact agreement is not expected and `pass` is informational only.
    pub exact: bool,
}

/// Angle between unit vectors computed as `atan2(‖u − ⟨u,v⟩v‖, |⟨u,v⟩|)`,
/// sign-insensitive and accurate near zero.
pub fn unsigned_angle(u: &[f64], v: &[f64]) -> f64 {
    let c = linalg::dot(u, v);
    let perp: f64 = u.iter().zip(v).map(|(a, b)| (a - c * b).powi(2)).sum::<f64>().sqrt();
    perp.atan2(c.abs())
}

/// Checks that each right vector of `g` coincides (up to sign) with a right
/// singular vector of `f` and measures `c_R = max σ̃_j/σ_j`.
///
/// For linear operators the comparison uses `A` and the stored triplets of `g`.
/// For `Square` it compares `K_F = 2 diag(A x) A` with `K_G = 2 diag(Ã x) Ã`
/// at the reference point `x_ref`, which is then required.
pub fn verify_assumption_v(
    f: &ForwardOp,
    g: &DataDrivenOp,
    x_ref: Option<&[f64]>,
) -> Result<SharedBasisReport> {
    f.check_vec(&g.right[0])?;
    let (f_svd, g_sigma, g_right, exact) = match f.nonlinearity() {
        Nonlinearity::Identity => (Svd::new(f.matrix())?, g.sigma.clone(), g.right.clone(), true),
        Nonlinearity::Square => {
            let x = x_ref.ok_or_else(|| {
                Error::InvalidArgument("nonlinear shared-basis check needs a reference point".into())
            })?;
            let kf = Svd::new(&f.jacobian(x)?)?;
            let kg = Svd::new(&g.jacobian(x)?)?;
            let r = g.rank().min(kg.len());
            (kf, kg.sigma[..r].to_vec(), kg.right[..r].to_vec(), false)
        }
    };
    let mut angles = Vec::with_capacity(g_right.len());
    let mut matches = Vec::with_capacity(g_right.len());
    let mut c_r: f64 = 0.0;
    for (j, v) in g_right.iter().enumerate() {
        let (best, angle) = f_svd
            .right
            .iter()
            .enumerate()
            .map(|(k, u)| (k, unsigned_angle(v, u)))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("nonempty basis");
        angles.push(angle);
        matches.push(best);
        let s = f_svd.sigma[best];
        let ratio = if s > 0.0 { g_sigma[j] / s } else { f64::INFINITY };
        c_r = c_r.max(ratio);
    }
    let max_angle = angles.iter().copied().fold(0.0, f64::max);
    let pass = max_angle < 1e-8 && c_r <= 1.0 + 1e-10;
    Ok(SharedBasisReport { c_r, max_angle, angles, matches, pass, exact })
}

/// Tangential-cone ratio `|F_i(x) − F_i(x̃) − F_i'(x̃)(x − x̃)| / |F_i(x) − F_i(x̃)|`
/// for one row; `None` when the denominator vanishes.
pub fn cone_ratio(op: &impl RowOperator, i: usize, x: &[f64], x_tilde: &[f64]) -> Result<Option<f64>> {
    op.check_row(i)?;
    op.check_vec(x)?;
    op.check_vec(x_tilde)?;
    let a = op.matrix().row(i);
    Ok(cone_ratio_from_images(op.nonlinearity(), linalg::dot(a, x), linalg::dot(a, x_tilde)))
}

fn cone_ratio_from_images(f: Nonlinearity, p: f64, q: f64) -> Option<f64> {
    let den = (f.value(p) - f.value(q)).abs();
    if den == 0.0 {
        return None;
    }
    let num = (f.value(p) - f.value(q) - f.derivative(q) * (p - q)).abs();
    Some(num / den)
}

/// Sampled estimate of the tangential-cone constant `η_F` on the ball of
/// `radius` around `center`: the largest cone ratio over all ordered pairs of
/// `samples` uniform points and all rows. Linear operators return 0.
pub fn estimate_cone_constant(
    op: &impl RowOperator,
    center: &[f64],
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    op.check_vec(center)?;
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument("at least two samples are required".into()));
    }
    if op.nonlinearity().is_linear() {
        return Ok(0.0);
    }
    let mut rng = rng::seeded(seed);
    let images: Vec<Vec<f64>> = (0..samples)
        .map(|_| op.matrix().mul_vec(&rng::uniform_in_ball(&mut rng, center, radius)))
        .collect();
    let f = op.nonlinearity();
    let mut best: Option<f64> = None;
    for (s, p) in images.iter().enumerate() {
        for (t, q) in images.iter().enumerate() {
            if s == t {
                continue;
            }
            for (pi, qi) in p.iter().zip(q) {
                if let Some(r) = cone_ratio_from_images(f, *pi, *qi) {
                    best = Some(best.map_or(r, |b| b.max(r)));
                }
            }
        }
    }
    best.ok_or(Error::UndefinedEstimate)
}

/// `‖R_{F,x} − I‖ = max_i |(Ax)_i/(Ax_ref)_i − 1|` for the squared model, where
/// `F_i'(x) = R^i_{F,x} F_i'(x_ref)`. Identically zero for linear operators.
pub fn range_invariance_gap(op: &impl RowOperator, x: &[f64], x_ref: &[f64]) -> Result<f64> {
    op.check_vec(x)?;
    op.check_vec(x_ref)?;
    if op.nonlinearity().is_linear() {
        return Ok(0.0);
    }
    let a = op.matrix();
    let mut gap: f64 = 0.0;
    for i in 0..a.rows() {
        let r = linalg::dot(a.row(i), x_ref);
        if r == 0.0 {
            return Err(Error::SingularReference { index: i });
        }
        gap = gap.max((linalg::dot(a.row(i), x) / r - 1.0).abs());
    }
    Ok(gap)
}

/// Measured or user-supplied constants of the structural assumptions.
#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionConstants {
    /// `max_i sup_ball ‖F_i'(x)‖`.
    pub l_f: f64,
    /// `max_i sup_ball ‖G_i'(x)‖`.
    pub l_g: f64,
    /// Tangential-cone constant, in `[0, 1)` when the condition holds.
    pub eta_f: f64,
    pub c_f: f64,
    pub c_g: f64,
    pub c_r: f64,
    /// Bounds on the RMS learning error `‖G(x*) − y†‖`.
    pub c_min: f64,
    pub c_max: f64,
    /// Stochastic range-invariance exponent; there is no recipe to measure it.
    pub theta: Option<f64>,
}

/// Sampling controls for [`AssumptionConstants::measure`].
#[derive(Clone, Copy, Debug)]
pub struct MeasureOptions {
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self { radius: 1e-2, samples: 8, seed: 0 }
    }
}

impl AssumptionConstants {
    /// Measures the constants around `x_dag`. Linear models get `η_F = c_F = c_G = 0`
    /// without sampling; without a surrogate `L_G = c_R = 0` and `C_min = C_max = ‖y†‖`.
    pub fn measure(
        f: &ForwardOp,
        g: Option<&DataDrivenOp>,
        x_dag: &[f64],
        y_dag: &[f64],
        opts: MeasureOptions,
    ) -> Result<Self> {
        f.check_vec(x_dag)?;
        f.check_vec(y_dag)?;
        let l_f = gradient_bound(f, x_dag, opts.radius);
        let linear = f.nonlinearity().is_linear();
        let eta_f = if linear {
            0.0
        } else {
            estimate_cone_constant(f, x_dag, opts.radius, opts.samples, opts.seed)?
        };
        let c_f = if linear { 0.0 } else { range_invariance_slope(f, x_dag, opts)? };
        let (l_g, c_g, c_r, learning) = match g {
            Some(g) => {
                let c_g = if g.nonlinearity().is_linear() {
                    0.0
                } else {
                    range_invariance_slope(g, x_dag, opts)?
                };
                let report = verify_assumption_v(f, g, Some(x_dag))?;
                let residual = linalg::sub(&g.apply(x_dag)?, y_dag);
                (gradient_bound(g, x_dag, opts.radius), c_g, report.c_r, linalg::rms(&residual))
            }
            None => (0.0, 0.0, 0.0, linalg::rms(y_dag)),
        };
        Ok(Self { l_f, l_g, eta_f, c_f, c_g, c_r, c_min: learning, c_max: learning, theta: None })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.c_min >= 0.0
            && self.c_min <= self.c_max
            && self.l_f >= 0.0
            && self.l_g >= 0.0
            && self.c_r >= 0.0
            && (0.0..1.0).contains(&self.eta_f);
        if ok {
            Ok(())
        } else {
            Err(Error::InfeasibleConstants(format!("{self:?}")))
        }
    }
}

/// `max_i sup_{‖x − c‖ ≤ r} ‖F_i'(x)‖`, exact for both nonlinearities.
fn gradient_bound(op: &impl RowOperator, center: &[f64], radius: f64) -> f64 {
    let a = op.matrix();
    (0..a.rows())
        .map(|i| {
            let row = a.row(i);
            let norm = linalg::norm2(row);
            match op.nonlinearity() {
                Nonlinearity::Identity => norm,
                Nonlinearity::Square => 2.0 * (linalg::dot(row, center).abs() + norm * radius) * norm,
            }
        })
        .fold(0.0, f64::max)
}

/// Sampled `max ‖R_{x} − I‖ / ‖x − x_ref‖` over the ball.
fn range_invariance_slope(op: &impl RowOperator, x_ref: &[f64], opts: MeasureOptions) -> Result<f64> {
    let mut rng = rng::seeded(opts.seed ^ 0x5eed);
    let mut slope: f64 = 0.0;
    for _ in 0..opts.samples.max(1) {
        let x = rng::uniform_in_ball(&mut rng, x_ref, opts.radius);
        let d = linalg::dist_sq(&x, x_ref).sqrt();
        if d > 0.0 {
            slope = slope.max(range_invariance_gap(op, &x, x_ref)? / d);
        }
    }
    Ok(slope)
}
