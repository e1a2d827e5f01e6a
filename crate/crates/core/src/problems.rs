//! Benchmark problems (phillips, gravity, shaw) discretized by midpoint
//! quadrature, their squared variants, source-condition fixtures and the
//! Gaussian noise model.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Svd};
use crate::operators::{ForwardOp, Nonlinearity, RowOperator};
use crate::rng;

pub const DEFAULT_GRAVITY_DEPTH: f64 = 0.25;

/// A discretized forward system with its reference solution and exact data.
#[derive(Clone, Debug)]
pub struct Problem {
    pub name: String,
    pub op: ForwardOp,
    pub x_dag: Vec<f64>,
    /// Unscaled exact data, `y†_i = F_i(x†)`.
    pub y_dag: Vec<f64>,
    pub grid: Vec<f64>,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.op.dim()
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.op.nonlinearity()
    }

    /// Replaces `x†` and recomputes `y† = F(x†)`.
    pub fn with_solution(&self, x_dag: Vec<f64>) -> Result<Self> {
        let y_dag = self.op.apply(&x_dag)?;
        Ok(Self { x_dag, y_dag, ..self.clone() })
    }

    fn assemble(name: &str, a: Matrix, grid: Vec<f64>, mut x: Vec<f64>) -> Result<Self> {
        let scale = linalg::max_abs(&x);
        if scale > 0.0 {
            x.iter_mut().for_each(|v| *v /= scale);
        }
        let op = ForwardOp::linear(a)?;
        let y_dag = op.apply(&x)?;
        Ok(Self { name: name.to_string(), op, x_dag: x, y_dag, grid })
    }
}

fn check_size(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("problem size must be at least 2, got {n}")));
    }
    Ok(())
}

/// Shaw kernel `(cos s + cos t)² (sin u / u)²` with `u = π(sin s + sin t)`.
pub fn shaw_kernel(s: f64, t: f64) -> f64 {
    let c = s.cos() + t.cos();
    let u = PI * (s.sin() + t.sin());
    let sinc = if u.abs() < 1e-8 { 1.0 } else { u.sin() / u };
    c * c * sinc * sinc
}

/// Severely ill-posed one-dimensional image restoration on `[-π/2, π/2]`.
pub fn make_shaw(n: usize) -> Result<Problem> {
    check_size(n)?;
    let h = PI / n as f64;
    let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h - PI / 2.0).collect();
    let a = Matrix::from_fn(n, n, |i, j| h * shaw_kernel(grid[i], grid[j]));
    let x = grid
        .iter()
        .map(|t| 2.0 * (-6.0 * (t - 0.8).powi(2)).exp() + (-2.0 * (t + 0.5).powi(2)).exp())
        .collect();
    Problem::assemble("shaw", a, grid, x)
}

/// Gravity kernel `d (d² + (s − t)²)^{-3/2}`.
pub fn gravity_kernel(s: f64, t: f64, depth: f64) -> f64 {
    depth * (depth * depth + (s - t).powi(2)).powf(-1.5)
}

/// Moderately ill-posed one-dimensional gravity surveying on `[0, 1]`.
pub fn make_gravity(n: usize, depth: f64) -> Result<Problem> {
    check_size(n)?;
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::InvalidArgument(format!("gravity depth must be positive, got {depth}")));
    }
    let h = 1.0 / n as f64;
    let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
    let a = Matrix::from_fn(n, n, |i, j| h * gravity_kernel(grid[i], grid[j], depth));
    let x = grid.iter().map(|t| (PI * t).sin() + 0.5 * (2.0 * PI * t).sin()).collect();
    Problem::assemble("gravity", a, grid, x)
}

/// Phillips cosine bump `1 + cos(πx/3)` on `|x| < 3`, zero elsewhere.
pub fn phillips_bump(x: f64) -> f64 {
    if x.abs() < 3.0 {
        1.0 + (PI * x / 3.0).cos()
    } else {
        0.0
    }
}

/// Mildly ill-posed convolution problem on `[-6, 6]`.
pub fn make_phillips(n: usize) -> Result<Problem> {
    check_size(n)?;
    let h = 12.0 / n as f64;
    let grid: Vec<f64> = (0..n).map(|i| -6.0 + (i as f64 + 0.5) * h).collect();
    let a = Matrix::from_fn(n, n, |i, j| h * phillips_bump(grid[i] - grid[j]));
    let x = grid.iter().map(|t| phillips_bump(*t)).collect();
    Problem::assemble("phillips", a, grid, x)
}

/// Same matrix and solution with `F(x) = (Ax)²` component-wise.
pub fn squared_variant(p: &Problem) -> Result<Problem> {
    if p.nonlinearity() != Nonlinearity::Identity {
        return Err(Error::InvalidArgument(format!("{} is already nonlinear", p.name)));
    }
    let op = p.op.with_nonlinearity(Nonlinearity::Square);
    let y_dag = p.y_dag.iter().map(|v| v * v).collect();
    Ok(Problem {
        name: format!("squared-{}", p.name),
        op,
        x_dag: p.x_dag.clone(),
        y_dag,
        grid: p.grid.clone(),
    })
}

/// Look up a generator by name, including the `squared-` prefix.
pub fn by_name(name: &str, n: usize, gravity_depth: f64) -> Result<Problem> {
    if let Some(base) = name.strip_prefix("squared-") {
        return squared_variant(&by_name(base, n, gravity_depth)?);
    }
    match name {
        "shaw" => make_shaw(n),
        "gravity" => make_gravity(n, gravity_depth),
        "phillips" => make_phillips(n),
        other => Err(Error::InvalidArgument(format!("unknown problem {other:?}"))),
    }
}

/// Noisy observation `y^δ = y† + δ₀‖y†‖_∞ ξ`.
#[derive(Clone, Debug)]
pub struct NoisyData {
    pub y_delta: Vec<f64>,
    /// The perturbation `y^δ − y†`, kept so noise can be rescaled exactly.
    pub noise: Vec<f64>,
    pub delta0: f64,
    /// RMS norm of the perturbation.
    pub delta: f64,
    pub seed: u64,
}

impl NoisyData {
    pub fn exact(p: &Problem) -> Self {
        Self { y_delta: p.y_dag.clone(), noise: vec![0.0; p.n()], delta0: 0.0, delta: 0.0, seed: 0 }
    }

    /// Data built from an explicit perturbation.
    pub fn from_noise(p: &Problem, noise: Vec<f64>, delta0: f64, seed: u64) -> Result<Self> {
        p.op.check_vec(&noise)?;
        let y_delta = p.y_dag.iter().zip(&noise).map(|(y, e)| y + e).collect();
        let delta = linalg::rms(&noise);
        Ok(Self { y_delta, noise, delta0, delta, seed })
    }
}

pub fn add_noise(p: &Problem, delta0: f64, seed: u64) -> Result<NoisyData> {
    if !(delta0 >= 0.0 && delta0.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta0 must be nonnegative, got {delta0}")));
    }
    if delta0 == 0.0 {
        return Ok(NoisyData { seed, ..NoisyData::exact(p) });
    }
    let scale = delta0 * linalg::max_abs(&p.y_dag);
    let mut rng = rng::seeded(seed);
    let noise = (0..p.n()).map(|_| scale * rng::standard_normal(&mut rng)).collect();
    NoisyData::from_noise(p, noise, delta0, seed)
}

/// `x† = x₁ + B_F^ν w` with `B_F = n⁻¹AᵀA`.
#[derive(Clone, Debug)]
pub struct SourceFixture {
    pub nu: f64,
    pub w: Vec<f64>,
    pub x1: Vec<f64>,
    pub x_dag: Vec<f64>,
    pub w_norm: f64,
}

impl SourceFixture {
    /// The problem with its solution replaced by this fixture's `x†`.
    pub fn apply_to(&self, p: &Problem) -> Result<Problem> {
        p.with_solution(self.x_dag.clone())
    }
}

pub fn make_source_fixture(op: &ForwardOp, nu: f64, w: Vec<f64>, x1: Vec<f64>) -> Result<SourceFixture> {
    if !op.nonlinearity().is_linear() {
        return Err(Error::NotLinear);
    }
    if !(nu > 0.0 && nu < 0.5) {
        return Err(Error::InvalidArgument(format!("nu must lie in (0, 1/2), got {nu}")));
    }
    op.check_vec(&w)?;
    op.check_vec(&x1)?;
    let svd = Svd::new(op.matrix())?;
    let x_dag = x1.iter().zip(spectral_power(&svd, op.dim(), nu, &w)).map(|(a, b)| a + b).collect();
    let w_norm = linalg::norm2(&w);
    Ok(SourceFixture { nu, w, x1, x_dag, w_norm })
}

/// `Σ_j (σ_j²/n)^p ⟨φ_j, v⟩ φ_j`, skipping null directions for negative powers.
pub fn spectral_power(svd: &Svd, n: usize, p: f64, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (s, phi) in svd.sigma.iter().zip(&svd.right) {
        let b = s * s / n as f64;
        if b == 0.0 || (p < 0.0 && *s <= 1e-10) {
            continue;
        }
        linalg::axpy(b.powf(p) * linalg::dot(phi, v), phi, &mut out);
    }
    out
}
