//! Ground truth and synthetic generators for low-rank signal-plus-noise matrices.
//!
//! Generators fill the upper triangle (diagonal included) in row-major order
//! and mirror it, so outputs are exactly symmetric and a given stream always
//! yields the same matrix.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Latent factor matrix `X0` (n × d) and signal scale `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub x0: DMatrix<f64>,
    pub rho: f64,
}

impl GroundTruth {
    pub fn new(x0: DMatrix<f64>, rho: f64) -> Result<Self> {
        if x0.nrows() == 0 || x0.ncols() == 0 || x0.ncols() > x0.nrows() {
            return Err(Error::invalid(format!(
                "latent matrix must satisfy n >= d >= 1, got {}x{}",
                x0.nrows(),
                x0.ncols()
            )));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::invalid(format!("rho must lie in (0, 1], got {rho}")));
        }
        Ok(Self { x0, rho })
    }

    pub fn n(&self) -> usize {
        self.x0.nrows()
    }

    pub fn d(&self) -> usize {
        self.x0.ncols()
    }

    /// `rho * X0 X0ᵀ`.
    pub fn signal(&self) -> DMatrix<f64> {
        (&self.x0 * self.x0.transpose()) * self.rho
    }

    /// The estimand `rho^{1/2} X0`.
    pub fn scaled_factor(&self) -> DMatrix<f64> {
        &self.x0 * self.rho.sqrt()
    }

    fn inner(&self, i: usize, j: usize) -> f64 {
        self.rho * self.x0.row(i).dot(&self.x0.row(j))
    }
}

/// A symmetric n × n data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix {
    a: DMatrix<f64>,
}

impl ObservedMatrix {
    /// Wraps `a`, rejecting anything that is not square and exactly symmetric.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::invalid(format!(
                "data matrix must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let asym = max_asymmetry(&a);
        if asym > 0.0 {
            return Err(Error::NotSymmetric {
                max_asymmetry: asym,
            });
        }
        Ok(Self { a })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.a
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.a.row(i).iter().copied().collect()
    }
}

pub(crate) fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            let diff = (a[(i, j)] - a[(j, i)]).abs();
            if diff.is_nan() {
                return f64::INFINITY;
            }
            worst = worst.max(diff);
        }
    }
    worst
}

/// Scenario I latent positions: `f(t) = 0.1 + 0.8 sin(pi t)` on an equidistant grid of [0, 1].
pub fn generate_latent_curve(n: usize) -> Result<GroundTruth> {
    if n < 2 {
        return Err(Error::invalid(format!("curve needs n >= 2, got {n}")));
    }
    let step = 1.0 / (n - 1) as f64;
    let x0 = DMatrix::from_fn(n, 1, |i, _| {
        let t = if i == n - 1 { 1.0 } else { i as f64 * step };
        curve(t)
    });
    Ok(GroundTruth { x0, rho: 1.0 })
}

fn curve(t: f64) -> f64 {
    0.1 + 0.8 * (std::f64::consts::PI * t).sin()
}

/// Random dot product graph: `A_ij ~ Bernoulli(rho x_iᵀ x_j)` for `i <= j`, mirrored.
pub fn sample_rdpg<R: Rng + ?Sized>(truth: &GroundTruth, rng: &mut R) -> Result<ObservedMatrix> {
    let n = truth.n();
    let mut probs = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let p = truth.inner(i, j);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::ProbabilityOutOfRange { i, j, prob: p });
            }
            probs[(i, j)] = p;
        }
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let u: f64 = rng.gen();
            let v = if u < probs[(i, j)] { 1.0 } else { 0.0 };
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok(ObservedMatrix { a })
}

/// Symmetric noisy matrix completion: `A_ij = z_ij (X0 X0ᵀ + E)_ij / p` with
/// `E_ij ~ N(0, sigma^2)` and `z_ij ~ Bernoulli(p)` on the upper triangle.
pub fn sample_matrix_completion<R: Rng + ?Sized>(
    truth: &GroundTruth,
    sigma: f64,
    p: f64,
    rng: &mut R,
) -> Result<ObservedMatrix> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("observation probability must lie in (0, 1], got {p}")));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise s.d. must be finite and >= 0, got {sigma}")));
    }
    let n = truth.n();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let z: f64 = rng.sample(StandardNormal);
            let full = truth.inner(i, j) + sigma * z;
            let u: f64 = rng.gen();
            let v = if u < p { full / p } else { 0.0 };
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok(ObservedMatrix { a })
}

/// Adds symmetric Gaussian noise with s.d. `v` to every upper-triangle entry.
pub fn contaminate<R: Rng + ?Sized>(
    observed: &ObservedMatrix,
    v: f64,
    rng: &mut R,
) -> Result<ObservedMatrix> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::invalid(format!("contamination s.d. must be finite and >= 0, got {v}")));
    }
    if v == 0.0 {
        return Ok(observed.clone());
    }
    let n = observed.n();
    let mut a = observed.a.clone();
    for i in 0..n {
        for j in i..n {
            let z: f64 = rng.sample(StandardNormal);
            let val = a[(i, j)] + v * z;
            a[(i, j)] = val;
            a[(j, i)] = val;
        }
    }
    Ok(ObservedMatrix { a })
}
