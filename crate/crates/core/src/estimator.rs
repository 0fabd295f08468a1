//! Eigenvector-assisted moment functions and the per-row Z-estimator.
//!
//! For row `i` the moment function is
//! `g̃_ij(x) = (A_ij − xᵀx̃_j) h(x̃_iᵀx̃_j, xᵀx̃_j) x̃_j` and the estimator solves
//! `(1/n) Σ_j g̃_ij(x) = 0` over the ball `Θ = {‖x‖ ≤ r}`. The signal scale is
//! absorbed into the parameter, so the target is `rho^{1/2} x_{0i}`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{checked_inverse, checked_solve, dot, project_ball};
use crate::model::ObservedMatrix;
use crate::spectral::{spectral_embed, Embedding};
use crate::weight::WeightFunction;

const RESIDUAL_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 100;
const MAX_HALVINGS: usize = 30;

/// Embeds `a` in `d` dimensions and builds one context per row, all sharing
/// the embedding.
pub fn row_contexts(
    a: &ObservedMatrix,
    d: usize,
    weight: &WeightFunction,
    theta_radius: f64,
) -> Result<Vec<RowContext>> {
    let emb = Arc::new(spectral_embed(a, d)?);
    (0..a.n())
        .map(|i| RowContext::new(i, a.row(i), emb.clone(), weight.clone(), theta_radius))
        .collect()
}

/// Everything needed to evaluate moments and criteria for one row.
#[derive(Debug, Clone)]
pub struct RowContext {
    i: usize,
    a_row: Vec<f64>,
    embedding: Arc<Embedding>,
    weight: WeightFunction,
    theta_radius: f64,
    /// `x̃_iᵀx̃_j` for every `j`.
    s: Vec<f64>,
}

impl RowContext {
    pub fn new(
        i: usize,
        a_row: Vec<f64>,
        embedding: Arc<Embedding>,
        weight: WeightFunction,
        theta_radius: f64,
    ) -> Result<Self> {
        let n = embedding.n();
        if a_row.len() != n {
            return Err(Error::invalid(format!(
                "row has length {} but the embedding has {n} rows",
                a_row.len()
            )));
        }
        if i >= n {
            return Err(Error::invalid(format!("row index {i} out of range for n = {n}")));
        }
        if !(theta_radius > 0.0) {
            return Err(Error::invalid(format!("parameter radius must be positive, got {theta_radius}")));
        }
        let xi = embedding.row(i);
        let s = (0..n).map(|j| dot(xi, embedding.row(j))).collect();
        let ctx = Self {
            i,
            a_row,
            embedding,
            weight,
            theta_radius,
            s,
        };
        if ctx.embedding_row().norm() > theta_radius {
            log::warn!(
                "embedding row {i} (norm {:.4}) lies outside the parameter ball of radius {theta_radius}",
                ctx.embedding_row().norm()
            );
        }
        Ok(ctx)
    }

    pub fn row_index(&self) -> usize {
        self.i
    }

    pub fn n(&self) -> usize {
        self.a_row.len()
    }

    pub fn d(&self) -> usize {
        self.embedding.d()
    }

    pub fn a_row(&self) -> &[f64] {
        &self.a_row
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn weight(&self) -> &WeightFunction {
        &self.weight
    }

    pub fn theta_radius(&self) -> f64 {
        self.theta_radius
    }

    pub fn in_theta(&self, x: &DVector<f64>) -> bool {
        x.norm() <= self.theta_radius
    }

    /// `x̃_i`.
    pub fn embedding_row(&self) -> DVector<f64> {
        self.embedding.row_vector(self.i)
    }

    /// `x̃_iᵀx̃_j`.
    #[inline]
    pub fn s(&self, j: usize) -> f64 {
        self.s[j]
    }

    fn domain_error(&self, j: usize, t: f64) -> Error {
        Error::WeightDomain {
            weight: self.weight.name().to_string(),
            j,
            s: self.s[j],
            t,
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.d() {
            return Err(Error::invalid(format!(
                "point has dimension {} but the embedding has rank {}",
                x.len(),
                self.d()
            )));
        }
        Ok(())
    }

    /// Individual moments `g̃_ij(x)` as an n × d matrix (row j is `g̃_ij(x)ᵀ`).
    pub fn moment_terms(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let (n, d) = (self.n(), self.d());
        let mut out = DMatrix::zeros(n, d);
        for j in 0..n {
            let xj = self.embedding.row(j);
            let t = dot(x.as_slice(), xj);
            let h = self
                .weight
                .eval(self.s[j], t)
                .ok_or_else(|| self.domain_error(j, t))?;
            let c = (self.a_row[j] - t) * h;
            for k in 0..d {
                out[(j, k)] = c * xj[k];
            }
        }
        Ok(out)
    }
}

/// `(1/n) Σ_j g̃_ij(x)`.
pub fn moment_sum(ctx: &RowContext, x: &DVector<f64>) -> Result<DVector<f64>> {
    ctx.check_dim(x)?;
    let (n, d) = (ctx.n(), ctx.d());
    let mut acc = vec![0.0; d];
    for j in 0..n {
        let xj = ctx.embedding.row(j);
        let t = dot(x.as_slice(), xj);
        let h = ctx
            .weight
            .eval(ctx.s[j], t)
            .ok_or_else(|| ctx.domain_error(j, t))?;
        let c = (ctx.a_row[j] - t) * h;
        for (a, v) in acc.iter_mut().zip(xj) {
            *a += c * v;
        }
    }
    Ok(DVector::from_vec(acc) / n as f64)
}

/// Analytic Jacobian of [`moment_sum`]:
/// `(1/n) Σ_j [(A_ij − xᵀx̃_j) ∂h/∂t − h] x̃_j x̃_jᵀ`.
pub fn moment_jacobian(ctx: &RowContext, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    ctx.check_dim(x)?;
    let (n, d) = (ctx.n(), ctx.d());
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..n {
        let xj = ctx.embedding.row(j);
        let t = dot(x.as_slice(), xj);
        let (h, dh) = ctx
            .weight
            .eval_with_dt(ctx.s[j], t)
            .ok_or_else(|| ctx.domain_error(j, t))?;
        let c = (ctx.a_row[j] - t) * dh - h;
        for a in 0..d {
            for b in 0..d {
                jac[(a, b)] += c * xj[a] * xj[b];
            }
        }
    }
    Ok(jac / n as f64)
}

/// Root of the estimating equation for one row.
#[derive(Debug, Clone, PartialEq)]
pub struct ZEstimate {
    pub xhat: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Damped Newton from `x̃_i`, halving steps until the residual norm drops and
/// projecting radially onto `Θ` whenever a step leaves it.
pub fn z_estimate(ctx: &RowContext) -> Result<ZEstimate> {
    let mut x = ctx.embedding_row();
    project_ball(&mut x, ctx.theta_radius);
    let mut g = moment_sum(ctx, &x)?;
    let mut resid = g.norm();
    for iter in 0..MAX_NEWTON {
        if resid <= RESIDUAL_TOL {
            return Ok(ZEstimate {
                xhat: x,
                iterations: iter,
                residual: resid,
            });
        }
        let jac = moment_jacobian(ctx, &x)?;
        let step = checked_solve(&jac, &(-&g), "Newton step")?;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut cand = &x + &step * scale;
            project_ball(&mut cand, ctx.theta_radius);
            if let Ok(gc) = moment_sum(ctx, &cand) {
                let rc = gc.norm();
                if rc < resid {
                    accepted = Some((cand, gc, rc));
                    break;
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((cand, gc, rc)) => {
                x = cand;
                g = gc;
                resid = rc;
            }
            None => {
                return Err(Error::NoConvergence {
                    context: "Z-estimator (step halving stalled)",
                    iterations: iter + 1,
                    residual: resid,
                })
            }
        }
    }
    if resid <= RESIDUAL_TOL {
        return Ok(ZEstimate {
            xhat: x,
            iterations: MAX_NEWTON,
            residual: resid,
        });
    }
    Err(Error::NoConvergence {
        context: "Z-estimator",
        iterations: MAX_NEWTON,
        residual: resid,
    })
}

/// Plug-in sandwich pieces at the Z-estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCovariance {
    /// Jacobian `Ĝ` of the moment mean.
    pub g: DMatrix<f64>,
    /// `Ω̂ = (1/n) Σ_j g̃_ij g̃_ijᵀ`.
    pub omega: DMatrix<f64>,
    /// `Ĝ⁻¹ Ω̂ Ĝ⁻ᵀ / n`.
    pub cov: DMatrix<f64>,
}

pub fn sandwich_covariance(ctx: &RowContext, xhat: &DVector<f64>) -> Result<SandwichCovariance> {
    let n = ctx.n() as f64;
    let g = moment_jacobian(ctx, xhat)?;
    let terms = ctx.moment_terms(xhat)?;
    let omega = terms.transpose() * &terms / n;
    checked_inverse(&omega, "moment second-moment matrix")?;
    let ginv = checked_inverse(&g, "moment Jacobian")?;
    let mut cov = &ginv * &omega * ginv.transpose() / n;
    cov = (&cov + cov.transpose()) * 0.5;
    Ok(SandwichCovariance { g, omega, cov })
}
