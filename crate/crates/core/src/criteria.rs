//! Criterion functions whose maximizer is the Z-estimator: the integrated
//! M-criterion, GMM with a weighting matrix frozen at `x̃_i`, and the
//! exponentially tilted empirical likelihood (ETEL).
//!
//! Domain or convergence failures surface as `None` from [`criterion_eval`];
//! the sampler treats that as `−∞`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::{moment_sum, RowContext};
use crate::linalg::{checked_inverse, condition_number, dot, MAX_CONDITION};
use crate::quadrature::integrate16;
use crate::weight::Integral;

/// `Σ_j ∫_0^{xᵀx̃_j} (A_ij − t) h(x̃_iᵀx̃_j, t) dt`, using closed forms where
/// the weight provides them and 16-point Gauss–Legendre otherwise.
pub fn m_criterion(ctx: &RowContext, x: &DVector<f64>) -> Result<f64> {
    m_criterion_impl(ctx, x, false)
}

/// [`m_criterion`] with quadrature forced for every term.
pub fn m_criterion_quadrature(ctx: &RowContext, x: &DVector<f64>) -> Result<f64> {
    m_criterion_impl(ctx, x, true)
}

fn m_criterion_impl(ctx: &RowContext, x: &DVector<f64>, force_quadrature: bool) -> Result<f64> {
    if x.len() != ctx.d() {
        return Err(Error::invalid("dimension mismatch in M-criterion"));
    }
    let weight = ctx.weight();
    let emb = ctx.embedding();
    let mut total = 0.0;
    for j in 0..ctx.n() {
        let a = ctx.a_row()[j];
        let s = ctx.s(j);
        let u = dot(x.as_slice(), emb.row(j));
        let undefined = || Error::WeightDomain {
            weight: weight.name().to_string(),
            j,
            s,
            t: u,
        };
        let closed = if force_quadrature {
            Integral::Unavailable
        } else {
            weight.integral(a, s, u)
        };
        total += match closed {
            Integral::Value(v) => v,
            Integral::Undefined => return Err(undefined()),
            Integral::Unavailable => {
                if !weight.path_in_domain(s, u) {
                    return Err(undefined());
                }
                integrate16(0.0, u, |t| weight.eval(s, t).map(|h| (a - t) * h))
                    .ok_or_else(undefined)?
            }
        };
    }
    Ok(total)
}

/// Inverse of `(1/n) Σ_j g̃_ij(x̃_i) g̃_ij(x̃_i)ᵀ`, computed once per row.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmWeight(pub DMatrix<f64>);

pub fn gmm_weight_matrix(ctx: &RowContext) -> Result<GmmWeight> {
    let terms = ctx.moment_terms(&ctx.embedding_row())?;
    let omega = terms.transpose() * &terms / ctx.n() as f64;
    let inv = checked_inverse(&omega, "GMM weighting matrix")?;
    Ok(GmmWeight((&inv + inv.transpose()) * 0.5))
}

/// `−(n/2) ḡ(x)ᵀ W ḡ(x)`.
pub fn gmm_criterion(ctx: &RowContext, x: &DVector<f64>, cache: &GmmWeight) -> Result<f64> {
    let g = moment_sum(ctx, x)?;
    Ok(-0.5 * ctx.n() as f64 * (g.transpose() * &cache.0 * &g)[(0, 0)])
}

/// Newton settings for the ETEL dual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtelSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub max_halvings: usize,
}

impl Default for EtelSettings {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-8,
            max_halvings: 40,
        }
    }
}

/// Solution of the ETEL dual at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct EtelSolution {
    pub lambda: DVector<f64>,
    pub probs: Vec<f64>,
    /// `log p_ij`, kept separately so far tails do not underflow.
    pub log_probs: Vec<f64>,
    pub converged: bool,
    /// `(1/n) Σ_j exp(λᵀ g̃_ij)` at the returned `λ`.
    pub dual_value: f64,
    pub iterations: usize,
}

/// Scratch space for one tilt evaluation: `lin_j = λᵀg_j`, the shift
/// `m = max_j lin_j` and `w_j = exp(lin_j − m)`.
#[derive(Clone)]
struct Tilt {
    lin: Vec<f64>,
    w: Vec<f64>,
    shift: f64,
    /// `log((1/n) Σ_j exp(lin_j))`.
    log_obj: f64,
}

impl Tilt {
    fn new(n: usize) -> Self {
        Self {
            lin: vec![0.0; n],
            w: vec![0.0; n],
            shift: 0.0,
            log_obj: 0.0,
        }
    }

    /// `rows` is the n × d moment matrix in row-major order.
    fn compute(&mut self, rows: &[f64], d: usize, lambda: &[f64]) {
        let n = self.lin.len();
        if lambda.iter().all(|&l| l == 0.0) {
            self.lin.fill(0.0);
            self.w.fill(1.0);
            self.shift = 0.0;
            self.log_obj = 0.0;
            return;
        }
        let mut shift = f64::NEG_INFINITY;
        if d == 1 {
            for (l, g) in self.lin.iter_mut().zip(rows) {
                *l = g * lambda[0];
                shift = shift.max(*l);
            }
        } else {
            for (l, g) in self.lin.iter_mut().zip(rows.chunks_exact(d)) {
                *l = dot(g, lambda);
                shift = shift.max(*l);
            }
        }
        let mut sum = 0.0;
        for (w, l) in self.w.iter_mut().zip(&self.lin) {
            *w = (l - shift).exp();
            sum += *w;
        }
        self.shift = shift;
        self.log_obj = shift + (sum / n as f64).ln();
    }

    /// `Σ_j p_j g_j` and `Σ_j p_j g_j g_jᵀ` (row-major d × d).
    fn moments(&self, rows: &[f64], d: usize, grad: &mut [f64], hess: &mut [f64]) {
        if d == 1 {
            let (mut wsum, mut g1, mut g2) = (0.0, 0.0, 0.0);
            for (w, g) in self.w.iter().zip(rows) {
                let wg = w * g;
                wsum += w;
                g1 += wg;
                g2 += wg * g;
            }
            grad[0] = g1 / wsum;
            hess[0] = g2 / wsum;
            return;
        }
        grad.fill(0.0);
        hess.fill(0.0);
        let mut wsum = 0.0;
        for (&wj, g) in self.w.iter().zip(rows.chunks_exact(d)) {
            wsum += wj;
            for a in 0..d {
                let wa = wj * g[a];
                grad[a] += wa;
                for b in a..d {
                    hess[a * d + b] += wa * g[b];
                }
            }
        }
        for a in 0..d {
            grad[a] /= wsum;
            for b in a..d {
                hess[a * d + b] /= wsum;
                hess[b * d + a] = hess[a * d + b];
            }
        }
    }
}

/// Solves `hess · step = −grad`, refusing ill-conditioned systems.
fn newton_step(grad: &[f64], hess: &[f64], d: usize) -> Option<Vec<f64>> {
    if d == 1 {
        return (hess[0] > 0.0 && hess[0].is_finite()).then(|| vec![-grad[0] / hess[0]]);
    }
    let h = DMatrix::from_row_slice(d, d, hess);
    if !(condition_number(&h) <= MAX_CONDITION) {
        return None;
    }
    let step = h.lu().solve(&DVector::from_iterator(d, grad.iter().map(|g| -g)))?;
    Some(step.as_slice().to_vec())
}

/// Minimizes `(1/n) Σ_j exp(λᵀg̃_ij(x))` by damped Newton.
///
/// Convergence is declared when the tilted moment mean `Σ_j p_ij g̃_ij` has
/// norm at most the tolerance; that mean is the gradient divided by the dual
/// value (≤ 1), so the gradient criterion holds as well.
pub fn etel_dual(ctx: &RowContext, x: &DVector<f64>) -> Result<EtelSolution> {
    etel_dual_with(ctx, x, &EtelSettings::default())
}

pub fn etel_dual_with(ctx: &RowContext, x: &DVector<f64>, settings: &EtelSettings) -> Result<EtelSolution> {
    let g = ctx.moment_terms(x)?;
    Ok(solve_etel_dual(&g, settings))
}

/// The dual problem for an explicit n × d moment matrix.
pub fn solve_etel_dual(g: &DMatrix<f64>, settings: &EtelSettings) -> EtelSolution {
    let (n, d) = g.shape();
    let rows: Vec<f64> = (0..n).flat_map(|j| (0..d).map(move |k| g[(j, k)])).collect();
    solve_etel_rows(&rows, n, d, settings)
}

fn solve_etel_rows(rows: &[f64], n: usize, d: usize, settings: &EtelSettings) -> EtelSolution {
    let mut lambda = vec![0.0; d];
    let mut cur = Tilt::new(n);
    cur.compute(rows, d, &lambda);
    let mut cand = cur.clone();
    let (mut grad, mut hess) = (vec![0.0; d], vec![0.0; d * d]);
    let (mut grad_c, mut hess_c) = (vec![0.0; d], vec![0.0; d * d]);
    let mut cand_lambda = vec![0.0; d];
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut converged = false;
    let mut iterations = 0;

    // Zero outside the hull of the moments in one dimension: no minimizer.
    let hull_ok = d != 1 || {
        let pos = rows.iter().any(|&v| v > 0.0);
        let neg = rows.iter().any(|&v| v < 0.0);
        pos && neg || !pos && !neg
    };

    if hull_ok {
        cur.moments(rows, d, &mut grad, &mut hess);
        for iter in 0..=settings.max_iterations {
            iterations = iter;
            let gnorm = norm(&grad);
            if gnorm <= settings.tolerance {
                converged = true;
                break;
            }
            if iter == settings.max_iterations {
                break;
            }
            let Some(step) = newton_step(&grad, &hess, d) else { break };
            let mut scale = 1.0;
            let mut moved = false;
            for _ in 0..=settings.max_halvings {
                for k in 0..d {
                    cand_lambda[k] = lambda[k] + scale * step[k];
                }
                cand.compute(rows, d, &cand_lambda);
                let (oc, obj) = (cand.log_obj, cur.log_obj);
                if oc.is_finite() {
                    cand.moments(rows, d, &mut grad_c, &mut hess_c);
                    // Near the optimum the objective moves by less than its
                    // rounding error; the tilted mean still measures progress.
                    let flat = oc <= obj + 8.0 * f64::EPSILON * obj.abs().max(1.0);
                    if oc < obj || flat && norm(&grad_c) < gnorm {
                        std::mem::swap(&mut lambda, &mut cand_lambda);
                        std::mem::swap(&mut cur, &mut cand);
                        std::mem::swap(&mut grad, &mut grad_c);
                        std::mem::swap(&mut hess, &mut hess_c);
                        moved = true;
                        break;
                    }
                }
                scale *= 0.5;
            }
            if !moved {
                break;
            }
        }
    }

    let wsum: f64 = cur.w.iter().sum();
    let log_wsum = wsum.ln();
    let log_probs: Vec<f64> = cur.lin.iter().map(|l| l - cur.shift - log_wsum).collect();
    let probs = cur.w.iter().map(|w| w / wsum).collect();
    EtelSolution {
        lambda: DVector::from_vec(lambda),
        probs,
        log_probs,
        converged,
        dual_value: cur.log_obj.exp(),
        iterations,
    }
}

/// `Σ_j log p_ij(x)`.
pub fn etel_criterion(ctx: &RowContext, x: &DVector<f64>) -> Result<f64> {
    let sol = etel_dual(ctx, x)?;
    if !sol.converged {
        return Err(Error::NoConvergence {
            context: "ETEL dual",
            iterations: sol.iterations,
            residual: f64::NAN,
        });
    }
    Ok(sol.log_probs.iter().sum())
}

/// Criterion names, as used in configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CriterionKind {
    M,
    Gmm,
    Etel,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 3] = [CriterionKind::M, CriterionKind::Gmm, CriterionKind::Etel];

    pub fn label(self) -> &'static str {
        match self {
            CriterionKind::M => "m",
            CriterionKind::Gmm => "gmm",
            CriterionKind::Etel => "etel",
        }
    }
}

/// A criterion ready to evaluate on one row, carrying any per-row cache.
#[derive(Debug, Clone)]
pub enum Criterion {
    M,
    Gmm(GmmWeight),
    Etel(EtelSettings),
}

impl Criterion {
    /// Builds the per-row state (the GMM weighting matrix) for `kind`.
    pub fn prepare(kind: CriterionKind, ctx: &RowContext) -> Result<Self> {
        Ok(match kind {
            CriterionKind::M => Criterion::M,
            CriterionKind::Gmm => Criterion::Gmm(gmm_weight_matrix(ctx)?),
            CriterionKind::Etel => Criterion::Etel(EtelSettings::default()),
        })
    }

    pub fn kind(&self) -> CriterionKind {
        match self {
            Criterion::M => CriterionKind::M,
            Criterion::Gmm(_) => CriterionKind::Gmm,
            Criterion::Etel(_) => CriterionKind::Etel,
        }
    }

    /// The criterion value, or `None` where it is undefined.
    pub fn eval(&self, ctx: &RowContext, x: &DVector<f64>) -> Option<f64> {
        let value = match self {
            Criterion::M => m_criterion(ctx, x).ok()?,
            Criterion::Gmm(cache) => gmm_criterion(ctx, x, cache).ok()?,
            Criterion::Etel(settings) => {
                let sol = etel_dual_with(ctx, x, settings).ok()?;
                if !sol.converged {
                    return None;
                }
                sol.log_probs.iter().sum()
            }
        };
        value.is_finite().then_some(value)
    }
}

/// Dispatches to the evaluator for `kind`; failures become `None`.
pub fn criterion_eval(kind: CriterionKind, ctx: &RowContext, x: &DVector<f64>) -> Option<f64> {
    Criterion::prepare(kind, ctx).ok()?.eval(ctx, x)
}
