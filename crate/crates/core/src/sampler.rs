//! Random-walk Metropolis–Hastings over each row's generalized posterior,
//! with posterior summaries and credible sets.
//!
//! The prior is uniform on the ball `Θ`, so the acceptance ratio depends only
//! on the criterion. Proposals outside `Θ` or where the criterion is
//! undefined are rejected.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::gamma::gamma_lr;

use crate::criteria::{Criterion, CriterionKind};
use crate::error::{Error, Result};
use crate::estimator::{row_contexts, RowContext};
use crate::linalg::checked_inverse;
use crate::model::ObservedMatrix;
use crate::rng;
use crate::weight::WeightFunction;

/// Acceptance rate targeted by burn-in adaptation.
pub const TARGET_ACCEPTANCE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub burnin: usize,
    pub samples: usize,
    /// Random-walk standard deviation per coordinate; the starting value
    /// when `adapt` is set.
    pub proposal_scale: f64,
    pub seed: u64,
    pub chains: usize,
    pub adapt: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            burnin: 1000,
            samples: 2000,
            proposal_scale: 0.05,
            seed: 0,
            chains: 1,
            adapt: true,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 {
            return Err(Error::invalid("samples must be at least 1"));
        }
        if !(self.proposal_scale > 0.0 && self.proposal_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "proposal_scale must be positive, got {}",
                self.proposal_scale
            )));
        }
        if self.chains < 1 {
            return Err(Error::invalid("chains must be at least 1"));
        }
        Ok(())
    }
}

/// Post-burn-in output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RowPosterior {
    pub row: usize,
    pub chain_id: usize,
    pub burnin: usize,
    /// samples × d.
    pub draws: DMatrix<f64>,
    /// Fraction of accepted proposals after burn-in.
    pub acceptance_rate: f64,
    /// Criterion value at each stored draw.
    pub criterion_trace: Vec<f64>,
    /// Proposal scale in force after burn-in.
    pub proposal_scale: f64,
}

impl RowPosterior {
    pub fn d(&self) -> usize {
        self.draws.ncols()
    }

    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.nrows() == 0
    }
}

/// Runs one random-walk chain from `start` on `log_target`.
///
/// `log_target` returns `None` where the target is undefined. During burn-in
/// with `adapt` set, `log σ` moves by `(t+1)^{-0.6} (α_t − 0.3)` where `α_t`
/// is the acceptance probability of the current proposal.
pub fn metropolis<R, F>(
    start: &DVector<f64>,
    log_target: F,
    prior_radius: f64,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<(DMatrix<f64>, Vec<f64>, f64, f64)>
where
    R: Rng + ?Sized,
    F: Fn(&DVector<f64>) -> Option<f64>,
{
    cfg.validate()?;
    let d = start.len();
    let mut x = start.clone();
    let mut lx = log_target(&x).ok_or(Error::UndefinedStart { row: 0 })?;
    let mut log_scale = cfg.proposal_scale.ln();
    let mut draws = DMatrix::zeros(cfg.samples, d);
    let mut trace = Vec::with_capacity(cfg.samples);
    let mut accepted = 0usize;

    for t in 0..cfg.burnin + cfg.samples {
        let scale = log_scale.exp();
        let proposal = DVector::from_fn(d, |k, _| x[k] + scale * rng.sample::<f64, _>(StandardNormal));
        let log_alpha = if proposal.norm() <= prior_radius {
            log_target(&proposal).map_or(f64::NEG_INFINITY, |lp| lp - lx)
        } else {
            f64::NEG_INFINITY
        };
        let u: f64 = rng.gen();
        let accept = u.ln() < log_alpha;
        if accept {
            x = proposal;
            lx += log_alpha;
            lx = log_target(&x).unwrap_or(lx);
        }
        if t < cfg.burnin {
            if cfg.adapt {
                let alpha = log_alpha.min(0.0).exp();
                log_scale += (t as f64 + 1.0).powf(-0.6) * (alpha - TARGET_ACCEPTANCE);
            }
        } else {
            let k = t - cfg.burnin;
            draws.row_mut(k).copy_from(&x.transpose());
            trace.push(lx);
            accepted += accept as usize;
        }
    }
    Ok((draws, trace, accepted as f64 / cfg.samples as f64, log_scale.exp()))
}

/// One chain of the generalized posterior for the row in `ctx`, started at
/// `x̃_i` (pulled radially onto `Θ` if it lies outside).
pub fn mh_row<R: Rng + ?Sized>(
    ctx: &RowContext,
    criterion: &Criterion,
    prior_radius: f64,
    cfg: &ChainConfig,
    chain_id: usize,
    rng: &mut R,
) -> Result<RowPosterior> {
    let mut start = ctx.embedding_row();
    let norm = start.norm();
    if norm > prior_radius {
        start *= prior_radius / norm;
    }
    let row = ctx.row_index();
    let (draws, criterion_trace, acceptance_rate, proposal_scale) =
        metropolis(&start, |x| criterion.eval(ctx, x), prior_radius, cfg, rng).map_err(|e| match e {
            Error::UndefinedStart { .. } => Error::UndefinedStart { row },
            other => other.in_row(row),
        })?;
    Ok(RowPosterior {
        row,
        chain_id,
        burnin: cfg.burnin,
        draws,
        acceptance_rate,
        criterion_trace,
        proposal_scale,
    })
}

/// All chains for every context, each on the stream derived from
/// `(seed, row, chain)`. Element `k` holds the chains for `ctxs[k]` or that
/// row's error.
pub fn sample_rows(ctxs: &[RowContext], kind: CriterionKind, cfg: &ChainConfig) -> Vec<Result<Vec<RowPosterior>>> {
    ctxs.par_iter()
        .map(|ctx| {
            let row = ctx.row_index();
            let criterion = Criterion::prepare(kind, ctx).map_err(|e| e.in_row(row))?;
            (0..cfg.chains)
                .map(|c| {
                    let mut rng = rng::derived(cfg.seed, &[row as u64, c as u64]);
                    mh_row(ctx, &criterion, ctx.theta_radius(), cfg, c, &mut rng)
                })
                .collect()
        })
        .collect()
}

/// Embeds `a`, then samples every row.
pub fn run_all_rows(
    a: &ObservedMatrix,
    d: usize,
    kind: CriterionKind,
    weight: &WeightFunction,
    theta_radius: f64,
    cfg: &ChainConfig,
) -> Result<Vec<Result<Vec<RowPosterior>>>> {
    cfg.validate()?;
    let ctxs = row_contexts(a, d, weight, theta_radius)?;
    Ok(sample_rows(&ctxs, kind, cfg))
}

/// Stacks the draws of several chains.
pub fn pooled_draws(chains: &[RowPosterior]) -> Result<DMatrix<f64>> {
    let first = chains.first().ok_or(Error::TooFewDraws { needed: 1, got: 0 })?;
    let d = first.d();
    if chains.iter().any(|c| c.d() != d) {
        return Err(Error::invalid("chains differ in dimension"));
    }
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut out = DMatrix::zeros(total, d);
    let mut at = 0;
    for c in chains {
        out.rows_mut(at, c.len()).copy_from(&c.draws);
        at += c.len();
    }
    Ok(out)
}

pub fn posterior_mean(post: &RowPosterior) -> Result<DVector<f64>> {
    draws_mean(&post.draws)
}

pub fn posterior_cov(post: &RowPosterior) -> Result<DMatrix<f64>> {
    draws_cov(&post.draws)
}

pub fn draws_mean(draws: &DMatrix<f64>) -> Result<DVector<f64>> {
    if draws.nrows() < 2 {
        return Err(Error::TooFewDraws { needed: 2, got: draws.nrows() });
    }
    Ok(draws.row_mean().transpose())
}

/// Unbiased sample covariance of the rows of `draws`.
pub fn draws_cov(draws: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mean = draws_mean(draws)?;
    let mut centered = draws.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (draws.nrows() as f64 - 1.0);
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Inverse χ²_df CDF by bisection on the regularized lower incomplete gamma
/// function.
pub fn chi2_quantile(prob: f64, df: usize) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::invalid(format!("probability must lie in (0, 1), got {prob}")));
    }
    if df < 1 {
        return Err(Error::invalid("degrees of freedom must be at least 1"));
    }
    let k = df as f64 / 2.0;
    let cdf = |x: f64| gamma_lr(k, x / 2.0);
    let mut hi = df as f64 + 1.0;
    while cdf(hi) < prob {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-11 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `{x : (x − center)ᵀ V⁻¹ (x − center) ≤ q}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CredibleSet {
    pub center: DVector<f64>,
    pub vhat: DMatrix<f64>,
    pub q: f64,
    pub alpha: f64,
    vhat_inv: DMatrix<f64>,
}

impl CredibleSet {
    pub fn new(center: DVector<f64>, vhat: DMatrix<f64>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if vhat.nrows() != center.len() || !vhat.is_square() {
            return Err(Error::invalid("covariance does not match the center"));
        }
        let vhat_inv = checked_inverse(&vhat, "posterior covariance")?;
        let q = chi2_quantile(1.0 - alpha, center.len())?;
        Ok(Self {
            center,
            vhat,
            q,
            alpha,
            vhat_inv,
        })
    }

    /// `(x − center)ᵀ V⁻¹ (x − center)`.
    pub fn distance2(&self, point: &DVector<f64>) -> f64 {
        let diff = point - &self.center;
        (diff.transpose() * &self.vhat_inv * &diff)[(0, 0)]
    }

    pub fn contains(&self, point: &DVector<f64>) -> bool {
        self.distance2(point) <= self.q
    }
}

/// Credible ellipse centred at `xhat` with the posterior covariance of `post`.
pub fn credible_ellipse(post: &RowPosterior, xhat: &DVector<f64>, alpha: f64) -> Result<CredibleSet> {
    CredibleSet::new(xhat.clone(), posterior_cov(post)?, alpha)
}

pub fn ellipse_contains(set: &CredibleSet, point: &DVector<f64>) -> bool {
    set.contains(point)
}

/// Sample quantile with linear interpolation between order statistics
/// (`h = (N − 1) p`, Hyndman–Fan type 7). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Minimum draws for entrywise intervals.
pub const MIN_INTERVAL_DRAWS: usize = 40;

/// Equal-tailed `(α/2, 1 − α/2)` intervals per coordinate of `draws`.
pub fn draws_interval(draws: &DMatrix<f64>, alpha: f64) -> Result<Vec<(f64, f64)>> {
    if draws.nrows() < MIN_INTERVAL_DRAWS {
        return Err(Error::TooFewDraws {
            needed: MIN_INTERVAL_DRAWS,
            got: draws.nrows(),
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(draws
        .column_iter()
        .map(|col| {
            let mut v: Vec<f64> = col.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            (quantile_sorted(&v, alpha / 2.0), quantile_sorted(&v, 1.0 - alpha / 2.0))
        })
        .collect())
}

pub fn entrywise_interval(post: &RowPosterior, alpha: f64) -> Result<Vec<(f64, f64)>> {
    draws_interval(&post.draws, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::tests::scenario_one_contexts;
    use crate::estimator::z_estimate;
    use crate::weight::WeightKind;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Continuous, Normal};

    fn posterior(draws: DMatrix<f64>) -> RowPosterior {
        RowPosterior {
            row: 0,
            chain_id: 0,
            burnin: 0,
            criterion_trace: vec![0.0; draws.nrows()],
            draws,
            acceptance_rate: 0.5,
            proposal_scale: 1.0,
        }
    }

    fn long_chain(samples: usize) -> ChainConfig {
        ChainConfig {
            burnin: 2000,
            samples,
            proposal_scale: 0.5,
            seed: 20,
            chains: 1,
            adapt: true,
        }
    }

    #[test]
    fn uniform_prior_moments() {
        let cfg = long_chain(20_000);
        let mut r = rng::stream(cfg.seed, 1);
        let (draws, _, acc, _) = metropolis(&DVector::from_element(1, 0.0), |_| Some(0.0), 1.0, &cfg, &mut r).unwrap();
        let mean = draws.mean();
        let var = draws_cov(&draws).unwrap()[(0, 0)];
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0 / 3.0).abs() < 0.1 / 3.0, "var {var}");
        assert!(acc > 0.0 && acc < 1.0);
        assert!(draws.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn truncated_gaussian_moments() {
        let tau: f64 = 0.8;
        let cfg = long_chain(20_000);
        let mut r = rng::stream(cfg.seed, 2);
        let (draws, trace, _, _) = metropolis(
            &DVector::from_element(1, 0.0),
            |x| Some(-x[0] * x[0] / (2.0 * tau * tau)),
            1.0,
            &cfg,
            &mut r,
        )
        .unwrap();
        // Variance of N(0, τ²) restricted to [−1, 1].
        let a = 1.0 / tau;
        let z = Normal::standard();
        let truth = tau * tau * (1.0 - 2.0 * a * z.pdf(a) / (2.0 * z.cdf(a) - 1.0));
        let mean = draws.mean();
        let var = draws_cov(&draws).unwrap()[(0, 0)];
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var / truth - 1.0).abs() < 0.05, "var {var} vs {truth}");
        for (k, t) in trace.iter().enumerate() {
            assert_eq!(*t, -draws[(k, 0)].powi(2) / (2.0 * tau * tau));
        }
    }

    #[test]
    fn vanishing_scale_stays_at_start() {
        let ctxs = scenario_one_contexts(200, 21, WeightKind::Rdpg);
        let ctx = &ctxs[30];
        let crit = Criterion::prepare(CriterionKind::Gmm, ctx).unwrap();
        let cfg = ChainConfig {
            burnin: 10,
            samples: 200,
            proposal_scale: 1e-12,
            seed: 3,
            chains: 1,
            adapt: false,
        };
        let post = mh_row(ctx, &crit, 1.0, &cfg, 0, &mut rng::stream(3, 0)).unwrap();
        assert!(post.acceptance_rate > 0.95);
        let start = ctx.embedding_row()[0];
        assert!(post.draws.iter().all(|x| (x - start).abs() < 1e-9));
    }

    #[test]
    fn gmm_posterior_mean_near_z_estimate() {
        let ctxs = scenario_one_contexts(200, 22, WeightKind::Rdpg);
        let cfg = ChainConfig { seed: 4, ..ChainConfig::default() };
        let picked: Vec<RowContext> = ctxs.iter().step_by(25).cloned().collect();
        let runs = sample_rows(&picked, CriterionKind::Gmm, &cfg);
        for (ctx, run) in picked.iter().zip(runs) {
            let post = &run.unwrap()[0];
            assert!(post.acceptance_rate > 0.05 && post.acceptance_rate < 0.95);
            let xhat = z_estimate(ctx).unwrap().xhat;
            let mean = posterior_mean(post).unwrap();
            let sd = posterior_cov(post).unwrap()[(0, 0)].sqrt();
            assert!((mean[0] - xhat[0]).abs() <= 3.0 * sd, "row {}", ctx.row_index());
        }
    }

    #[test]
    fn schedule_independent() {
        let ctxs = scenario_one_contexts(10, 23, WeightKind::Rdpg);
        let cfg = ChainConfig {
            burnin: 50,
            samples: 100,
            seed: 5,
            chains: 2,
            ..ChainConfig::default()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_rows(&ctxs, CriterionKind::Etel, &cfg))
        };
        let serial = run(1);
        let parallel = run(4);
        assert_eq!(serial.len(), parallel.len());
        for (a, b) in serial.iter().zip(&parallel) {
            match (a, b) {
                (Ok(a), Ok(b)) => assert_eq!(a, b),
                (Err(a), Err(b)) => assert_eq!(a.to_string(), b.to_string()),
                _ => panic!("outcome differs between schedules"),
            }
        }
        assert!(serial.iter().filter(|r| r.is_ok()).count() >= 5);
        let chains = serial.iter().find_map(|r| r.as_ref().ok()).unwrap();
        assert_ne!(chains[0].draws, chains[1].draws);
    }

    #[test]
    fn mean_and_cov_by_hand() {
        let p = posterior(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 2.0]));
        assert_eq!(posterior_mean(&p).unwrap(), DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(posterior_cov(&p).unwrap(), DMatrix::from_element(2, 2, 2.0));
        let c = posterior(DMatrix::from_element(5, 1, 0.3));
        assert!((posterior_mean(&c).unwrap()[0] - 0.3).abs() < 1e-15);
        assert!(posterior_cov(&c).unwrap()[(0, 0)].abs() < 1e-30);
        assert!(matches!(
            posterior_mean(&posterior(DMatrix::zeros(1, 1))),
            Err(Error::TooFewDraws { .. })
        ));
    }

    #[test]
    fn chi2_reference_values() {
        assert!((chi2_quantile(0.95, 1).unwrap() - 3.8415).abs() < 1e-3);
        assert!((chi2_quantile(0.5, 2).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-9);
        assert!(chi2_quantile(1.0, 1).is_err());
        assert!(chi2_quantile(0.5, 0).is_err());
    }

    proptest! {
        #[test]
        fn chi2_round_trip(p in 0.001f64..0.999, df in 1usize..12) {
            let q = chi2_quantile(p, df).unwrap();
            prop_assert!((gamma_lr(df as f64 / 2.0, q / 2.0) - p).abs() < 1e-9);
        }

        #[test]
        fn intervals_are_ordered_and_inside_the_range(xs in proptest::collection::vec(-5.0f64..5.0, 40..200), alpha in 0.01f64..0.5) {
            let draws = DMatrix::from_column_slice(xs.len(), 1, &xs);
            let (lo, hi) = draws_interval(&draws, alpha).unwrap()[0];
            let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min <= lo && lo <= hi && hi <= max);
        }
    }

    #[test]
    fn ellipse_scalar_case() {
        let v = 0.04;
        let set = CredibleSet::new(DVector::from_element(1, 0.5), DMatrix::from_element(1, 1, v), 0.05).unwrap();
        let half = (v * chi2_quantile(0.95, 1).unwrap()).sqrt();
        assert!(set.contains(&DVector::from_element(1, 0.5)));
        assert!(set.contains(&DVector::from_element(1, 0.5 + half * 0.999)));
        assert!(!set.contains(&DVector::from_element(1, 0.5 - half * 1.001)));
        assert!(CredibleSet::new(DVector::zeros(2), DMatrix::zeros(2, 2), 0.05).is_err());
    }

    #[test]
    fn interval_order_statistics() {
        let draws = DMatrix::from_fn(100, 1, |i, _| (i + 1) as f64);
        let (lo, hi) = draws_interval(&draws, 0.05).unwrap()[0];
        // Oracle: position (N − 1) p on the sorted array, counted from zero.
        let sorted: Vec<f64> = (1..=100).map(f64::from).collect();
        let at = |p: f64| {
            let h = 99.0 * p;
            let k = h as usize;
            sorted[k] * (1.0 - h.fract()) + sorted[k + 1] * h.fract()
        };
        assert!((lo - at(0.025)).abs() < 1e-12 && (lo - 3.475).abs() < 1e-12);
        assert!((hi - at(0.975)).abs() < 1e-12 && (hi - 97.525).abs() < 1e-12);

        let constant = DMatrix::from_element(50, 2, 1.5);
        assert_eq!(draws_interval(&constant, 0.05).unwrap(), vec![(1.5, 1.5); 2]);
        let symmetric = DMatrix::from_fn(200, 1, |i, _| if i % 2 == 0 { i as f64 } else { -(i as f64 - 1.0) });
        let (lo, hi) = draws_interval(&symmetric, 0.1).unwrap()[0];
        assert!((lo + hi).abs() < 1e-12);
        assert!(draws_interval(&DMatrix::zeros(39, 1), 0.05).is_err());
    }
}
