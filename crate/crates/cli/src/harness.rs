//! Fitting a matrix with every estimator, and the replicated simulation
//! scenarios built on top of it.
//!
//! Output files written by [`run_scenario`] into `output_dir`:
//!
//! * `replicates.csv`: `replicate,method,sse,coverage,ellipse_coverage,row_failures`,
//!   one line per replicate and method (`embedding`, `z`, `m`, `gmm`, `etel`);
//!   coverage columns are empty for the two point estimators.
//! * `coverage_by_vertex.csv`: `vertex,truth,<criterion>...`, the fraction of
//!   replicates whose entrywise interval covered the aligned truth.
//! * `summary.json`: a serialized [`ScenarioSummary`].

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sigpost::criteria::CriterionKind;
use sigpost::estimator::{row_contexts, sandwich_covariance, z_estimate, RowContext};
use sigpost::model::{contaminate, generate_latent_curve, sample_matrix_completion, sample_rdpg, ObservedMatrix};
use sigpost::rng;
use sigpost::sampler::{draws_cov, draws_interval, draws_mean, pooled_draws, sample_rows, ChainConfig, CredibleSet};
use sigpost::spectral::{align, sse};
use sigpost::weight::WeightFunction;

use crate::config::{RunConfig, Scenario};
use crate::metrics::mean;

/// Nominal level of all credible sets.
pub const ALPHA: f64 = 0.05;

/// Posterior summary of one row under one criterion.
#[derive(Debug, Clone)]
pub struct RowSummary {
    pub row: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub interval: Vec<(f64, f64)>,
    /// Per coordinate; empty without a truth.
    pub covered: Vec<bool>,
    pub ellipse_covered: Option<bool>,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone)]
pub struct CriterionRun {
    pub kind: CriterionKind,
    /// `None` where sampling failed for that row.
    pub rows: Vec<Option<RowSummary>>,
    /// Posterior means, with the embedding row standing in for failed rows.
    pub estimate: DMatrix<f64>,
}

impl CriterionRun {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.is_none()).count()
    }

    /// Fraction of covered coordinates over rows that sampled.
    pub fn coverage(&self) -> Option<f64> {
        let hits: Vec<bool> = self.rows.iter().flatten().flat_map(|r| r.covered.iter().copied()).collect();
        (!hits.is_empty()).then(|| hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
    }

    pub fn ellipse_coverage(&self) -> Option<f64> {
        let hits: Vec<bool> = self.rows.iter().flatten().filter_map(|r| r.ellipse_covered).collect();
        (!hits.is_empty()).then(|| hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
    }

    pub fn mean_acceptance(&self) -> Option<f64> {
        let rates: Vec<f64> = self.rows.iter().flatten().map(|r| r.acceptance_rate).collect();
        (!rates.is_empty()).then(|| mean(&rates))
    }
}

/// Every estimator applied to one observed matrix.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub embedding: DMatrix<f64>,
    /// Z-estimate per row, `None` where it failed.
    pub z: Vec<Option<DVector<f64>>>,
    /// Z-estimates with the embedding row standing in for failed rows.
    pub z_estimate: DMatrix<f64>,
    /// Sandwich covariance at the Z-estimate.
    pub sandwich: Vec<Option<DMatrix<f64>>>,
    pub criteria: Vec<CriterionRun>,
    /// Truth rotated onto the embedding, when a truth was supplied.
    pub truth_aligned: Option<DMatrix<f64>>,
}

impl FitOutcome {
    pub fn z_failures(&self) -> usize {
        self.z.iter().filter(|z| z.is_none()).count()
    }

    pub fn criterion(&self, kind: CriterionKind) -> Option<&CriterionRun> {
        self.criteria.iter().find(|c| c.kind == kind)
    }

    /// `(method, estimate)` for the embedding, the Z-estimator and each
    /// posterior mean.
    pub fn estimates(&self) -> Vec<(&'static str, &DMatrix<f64>)> {
        let mut out = vec![("embedding", &self.embedding), ("z", &self.z_estimate)];
        out.extend(self.criteria.iter().map(|c| (c.kind.label(), &c.estimate)));
        out
    }
}

fn summarize_row(
    ctx: &RowContext,
    chains: &[sigpost::sampler::RowPosterior],
    center: Option<&DVector<f64>>,
    truth: Option<DVector<f64>>,
) -> Result<RowSummary> {
    let draws = pooled_draws(chains)?;
    let mean = draws_mean(&draws)?;
    let cov = draws_cov(&draws)?;
    let interval = draws_interval(&draws, ALPHA)?;
    let (covered, ellipse_covered) = match &truth {
        Some(t) => {
            let covered = interval.iter().zip(t.iter()).map(|(&(lo, hi), x)| lo <= *x && *x <= hi).collect();
            let ellipse = CredibleSet::new(center.unwrap_or(&mean).clone(), cov.clone(), ALPHA)
                .ok()
                .map(|set| set.contains(t));
            (covered, ellipse)
        }
        None => (Vec::new(), None),
    };
    let acceptance_rate = chains.iter().map(|c| c.acceptance_rate).sum::<f64>() / chains.len() as f64;
    Ok(RowSummary {
        row: ctx.row_index(),
        mean,
        cov,
        interval,
        covered,
        ellipse_covered,
        acceptance_rate,
    })
}

fn stack(rows: impl Iterator<Item = DVector<f64>>, n: usize, d: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, d);
    for (i, r) in rows.enumerate() {
        out.row_mut(i).copy_from(&r.transpose());
    }
    out
}

/// Embeds `a`, computes Z-estimates and sandwich covariances, and samples
/// each requested criterion. `truth` (n × d, on the estimand's scale) turns on
/// coverage bookkeeping.
pub fn fit_matrix(
    a: &ObservedMatrix,
    d: usize,
    weight: &WeightFunction,
    theta_radius: f64,
    chain: &ChainConfig,
    kinds: &[CriterionKind],
    truth: Option<&DMatrix<f64>>,
) -> Result<FitOutcome> {
    let ctxs = row_contexts(a, d, weight, theta_radius)?;
    let embedding = ctxs[0].embedding().xtilde().clone();
    let n = embedding.nrows();
    let truth_aligned = match truth {
        Some(t) => Some(align(t, &embedding)?.apply(t)),
        None => None,
    };

    type RowFit = (Option<DVector<f64>>, Option<DMatrix<f64>>);
    let per_row: Vec<RowFit> = ctxs
        .par_iter()
        .map(|ctx| match z_estimate(ctx) {
            Ok(z) => {
                let sw = sandwich_covariance(ctx, &z.xhat).ok().map(|s| s.cov);
                (Some(z.xhat), sw)
            }
            Err(e) => {
                log::debug!("row {}: no Z-estimate: {e}", ctx.row_index());
                (None, None)
            }
        })
        .collect();
    let (z, sandwich): (Vec<_>, Vec<_>) = per_row.into_iter().unzip();
    let z_estimate = stack(
        z.iter().enumerate().map(|(i, zi)| zi.clone().unwrap_or_else(|| embedding.row(i).transpose())),
        n,
        d,
    );

    let mut criteria = Vec::new();
    for &kind in kinds {
        let runs = sample_rows(&ctxs, kind, chain);
        let rows: Vec<Option<RowSummary>> = runs
            .into_iter()
            .zip(&ctxs)
            .map(|(run, ctx)| {
                let i = ctx.row_index();
                let truth_i = truth_aligned.as_ref().map(|t| t.row(i).transpose());
                match run.map_err(anyhow::Error::from).and_then(|chains| summarize_row(ctx, &chains, z[i].as_ref(), truth_i)) {
                    Ok(s) => Some(s),
                    Err(e) => {
                        log::debug!("row {i}: {} posterior unavailable: {e}", kind.label());
                        None
                    }
                }
            })
            .collect();
        let estimate = stack(
            rows.iter().enumerate().map(|(i, r)| match r {
                Some(r) => r.mean.clone(),
                None => embedding.row(i).transpose(),
            }),
            n,
            d,
        );
        criteria.push(CriterionRun { kind, rows, estimate });
    }

    Ok(FitOutcome {
        embedding,
        z,
        z_estimate,
        sandwich,
        criteria,
        truth_aligned,
    })
}

/// One simulated data set and its fit.
#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub fit: FitOutcome,
    /// `(method, SSE against the truth)` in [`FitOutcome::estimates`] order.
    pub sse: Vec<(&'static str, f64)>,
}

/// Draws the observed matrix and the truth (`ρ^{1/2} X0`) for replicate `rep`.
pub fn simulate_matrix(config: &RunConfig, rep: usize) -> Result<(ObservedMatrix, DMatrix<f64>)> {
    let truth = generate_latent_curve(config.n)?;
    let mut rng = rng::derived(config.seed, &[rep as u64, 0]);
    let a = match config.scenario {
        Scenario::RdpgCurve => sample_rdpg(&truth, &mut rng)?,
        Scenario::Completion => sample_matrix_completion(&truth, config.sigma, config.p, &mut rng)?,
        Scenario::File => bail!("the file scenario has no simulated truth"),
    };
    let a = contaminate(&a, config.v, &mut rng)?;
    Ok((a, truth.scaled_factor()))
}

/// Sampler master seed for replicate `rep`.
pub fn chain_seed(config: &RunConfig, rep: usize) -> u64 {
    rng::stream_index(&[config.seed, rep as u64, 1])
}

pub fn run_replicate(config: &RunConfig, rep: usize) -> Result<ReplicateOutcome> {
    let (a, truth) = simulate_matrix(config, rep)?;
    let fit = fit_matrix(
        &a,
        config.d,
        &config.weight_function()?,
        config.theta_radius,
        &config.chain_config(chain_seed(config, rep)),
        &config.criterion.kinds(),
        Some(&truth),
    )?;
    let sse = fit
        .estimates()
        .into_iter()
        .map(|(name, est)| Ok((name, sse(est, &truth)?)))
        .collect::<Result<_>>()?;
    Ok(ReplicateOutcome { replicate: rep, fit, sse })
}

/// All replicates; failures are kept in place and logged.
pub fn run_replicates(config: &RunConfig) -> Result<Vec<Result<ReplicateOutcome>>> {
    config.validate()?;
    Ok((0..config.replicates)
        .into_par_iter()
        .map(|rep| {
            let out = run_replicate(config, rep).with_context(|| format!("replicate {rep}"));
            if let Err(e) = &out {
                log::warn!("{e:#}");
            }
            out
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    /// Mean entrywise coverage over replicates, rows and coordinates.
    pub overall: Option<f64>,
    pub ellipse: Option<f64>,
    /// Per vertex, over replicates where that row sampled.
    pub per_vertex: Vec<Option<f64>>,
    pub row_failures: usize,
    pub mean_acceptance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub config: RunConfig,
    pub replicates_completed: usize,
    pub replicates_failed: usize,
    /// Mean SSE per method over completed replicates.
    pub mean_sse: BTreeMap<String, f64>,
    pub coverage: BTreeMap<String, CoverageSummary>,
    pub z_row_failures: usize,
}

pub fn summarize(config: &RunConfig, outcomes: &[Result<ReplicateOutcome>]) -> ScenarioSummary {
    let done: Vec<&ReplicateOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let mut mean_sse = BTreeMap::new();
    if let Some(first) = done.first() {
        for (k, (name, _)) in first.sse.iter().enumerate() {
            let vals: Vec<f64> = done.iter().map(|o| o.sse[k].1).collect();
            mean_sse.insert(name.to_string(), mean(&vals));
        }
    }
    let mut coverage = BTreeMap::new();
    for kind in config.criterion.kinds() {
        let runs: Vec<&CriterionRun> = done.iter().filter_map(|o| o.fit.criterion(kind)).collect();
        let mut hits = vec![(0usize, 0usize); config.n];
        let (mut all_hits, mut all_total, mut e_hits, mut e_total) = (0, 0, 0, 0);
        let mut rates = Vec::new();
        for run in &runs {
            for row in run.rows.iter().flatten() {
                let h = row.covered.iter().filter(|&&c| c).count();
                hits[row.row].0 += h;
                hits[row.row].1 += row.covered.len();
                all_hits += h;
                all_total += row.covered.len();
                if let Some(e) = row.ellipse_covered {
                    e_hits += e as usize;
                    e_total += 1;
                }
                rates.push(row.acceptance_rate);
            }
        }
        let frac = |h: usize, t: usize| (t > 0).then(|| h as f64 / t as f64);
        coverage.insert(
            kind.label().to_string(),
            CoverageSummary {
                overall: frac(all_hits, all_total),
                ellipse: frac(e_hits, e_total),
                per_vertex: hits.iter().map(|&(h, t)| frac(h, t)).collect(),
                row_failures: runs.iter().map(|r| r.failures()).sum(),
                mean_acceptance: (!rates.is_empty()).then(|| mean(&rates)),
            },
        );
    }
    ScenarioSummary {
        config: config.clone(),
        replicates_completed: done.len(),
        replicates_failed: outcomes.len() - done.len(),
        mean_sse,
        coverage,
        z_row_failures: done.iter().map(|o| o.fit.z_failures()).sum(),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_outputs(dir: &Path, outcomes: &[Result<ReplicateOutcome>], summary: &ScenarioSummary) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut w = csv::Writer::from_path(dir.join("replicates.csv"))?;
    w.write_record(["replicate", "method", "sse", "coverage", "ellipse_coverage", "row_failures"])?;
    for o in outcomes.iter().flatten() {
        for (name, value) in &o.sse {
            let run = o.fit.criteria.iter().find(|c| c.kind.label() == *name);
            let failures = match run {
                Some(r) => r.failures(),
                None if *name == "z" => o.fit.z_failures(),
                None => 0,
            };
            w.write_record([
                o.replicate.to_string(),
                name.to_string(),
                value.to_string(),
                opt(run.and_then(|r| r.coverage())),
                opt(run.and_then(|r| r.ellipse_coverage())),
                failures.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let truth = generate_latent_curve(summary.config.n).ok().map(|t| t.scaled_factor());
    let mut w = csv::Writer::from_path(dir.join("coverage_by_vertex.csv"))?;
    let labels: Vec<&String> = summary.coverage.keys().collect();
    let mut header = vec!["vertex".to_string(), "truth".to_string()];
    header.extend(labels.iter().map(|l| l.to_string()));
    w.write_record(&header)?;
    for i in 0..summary.config.n {
        let mut rec = vec![i.to_string(), opt(truth.as_ref().map(|t| t[(i, 0)]))];
        rec.extend(labels.iter().map(|l| opt(summary.coverage[*l].per_vertex[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;

    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)?)?;
    Ok(())
}

/// Runs every replicate of a simulated scenario and writes the output files.
pub fn run_scenario(config: &RunConfig) -> Result<ScenarioSummary> {
    if config.scenario == Scenario::File {
        bail!("run_scenario needs a simulated scenario; use fit for files");
    }
    let outcomes = run_replicates(config)?;
    let summary = summarize(config, &outcomes);
    write_outputs(&config.output_dir, &outcomes, &summary)?;
    if summary.replicates_completed == 0 {
        bail!("all {} replicates failed", config.replicates);
    }
    Ok(summary)
}
