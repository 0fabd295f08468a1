//! Multi-chain convergence diagnostics on one simulated replicate.
//!
//! Writes `psrf.csv` (`row,criterion,coord,point_estimate,upper_ci`) and, for
//! each criterion, `trace_<criterion>.csv` for the requested rows.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sigpost::diagnostics::{gelman_rubin, trace_export, PsrfReport};
use sigpost::estimator::row_contexts;
use sigpost::sampler::sample_rows;

use crate::config::RunConfig;
use crate::harness::{chain_seed, simulate_matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrfStats {
    pub rows_diagnosed: usize,
    pub rows_failed: usize,
    pub max_point_estimate: f64,
    pub max_upper_ci: f64,
    pub median_point_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct DiagnoseOutcome {
    pub stats: BTreeMap<String, PsrfStats>,
    /// `(criterion, row, report)`.
    pub reports: Vec<(String, usize, PsrfReport)>,
}

pub fn run_diagnostics(config: &RunConfig, trace_rows: &[usize]) -> Result<DiagnoseOutcome> {
    config.validate()?;
    if config.chains < 2 {
        bail!("diagnostics need at least 2 chains, got {}", config.chains);
    }
    let (a, _) = simulate_matrix(config, 0)?;
    let ctxs = row_contexts(&a, config.d, &config.weight_function()?, config.theta_radius)?;
    let chain = config.chain_config(chain_seed(config, 0));

    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut psrf = csv::Writer::from_path(dir.join("psrf.csv"))?;
    psrf.write_record(["row", "criterion", "coord", "point_estimate", "upper_ci"])?;

    let mut stats = BTreeMap::new();
    let mut reports = Vec::new();
    for kind in config.criterion.kinds() {
        let runs = sample_rows(&ctxs, kind, &chain);
        let mut traced = Vec::new();
        let mut points = Vec::new();
        let mut uppers = Vec::new();
        let mut failed = 0;
        for (i, run) in runs.into_iter().enumerate() {
            let report = run.map_err(anyhow::Error::from).and_then(|chains| {
                if trace_rows.contains(&i) {
                    traced.extend(chains.iter().cloned());
                }
                Ok(gelman_rubin(&chains)?)
            });
            match report {
                Ok(r) => {
                    for k in 0..r.point_estimate.len() {
                        psrf.write_record([
                            i.to_string(),
                            kind.label().to_string(),
                            (k + 1).to_string(),
                            r.point_estimate[k].to_string(),
                            r.upper_ci[k].to_string(),
                        ])?;
                    }
                    points.push(r.max_point_estimate());
                    uppers.push(r.max_upper_ci());
                    reports.push((kind.label().to_string(), i, r));
                }
                Err(e) => {
                    failed += 1;
                    log::debug!("row {i}: {} diagnostics unavailable: {e:#}", kind.label());
                }
            }
        }
        trace_export(&traced, dir.join(format!("trace_{}.csv", kind.label())))?;
        let mut sorted = points.clone();
        sorted.sort_by(f64::total_cmp);
        stats.insert(
            kind.label().to_string(),
            PsrfStats {
                rows_diagnosed: points.len(),
                rows_failed: failed,
                max_point_estimate: points.iter().copied().fold(f64::NAN, f64::max),
                max_upper_ci: uppers.iter().copied().fold(f64::NAN, f64::max),
                median_point_estimate: sorted.get(sorted.len() / 2).copied().unwrap_or(f64::NAN),
            },
        );
    }
    psrf.flush()?;
    std::fs::write(dir.join("psrf_summary.json"), serde_json::to_string_pretty(&stats)?)?;
    Ok(DiagnoseOutcome { stats, reports })
}
