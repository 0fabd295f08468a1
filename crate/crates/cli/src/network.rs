//! Noisy-network vertex classification: contaminate a labeled graph, fit
//! every estimator with the weight `1/{s(1−t) + v²}`, and score each
//! estimate as k-NN features.
//!
//! Writes `classification.csv` (`v,copy,method,misclassification`) and
//! `classification_summary.json` (mean error per `v` and method).

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sigpost::model::contaminate;
use sigpost::rng;
use sigpost::weight::{builtin_weight, WeightKind};

use crate::config::RunConfig;
use crate::data::LabeledGraph;
use crate::harness::fit_matrix;
use crate::knn::knn_classify;
use crate::metrics::mean;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSettings {
    pub v_values: Vec<f64>,
    /// Independent contaminated copies per `v`.
    pub copies: usize,
    pub k: usize,
    pub train_frac: f64,
    /// Train/test splits per copy.
    pub knn_repeats: usize,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        Self {
            v_values: vec![0.005, 0.010, 0.015, 0.020],
            copies: 50,
            k: 5,
            train_frac: 0.75,
            knn_repeats: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub v: f64,
    pub copy: usize,
    pub method: String,
    pub misclassification: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub n: usize,
    pub d: usize,
    pub classes: Vec<String>,
    /// `v` (as printed) → method → mean misclassification.
    pub mean_error: BTreeMap<String, BTreeMap<String, f64>>,
    pub failed_copies: usize,
}

/// Classification error of every estimator for one contaminated copy.
pub fn classify_copy(
    config: &RunConfig,
    graph: &LabeledGraph,
    settings: &NetworkSettings,
    v_index: usize,
    copy: usize,
) -> Result<Vec<NetworkRecord>> {
    let (labels, classes) = graph.label_indices().context("graph has no vertex labels")?;
    let d = classes.len();
    let v = settings.v_values[v_index];
    let path = [v_index as u64, copy as u64];
    let a = contaminate(&graph.adjacency, v, &mut rng::derived(config.seed, &[2, path[0], path[1]]))?;
    let weight = builtin_weight(WeightKind::NoisyRdpg { v })?;
    let chain = config.chain_config(rng::stream_index(&[config.seed, 3, path[0], path[1]]));
    let fit = fit_matrix(&a, d, &weight, config.theta_radius, &chain, &config.criterion.kinds(), None)?;
    fit.estimates()
        .into_iter()
        .enumerate()
        .map(|(m, (method, features))| {
            let mut r = rng::derived(config.seed, &[4, path[0], path[1], m as u64]);
            let err = knn_classify(features, &labels, settings.k, settings.train_frac, settings.knn_repeats, &mut r)?;
            Ok(NetworkRecord {
                v,
                copy,
                method: method.to_string(),
                misclassification: err,
            })
        })
        .collect()
}

/// The full `v` sweep. Failed copies are logged and counted.
pub fn run_network_pipeline(
    config: &RunConfig,
    graph: &LabeledGraph,
    settings: &NetworkSettings,
) -> Result<(Vec<NetworkRecord>, NetworkSummary)> {
    let (_, classes) = graph.label_indices().context("graph has no vertex labels")?;
    if classes.len() < 2 {
        bail!("classification needs at least two classes");
    }
    if settings.v_values.iter().any(|v| !(*v >= 0.0)) {
        bail!("contamination levels must be non-negative");
    }
    let jobs: Vec<(usize, usize)> = (0..settings.v_values.len())
        .flat_map(|vi| (0..settings.copies).map(move |c| (vi, c)))
        .collect();
    let results: Vec<Result<Vec<NetworkRecord>>> = jobs
        .par_iter()
        .map(|&(vi, c)| classify_copy(config, graph, settings, vi, c))
        .collect();
    let mut records = Vec::new();
    let mut failed = 0;
    for ((vi, c), r) in jobs.iter().zip(results) {
        match r {
            Ok(rs) => records.extend(rs),
            Err(e) => {
                failed += 1;
                log::warn!("v = {}, copy {c}: {e:#}", settings.v_values[*vi]);
            }
        }
    }
    if records.is_empty() {
        bail!("every contaminated copy failed");
    }

    let mut grouped: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in &records {
        grouped
            .entry(r.v.to_string())
            .or_default()
            .entry(r.method.clone())
            .or_default()
            .push(r.misclassification);
    }
    let mean_error = grouped
        .into_iter()
        .map(|(v, m)| (v, m.into_iter().map(|(k, xs)| (k, mean(&xs))).collect()))
        .collect();
    let summary = NetworkSummary {
        n: graph.n(),
        d: classes.len(),
        classes,
        mean_error,
        failed_copies: failed,
    };

    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut w = csv::Writer::from_path(dir.join("classification.csv"))?;
    for r in &records {
        w.serialize(r)?;
    }
    w.flush()?;
    std::fs::write(
        dir.join("classification_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok((records, summary))
}
