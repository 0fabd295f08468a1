//! Gelman–Rubin PSRF and trace export.
//!
//! Point estimate, per coordinate with `m` chains of length `L`:
//! `√(((L−1)/L) W + B/L) / √W`, where `W` is the mean within-chain variance
//! and `B = L · var(chain means)`. Identical chains therefore give
//! `√((L−1)/L)`, slightly below one.
//!
//! Upper limit: the Brooks–Gelman form used by R's `coda::gelman.diag`
//! (untransformed), i.e. `√(df_adj · ((L−1)/L + F_{0.975}(m−1, W_df) (1+1/m) B/(L W)))`
//! with `df_adj = (df_V + 3)/(df_V + 1)`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::sampler::{chi2_quantile, RowPosterior};

/// Minimum chain length accepted by [`gelman_rubin`].
pub const MIN_CHAIN_LENGTH: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct PsrfReport {
    /// One value per coordinate.
    pub point_estimate: Vec<f64>,
    /// Upper 97.5% limit, one per coordinate.
    pub upper_ci: Vec<f64>,
    pub chains_used: usize,
    /// Always true: each coordinate is diagnosed separately.
    pub per_coordinate: bool,
}

impl PsrfReport {
    pub fn max_point_estimate(&self) -> f64 {
        self.point_estimate.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_upper_ci(&self) -> f64 {
        self.upper_ci.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn gelman_rubin(chains: &[RowPosterior]) -> Result<PsrfReport> {
    let draws: Vec<&DMatrix<f64>> = chains.iter().map(|c| &c.draws).collect();
    gelman_rubin_draws(&draws)
}

/// [`gelman_rubin`] on raw `L × d` draw matrices.
pub fn gelman_rubin_draws(chains: &[&DMatrix<f64>]) -> Result<PsrfReport> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::invalid(format!("PSRF needs at least 2 chains, got {m}")));
    }
    let (len, d) = chains[0].shape();
    if chains.iter().any(|c| c.shape() != (len, d)) {
        return Err(Error::invalid("chains differ in length or dimension"));
    }
    if len < MIN_CHAIN_LENGTH {
        return Err(Error::TooFewDraws {
            needed: MIN_CHAIN_LENGTH,
            got: len,
        });
    }
    let mut point = Vec::with_capacity(d);
    let mut upper = Vec::with_capacity(d);
    for k in 0..d {
        let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.column(k).iter().copied().collect()).collect();
        let (p, u) = psrf_scalar(&cols)?;
        point.push(p);
        upper.push(u);
    }
    Ok(PsrfReport {
        point_estimate: point,
        upper_ci: upper,
        chains_used: m,
        per_coordinate: true,
    })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let mu = mean(x);
    x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn psrf_scalar(chains: &[Vec<f64>]) -> Result<(f64, f64)> {
    let m = chains.len() as f64;
    let l = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let s2: Vec<f64> = chains.iter().map(|c| var(c)).collect();
    let w = mean(&s2);
    if !(w > 0.0) {
        return Err(Error::invalid("zero within-chain variance"));
    }
    let b = l * var(&means);
    let point = (((l - 1.0) / l) * w + b / l).sqrt() / w.sqrt();

    let muhat = mean(&means);
    let sq_means: Vec<f64> = means.iter().map(|x| x * x).collect();
    let var_w = var(&s2) / m;
    let var_b = 2.0 * b * b / (m - 1.0);
    let cov_wb = (l / m) * (cov(&s2, &sq_means) - 2.0 * muhat * cov(&s2, &means));
    let v = (l - 1.0) * w / l + (1.0 + 1.0 / m) * b / l;
    let var_v =
        ((l - 1.0).powi(2) * var_w + (1.0 + 1.0 / m).powi(2) * var_b + 2.0 * (l - 1.0) * (1.0 + 1.0 / m) * cov_wb)
            / (l * l);
    let df_adj = if var_v > 0.0 {
        let df_v = 2.0 * v * v / var_v;
        (df_v + 3.0) / (df_v + 1.0)
    } else {
        1.0
    };
    let w_df = if var_w > 0.0 { 2.0 * w * w / var_w } else { f64::INFINITY };
    let r2_fixed = (l - 1.0) / l;
    let r2_random = (1.0 + 1.0 / m) * (b / w) / l;
    let q = f_quantile(0.975, m - 1.0, w_df)?;
    let upper = (df_adj * (r2_fixed + q * r2_random)).sqrt();
    Ok((point, upper))
}

/// Quantile of `F(d1, d2)`; `d2 = ∞` falls back to `χ²_{d1} / d1`.
pub fn f_quantile(prob: f64, d1: f64, d2: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::invalid(format!("probability must lie in (0, 1), got {prob}")));
    }
    if !d2.is_finite() || d2 > 1e10 {
        return Ok(chi2_quantile(prob, d1.round() as usize)? / d1);
    }
    let dist = FisherSnedecor::new(d1, d2).map_err(|e| Error::invalid(format!("F distribution: {e}")))?;
    let mut hi = 2.0;
    while dist.cdf(hi) < prob {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if dist.cdf(mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

const TRACE_PREFIX: [&str; 4] = ["row_index", "chain_id", "iteration", "criterion_value"];

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub row_index: usize,
    pub chain_id: usize,
    /// MH iteration number counted from 1, burn-in included.
    pub iteration: usize,
    pub criterion_value: f64,
    pub coords: Vec<f64>,
}

/// Writes post-burn-in draws as
/// `row_index,chain_id,iteration,criterion_value,coord_1..coord_d`, numbers
/// with 17 significant digits.
pub fn trace_export(posteriors: &[RowPosterior], path: impl AsRef<Path>) -> Result<()> {
    let d = posteriors.first().map_or(0, |p| p.d());
    if posteriors.iter().any(|p| p.d() != d) {
        return Err(Error::invalid("posteriors differ in dimension"));
    }
    let mut out = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = TRACE_PREFIX.iter().map(|s| s.to_string()).collect();
    header.extend((1..=d).map(|k| format!("coord_{k}")));
    out.write_record(&header)?;
    for p in posteriors {
        for k in 0..p.len() {
            let mut rec = vec![
                p.row.to_string(),
                p.chain_id.to_string(),
                (p.burnin + k + 1).to_string(),
                format!("{:.16e}", p.criterion_trace[k]),
            ];
            rec.extend(p.draws.row(k).iter().map(|x| format!("{x:.16e}")));
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn trace_import(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < TRACE_PREFIX.len() || header.iter().zip(TRACE_PREFIX).any(|(a, b)| a != b) {
        return Err(Error::Io("not a trace file: unexpected header".into()));
    }
    let bad = |line: usize, what: &str| Error::Io(format!("trace line {line}: bad {what}"));
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let int = |i: usize, what: &str| rec[i].parse::<usize>().map_err(|_| bad(line, what));
        let float = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(line, "number"));
        out.push(TraceRecord {
            row_index: int(0, "row_index")?,
            chain_id: int(1, "chain_id")?,
            iteration: int(2, "iteration")?,
            criterion_value: float(3)?,
            coords: (4..rec.len()).map(float).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

/// Draws of one chain from imported records, as an `L × d` matrix.
pub fn records_to_draws(records: &[TraceRecord], row: usize, chain: usize) -> DMatrix<f64> {
    let picked: Vec<&TraceRecord> = records
        .iter()
        .filter(|r| r.row_index == row && r.chain_id == chain)
        .collect();
    let d = picked.first().map_or(0, |r| r.coords.len());
    DMatrix::from_fn(picked.len(), d, |i, k| picked[i].coords[k])
}

/// Per-coordinate means of each chain, handy for reporting.
pub fn chain_means(chains: &[RowPosterior]) -> Vec<DVector<f64>> {
    chains.iter().map(|c| c.draws.row_mean().transpose()).collect()
}
