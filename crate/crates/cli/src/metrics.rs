//! Summary statistics for harness output.

use anyhow::{bail, Result};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub mean_difference: f64,
    pub t: f64,
    pub df: f64,
    /// One-sided p-value for `mean(a − b) < 0`.
    pub p_value: f64,
}

/// Paired t-test of `H1: E[a − b] < 0`.
pub fn paired_t_less(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        bail!("paired samples differ in length ({} vs {})", a.len(), b.len());
    }
    if a.len() < 2 {
        bail!("paired t-test needs at least two pairs");
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diff.len() as f64;
    let m = mean(&diff);
    let var = diff.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let t = m / se;
    let df = n - 1.0;
    let p_value = if se > 0.0 {
        StudentsT::new(0.0, 1.0, df)?.cdf(t)
    } else if m < 0.0 {
        0.0
    } else {
        1.0
    };
    Ok(TTest {
        mean_difference: m,
        t,
        df,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_value() {
        // Differences −1, −2, −3, 0, −4: mean −2, sd √2.5, t = −2/√0.5.
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 4.0, 6.0, 4.0, 9.0];
        let r = paired_t_less(&a, &b).unwrap();
        assert!((r.t + 2.0 / 0.5f64.sqrt()).abs() < 1e-12);
        // Student t CDF, 4 degrees of freedom, at −2√2.
        assert!((r.p_value - 0.023710327792159).abs() < 1e-9, "{}", r.p_value);
        assert!(paired_t_less(&b, &a).unwrap().p_value > 0.95);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(paired_t_less(&[1.0], &[2.0]).is_err());
        assert!(paired_t_less(&[1.0, 2.0], &[2.0]).is_err());
    }
}
