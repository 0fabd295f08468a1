//! Small dense helpers for d × d systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const MAX_CONDITION: f64 = 1e12;

/// 2-norm condition number from the singular values; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let (max, min) = (sv.max(), sv.min());
    if min > 0.0 && max.is_finite() {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Inverse of `m`, refusing matrices with condition estimate above 1e12.
pub fn checked_inverse(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let condition = condition_number(m);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular { context, condition });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::Singular { context, condition })
}

/// Solves `m x = b` under the same conditioning guard.
pub fn checked_solve(m: &DMatrix<f64>, b: &DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    let condition = condition_number(m);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular { context, condition });
    }
    m.clone()
        .lu()
        .solve(b)
        .ok_or(Error::Singular { context, condition })
}

/// Radial projection onto the ball `‖x‖ ≤ radius`.
pub fn project_ball(x: &mut DVector<f64>, radius: f64) {
    let norm = x.norm();
    if norm > radius {
        *x *= radius / norm;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
