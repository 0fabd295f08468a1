//! Weight functions `h(s, t)` for the eigenvector-assisted moment functions.
//!
//! `s` is the embedding inner product `x̃_iᵀx̃_j` and `t` the fitted value
//! `xᵀx̃_j`. Builtins carry their `t`-derivative and a closed-form
//! `∫_0^u (a − t) h(s, t) dt` for the M-criterion.

use std::fmt;
use std::sync::Arc;

type VarianceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type BivariateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Form {
    Constant,
    /// `1 / {s (1 − t)}`, Bernoulli variance at the fitted value.
    Rdpg,
    /// `p / {(1 − p) t² + 1}`, inverse variance of masked unit-noise entries.
    Completion { p: f64 },
    /// `1 / {s (1 − t) + v²}`, Bernoulli plus Gaussian contamination.
    NoisyRdpg { v2: f64 },
    /// `1 / var(s)`.
    InverseVariance { var: VarianceFn },
    Custom { h: BivariateFn, dh_dt: BivariateFn },
}

/// Which builtin weight to construct.
#[derive(Clone)]
pub enum WeightKind {
    Constant,
    Rdpg,
    Completion { p: f64 },
    NoisyRdpg { v: f64 },
    InverseVariance { name: String, var: VarianceFn },
}

impl WeightKind {
    /// Inverse Bernoulli variance `1 / {s (1 − s)}`.
    pub fn bernoulli_inverse_variance() -> Self {
        WeightKind::InverseVariance {
            name: "bernoulli".into(),
            var: Arc::new(|s| s * (1.0 - s)),
        }
    }
}

/// Result of integrating `(a − t) h(s, t)` over `[0, u]` in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integral {
    Value(f64),
    /// The path leaves the weight's domain.
    Undefined,
    /// No closed form here; fall back to quadrature.
    Unavailable,
}

/// A positive weight `h(s, t)` together with `∂h/∂t`.
#[derive(Clone)]
pub struct WeightFunction {
    name: String,
    form: Form,
}

impl fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightFunction").field("name", &self.name).finish()
    }
}

/// Builds one of the builtin weights.
pub fn builtin_weight(kind: WeightKind) -> crate::Result<WeightFunction> {
    let (name, form) = match kind {
        WeightKind::Constant => ("constant".to_string(), Form::Constant),
        WeightKind::Rdpg => ("rdpg".to_string(), Form::Rdpg),
        WeightKind::Completion { p } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(crate::Error::invalid(format!(
                    "completion weight needs p in (0, 1], got {p}"
                )));
            }
            (format!("completion(p={p})"), Form::Completion { p })
        }
        WeightKind::NoisyRdpg { v } => {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(crate::Error::invalid(format!(
                    "contaminated rdpg weight needs v >= 0, got {v}"
                )));
            }
            (format!("noisy_rdpg(v={v})"), Form::NoisyRdpg { v2: v * v })
        }
        WeightKind::InverseVariance { name, var } => {
            (format!("inverse_variance({name})"), Form::InverseVariance { var })
        }
    };
    Ok(WeightFunction { name, form })
}

impl WeightFunction {
    /// A user-supplied weight. Its domain is wherever `h` is finite and positive.
    pub fn custom(
        name: impl Into<String>,
        h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dh_dt: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            form: Form::Custom {
                h: Arc::new(h),
                dh_dt: Arc::new(dh_dt),
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `h(s, t)`, or `None` outside the domain.
    #[inline]
    pub fn eval(&self, s: f64, t: f64) -> Option<f64> {
        let h = match &self.form {
            Form::Constant => 1.0,
            Form::Rdpg => {
                if !(s > 0.0 && s < 1.0 && t < 1.0) {
                    return None;
                }
                1.0 / (s * (1.0 - t))
            }
            Form::Completion { p } => p / ((1.0 - p) * t * t + 1.0),
            Form::NoisyRdpg { v2 } => 1.0 / (s * (1.0 - t) + v2),
            Form::InverseVariance { var } => 1.0 / var(s),
            Form::Custom { h, .. } => h(s, t),
        };
        (h > 0.0 && h.is_finite()).then_some(h)
    }

    /// `(h(s, t), ∂h/∂t (s, t))`, or `None` outside the domain.
    #[inline]
    pub fn eval_with_dt(&self, s: f64, t: f64) -> Option<(f64, f64)> {
        let h = self.eval(s, t)?;
        let dh = match &self.form {
            Form::Constant | Form::InverseVariance { .. } => 0.0,
            Form::Rdpg => h / (1.0 - t),
            Form::Completion { p } => {
                let c = 1.0 - p;
                let den = c * t * t + 1.0;
                -2.0 * p * c * t / (den * den)
            }
            Form::NoisyRdpg { .. } => s * h * h,
            Form::Custom { dh_dt, .. } => dh_dt(s, t),
        };
        dh.is_finite().then_some((h, dh))
    }

    /// Whether every `t` on the segment between `0` and `u` is admissible.
    pub fn path_in_domain(&self, s: f64, u: f64) -> bool {
        match &self.form {
            Form::Rdpg => s > 0.0 && s < 1.0 && u < 1.0,
            Form::NoisyRdpg { v2 } => s + v2 > 0.0 && s * (1.0 - u) + v2 > 0.0,
            Form::InverseVariance { .. } | Form::Constant | Form::Completion { .. } => {
                self.eval(s, 0.0).is_some()
            }
            // Checked pointwise by the quadrature.
            Form::Custom { .. } => self.eval(s, 0.0).is_some() && self.eval(s, u).is_some(),
        }
    }

    /// `∫_0^u (a − t) h(s, t) dt` in closed form when the weight has one.
    pub fn integral(&self, a: f64, s: f64, u: f64) -> Integral {
        if !self.path_in_domain(s, u) {
            return Integral::Undefined;
        }
        let quad = a * u - 0.5 * u * u;
        let value = match &self.form {
            Form::Constant => quad,
            Form::InverseVariance { var } => quad / var(s),
            // (a − t)/(1 − t) = 1 + (a − 1)/(1 − t)
            Form::Rdpg => (u - (a - 1.0) * (-u).ln_1p()) / s,
            Form::Completion { p } => {
                let c = 1.0 - p;
                if c == 0.0 {
                    quad
                } else {
                    let rc = c.sqrt();
                    p * (a * (rc * u).atan() / rc - (c * u * u).ln_1p() / (2.0 * c))
                }
            }
            Form::NoisyRdpg { v2 } => {
                let k = s + v2;
                if s.abs() < 1e-6 * k {
                    return Integral::Unavailable;
                }
                // (a − t)/(k − s t) = 1/s + (a − k/s)/(k − s t)
                u / s - (a - k / s) / s * (-s * u / k).ln_1p()
            }
            Form::Custom { .. } => return Integral::Unavailable,
        };
        if value.is_finite() {
            Integral::Value(value)
        } else {
            Integral::Undefined
        }
    }
}
