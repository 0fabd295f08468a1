// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod spectral;
pub mod weight;

pub use error::{Error, Result};
pub use criteria::{Criterion, CriterionKind};
pub use diagnostics::{PsrfReport, TraceRecord};
pub use estimator::{RowContext, SandwichCovariance, ZEstimate};
pub use model::{GroundTruth, ObservedMatrix};
pub use sampler::{ChainConfig, CredibleSet, RowPosterior};
pub use spectral::{AlignmentMatrix, Embedding};
pub use weight::{WeightFunction, WeightKind};
