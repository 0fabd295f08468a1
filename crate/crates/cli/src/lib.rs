// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod diagnose;
pub mod fit;
pub mod harness;
pub mod knn;
pub mod metrics;
pub mod network;
