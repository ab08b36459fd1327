//! Two-stage sentencing risk assessment.
//!
//! Stage one fits a heteroscedastic tree ensemble of sentence length on
//! legally relevant factors ([`hbart`]) and flags sentences above the
//! conditional upper tail bound ([`flagger`]). Stage two fits an
//! L1-penalized logistic model of that flag on legally irrelevant factors
//! ([`sparse_logit`]). [`eval`] computes the reported diagnostics and
//! [`synth`] generates data with known ground truth.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod flagger;
pub mod hbart;
pub mod sparse_logit;
pub mod stats;
pub mod synth;

pub use data::{ColumnKind, ColumnRole, ColumnSpec, Dataset, DesignMatrix, Schema, Split};
pub use error::{Error, ErrorKind, Result};
pub use eval::{GewekeResult, RiskBinTable, RocCurve};
pub use flagger::{FlagConfig, FlagSet};
pub use hbart::{HbartConfig, PosteriorSummary, TreeEnsembleModel};
pub use sparse_logit::{CvCurve, LambdaPath, LassoConfig, SparseLogitModel};
pub use synth::{SynthSpec, Synthetic, Truth};
