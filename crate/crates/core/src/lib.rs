//! Model-X knockoff+ feature selection.
//!
//! Pipeline: energy-based column reduction ([`reduce`]), equi-correlated
//! Gaussian knockoffs ([`knockoff`]), an L1-penalized logistic fit on the
//! augmented design ([`logit`]), and the knockoff+ filter ([`filter`]).
//! [`sim`] runs the same pipeline on synthetic data with a known support to
//! measure false discovery proportion and power.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod filter;
pub mod io;
pub mod knockoff;
pub mod logit;
pub mod matrix;
pub mod pipeline;
pub mod reduce;
pub mod rng;
pub mod sim;

pub use config::{RunConfig, SimConfig};
pub use error::{Error, ErrorKind, Result};
pub use filter::{KnockoffStatistics, SelectionResult, SummaryMetrics};
pub use io::MatrixFormat;
pub use knockoff::{KnockoffModel, KnockoffPair};
pub use logit::{FitOptions, LogisticModel, Penalty, PenaltyScale};
pub use matrix::{FeatureMatrix, LabelVector};
pub use pipeline::RunArtifact;
pub use sim::{CovarianceFamily, PipelineParams, SimDesign, SimOutcome, StudyResult};
