//! Empirical Bayes estimation of prior densities by penalized maximum
//! likelihood, with a transformation-invariant missing-information penalty
//! `D_KL(π ‖ J)` against Jeffreys prior `J`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod grid;
pub mod harness;
pub mod information;
pub mod io;
pub mod models;
pub mod selection;
pub mod transform;

pub use error::{Error, Result};
pub use estimation::{EstimationResult, SolverConfig, StepRule, Termination};
pub use grid::{Grid, GridDensity};
pub use harness::{InvarianceConfig, InvarianceReport, RestrictionConfig, RestrictionReport};
pub use information::{PenaltyKind, PenaltySpec};
pub use models::{Dataset, LikelihoodModel, ModelSpec, SharedModel};
pub use selection::CrossValReport;
pub use transform::Diffeomorphism;
