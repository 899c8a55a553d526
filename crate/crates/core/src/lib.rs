//! Bivariate lifetime distributions with a singular diagonal component,
//! characterized by a semigroup functional equation over a baseline law.
//!
//! Models are built from a [`BaselineModel`], two marginals and a dependence
//! parameter `θ`. The crate evaluates, validates, decomposes and samples them.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod baseline;
pub mod bivariate;
pub mod error;
pub mod hazard_curve;
pub mod marginals;
pub mod numeric;
pub mod sampling;
pub mod validity;

pub use baseline::{BaselineFamily, BaselineModel};
pub use bivariate::{
    BivariateSurvival, Decomposition, GeneralBivariateModel, Margin, PHBivariateModel,
};
pub use error::{Error, Result};
pub use hazard_curve::{HazardCurve, HazardTable};
pub use marginals::{limit_hazard_ratio, HazardRatioLimit, MarginalKind, MarginalModel};
pub use sampling::{sample_general, sample_ph, GeneralSampler, SampleBatch};
pub use validity::{GridSpec, Tolerances, ValidationReport, Verdict};
