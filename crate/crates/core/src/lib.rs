//! Closed-form power analysis for staggered difference-in-differences,
//! comparative interrupted time series and interrupted time series designs
//! with clustered, autocorrelated panel data.
//!
//! The usual flow is [`design::validate_design`] to check a [`DesignSpec`],
//! then [`variance::variance`] for the estimator's sampling variance, and
//! [`power::mde`] or [`power::required_clusters`] for power calculations.
//! [`oracle`] simulates panels to check the closed forms empirically.

pub mod autocorr;
pub mod design;
pub mod error;
pub mod oracle;
pub mod power;
pub mod reference;
pub mod scenario;
pub mod variance;

pub use design::{
    validate_design, CorrStructure, Covariates, DesignKind, DesignSpec, ErrorModel, Estimand, EstimatorSpec, Family,
    TrendModel, ValidatedDesign,
};
pub use error::{Error, Result};
pub use power::{degrees_of_freedom, design_effect, factor, inverse_student_t, mde, required_clusters, PowerQuery, PowerResult};
pub use scenario::{preset, presets, Preset, Scenario};
pub use variance::{variance, VarianceBreakdown};
