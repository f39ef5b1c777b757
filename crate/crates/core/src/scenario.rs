//! Self-contained power questions and the bundled presets.

use serde::{Deserialize, Serialize};

use crate::design::{validate_design, DesignSpec, ErrorModel, EstimatorSpec, Family, ValidatedDesign};
use crate::error::Result;
use crate::power::{mde, required_clusters, PowerQuery, PowerResult};

/// A complete power calculation input, as read from `--design-file` or sent
/// to the HTTP service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub design: DesignSpec,
    pub error: ErrorModel,
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub query: PowerQuery,
    /// Target MDE for cluster solves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mde_target: Option<f64>,
}

impl Scenario {
    pub fn validated(&self) -> Result<ValidatedDesign> {
        self.error.validate()?;
        validate_design(&self.design, &self.estimator)
    }

    pub fn mde(&self) -> Result<PowerResult> {
        mde(&self.validated()?, &self.error, &self.estimator, &self.query)
    }

    pub fn required_clusters(&self, target: f64) -> Result<PowerResult> {
        required_clusters(&self.validated()?, &self.error, &self.estimator, target, &self.query)
    }

    /// Switch estimator family, rebuilding a balanced allocation when moving
    /// between designs with and without comparison clusters.
    pub fn with_family(mut self, family: Family) -> Self {
        if family.is_its() != self.estimator.family.is_its() {
            let total = if self.estimator.family.is_its() {
                self.design.total_treatment() * 2.0
            } else {
                self.design.total_treatment()
            };
            let times = self.design.times.take();
            self.design = DesignSpec {
                times,
                ..DesignSpec::balanced(
                    self.design.periods,
                    self.design.starts.clone(),
                    total,
                    self.design.individuals,
                    family.is_its(),
                )
            };
        }
        self.estimator.family = family;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub scenario: Scenario,
}

/// Common setting of the reference sample-size table: ICC 0.05, N = 100,
/// 50-50 split, two equal timing groups, even spacing, target MDE 0.20.
pub fn base_scenario(periods: usize, starts: Vec<usize>, error: ErrorModel, estimator: EstimatorSpec) -> Scenario {
    let its = estimator.family.is_its();
    let total = if its { 20.0 } else { 40.0 };
    Scenario {
        design: DesignSpec::balanced(periods, starts, total, 100.0, its),
        error,
        estimator,
        query: PowerQuery::default(),
        mde_target: Some(0.20),
    }
}

pub fn presets() -> Vec<Preset> {
    vec![
        Preset {
            name: "table3-base",
            description: "P=8, S=(4,6), AR(1) rho=0.4, ICC 0.05, N=100, 50-50 split, cross-sectional, MDE 0.20",
            scenario: base_scenario(8, vec![4, 6], ErrorModel::cross_sectional(0.05, 0.4), EstimatorSpec::pooled(Family::Did)),
        },
        Preset {
            name: "table3-constant",
            description: "table3-base with constant autocorrelation rho=0.4",
            scenario: base_scenario(
                8,
                vec![4, 6],
                ErrorModel::cross_sectional(0.05, 0.4).with_structure(crate::design::CorrStructure::Constant),
                EstimatorSpec::pooled(Family::Did),
            ),
        },
        Preset {
            name: "table3-longitudinal",
            description: "P=12, S=(6,8), longitudinal AR(1) with rho=psi=0.4, otherwise as table3-base",
            scenario: base_scenario(12, vec![6, 8], ErrorModel::longitudinal(0.05, 0.4, 0.4), EstimatorSpec::pooled(Family::Did)),
        },
        Preset {
            name: "running-example",
            description: "three timing groups starting in periods 6, 7 and 8 of 8; 51 treatment and 28 comparison schools",
            scenario: Scenario {
                design: DesignSpec::new(8, vec![6, 7, 8], vec![19.0, 20.0, 12.0], vec![10.0, 10.0, 8.0], 230.0),
                error: ErrorModel::cross_sectional(0.05, 0.4),
                estimator: EstimatorSpec::pooled(Family::Did),
                query: PowerQuery::default(),
                mde_target: Some(0.20),
            },
        },
    ]
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}
