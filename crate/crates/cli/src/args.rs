use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use panelpower_core::design::{CorrStructure, Covariates, DesignKind, DesignSpec, Estimand, Family};
use panelpower_core::{preset, Error, Scenario};
use serde_json::Value;

use crate::CliError;

pub const DEFAULT_PRESET: &str = "table3-base";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Structure {
    Ar1,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    CrossSectional,
    Longitudinal,
}

/// Scenario source plus per-field overrides, applied in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct ScenarioArgs {
    /// Bundled preset to start from (default table3-base)
    #[arg(long, conflicts_with = "design_file")]
    pub preset: Option<String>,
    /// Scenario JSON, or any `--json` output of this tool
    #[arg(long, value_name = "PATH")]
    pub design_file: Option<PathBuf>,
    /// did, cits-full, cits-discrete, cits-common-slopes, its-full, its-discrete, its-common-slopes
    #[arg(long)]
    pub family: Option<String>,
    /// pooled, exposure:L or calendar:Q
    #[arg(long)]
    pub estimand: Option<String>,
    /// Number of periods; rebuilds a balanced allocation
    #[arg(long, value_name = "P")]
    pub periods: Option<usize>,
    /// Comma-separated start periods; rebuilds a balanced allocation
    #[arg(long, value_delimiter = ',', value_name = "S")]
    pub starts: Option<Vec<usize>>,
    /// Total clusters (treatment clusters for ITS), keeping allocation shares
    #[arg(long = "M", value_name = "M")]
    pub clusters: Option<f64>,
    /// Individuals per cluster per period
    #[arg(long = "N", value_name = "N")]
    pub individuals: Option<f64>,
    /// Target MDE in effect-size units
    #[arg(long)]
    pub mde: Option<f64>,
    #[arg(long)]
    pub icc: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Individual-level autocorrelation; implies a longitudinal design
    #[arg(long)]
    pub psi: Option<f64>,
    #[arg(long, value_enum)]
    pub structure: Option<Structure>,
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    #[arg(long)]
    pub r2yx: Option<f64>,
    #[arg(long)]
    pub r2tx: Option<f64>,
    /// Number of covariates (default 1 when an R-squared is given)
    #[arg(long)]
    pub v: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

impl ScenarioArgs {
    pub fn resolve(&self) -> Result<Scenario, CliError> {
        let mut s = match (&self.design_file, &self.preset) {
            (Some(path), _) => load_scenario(path)?,
            (None, name) => {
                let name = name.as_deref().unwrap_or(DEFAULT_PRESET);
                preset(name)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown preset '{name}'")))?
                    .scenario
            }
        };
        if let Some(f) = &self.family {
            s = s.with_family(f.parse::<Family>()?);
        }
        if self.periods.is_some() || self.starts.is_some() {
            let its = s.estimator.family.is_its();
            let total = if its { s.design.total_treatment() } else { s.design.total_clusters() };
            let periods = self.periods.unwrap_or(s.design.periods);
            let starts = self.starts.clone().unwrap_or_else(|| s.design.starts.clone());
            s.design = DesignSpec::balanced(periods, starts, total, s.design.individuals, its);
        }
        if let Some(m) = self.clusters {
            let total = s.design.total_clusters();
            if !(m > 0.0) {
                return Err(Error::InvalidParameter(format!("M = {m} must be positive")).into());
            }
            let scale = m / total;
            s.design.treatment_clusters.iter_mut().for_each(|x| *x *= scale);
            s.design.comparison_clusters.iter_mut().for_each(|x| *x *= scale);
        }
        if let Some(n) = self.individuals {
            s.design.individuals = n;
        }
        if let Some(e) = &self.estimand {
            s.estimator.estimand = e.parse::<Estimand>()?;
        }
        if let Some(v) = self.mde {
            s.mde_target = Some(v);
        }
        let err = &mut s.error;
        if let Some(v) = self.icc {
            err.icc = v;
        }
        if let Some(v) = self.rho {
            err.rho = v;
        }
        if let Some(v) = self.psi {
            err.psi = v;
            err.design_kind = DesignKind::Longitudinal;
        }
        match self.structure {
            Some(Structure::Ar1) => err.corr_structure = CorrStructure::Ar1,
            Some(Structure::Constant) => err.corr_structure = CorrStructure::Constant,
            None => {}
        }
        match self.kind {
            Some(Kind::CrossSectional) => err.design_kind = DesignKind::CrossSectional,
            Some(Kind::Longitudinal) => err.design_kind = DesignKind::Longitudinal,
            None => {}
        }
        if self.r2yx.is_some() || self.r2tx.is_some() || self.v.is_some() {
            let base = s.estimator.covariates.unwrap_or(Covariates { r2_yx: 0.0, r2_tx: 0.0, v: 1 });
            s.estimator.covariates = Some(Covariates {
                r2_yx: self.r2yx.unwrap_or(base.r2_yx),
                r2_tx: self.r2tx.unwrap_or(base.r2_tx),
                v: self.v.unwrap_or(base.v),
            });
        }
        if let Some(v) = self.alpha {
            s.query.alpha = v;
        }
        if let Some(v) = self.lambda {
            s.query.lambda = v;
        }
        Ok(s)
    }
}

/// Reads a bare scenario, or the scenario recorded in an output manifest.
pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Environment(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::invalid_json(path, e))?;
    let scenario = match value.pointer("/manifest/params/scenario") {
        Some(s) => s.clone(),
        None => value,
    };
    serde_json::from_value(scenario).map_err(|e| CliError::invalid_json(path, e))
}
