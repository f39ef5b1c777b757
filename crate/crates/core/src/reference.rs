//! Published reference sample sizes and the staggering design-effect grid.
//!
//! The reference table lists total clusters (treatment clusters only for ITS)
//! needed for an MDE of 0.20 under the [`base_scenario`] assumptions, for two
//! equal timing groups. `None` marks cells where the trendline estimators
//! have fewer than three pre-periods.

use serde::Serialize;

use crate::design::{validate_design, CorrStructure, DesignSpec, ErrorModel, Estimand, EstimatorSpec, Family};
use crate::error::Result;
use crate::power::{design_effect, PowerQuery};
use crate::scenario::{base_scenario, Scenario};

pub const TARGET_MDE: f64 = 0.20;

/// Column order of the reference table.
pub const FAMILIES: [Family; 5] = [
    Family::Did,
    Family::CitsFull,
    Family::ItsFull,
    Family::CitsCommonSlopes,
    Family::ItsCommonSlopes,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Panel {
    PooledAr1,
    PooledConstant,
    PooledLongitudinal,
    Exposure1,
    Exposure3,
    Exposure5,
}

impl Panel {
    pub fn label(self) -> &'static str {
        match self {
            Panel::PooledAr1 => "pooled",
            Panel::PooledConstant => "pooled-constant",
            Panel::PooledLongitudinal => "pooled-longitudinal",
            Panel::Exposure1 => "exposure-1",
            Panel::Exposure3 => "exposure-3",
            Panel::Exposure5 => "exposure-5",
        }
    }

    pub fn error_model(self) -> ErrorModel {
        match self {
            Panel::PooledConstant => ErrorModel::cross_sectional(0.05, 0.4).with_structure(CorrStructure::Constant),
            Panel::PooledLongitudinal => ErrorModel::longitudinal(0.05, 0.4, 0.4),
            _ => ErrorModel::cross_sectional(0.05, 0.4),
        }
    }

    pub fn estimand(self) -> Estimand {
        match self {
            Panel::Exposure1 => Estimand::Exposure(1),
            Panel::Exposure3 => Estimand::Exposure(3),
            Panel::Exposure5 => Estimand::Exposure(5),
            _ => Estimand::Pooled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReferenceRow {
    pub panel: Panel,
    pub periods: usize,
    pub starts: [usize; 2],
    /// Published cluster counts in [`FAMILIES`] order.
    pub clusters: [Option<u32>; 5],
}

const NA5: [Option<u32>; 5] = [None; 5];

const fn row(panel: Panel, periods: usize, starts: [usize; 2], v: [u32; 5]) -> ReferenceRow {
    ReferenceRow { panel, periods, starts, clusters: [Some(v[0]), Some(v[1]), Some(v[2]), Some(v[3]), Some(v[4])] }
}

const fn did_only(panel: Panel, periods: usize, starts: [usize; 2], did: u32) -> ReferenceRow {
    let mut clusters = NA5;
    clusters[0] = Some(did);
    ReferenceRow { panel, periods, starts, clusters }
}

pub const REFERENCE_TABLE: [ReferenceRow; 32] = {
    use Panel::*;
    [
        did_only(PooledAr1, 8, [2, 4], 48),
        row(PooledAr1, 8, [4, 6], [37, 297, 74, 89, 22]),
        row(PooledAr1, 12, [4, 8], [32, 641, 160, 68, 17]),
        row(PooledAr1, 12, [6, 8], [27, 181, 45, 71, 18]),
        row(PooledAr1, 12, [6, 10], [31, 222, 56, 79, 20]),
        row(PooledAr1, 12, [8, 10], [29, 97, 24, 72, 18]),
        row(PooledAr1, 16, [8, 10], [21, 138, 35, 61, 15]),
        row(PooledConstant, 8, [4, 6], [18, 226, 57, 62, 16]),
        row(PooledConstant, 12, [6, 8], [11, 101, 25, 41, 10]),
        row(PooledLongitudinal, 12, [6, 8], [29, 187, 47, 73, 18]),
        row(PooledLongitudinal, 12, [6, 10], [34, 228, 57, 81, 20]),
        did_only(Exposure1, 8, [2, 4], 58),
        row(Exposure1, 8, [4, 6], [54, 95, 24, 83, 21]),
        row(Exposure1, 12, [4, 8], [53, 89, 22, 65, 16]),
        row(Exposure1, 12, [6, 8], [52, 74, 19, 70, 18]),
        row(Exposure1, 12, [6, 10], [52, 72, 18, 65, 16]),
        row(Exposure1, 12, [8, 10], [51, 67, 17, 65, 16]),
        row(Exposure1, 16, [8, 10], [51, 62, 16, 60, 15]),
        did_only(Exposure3, 8, [2, 4], 78),
        row(Exposure3, 8, [4, 6], [65, 268, 67, 83, 21]),
        row(Exposure3, 12, [4, 8], [63, 219, 55, 65, 16]),
        row(Exposure3, 12, [6, 8], [60, 127, 32, 70, 18]),
        row(Exposure3, 12, [6, 10], [59, 131, 33, 65, 16]),
        row(Exposure3, 12, [8, 10], [57, 106, 27, 65, 16]),
        row(Exposure3, 16, [8, 10], [57, 86, 22, 60, 15]),
        did_only(Exposure5, 8, [2, 4], 82),
        row(Exposure5, 8, [4, 6], [141, 1604, 401, 167, 42]),
        row(Exposure5, 12, [4, 8], [65, 474, 119, 65, 16]),
        row(Exposure5, 12, [6, 8], [61, 250, 63, 70, 18]),
        row(Exposure5, 12, [6, 10], [126, 591, 148, 139, 35]),
        row(Exposure5, 12, [8, 10], [118, 410, 103, 139, 35]),
        row(Exposure5, 16, [8, 10], [58, 141, 35, 60, 15]),
    ]
};

pub fn reference_scenario(row: &ReferenceRow, family: Family) -> Scenario {
    base_scenario(
        row.periods,
        row.starts.to_vec(),
        row.panel.error_model(),
        EstimatorSpec::new(family, row.panel.estimand()),
    )
}

/// Outcome of recomputing one reference cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellOutcome {
    pub panel: Panel,
    pub periods: usize,
    pub starts: [usize; 2],
    pub family: Family,
    pub expected: Option<u32>,
    /// Integer cluster count from the solver.
    pub computed: Option<f64>,
    pub continuous: Option<f64>,
    /// Error code when the design was rejected.
    pub error: Option<&'static str>,
    pub pass: bool,
}

/// Allowed gap between computed and published counts.
pub const CELL_TOLERANCE: f64 = 1.0;

pub fn reproduce_cell(row: &ReferenceRow, column: usize) -> CellOutcome {
    let family = FAMILIES[column];
    let expected = row.clusters[column];
    let result = reference_scenario(row, family).required_clusters(TARGET_MDE);
    let (computed, continuous, error) = match &result {
        Ok(r) => (Some(r.clusters), r.clusters_continuous, None),
        Err(e) => (None, None, Some(e.code())),
    };
    let pass = match (expected, &result) {
        (Some(v), Ok(r)) => (r.clusters - v as f64).abs() <= CELL_TOLERANCE,
        (None, Err(e)) => e.is_validation(),
        _ => false,
    };
    CellOutcome { panel: row.panel, periods: row.periods, starts: row.starts, family, expected, computed, continuous, error, pass }
}

pub fn reproduce_table() -> Vec<CellOutcome> {
    REFERENCE_TABLE
        .iter()
        .flat_map(|row| (0..FAMILIES.len()).map(move |c| reproduce_cell(row, c)))
        .collect()
}

/// Autocorrelations swept for the staggering design-effect grid.
pub const GRID_RHOS: [f64; 10] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
/// Start-period pairs swept for the staggering design-effect grid.
pub const GRID_STARTS: [(usize, usize); 4] = [(2, 4), (4, 6), (2, 6), (3, 5)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignEffectPoint {
    pub rho: f64,
    pub s1: usize,
    pub s2: usize,
    pub reference_start: usize,
    /// Two staggered groups with AR(1) errors vs one group with independent errors.
    pub staggered_ar1: f64,
    /// One group with AR(1) errors vs the same group with independent errors.
    pub ar1_only: f64,
}

/// Pooled DID design effects of staggering and AR(1) errors relative to a
/// single timing group starting at the rounded mean start with `rho = 0`.
/// Other settings follow [`base_scenario`].
pub fn design_effect_grid(periods: usize, rhos: &[f64], pairs: &[(usize, usize)]) -> Result<Vec<DesignEffectPoint>> {
    let est = EstimatorSpec::pooled(Family::Did);
    let query = PowerQuery::default();
    let independent = ErrorModel::cross_sectional(0.05, 0.0);
    let mut out = Vec::with_capacity(rhos.len() * pairs.len());
    for &(s1, s2) in pairs {
        let reference_start = ((s1 + s2) as f64 / 2.0).round() as usize;
        // Equal starts collapse to one group.
        let starts = if s1 == s2 { vec![s1] } else { vec![s1, s2] };
        let staggered = validate_design(&DesignSpec::balanced(periods, starts, 40.0, 100.0, false), &est)?;
        let single = validate_design(&DesignSpec::balanced(periods, vec![reference_start], 40.0, 100.0, false), &est)?;
        for &rho in rhos {
            let err = ErrorModel::cross_sectional(0.05, rho);
            let a = design_effect(&staggered, &single, &err, &independent, &est, &query)?;
            let b = design_effect(&single, &single, &err, &independent, &est, &query)?;
            out.push(DesignEffectPoint { rho, s1, s2, reference_start, staggered_ar1: a.ratio, ar1_only: b.ratio });
        }
    }
    Ok(out)
}
