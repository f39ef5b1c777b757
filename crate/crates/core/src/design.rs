//! Panel design description, error model, estimator selection and the derived
//! time geometry every variance formula is built from.
//!
//! Periods are labelled `1..=P`. Treatment start periods `S` are always period
//! labels; the elapsed measurement time of period `t` is `times[t - 1]`, which
//! defaults to `t` itself when no times are supplied.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The full panel design: periods, measurement times, timing groups and cluster
/// allocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// Total number of time periods.
    #[serde(rename = "P")]
    pub periods: usize,
    /// Elapsed calendar time of each measurement; `None` means `1, 2, ..., P`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Number of treatment timing groups.
    #[serde(rename = "K")]
    pub groups: usize,
    /// Treatment start period label of each timing group.
    #[serde(rename = "S")]
    pub starts: Vec<usize>,
    /// Treatment clusters per timing group.
    #[serde(rename = "M_T_k")]
    pub treatment_clusters: Vec<f64>,
    /// Matched comparison clusters per timing group (all zero for ITS).
    #[serde(rename = "M_C_k")]
    pub comparison_clusters: Vec<f64>,
    /// Individuals per cluster per period (an average for unbalanced panels).
    #[serde(rename = "N")]
    pub individuals: f64,
}

impl DesignSpec {
    /// Evenly spaced design with the given allocations.
    pub fn new(
        periods: usize,
        starts: Vec<usize>,
        treatment_clusters: Vec<f64>,
        comparison_clusters: Vec<f64>,
        individuals: f64,
    ) -> Self {
        Self {
            periods,
            times: None,
            groups: starts.len(),
            starts,
            treatment_clusters,
            comparison_clusters,
            individuals,
        }
    }

    /// Evenly spaced design with equal-size timing groups and an even split of
    /// `total` clusters between the treatment and comparison arms.
    ///
    /// When `its` is set every cluster is a treatment cluster.
    pub fn balanced(periods: usize, starts: Vec<usize>, total: f64, individuals: f64, its: bool) -> Self {
        let k = starts.len() as f64;
        let (mt, mc) = if its {
            (total / k, 0.0)
        } else {
            (total / (2.0 * k), total / (2.0 * k))
        };
        let n = starts.len();
        Self::new(periods, starts, vec![mt; n], vec![mc; n], individuals)
    }

    pub fn with_times(mut self, times: Vec<f64>) -> Self {
        self.times = Some(times);
        self
    }

    /// Measurement times, falling back to `1..=P`.
    pub fn resolved_times(&self) -> Vec<f64> {
        match &self.times {
            Some(t) => t.clone(),
            None => (1..=self.periods).map(|t| t as f64).collect(),
        }
    }

    pub fn total_treatment(&self) -> f64 {
        self.treatment_clusters.iter().sum()
    }

    pub fn total_comparison(&self) -> f64 {
        self.comparison_clusters.iter().sum()
    }

    pub fn total_clusters(&self) -> f64 {
        self.total_treatment() + self.total_comparison()
    }
}

/// Shape of the cluster-level (and, for longitudinal designs, individual-level)
/// correlation over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CorrStructure {
    /// Correlation decays as `rho^(time difference)`.
    Ar1,
    /// Every pair of distinct periods has correlation `rho`.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DesignKind {
    /// Fresh individuals are sampled every period.
    CrossSectional,
    /// The same individuals are followed over time.
    Longitudinal,
}

/// Variance decomposition and autocorrelation of the outcome errors, in units
/// of the total outcome variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    #[serde(rename = "ICC_theta")]
    pub icc: f64,
    pub corr_structure: CorrStructure,
    pub rho: f64,
    pub design_kind: DesignKind,
    #[serde(default)]
    pub psi: f64,
}

impl ErrorModel {
    pub fn cross_sectional(icc: f64, rho: f64) -> Self {
        Self {
            icc,
            corr_structure: CorrStructure::Ar1,
            rho,
            design_kind: DesignKind::CrossSectional,
            psi: 0.0,
        }
    }

    pub fn longitudinal(icc: f64, rho: f64, psi: f64) -> Self {
        Self {
            design_kind: DesignKind::Longitudinal,
            psi,
            ..Self::cross_sectional(icc, rho)
        }
    }

    pub fn with_structure(mut self, structure: CorrStructure) -> Self {
        self.corr_structure = structure;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.icc) {
            return Err(Error::InvalidParameter(format!("ICC_theta = {} must lie in [0, 1)", self.icc)));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("rho = {} must satisfy |rho| < 1", self.rho)));
        }
        if !(self.psi.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("psi = {} must satisfy |psi| < 1", self.psi)));
        }
        Ok(())
    }

    /// Cluster-time variance component.
    pub fn sigma_theta2(&self) -> f64 {
        self.icc
    }

    /// Individual-level variance component.
    pub fn sigma_eps2(&self) -> f64 {
        1.0 - self.icc
    }

    /// Individual-level autocorrelation actually in force (zero for
    /// cross-sectional designs).
    pub fn effective_psi(&self) -> f64 {
        match self.design_kind {
            DesignKind::CrossSectional => 0.0,
            DesignKind::Longitudinal => self.psi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    Did,
    CitsFull,
    CitsDiscrete,
    CitsCommonSlopes,
    ItsFull,
    ItsDiscrete,
    ItsCommonSlopes,
}

/// How the post-period of a trendline estimator is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrendModel {
    Full,
    Discrete,
    CommonSlopes,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Did,
        Family::CitsFull,
        Family::CitsDiscrete,
        Family::CitsCommonSlopes,
        Family::ItsFull,
        Family::ItsDiscrete,
        Family::ItsCommonSlopes,
    ];

    pub fn is_its(self) -> bool {
        matches!(self, Family::ItsFull | Family::ItsDiscrete | Family::ItsCommonSlopes)
    }

    /// Trendline model, or `None` for DID.
    pub fn trend_model(self) -> Option<TrendModel> {
        match self {
            Family::Did => None,
            Family::CitsFull | Family::ItsFull => Some(TrendModel::Full),
            Family::CitsDiscrete | Family::ItsDiscrete => Some(TrendModel::Discrete),
            Family::CitsCommonSlopes | Family::ItsCommonSlopes => Some(TrendModel::CommonSlopes),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Did => "did",
            Family::CitsFull => "cits-full",
            Family::CitsDiscrete => "cits-discrete",
            Family::CitsCommonSlopes => "cits-common-slopes",
            Family::ItsFull => "its-full",
            Family::ItsDiscrete => "its-discrete",
            Family::ItsCommonSlopes => "its-common-slopes",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let fam = match norm.as_str() {
            "did" => Family::Did,
            "cits-full" | "cits" => Family::CitsFull,
            "cits-discrete" => Family::CitsDiscrete,
            "cits-common-slopes" | "cits-cs" => Family::CitsCommonSlopes,
            "its-full" | "its" => Family::ItsFull,
            "its-discrete" => Family::ItsDiscrete,
            "its-common-slopes" | "its-cs" => Family::ItsCommonSlopes,
            _ => return Err(Error::InvalidParameter(format!("unknown estimator family '{s}'"))),
        };
        Ok(fam)
    }
}

/// Which aggregate of the group-by-period effects is targeted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Estimand {
    /// Average over every post-period of every timing group.
    Pooled,
    /// Effect after `l` periods of exposure, averaged over groups observed that long.
    Exposure(usize),
    /// Effect at calendar period `q`, averaged over groups treated by then.
    Calendar(usize),
}

impl std::fmt::Display for Estimand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimand::Pooled => write!(f, "pooled"),
            Estimand::Exposure(l) => write!(f, "exposure:{l}"),
            Estimand::Calendar(q) => write!(f, "calendar:{q}"),
        }
    }
}

impl std::str::FromStr for Estimand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "pooled" || s == "pool" {
            return Ok(Estimand::Pooled);
        }
        let (kind, value) = s
            .split_once([':', '='])
            .ok_or_else(|| Error::InvalidParameter(format!("cannot parse estimand '{s}'")))?;
        let value: usize = value
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("estimand period '{value}' is not a positive integer")))?;
        match kind {
            "exposure" | "l" => Ok(Estimand::Exposure(value)),
            "calendar" | "q" => Ok(Estimand::Calendar(value)),
            _ => Err(Error::InvalidParameter(format!("unknown estimand kind '{kind}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    #[serde(rename = "R2_YX")]
    pub r2_yx: f64,
    #[serde(rename = "R2_TX")]
    pub r2_tx: f64,
    /// Number of covariates.
    pub v: usize,
}

impl Covariates {
    pub fn validate(&self) -> Result<()> {
        for (name, r2) in [("R2_YX", self.r2_yx), ("R2_TX", self.r2_tx)] {
            if !(0.0..1.0).contains(&r2) {
                return Err(Error::R2OutOfRange(format!("{name} = {r2}")));
            }
        }
        Ok(())
    }

    /// Multiplicative variance adjustment `(1 - R2_YX) / (1 - R2_TX)`.
    pub fn variance_factor(&self) -> f64 {
        (1.0 - self.r2_yx) / (1.0 - self.r2_tx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub family: Family,
    pub estimand: Estimand,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Covariates>,
}

impl EstimatorSpec {
    pub fn new(family: Family, estimand: Estimand) -> Self {
        Self { family, estimand, covariates: None }
    }

    pub fn pooled(family: Family) -> Self {
        Self::new(family, Estimand::Pooled)
    }

    pub fn with_covariates(mut self, covariates: Covariates) -> Self {
        self.covariates = Some(covariates);
        self
    }
}

/// A design that passed validation for a particular estimator family, with the
/// derived period counts and allocation shares attached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedDesign {
    spec: DesignSpec,
    family: Family,
    times: Vec<f64>,
    #[serde(rename = "A")]
    post_lengths: Vec<usize>,
    #[serde(rename = "B")]
    pre_lengths: Vec<usize>,
    #[serde(rename = "r")]
    treatment_share: f64,
    #[serde(rename = "p_T")]
    treatment_group_shares: Vec<f64>,
    #[serde(rename = "p_C")]
    comparison_group_shares: Vec<f64>,
}

/// Check a design against the ranges required by the estimator and attach the
/// derived quantities.
pub fn validate_design(spec: &DesignSpec, est: &EstimatorSpec) -> Result<ValidatedDesign> {
    let p = spec.periods;
    let k = spec.starts.len();
    if k == 0 || spec.groups != k {
        return Err(Error::InvalidParameter(format!(
            "K = {} but {} treatment start periods were given",
            spec.groups, k
        )));
    }
    if spec.treatment_clusters.len() != k || spec.comparison_clusters.len() != k {
        return Err(Error::InvalidParameter(format!(
            "M_T_k and M_C_k must each have K = {k} entries"
        )));
    }
    if p < 2 {
        return Err(Error::PeriodRange(format!("P = {p}; at least 2 periods are required")));
    }

    let times = spec.resolved_times();
    if times.len() != p {
        return Err(Error::NonMonotoneTimes(format!("{} times given for P = {p}", times.len())));
    }
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::NonMonotoneTimes(format!("{times:?}")));
    }

    for (i, &s) in spec.starts.iter().enumerate() {
        if s < 2 || s > p {
            return Err(Error::PeriodRange(format!("S_{} = {s} must lie in 2..={p}", i + 1)));
        }
    }
    if spec.starts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::PeriodRange(format!(
            "start periods {:?} must be strictly increasing",
            spec.starts
        )));
    }

    if !spec.individuals.is_finite() || spec.individuals < 1.0 {
        return Err(Error::InvalidParameter(format!("N = {} must be at least 1", spec.individuals)));
    }

    let its = est.family.is_its();
    for g in 0..k {
        let mt = spec.treatment_clusters[g];
        let mc = spec.comparison_clusters[g];
        if !mt.is_finite() || mt <= 0.0 {
            return Err(Error::EmptyGroup { group: g + 1, arm: "treatment" });
        }
        if !mc.is_finite() || mc < 0.0 {
            return Err(Error::InvalidParameter(format!("M_C_{} = {mc} must be non-negative", g + 1)));
        }
        if its && mc > 0.0 {
            return Err(Error::ItsWithComparisons(g + 1));
        }
        if !its && mc <= 0.0 {
            return Err(Error::EmptyGroup { group: g + 1, arm: "comparison" });
        }
    }

    let pre_lengths: Vec<usize> = spec.starts.iter().map(|&s| s - 1).collect();
    let post_lengths: Vec<usize> = spec.starts.iter().map(|&s| p - s + 1).collect();

    if est.family.trend_model().is_some() {
        for g in 0..k {
            if pre_lengths[g] < 3 || post_lengths[g] < 3 {
                return Err(Error::CitsTooFewPeriods {
                    group: g + 1,
                    pre: pre_lengths[g],
                    post: post_lengths[g],
                });
            }
        }
    }

    match est.estimand {
        Estimand::Pooled => {}
        Estimand::Exposure(l) => {
            let max_a = *post_lengths.iter().max().expect("K >= 1");
            if l == 0 || l > max_a {
                return Err(Error::NoGroupIncluded(format!(
                    "exposure l = {l} (longest post-period is {max_a})"
                )));
            }
        }
        Estimand::Calendar(q) => {
            let min_s = *spec.starts.iter().min().expect("K >= 1");
            if q < min_s || q > p {
                return Err(Error::NoGroupIncluded(format!(
                    "calendar period q = {q} (valid range {min_s}..={p})"
                )));
            }
        }
    }

    if let Some(cov) = &est.covariates {
        cov.validate()?;
    }

    let mt = spec.total_treatment();
    let mc = spec.total_comparison();
    let total = mt + mc;
    let treatment_group_shares = spec.treatment_clusters.iter().map(|m| m / mt).collect();
    let comparison_group_shares = if mc > 0.0 {
        spec.comparison_clusters.iter().map(|m| m / mc).collect()
    } else {
        vec![0.0; k]
    };

    Ok(ValidatedDesign {
        spec: spec.clone(),
        family: est.family,
        times,
        post_lengths,
        pre_lengths,
        treatment_share: mt / total,
        treatment_group_shares,
        comparison_group_shares,
    })
}

impl ValidatedDesign {
    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn periods(&self) -> usize {
        self.spec.periods
    }

    pub fn groups(&self) -> usize {
        self.spec.starts.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn start(&self, group: usize) -> usize {
        self.spec.starts[group]
    }

    /// `A_k`, the number of post-periods of each group.
    pub fn post_lengths(&self) -> &[usize] {
        &self.post_lengths
    }

    /// `B_k`, the number of pre-periods of each group.
    pub fn pre_lengths(&self) -> &[usize] {
        &self.pre_lengths
    }

    pub fn pre_times(&self, group: usize) -> &[f64] {
        &self.times[..self.pre_lengths[group]]
    }

    pub fn post_times(&self, group: usize) -> &[f64] {
        &self.times[self.pre_lengths[group]..]
    }

    pub fn treatment_clusters(&self, group: usize) -> f64 {
        self.spec.treatment_clusters[group]
    }

    pub fn comparison_clusters(&self, group: usize) -> f64 {
        self.spec.comparison_clusters[group]
    }

    pub fn total_clusters(&self) -> f64 {
        self.spec.total_clusters()
    }

    pub fn individuals(&self) -> f64 {
        self.spec.individuals
    }

    /// `r = M_T / M`.
    pub fn treatment_share(&self) -> f64 {
        self.treatment_share
    }

    pub fn treatment_group_shares(&self) -> &[f64] {
        &self.treatment_group_shares
    }

    pub fn comparison_group_shares(&self) -> &[f64] {
        &self.comparison_group_shares
    }

    /// Same design with `total` clusters allocated according to the stored
    /// shares: `M_Tk = r p_Tk M` and `M_Ck = (1 - r) p_Ck M`.
    pub fn with_total_clusters(&self, total: f64) -> ValidatedDesign {
        let r = self.treatment_share;
        let mut out = self.clone();
        out.spec.treatment_clusters = self
            .treatment_group_shares
            .iter()
            .map(|p| r * p * total)
            .collect();
        out.spec.comparison_clusters = self
            .comparison_group_shares
            .iter()
            .map(|p| (1.0 - r) * p * total)
            .collect();
        out
    }

    /// Groups that contribute to the estimand.
    pub fn included(&self, estimand: Estimand) -> Vec<bool> {
        (0..self.groups())
            .map(|g| match estimand {
                Estimand::Pooled => true,
                Estimand::Exposure(l) => l >= 1 && l <= self.post_lengths[g],
                Estimand::Calendar(q) => q >= self.spec.starts[g] && q <= self.spec.periods,
            })
            .collect()
    }

    /// Calendar period label at which a point-in-time estimand is evaluated for
    /// `group`, or `None` for the pooled estimand or an excluded group.
    pub fn target_period(&self, group: usize, estimand: Estimand) -> Option<usize> {
        if !self.included(estimand)[group] {
            return None;
        }
        match estimand {
            Estimand::Pooled => None,
            Estimand::Exposure(l) => Some(l + self.spec.starts[group] - 1),
            Estimand::Calendar(q) => Some(q),
        }
    }
}

/// Centred-time summaries of one timing group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGeometry {
    pub mean_time_pre: f64,
    pub mean_time_post: f64,
    pub mean_time_full: f64,
    #[serde(rename = "SSQT_pre")]
    pub ssqt_pre: f64,
    #[serde(rename = "SSQT_post")]
    pub ssqt_post: f64,
    #[serde(rename = "SSQT_full")]
    pub ssqt_full: f64,
    /// Share of all periods that are post-periods, `A_k / P`.
    pub post_share: f64,
}

impl TimeGeometry {
    /// Distance between the post- and pre-period mean times.
    pub fn mean_gap(&self) -> f64 {
        self.mean_time_post - self.mean_time_pre
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn centred_ssq(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

pub fn time_geometry(design: &ValidatedDesign) -> Vec<TimeGeometry> {
    let all = design.times();
    let mean_time_full = mean(all);
    let ssqt_full = centred_ssq(all);
    (0..design.groups())
        .map(|g| {
            let pre = design.pre_times(g);
            let post = design.post_times(g);
            TimeGeometry {
                mean_time_pre: mean(pre),
                mean_time_post: mean(post),
                mean_time_full,
                ssqt_pre: centred_ssq(pre),
                ssqt_post: centred_ssq(post),
                ssqt_full,
                post_share: post.len() as f64 / all.len() as f64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn did() -> EstimatorSpec {
        EstimatorSpec::pooled(Family::Did)
    }

    #[test]
    fn running_example_is_valid() {
        let spec = DesignSpec::new(8, vec![6, 7, 8], vec![19.0, 20.0, 12.0], vec![10.0, 10.0, 8.0], 230.0);
        let v = validate_design(&spec, &did()).unwrap();
        assert_eq!(v.pre_lengths(), &[5, 6, 7]);
        assert_eq!(v.post_lengths(), &[3, 2, 1]);
        assert_relative_eq!(v.treatment_share(), 51.0 / 79.0);
        assert_relative_eq!(v.treatment_group_shares()[0], 19.0 / 51.0);
        assert_relative_eq!(v.comparison_group_shares()[2], 8.0 / 28.0);
    }

    #[test]
    fn trend_family_needs_three_pre_periods() {
        let spec = DesignSpec::balanced(8, vec![2, 4], 40.0, 100.0, false);
        let err = validate_design(&spec, &EstimatorSpec::pooled(Family::CitsFull)).unwrap_err();
        assert_eq!(err.code(), "CITS_TOO_FEW_PERIODS");
    }

    #[test]
    fn minimal_did_design() {
        let spec = DesignSpec::new(2, vec![2], vec![1.0], vec![1.0], 1.0);
        let v = validate_design(&spec, &did()).unwrap();
        assert_eq!(v.pre_lengths(), &[1]);
        assert_eq!(v.post_lengths(), &[1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let base = DesignSpec::balanced(8, vec![4, 6], 40.0, 100.0, false);

        let mut s = base.clone();
        s.starts = vec![1, 6];
        assert_eq!(validate_design(&s, &did()).unwrap_err().code(), "PERIOD_RANGE");

        let mut s = base.clone();
        s.starts = vec![6, 4];
        assert_eq!(validate_design(&s, &did()).unwrap_err().code(), "PERIOD_RANGE");

        let s = base.clone().with_times(vec![1.0, 2.0, 3.0, 3.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(validate_design(&s, &did()).unwrap_err().code(), "NON_MONOTONE_TIMES");

        let mut s = base.clone();
        s.treatment_clusters[1] = 0.0;
        assert_eq!(validate_design(&s, &did()).unwrap_err().code(), "EMPTY_GROUP");

        let its = EstimatorSpec::pooled(Family::ItsFull);
        assert_eq!(validate_design(&base, &its).unwrap_err().code(), "ITS_WITH_COMPARISONS");
        let its_design = DesignSpec::balanced(8, vec![4, 6], 20.0, 100.0, true);
        let err = validate_design(&its_design, &EstimatorSpec::pooled(Family::CitsFull)).unwrap_err();
        assert_eq!(err.code(), "EMPTY_GROUP");
        assert!(validate_design(&its_design, &its).is_ok());

        let cov = Covariates { r2_yx: 1.0, r2_tx: 0.0, v: 1 };
        let est = did().with_covariates(cov);
        assert_eq!(validate_design(&base, &est).unwrap_err().code(), "R2_OUT_OF_RANGE");

        let est = EstimatorSpec::new(Family::Did, Estimand::Exposure(6));
        assert_eq!(validate_design(&base, &est).unwrap_err().code(), "NO_GROUP_INCLUDED");
        let est = EstimatorSpec::new(Family::Did, Estimand::Calendar(3));
        assert_eq!(validate_design(&base, &est).unwrap_err().code(), "NO_GROUP_INCLUDED");
    }

    #[test]
    fn geometry_of_even_spacing() {
        let spec = DesignSpec::new(8, vec![4], vec![1.0], vec![1.0], 1.0);
        let v = validate_design(&spec, &did()).unwrap();
        let g = time_geometry(&v)[0];
        assert_relative_eq!(g.mean_time_pre, 2.0);
        assert_relative_eq!(g.ssqt_pre, 2.0);
        assert_relative_eq!(g.mean_time_post, 6.0);
        assert_relative_eq!(g.ssqt_post, 10.0);
        assert_relative_eq!(g.ssqt_full, 42.0);
        assert_relative_eq!(g.mean_time_full, 4.5);
        assert_relative_eq!(g.post_share, 5.0 / 8.0);
    }

    #[test]
    fn single_pre_period_has_no_spread() {
        let spec = DesignSpec::new(5, vec![2], vec![1.0], vec![1.0], 1.0);
        let v = validate_design(&spec, &did()).unwrap();
        assert_eq!(time_geometry(&v)[0].ssqt_pre, 0.0);
    }

    #[test]
    fn rescaling_keeps_shares() {
        let spec = DesignSpec::new(8, vec![4, 6], vec![3.0, 1.0], vec![2.0, 2.0], 50.0);
        let v = validate_design(&spec, &did()).unwrap();
        let w = v.with_total_clusters(80.0);
        assert_relative_eq!(w.total_clusters(), 80.0);
        assert_relative_eq!(w.treatment_clusters(0), 30.0);
        assert_relative_eq!(w.comparison_clusters(1), 20.0);
    }

    #[test]
    fn json_uses_published_field_names() {
        let spec = DesignSpec::balanced(8, vec![4, 6], 4.0, 100.0, false);
        let json = serde_json::to_value(&spec).unwrap();
        for key in ["P", "K", "S", "M_T_k", "M_C_k", "N"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        let est = EstimatorSpec::new(Family::CitsCommonSlopes, Estimand::Exposure(3));
        let json = serde_json::to_string(&est).unwrap();
        assert_eq!(json, r#"{"family":"CITS_COMMON_SLOPES","estimand":{"EXPOSURE":3}}"#);
        let err: ErrorModel = serde_json::from_str(
            r#"{"ICC_theta":0.05,"corr_structure":"AR1","rho":0.4,"design_kind":"CROSS_SECTIONAL"}"#,
        )
        .unwrap();
        assert_eq!(err, ErrorModel::cross_sectional(0.05, 0.4));
    }

    #[test]
    fn parses_cli_spellings() {
        assert_eq!("pooled".parse::<Estimand>().unwrap(), Estimand::Pooled);
        assert_eq!("exposure:3".parse::<Estimand>().unwrap(), Estimand::Exposure(3));
        assert_eq!("calendar=7".parse::<Estimand>().unwrap(), Estimand::Calendar(7));
        assert_eq!("cits-cs".parse::<Family>().unwrap(), Family::CitsCommonSlopes);
        assert!("bogus".parse::<Family>().is_err());
    }
}
