//! Closed-form sampling variances of the DID, CITS and ITS estimators.
//!
//! Each timing group `k` contributes
//!
//! ```text
//! V_k = c_k * (sigma_theta^2 * G_k(rho) + sigma_eps^2 / N * H_k)
//! ```
//!
//! where `c_k = 1/M_Tk + 1/M_Ck` (just `1/M_Tk` for ITS), `G_k` is the
//! dimensionless bracket of the estimator evaluated with the cluster-level
//! correlation kernel, and `H_k` is the matching bracket for the individual
//! errors: its uncorrelated form for cross-sectional panels and the same
//! bracket as `G_k` with `psi` in place of `rho` for longitudinal ones.
//!
//! Groups are combined as `sum_k w_k^2 V_k / (sum_k w_k)^2`, with `w_k = A_k`
//! for pooled estimands and `w_k = I(group k observed at the target period)`
//! for point-in-time estimands. All variances are in units of the total
//! outcome variance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autocorr::{
    basic_averages, point_in_time_pre_post, trend_weighted_terms, AutocorrTerms, CorrKernel, GroupWindow,
    PointAverages,
};
use crate::design::{
    time_geometry, Covariates, DesignKind, Estimand, EstimatorSpec, ErrorModel, TrendModel, ValidatedDesign,
};
use crate::error::{Error, Result};

const NUMERIC_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceBreakdown {
    /// Variance of the estimator.
    pub total: f64,
    /// Variance of each timing group's own estimator (before weighting).
    pub per_group: Vec<f64>,
    /// Aggregation weight of each group.
    pub weights: Vec<f64>,
    /// Named intermediate quantities: the two variance blocks and each group's
    /// bracket terms, keyed `k<group>.<name>`.
    pub terms: BTreeMap<String, f64>,
    /// Averaged cluster-level autocorrelations of each group.
    pub autocorr: Vec<AutocorrTerms>,
    /// Averaged individual-level autocorrelations (longitudinal designs only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub autocorr_psi: Vec<AutocorrTerms>,
    /// Covariate adjustment applied to `total` and the blocks (1 when none).
    pub covariate_factor: f64,
}

impl VarianceBreakdown {
    pub fn theta_block(&self) -> f64 {
        self.terms["sigma_theta2_block"]
    }

    pub fn eps_block(&self) -> f64 {
        self.terms["sigma_eps2_over_N_block"]
    }

    /// Recompute the total from `per_group` and `weights`.
    pub fn aggregate(&self) -> f64 {
        let wsum: f64 = self.weights.iter().sum();
        self.weights
            .iter()
            .zip(&self.per_group)
            .map(|(w, v)| w * w * v)
            .sum::<f64>()
            / (wsum * wsum)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Model {
    Did,
    Trend(TrendModel),
}

/// A bracket value with its named components.
struct Bracket {
    value: f64,
    terms: Vec<(&'static str, f64)>,
}

impl Bracket {
    fn plain(value: f64) -> Self {
        Self { value, terms: Vec::new() }
    }
}

fn did_pooled_bracket(win: &GroupWindow<'_>, kernel: CorrKernel) -> Bracket {
    let (a, b) = (win.post.len() as f64, win.pre.len() as f64);
    let avg = basic_averages(win, kernel);
    Bracket::plain(
        1.0 / a + 1.0 / b + (a - 1.0) / a * avg.rho_post + (b - 1.0) / b * avg.rho_pre - 2.0 * avg.rho_pre_post,
    )
}

fn did_point_bracket(win: &GroupWindow<'_>, kernel: CorrKernel, point: &PointAverages) -> Bracket {
    let b = win.pre.len() as f64;
    let avg = basic_averages(win, kernel);
    Bracket::plain(1.0 + 1.0 / b + (b - 1.0) / b * avg.rho_pre - 2.0 * point.rho_pre_post_at)
}

/// Pooled fully-interacted CITS: DID bracket plus the pre-trend forecast terms.
fn cits_pooled_bracket(win: &GroupWindow<'_>, kernel: CorrKernel) -> Result<Bracket> {
    let g = &win.geom;
    let b = win.pre.len() as f64;
    let t = trend_weighted_terms(win, kernel)?;
    let gap = g.mean_gap();
    let ss = g.ssqt_pre;
    let term1 = gap * gap * (1.0 / ss + (b - 1.0) * b * t.rho_pre1 / (ss * ss));
    let term2 = 2.0 * gap * b * t.rho_pre2 / ss;
    let term3 = 2.0 * gap * b * t.rho_pre_post1 / ss;
    let did = did_pooled_bracket(win, kernel).value;
    Ok(Bracket {
        value: did + term1 + term2 - term3,
        terms: vec![("did_bracket", did), ("Term1", term1), ("Term2", term2), ("Term3", term3)],
    })
}

/// Point-in-time fully-interacted CITS at calendar period `q`.
fn cits_point_bracket(win: &GroupWindow<'_>, kernel: CorrKernel, period: usize) -> Result<Bracket> {
    let g = &win.geom;
    let (a, b) = (win.post.len() as f64, win.pre.len() as f64);
    let t = trend_weighted_terms(win, kernel)?;
    let tq = win.post_time(period)?;
    let d_post = tq - g.mean_time_post;
    let d_pre = tq - g.mean_time_pre;
    let (ss_post, ss_pre) = (g.ssqt_post, g.ssqt_pre);

    let t1 = d_post * d_post * (1.0 / ss_post + (a - 1.0) * a * t.rho_post1 / (ss_post * ss_post));
    let t2 = d_pre * d_pre * (1.0 / ss_pre + (b - 1.0) * b * t.rho_pre1 / (ss_pre * ss_pre));
    let t3 = 2.0 * d_post * a * t.rho_post2 / ss_post;
    let t4 = 2.0 * d_pre * b * t.rho_pre2 / ss_pre;
    let t5 = 2.0 * d_post * a * t.rho_pre_post2 / ss_post;
    let t6 = 2.0 * d_pre * b * t.rho_pre_post3 / ss_pre;
    let t7 = 2.0 * d_pre * d_post * a * b * t.rho_pre_post4 / (ss_post * ss_pre);
    let did = did_pooled_bracket(win, kernel).value;
    Ok(Bracket {
        value: did + t1 + t2 + t3 + t4 - t5 - t6 - t7,
        terms: vec![
            ("did_bracket", did),
            ("Term1e", t1),
            ("Term2e", t2),
            ("Term3e", t3),
            ("Term4e", t4),
            ("Term5e", t5),
            ("Term6e", t6),
            ("Term7e", t7),
        ],
    })
}

/// Point-in-time CITS with discrete post-period indicators: the pooled
/// construction evaluated at a single post-period.
fn discrete_point_bracket(win: &GroupWindow<'_>, kernel: CorrKernel, point: &PointAverages) -> Result<Bracket> {
    let g = &win.geom;
    let b = win.pre.len() as f64;
    let t = trend_weighted_terms(win, kernel)?;
    let tq = win.post_time(point.period)?;
    let gap = tq - g.mean_time_pre;
    let ss = g.ssqt_pre;
    let term1 = gap * gap * (1.0 / ss + (b - 1.0) * b * t.rho_pre1 / (ss * ss));
    let term2 = 2.0 * gap * b * t.rho_pre2 / ss;
    let term3 = 2.0 * gap * b * point.rho_pre_post1_at / ss;
    let did = did_point_bracket(win, kernel, point).value;
    Ok(Bracket {
        value: did + term1 + term2 - term3,
        terms: vec![("did_bracket", did), ("Term1", term1), ("Term2", term2), ("Term3", term3)],
    })
}

/// Common-slopes CITS, including the `(1/A + 1/B)` multiplier.
fn common_slopes_bracket(win: &GroupWindow<'_>, kernel: CorrKernel) -> Result<Bracket> {
    let g = &win.geom;
    let (a, b) = (win.post.len() as f64, win.pre.len() as f64);
    let p = win.all.len() as f64;
    let t = trend_weighted_terms(win, kernel)?;
    let ss_within = g.ssqt_pre + g.ssqt_post;
    let ratio = g.ssqt_full / ss_within;
    let slope_gap = g.mean_gap() / ss_within;
    let inv = 1.0 / a + 1.0 / b;
    let t1 = ratio;
    let t2 = inv * p * (p - 1.0) * ratio * ratio * t.rho_full1;
    let t3 = 2.0 * p * (p - 1.0) * ratio * slope_gap * t.rho_full2;
    let t4 = a * b * (p - 1.0) * slope_gap * slope_gap * t.rho_full3;
    Ok(Bracket {
        value: inv * (t1 + t2 - t3 + t4),
        terms: vec![("Term1CS", t1), ("Term2CS", t2), ("Term3CS", t3), ("Term4CS", t4)],
    })
}

/// Individual-error bracket of a cross-sectional design, written out directly.
fn independent_bracket(win: &GroupWindow<'_>, model: Model, period: Option<usize>) -> Result<Bracket> {
    let g = &win.geom;
    let (a, b) = (win.post.len() as f64, win.pre.len() as f64);
    let out = match (model, period) {
        (Model::Did, None) => Bracket::plain(1.0 / a + 1.0 / b),
        (Model::Did, Some(_)) => Bracket::plain(1.0 + 1.0 / b),
        (Model::Trend(TrendModel::Full | TrendModel::Discrete), None) => {
            let gap = g.mean_gap();
            let term4 = gap * gap / g.ssqt_pre;
            Bracket { value: 1.0 / a + 1.0 / b + term4, terms: vec![("Term4", term4)] }
        }
        (Model::Trend(TrendModel::Full), Some(q)) => {
            let tq = win.post_time(q)?;
            let term8 = (tq - g.mean_time_post).powi(2) / g.ssqt_post;
            let term9 = (tq - g.mean_time_pre).powi(2) / g.ssqt_pre;
            Bracket { value: 1.0 / a + 1.0 / b + term8 + term9, terms: vec![("Term8e", term8), ("Term9e", term9)] }
        }
        (Model::Trend(TrendModel::Discrete), Some(q)) => {
            let tq = win.post_time(q)?;
            let term4 = (tq - g.mean_time_pre).powi(2) / g.ssqt_pre;
            Bracket { value: 1.0 + 1.0 / b + term4, terms: vec![("Term4", term4)] }
        }
        (Model::Trend(TrendModel::CommonSlopes), _) => {
            Bracket::plain((1.0 / a + 1.0 / b) * g.ssqt_full / (g.ssqt_pre + g.ssqt_post))
        }
    };
    Ok(out)
}

fn correlated_bracket(win: &GroupWindow<'_>, kernel: CorrKernel, model: Model, point: Option<&PointAverages>) -> Result<Bracket> {
    match (model, point) {
        (Model::Did, None) => Ok(did_pooled_bracket(win, kernel)),
        (Model::Did, Some(pt)) => Ok(did_point_bracket(win, kernel, pt)),
        (Model::Trend(TrendModel::Full | TrendModel::Discrete), None) => cits_pooled_bracket(win, kernel),
        (Model::Trend(TrendModel::Full), Some(pt)) => cits_point_bracket(win, kernel, pt.period),
        (Model::Trend(TrendModel::Discrete), Some(pt)) => discrete_point_bracket(win, kernel, pt),
        (Model::Trend(TrendModel::CommonSlopes), _) => common_slopes_bracket(win, kernel),
    }
}

fn autocorr_record(win: &GroupWindow<'_>, kernel: CorrKernel, model: Model, point: Option<PointAverages>) -> Result<AutocorrTerms> {
    let trend = match model {
        Model::Did => None,
        Model::Trend(_) => Some(trend_weighted_terms(win, kernel)?),
    };
    Ok(AutocorrTerms { group: win.group + 1, basic: basic_averages(win, kernel), point, trend })
}

fn evaluate(design: &ValidatedDesign, err: &ErrorModel, estimand: Estimand, its: bool, model: Model) -> Result<VarianceBreakdown> {
    err.validate()?;
    let theta_kernel = CorrKernel::new(err.rho, err.corr_structure);
    let eps_kernel = match err.design_kind {
        DesignKind::CrossSectional => None,
        DesignKind::Longitudinal => Some(CorrKernel::new(err.psi, err.corr_structure)),
    };
    theta_kernel.check_times(design.times())?;
    if let Some(k) = eps_kernel {
        k.check_times(design.times())?;
    }

    let included = design.included(estimand);
    if !included.iter().any(|&i| i) {
        return Err(Error::NoGroupIncluded(estimand.to_string()));
    }

    let sigma_theta2 = err.sigma_theta2();
    let sigma_eps2_n = err.sigma_eps2() / design.individuals();
    let geoms = time_geometry(design);

    let k = design.groups();
    let mut per_group = vec![0.0; k];
    let mut weights = vec![0.0; k];
    let mut theta_parts = vec![0.0; k];
    let mut eps_parts = vec![0.0; k];
    let mut terms = BTreeMap::new();
    let mut autocorr = Vec::with_capacity(k);
    let mut autocorr_psi = Vec::new();

    for g in 0..k {
        let win = GroupWindow::new(design, g, geoms[g]);
        let period = design.target_period(g, estimand);
        let point = period.map(|q| point_in_time_pre_post(&win, theta_kernel, q)).transpose()?;
        autocorr.push(autocorr_record(&win, theta_kernel, model, point)?);
        if let Some(ek) = eps_kernel {
            let ep = period.map(|q| point_in_time_pre_post(&win, ek, q)).transpose()?;
            autocorr_psi.push(autocorr_record(&win, ek, model, ep)?);
        }
        if !included[g] {
            continue;
        }

        weights[g] = match estimand {
            Estimand::Pooled => design.post_lengths()[g] as f64,
            _ => 1.0,
        };
        let cluster_factor = if its {
            1.0 / design.treatment_clusters(g)
        } else {
            1.0 / design.treatment_clusters(g) + 1.0 / design.comparison_clusters(g)
        };

        let theta = correlated_bracket(&win, theta_kernel, model, point.as_ref())?;
        let (eps, eps_suffix) = match eps_kernel {
            None => (independent_bracket(&win, model, period)?, ""),
            Some(ek) => {
                let ep = period.map(|q| point_in_time_pre_post(&win, ek, q)).transpose()?;
                (correlated_bracket(&win, ek, model, ep.as_ref())?, "_psi")
            }
        };

        let prefix = format!("k{}.", g + 1);
        terms.insert(format!("{prefix}cluster_factor"), cluster_factor);
        terms.insert(format!("{prefix}theta_bracket"), theta.value);
        terms.insert(format!("{prefix}eps_bracket"), eps.value);
        for (name, v) in &theta.terms {
            terms.insert(format!("{prefix}{name}"), *v);
        }
        for (name, v) in &eps.terms {
            terms.insert(format!("{prefix}{name}{eps_suffix}"), *v);
        }

        theta_parts[g] = cluster_factor * sigma_theta2 * theta.value;
        eps_parts[g] = cluster_factor * sigma_eps2_n * eps.value;
        per_group[g] = theta_parts[g] + eps_parts[g];
    }

    let wsum: f64 = weights.iter().sum();
    let combine = |parts: &[f64]| -> f64 {
        weights.iter().zip(parts).map(|(w, v)| w * w * v).sum::<f64>() / (wsum * wsum)
    };
    let theta_block = combine(&theta_parts);
    let eps_block = combine(&eps_parts);
    terms.insert("sigma_theta2_block".to_string(), theta_block);
    terms.insert("sigma_eps2_over_N_block".to_string(), eps_block);

    let total = guard(combine(&per_group))?;

    Ok(VarianceBreakdown {
        total,
        per_group,
        weights,
        terms,
        autocorr,
        autocorr_psi,
        covariate_factor: 1.0,
    })
}

fn guard(total: f64) -> Result<f64> {
    if !total.is_finite() || total < -NUMERIC_GUARD {
        return Err(Error::NumericGuard(total));
    }
    Ok(total.max(0.0))
}

/// Variance of the DID estimator (pooled, exposure-time or calendar-time).
pub fn var_did(design: &ValidatedDesign, err: &ErrorModel, estimand: Estimand) -> Result<VarianceBreakdown> {
    evaluate(design, err, estimand, false, Model::Did)
}

/// Variance of the fully-interacted CITS estimator, or of ITS when `its` is set.
pub fn var_cits_full(design: &ValidatedDesign, err: &ErrorModel, estimand: Estimand, its: bool) -> Result<VarianceBreakdown> {
    check_trend_periods(design)?;
    evaluate(design, err, estimand, its, Model::Trend(TrendModel::Full))
}

/// Variance of the CITS/ITS estimator with discrete post-period indicators.
/// The pooled variance coincides with the fully-interacted one.
pub fn var_cits_discrete(design: &ValidatedDesign, err: &ErrorModel, estimand: Estimand, its: bool) -> Result<VarianceBreakdown> {
    check_trend_periods(design)?;
    evaluate(design, err, estimand, its, Model::Trend(TrendModel::Discrete))
}

/// Variance of the common-slopes CITS/ITS estimator.
pub fn var_cits_common_slopes(design: &ValidatedDesign, err: &ErrorModel, estimand: Estimand, its: bool) -> Result<VarianceBreakdown> {
    check_trend_periods(design)?;
    evaluate(design, err, estimand, its, Model::Trend(TrendModel::CommonSlopes))
}

fn check_trend_periods(design: &ValidatedDesign) -> Result<()> {
    for g in 0..design.groups() {
        let (pre, post) = (design.pre_lengths()[g], design.post_lengths()[g]);
        if pre < 3 || post < 3 {
            return Err(Error::CitsTooFewPeriods { group: g + 1, pre, post });
        }
    }
    Ok(())
}

/// Scale a breakdown by the covariate adjustment `(1 - R2_YX) / (1 - R2_TX)`.
pub fn apply_covariates(v: VarianceBreakdown, cov: &Covariates) -> Result<VarianceBreakdown> {
    cov.validate()?;
    let f = cov.variance_factor();
    let mut out = v;
    out.total *= f;
    out.per_group.iter_mut().for_each(|x| *x *= f);
    for key in ["sigma_theta2_block", "sigma_eps2_over_N_block"] {
        if let Some(x) = out.terms.get_mut(key) {
            *x *= f;
        }
    }
    out.covariate_factor *= f;
    Ok(out)
}

/// Variance of whichever estimator `est` selects, covariate adjustment included.
pub fn variance(design: &ValidatedDesign, err: &ErrorModel, est: &EstimatorSpec) -> Result<VarianceBreakdown> {
    let its = est.family.is_its();
    let v = match est.family.trend_model() {
        None => var_did(design, err, est.estimand)?,
        Some(TrendModel::Full) => var_cits_full(design, err, est.estimand, its)?,
        Some(TrendModel::Discrete) => var_cits_discrete(design, err, est.estimand, its)?,
        Some(TrendModel::CommonSlopes) => var_cits_common_slopes(design, err, est.estimand, its)?,
    };
    match &est.covariates {
        Some(cov) => apply_covariates(v, cov),
        None => Ok(v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{validate_design, CorrStructure, DesignSpec, Family};
    use approx::assert_relative_eq;

    fn design(periods: usize, starts: Vec<usize>, mt: Vec<f64>, mc: Vec<f64>, n: f64, family: Family) -> ValidatedDesign {
        let spec = DesignSpec::new(periods, starts, mt, mc, n);
        validate_design(&spec, &EstimatorSpec::pooled(family)).unwrap()
    }

    #[test]
    fn did_without_autocorrelation_matches_simple_form() {
        let d = design(9, vec![4], vec![12.0], vec![7.0], 50.0, Family::Did);
        let err = ErrorModel::cross_sectional(0.1, 0.0);
        let v = var_did(&d, &err, Estimand::Pooled).unwrap();
        let expected = (1.0 / 12.0 + 1.0 / 7.0) * (1.0 / 6.0 + 1.0 / 3.0) * (0.1 + 0.9 / 50.0);
        assert_relative_eq!(v.total, expected, max_relative = 1e-12);
        assert_relative_eq!(v.per_group[0], expected, max_relative = 1e-12);
    }

    #[test]
    fn short_panel_reduction() {
        let d = design(2, vec![2], vec![10.0], vec![5.0], 20.0, Family::Did);
        let err = ErrorModel::cross_sectional(0.2, 0.6);
        let v = var_did(&d, &err, Estimand::Pooled).unwrap();
        let expected = (0.1 + 0.2) * (2.0 * 0.2 * (1.0 - 0.6) + 2.0 * 0.8 / 20.0);
        assert_relative_eq!(v.total, expected, max_relative = 1e-12);
    }

    #[test]
    fn aggregation_identity_holds() {
        let d = design(12, vec![4, 7, 9], vec![5.0, 8.0, 3.0], vec![4.0, 4.0, 6.0], 30.0, Family::CitsFull);
        let err = ErrorModel::cross_sectional(0.08, 0.45);
        for est in [Estimand::Pooled, Estimand::Exposure(2), Estimand::Calendar(10)] {
            for v in [
                var_did(&d, &err, est).unwrap(),
                var_cits_full(&d, &err, est, false).unwrap(),
                var_cits_discrete(&d, &err, est, false).unwrap(),
                var_cits_common_slopes(&d, &err, est, false).unwrap(),
            ] {
                assert_relative_eq!(v.total, v.aggregate(), max_relative = 1e-12);
                assert_relative_eq!(v.total, v.theta_block() + v.eps_block(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn excluded_groups_carry_zero_weight() {
        let d = design(8, vec![4, 6], vec![5.0, 5.0], vec![5.0, 5.0], 100.0, Family::CitsFull);
        let err = ErrorModel::cross_sectional(0.05, 0.4);
        let v = var_did(&d, &err, Estimand::Exposure(5)).unwrap();
        assert_eq!(v.weights, vec![1.0, 0.0]);
        assert_eq!(v.per_group[1], 0.0);
        assert_relative_eq!(v.total, v.per_group[0], max_relative = 1e-15);
    }

    #[test]
    fn covariate_factor() {
        let d = design(8, vec![4, 6], vec![5.0, 5.0], vec![5.0, 5.0], 100.0, Family::Did);
        let err = ErrorModel::cross_sectional(0.05, 0.4);
        let base = var_did(&d, &err, Estimand::Pooled).unwrap();
        let same = apply_covariates(base.clone(), &Covariates { r2_yx: 0.0, r2_tx: 0.0, v: 0 }).unwrap();
        assert_eq!(same.total, base.total);
        let eq = apply_covariates(base.clone(), &Covariates { r2_yx: 0.5, r2_tx: 0.5, v: 2 }).unwrap();
        assert_relative_eq!(eq.total, base.total, max_relative = 1e-15);
        let half = apply_covariates(base.clone(), &Covariates { r2_yx: 0.5, r2_tx: 0.0, v: 2 }).unwrap();
        assert_relative_eq!(half.total, 0.5 * base.total, max_relative = 1e-15);
        assert_relative_eq!(half.theta_block() + half.eps_block(), half.total, max_relative = 1e-12);
        let bad = apply_covariates(base, &Covariates { r2_yx: -0.1, r2_tx: 0.0, v: 1 });
        assert_eq!(bad.unwrap_err().code(), "R2_OUT_OF_RANGE");
    }

    #[test]
    fn its_drops_comparison_terms() {
        let d = design(8, vec![4, 6], vec![5.0, 5.0], vec![5.0, 5.0], 100.0, Family::CitsFull);
        let err = ErrorModel::cross_sectional(0.05, 0.4);
        let cits = var_cits_full(&d, &err, Estimand::Pooled, false).unwrap();
        let its = var_cits_full(&d, &err, Estimand::Pooled, true).unwrap();
        assert_relative_eq!(its.total * 2.0, cits.total, max_relative = 1e-12);
    }

    #[test]
    fn constant_structure_did_reduction() {
        let d = design(10, vec![4, 7], vec![6.0, 3.0], vec![2.0, 9.0], 40.0, Family::Did);
        let err = ErrorModel::longitudinal(0.1, 0.35, 0.2).with_structure(CorrStructure::Constant);
        let v = var_did(&d, &err, Estimand::Pooled).unwrap();
        for (g, (a, b, mt, mc)) in [(7.0, 3.0, 6.0, 2.0), (4.0, 6.0, 3.0, 9.0)].into_iter().enumerate() {
            let expected = (1.0 / mt + 1.0 / mc) * (1.0 / a + 1.0 / b) * (0.1 * 0.65 + 0.9 / 40.0 * 0.8);
            assert_relative_eq!(v.per_group[g], expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn terms_are_itemised() {
        let d = design(12, vec![6, 8], vec![5.0, 5.0], vec![5.0, 5.0], 100.0, Family::CitsFull);
        let err = ErrorModel::cross_sectional(0.05, 0.4);
        let v = var_cits_full(&d, &err, Estimand::Exposure(3), false).unwrap();
        for key in ["k1.Term1e", "k2.Term7e", "k1.Term8e", "k2.Term9e", "sigma_theta2_block"] {
            assert!(v.terms.contains_key(key), "missing {key}");
        }
        let cs = var_cits_common_slopes(&d, &err, Estimand::Pooled, false).unwrap();
        assert!(cs.terms.contains_key("k2.Term4CS"));
        assert!(cs.autocorr[0].trend.is_some());
    }

    #[test]
    fn numeric_guard() {
        assert_eq!(guard(-1e-12).unwrap(), 0.0);
        assert_eq!(guard(-1e-6).unwrap_err().code(), "NUMERIC_GUARD");
        assert!(guard(f64::NAN).is_err());
    }
}
