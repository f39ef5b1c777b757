//! Minimum detectable effects, degrees of freedom and the required-cluster solver.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::design::{Estimand, EstimatorSpec, ErrorModel, Family, ValidatedDesign};
use crate::error::{Error, Result};
use crate::variance::{variance, VarianceBreakdown};

const QUANTILE_TOL: f64 = 1e-10;
const MAX_SOLVER_STEPS: usize = 100;
/// Above this df the incomplete-beta route drifts to ~1e-10 while the
/// Cornish-Fisher series is good to ~1e-13.
const LARGE_DF: f64 = 1e3;

pub const ITS_DF_WARNING: &str = "ITS_DF_ASSUMPTION: interrupted time series degrees of freedom count the \
parameters of the treatment-only trend model (4, 2 + A_k or 3 per timing group)";

/// Test size and power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerQuery {
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for PowerQuery {
    fn default() -> Self {
        Self { alpha: 0.05, lambda: 0.80 }
    }
}

impl PowerQuery {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("lambda", self.lambda)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

/// One step of the required-cluster iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverStep {
    pub iteration: usize,
    /// Candidate total cluster count `M` used at this step.
    pub clusters: f64,
    /// Absent on the starting step, which uses the normal approximation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PowerTarget {
    MdeGivenM,
    MGivenMde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub target: PowerTarget,
    /// MDE achieved by the reported design.
    pub mde: f64,
    /// Total cluster count of the reported design.
    #[serde(rename = "M")]
    pub clusters: f64,
    /// Continuous solution of the fixed-point equation (cluster solves only).
    #[serde(rename = "M_continuous", skip_serializing_if = "Option::is_none")]
    pub clusters_continuous: Option<f64>,
    /// Continuous solution rounded to the nearest integer; may fall just
    /// short of the target MDE.
    #[serde(rename = "M_nearest", skip_serializing_if = "Option::is_none")]
    pub clusters_nearest: Option<f64>,
    #[serde(rename = "M_T_k")]
    pub treatment_clusters: Vec<f64>,
    #[serde(rename = "M_C_k")]
    pub comparison_clusters: Vec<f64>,
    pub df: f64,
    pub factor: f64,
    pub query: PowerQuery,
    pub variance: VarianceBreakdown,
    pub solver_trace: Vec<SolverStep>,
    pub warnings: Vec<String>,
}

/// Quantile of the standard Student-t distribution with `df` degrees of freedom.
///
/// Starts from the inverse regularized incomplete beta and polishes with
/// Newton steps kept inside a bisection bracket.
pub fn inverse_student_t(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::POutOfRange(p));
    }
    if !(df > 0.0) || df.is_nan() {
        return Err(Error::NonpositiveDf(df));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if df > LARGE_DF {
        return Ok(large_df_quantile(p, df));
    }
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    // Work in the upper half and reflect.
    let (q, sign) = if p > 0.5 { (p, 1.0) } else { (1.0 - p, -1.0) };
    let upper = 1.0 - q;

    let mut lo = 0.0;
    let mut hi = 1.0;
    while dist.sf(hi) > upper {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NumericGuard(hi));
        }
    }

    let mut x = dist.inverse_cdf(q);
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        // Upper-tail residual is better conditioned than cdf - p near 1.
        let resid = upper - dist.sf(x);
        if resid > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let density = dist.pdf(x);
        let mut next = x + resid / density;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step < QUANTILE_TOL * 1e-3 || hi - lo < QUANTILE_TOL * 1e-3 {
            break;
        }
    }
    Ok(sign * x)
}

/// Cornish-Fisher expansion of the t quantile around the normal one, to 1/df^4.
fn large_df_quantile(p: f64, df: f64) -> f64 {
    let z = normal_quantile(p);
    if df.is_infinite() {
        return z;
    }
    let z2 = z * z;
    let g1 = z * (z2 + 1.0) / 4.0;
    let g2 = z * ((5.0 * z2 + 16.0) * z2 + 3.0) / 96.0;
    let g3 = z * (((3.0 * z2 + 19.0) * z2 + 17.0) * z2 - 15.0) / 384.0;
    let g4 = z * ((((79.0 * z2 + 776.0) * z2 + 1482.0) * z2 - 1920.0) * z2 - 945.0) / 92160.0;
    z + g1 / df + g2 / (df * df) + g3 / df.powi(3) + g4 / df.powi(4)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// `T^-1(1 - alpha/2, df) + T^-1(lambda, df)`.
pub fn factor(alpha: f64, lambda: f64, df: f64) -> Result<f64> {
    PowerQuery { alpha, lambda }.validate()?;
    Ok(inverse_student_t(1.0 - alpha / 2.0, df)? + inverse_student_t(lambda, df)?)
}

/// Large-sample limit of [`factor`].
pub fn normal_factor(alpha: f64, lambda: f64) -> f64 {
    normal_quantile(1.0 - alpha / 2.0) + normal_quantile(lambda)
}

/// Residual degrees of freedom of the estimator's regression.
///
/// Cluster counts are used as stored, so fractional allocations give
/// fractional df.
pub fn degrees_of_freedom(design: &ValidatedDesign, est: &EstimatorSpec) -> Result<f64> {
    let included = design.included(est.estimand);
    let groups: Vec<usize> = (0..design.groups()).filter(|&g| included[g]).collect();
    if groups.is_empty() {
        return Err(Error::NoGroupIncluded(est.estimand.to_string()));
    }
    let p = design.periods() as f64;
    let k = groups.len() as f64;
    let m: f64 = groups
        .iter()
        .map(|&g| design.treatment_clusters(g) + design.comparison_clusters(g))
        .sum();
    let sum_a: f64 = groups.iter().map(|&g| design.post_lengths()[g] as f64).sum();
    let pooled = matches!(est.estimand, Estimand::Pooled);

    let df = match est.family {
        Family::Did if pooled => m * p - m - k * p - sum_a,
        Family::Did => m * p - m - k * p - k,
        Family::CitsFull => m * p - 8.0 * k,
        Family::CitsDiscrete => m * p - 4.0 * k - sum_a,
        Family::CitsCommonSlopes => m * p - 6.0 * k,
        Family::ItsFull => m * p - 4.0 * k,
        Family::ItsDiscrete => m * p - 2.0 * k - sum_a,
        Family::ItsCommonSlopes => m * p - 3.0 * k,
    };
    let df = df - est.covariates.map_or(0.0, |c| c.v as f64);
    if df <= 0.0 {
        return Err(Error::NonpositiveDf(df));
    }
    Ok(df)
}

fn common_checks(err: &ErrorModel, query: &PowerQuery) -> Result<()> {
    err.validate()?;
    query.validate()
}

fn warnings_for(est: &EstimatorSpec) -> Vec<String> {
    if est.family.is_its() {
        vec![ITS_DF_WARNING.to_string()]
    } else {
        Vec::new()
    }
}

fn evaluate_mde(design: &ValidatedDesign, err: &ErrorModel, est: &EstimatorSpec, query: &PowerQuery) -> Result<(f64, f64, f64, VarianceBreakdown)> {
    let v = variance(design, err, est)?;
    let df = degrees_of_freedom(design, est)?;
    let f = factor(query.alpha, query.lambda, df)?;
    Ok((f * v.total.sqrt(), df, f, v))
}

/// MDE of a design with fixed cluster counts.
pub fn mde(design: &ValidatedDesign, err: &ErrorModel, est: &EstimatorSpec, query: &PowerQuery) -> Result<PowerResult> {
    common_checks(err, query)?;
    let (mde, df, f, v) = evaluate_mde(design, err, est, query)?;
    Ok(PowerResult {
        target: PowerTarget::MdeGivenM,
        mde,
        clusters: design.total_clusters(),
        clusters_continuous: None,
        clusters_nearest: None,
        treatment_clusters: (0..design.groups()).map(|g| design.treatment_clusters(g)).collect(),
        comparison_clusters: (0..design.groups()).map(|g| design.comparison_clusters(g)).collect(),
        df,
        factor: f,
        query: *query,
        variance: v,
        solver_trace: Vec::new(),
        warnings: warnings_for(est),
    })
}

/// Continuous fixed point of `M = Factor(df(M))^2 V(M=1) / MDE^2` under the
/// design's treatment and group shares.
pub fn solve_continuous(
    design: &ValidatedDesign,
    err: &ErrorModel,
    est: &EstimatorSpec,
    target: f64,
    query: &PowerQuery,
) -> Result<(f64, Vec<SolverStep>)> {
    common_checks(err, query)?;
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::InvalidParameter(format!("target MDE {target} must be positive")));
    }
    let unit = variance(&design.with_total_clusters(1.0), err, est)?.total;
    let scale = unit / (target * target);

    let mut f = normal_factor(query.alpha, query.lambda);
    let mut m = f * f * scale;
    let mut trace = vec![SolverStep { iteration: 0, clusters: m, df: None, factor: f }];
    for iteration in 1..=MAX_SOLVER_STEPS {
        let df = degrees_of_freedom(&design.with_total_clusters(m), est)?;
        f = factor(query.alpha, query.lambda, df)?;
        let next = f * f * scale;
        trace.push(SolverStep { iteration, clusters: next, df: Some(df), factor: f });
        if (next - m).abs() <= 1e-9 * m.max(1.0) {
            return Ok((next, trace));
        }
        m = next;
    }
    Err(Error::NoConvergence(MAX_SOLVER_STEPS))
}

/// Smallest integer total cluster count whose MDE does not exceed `target`.
///
/// Clusters are allocated with the design's continuous shares; the
/// per-group counts reported are therefore not necessarily whole numbers.
pub fn required_clusters(
    design: &ValidatedDesign,
    err: &ErrorModel,
    est: &EstimatorSpec,
    target: f64,
    query: &PowerQuery,
) -> Result<PowerResult> {
    let (continuous, trace) = solve_continuous(design, err, est, target, query)?;

    let achieves = |n: f64| -> Result<bool> {
        match evaluate_mde(&design.with_total_clusters(n), err, est, query) {
            Ok((mde, ..)) => Ok(mde <= target),
            Err(Error::NonpositiveDf(_)) => Ok(false),
            Err(e) => Err(e),
        }
    };
    let mut n = (continuous - 1e-9).ceil().max(1.0);
    while !achieves(n)? {
        n += 1.0;
    }
    while n > 1.0 && achieves(n - 1.0)? {
        n -= 1.0;
    }

    let sized = design.with_total_clusters(n);
    let (mde, df, f, v) = evaluate_mde(&sized, err, est, query)?;
    Ok(PowerResult {
        target: PowerTarget::MGivenMde,
        mde,
        clusters: n,
        clusters_continuous: Some(continuous),
        clusters_nearest: Some(continuous.round().max(1.0)),
        treatment_clusters: (0..sized.groups()).map(|g| sized.treatment_clusters(g)).collect(),
        comparison_clusters: (0..sized.groups()).map(|g| sized.comparison_clusters(g)).collect(),
        df,
        factor: f,
        query: *query,
        variance: v,
        solver_trace: trace,
        warnings: warnings_for(est),
    })
}

/// Target MDE at which design effects are evaluated.
pub const DESIGN_EFFECT_MDE: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignEffect {
    pub ratio: f64,
    pub clusters: f64,
    pub reference_clusters: f64,
    pub mde: f64,
}

/// Ratio of the continuous cluster counts that designs `a` and `b` need to
/// reach the same MDE.
pub fn design_effect(
    design_a: &ValidatedDesign,
    design_b: &ValidatedDesign,
    err_a: &ErrorModel,
    err_b: &ErrorModel,
    est: &EstimatorSpec,
    query: &PowerQuery,
) -> Result<DesignEffect> {
    let est_a = EstimatorSpec { family: design_a.family(), ..est.clone() };
    let est_b = EstimatorSpec { family: design_b.family(), ..est.clone() };
    let (ma, _) = solve_continuous(design_a, err_a, &est_a, DESIGN_EFFECT_MDE, query)?;
    let (mb, _) = solve_continuous(design_b, err_b, &est_b, DESIGN_EFFECT_MDE, query)?;
    Ok(DesignEffect { ratio: ma / mb, clusters: ma, reference_clusters: mb, mde: DESIGN_EFFECT_MDE })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{validate_design, Covariates, DesignSpec};
    use approx::assert_abs_diff_eq;

    #[test]
    fn quantile_symmetry_and_errors() {
        assert_eq!(inverse_student_t(0.5, 7.0).unwrap(), 0.0);
        let up = inverse_student_t(0.9, 4.0).unwrap();
        let down = inverse_student_t(0.1, 4.0).unwrap();
        assert_abs_diff_eq!(up, -down, epsilon = 1e-12);
        assert_eq!(inverse_student_t(1.0, 4.0).unwrap_err().code(), "P_OUT_OF_RANGE");
        assert_eq!(inverse_student_t(0.0, 4.0).unwrap_err().code(), "P_OUT_OF_RANGE");
        assert_eq!(inverse_student_t(0.7, 0.0).unwrap_err().code(), "NONPOSITIVE_DF");
    }

    #[test]
    fn quantile_reference_values() {
        assert_abs_diff_eq!(inverse_student_t(0.975, 10.0).unwrap(), 2.2281388519862747, epsilon = 1e-10);
        assert_abs_diff_eq!(inverse_student_t(0.995, 3.0).unwrap(), 5.8409093097333573, epsilon = 1e-10);
        assert_abs_diff_eq!(inverse_student_t(0.9, 1.0).unwrap(), 3.0776835371752534, epsilon = 1e-10);
        assert_abs_diff_eq!(inverse_student_t(0.999, 2.0).unwrap(), 22.327124770119875, epsilon = 1e-9);
        assert_abs_diff_eq!(inverse_student_t(0.975, f64::INFINITY).unwrap(), 1.9599639845400542, epsilon = 1e-12);
        assert_abs_diff_eq!(inverse_student_t(0.8, f64::INFINITY).unwrap(), 0.8416212335729142, epsilon = 1e-12);
    }

    #[test]
    fn quantile_is_continuous_across_the_series_switch() {
        for p in [0.6, 0.8, 0.975, 0.995] {
            let below = inverse_student_t(p, LARGE_DF).unwrap();
            let above = inverse_student_t(p, LARGE_DF * (1.0 + 1e-12)).unwrap();
            assert_abs_diff_eq!(below, above, epsilon = 1e-10);
            assert_abs_diff_eq!(below, large_df_quantile(p, LARGE_DF), epsilon = 1e-10);
        }
    }

    #[test]
    fn factor_limits() {
        assert_abs_diff_eq!(normal_factor(0.05, 0.8), 2.8016, epsilon = 1e-4);
        assert_abs_diff_eq!(factor(0.05, 0.8, 1e9).unwrap(), 2.8016, epsilon = 1e-4);
        let crit = inverse_student_t(0.975, 30.0).unwrap();
        assert_abs_diff_eq!(factor(0.05, 0.5, 30.0).unwrap(), crit, epsilon = 1e-14);
        assert!(factor(0.05, 0.8, 20.0).unwrap() > factor(0.05, 0.8, 200.0).unwrap());
        assert_eq!(factor(0.0, 0.8, 20.0).unwrap_err().code(), "INVALID_PARAMETER");
    }

    #[test]
    fn df_rules() {
        let spec = DesignSpec::new(8, vec![6, 7, 8], vec![19.0, 20.0, 12.0], vec![10.0, 10.0, 8.0], 230.0);
        let d = validate_design(&spec, &EstimatorSpec::pooled(Family::Did)).unwrap();
        assert_eq!(degrees_of_freedom(&d, &EstimatorSpec::pooled(Family::Did)).unwrap(), 523.0);

        let spec = DesignSpec::balanced(8, vec![4, 5], 30.0, 100.0, false);
        let d = validate_design(&spec, &EstimatorSpec::pooled(Family::CitsFull)).unwrap();
        assert_eq!(degrees_of_freedom(&d, &EstimatorSpec::pooled(Family::CitsFull)).unwrap(), 224.0);
        let with_cov = EstimatorSpec::pooled(Family::CitsFull).with_covariates(Covariates { r2_yx: 0.3, r2_tx: 0.1, v: 3 });
        assert_eq!(degrees_of_freedom(&d, &with_cov).unwrap(), 221.0);

        let spec = DesignSpec::balanced(8, vec![4, 5], 15.0, 100.0, true);
        let d = validate_design(&spec, &EstimatorSpec::pooled(Family::ItsFull)).unwrap();
        assert_eq!(degrees_of_freedom(&d, &EstimatorSpec::pooled(Family::ItsFull)).unwrap(), 112.0);

        let spec = DesignSpec::new(8, vec![4, 6], vec![0.5, 0.5], vec![0.5, 0.5], 10.0);
        let d = validate_design(&spec, &EstimatorSpec::pooled(Family::CitsFull)).unwrap();
        let e = degrees_of_freedom(&d, &EstimatorSpec::pooled(Family::CitsFull)).unwrap_err();
        assert_eq!(e.code(), "NONPOSITIVE_DF");
    }

    #[test]
    fn point_in_time_df_counts_included_groups() {
        let spec = DesignSpec::balanced(8, vec![4, 6], 40.0, 100.0, false);
        let est = EstimatorSpec::new(Family::Did, Estimand::Exposure(4));
        let d = validate_design(&spec, &est).unwrap();
        // Only the first group has a fourth post-period: M_l = 20, K_l = 1.
        assert_eq!(degrees_of_freedom(&d, &est).unwrap(), 20.0 * 8.0 - 20.0 - 8.0 - 1.0);
    }

    #[test]
    fn zero_variance_gives_zero_mde() {
        let spec = DesignSpec::balanced(4, vec![3], 20.0, 10.0, false);
        let est = EstimatorSpec::pooled(Family::Did);
        let d = validate_design(&spec, &est).unwrap();
        // Perfectly persistent errors cancel in the pre/post contrast.
        let err = ErrorModel::longitudinal(0.5, 0.999_999_999_999, 0.999_999_999_999);
        let r = mde(&d, &err, &est, &PowerQuery::default()).unwrap();
        assert_abs_diff_eq!(r.mde, 0.0, epsilon = 1e-5);
    }

    #[test]
    fn identical_designs_have_unit_effect() {
        let spec = DesignSpec::balanced(8, vec![4, 6], 40.0, 100.0, false);
        let est = EstimatorSpec::pooled(Family::Did);
        let d = validate_design(&spec, &est).unwrap();
        let err = ErrorModel::cross_sectional(0.05, 0.4);
        let de = design_effect(&d, &d, &err, &err, &est, &PowerQuery::default()).unwrap();
        assert_abs_diff_eq!(de.ratio, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn its_results_carry_assumption_warning() {
        let spec = DesignSpec::balanced(12, vec![6, 8], 40.0, 100.0, true);
        let est = EstimatorSpec::pooled(Family::ItsFull);
        let d = validate_design(&spec, &est).unwrap();
        let r = mde(&d, &ErrorModel::cross_sectional(0.05, 0.4), &est, &PowerQuery::default()).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].starts_with("ITS_DF_ASSUMPTION"));
    }
}
