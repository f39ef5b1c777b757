//! Averaged autocorrelation terms.
//!
//! Every quantity here is an average of `corr(Time_a, Time_b)` over a set of
//! period pairs, optionally weighted by centred times. The same code evaluates
//! the cluster-level (`rho`) and individual-level (`psi`) families; only the
//! [`CorrKernel`] differs.

use serde::{Deserialize, Serialize};

use crate::design::{CorrStructure, TimeGeometry, ValidatedDesign};
use crate::error::{Error, Result};

/// Correlation between two measurements as a function of their time gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrKernel {
    pub rho: f64,
    pub structure: CorrStructure,
}

impl CorrKernel {
    pub fn new(rho: f64, structure: CorrStructure) -> Self {
        Self { rho, structure }
    }

    pub fn ar1(rho: f64) -> Self {
        Self::new(rho, CorrStructure::Ar1)
    }

    /// Kernel of uncorrelated errors.
    pub fn independent() -> Self {
        Self::ar1(0.0)
    }

    pub fn corr(&self, dt: f64) -> f64 {
        if dt == 0.0 {
            return 1.0;
        }
        match self.structure {
            // Negative coefficients only see whole gaps (see `check_times`);
            // rounding absorbs floating-point residue from shifted clocks.
            CorrStructure::Ar1 if self.rho < 0.0 => self.rho.powi(dt.abs().round() as i32),
            CorrStructure::Ar1 => self.rho.powf(dt.abs()),
            CorrStructure::Constant => self.rho,
        }
    }

    /// A negative AR(1) coefficient is only defined for whole-number gaps.
    pub fn check_times(&self, times: &[f64]) -> Result<()> {
        if self.structure == CorrStructure::Ar1 && self.rho < 0.0 {
            let fractional = times
                .windows(2)
                .any(|w| ((w[1] - w[0]) - (w[1] - w[0]).round()).abs() > 1e-12);
            if fractional {
                return Err(Error::InvalidParameter(format!(
                    "AR(1) coefficient {} is negative but measurement gaps are not whole numbers",
                    self.rho
                )));
            }
        }
        Ok(())
    }
}

/// Pre, post and full windows of one timing group with their centred-time geometry.
#[derive(Debug, Clone, Copy)]
pub struct GroupWindow<'a> {
    pub group: usize,
    pub start: usize,
    pub pre: &'a [f64],
    pub post: &'a [f64],
    pub all: &'a [f64],
    pub geom: TimeGeometry,
}

impl<'a> GroupWindow<'a> {
    pub fn new(design: &'a ValidatedDesign, group: usize, geom: TimeGeometry) -> Self {
        Self {
            group,
            start: design.start(group),
            pre: design.pre_times(group),
            post: design.post_times(group),
            all: design.times(),
            geom,
        }
    }

    fn b(&self) -> f64 {
        self.pre.len() as f64
    }

    fn a(&self) -> f64 {
        self.post.len() as f64
    }

    /// Elapsed time of a post-period label, or `NOT_POST_PERIOD`.
    pub fn post_time(&self, period: usize) -> Result<f64> {
        if period < self.start || period > self.all.len() {
            return Err(Error::NotPostPeriod { group: self.group + 1, period });
        }
        Ok(self.all[period - 1])
    }
}

/// Unweighted averages used by the DID variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasicAverages {
    pub rho_pre: f64,
    pub rho_post: f64,
    pub rho_pre_post: f64,
}

/// Averages tied to a single post-period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointAverages {
    pub period: usize,
    /// Mean correlation between the period and each pre-period.
    pub rho_pre_post_at: f64,
    /// Same average weighted by centred pre-period times.
    pub rho_pre_post1_at: f64,
}

/// Centred-time weighted averages used by the trendline estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendTerms {
    pub rho_pre1: f64,
    pub rho_pre2: f64,
    pub rho_pre_post1: f64,
    pub rho_post1: f64,
    pub rho_post2: f64,
    pub rho_pre_post2: f64,
    pub rho_pre_post3: f64,
    pub rho_pre_post4: f64,
    pub rho_full1: f64,
    pub rho_full2: f64,
    pub rho_full3: f64,
}

/// Average correlation over distinct ordered pairs `i < j`, weighted by `w(i, j)`.
fn pair_average(ts: &[f64], kernel: CorrKernel, w: impl Fn(usize, usize) -> f64) -> f64 {
    let n = ts.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += w(i, j) * kernel.corr(ts[j] - ts[i]);
        }
    }
    2.0 * sum / (n * (n - 1)) as f64
}

pub fn basic_averages(win: &GroupWindow<'_>, kernel: CorrKernel) -> BasicAverages {
    let rho_pre = pair_average(win.pre, kernel, |_, _| 1.0);
    let rho_post = pair_average(win.post, kernel, |_, _| 1.0);
    let cross: f64 = win
        .pre
        .iter()
        .flat_map(|&b| win.post.iter().map(move |&a| kernel.corr(a - b)))
        .sum();
    BasicAverages {
        rho_pre,
        rho_post,
        rho_pre_post: cross / (win.a() * win.b()),
    }
}

pub fn point_in_time_pre_post(win: &GroupWindow<'_>, kernel: CorrKernel, period: usize) -> Result<PointAverages> {
    let tq = win.post_time(period)?;
    let mean_pre = win.geom.mean_time_pre;
    let (mut plain, mut weighted) = (0.0, 0.0);
    for &b in win.pre {
        let c = kernel.corr(tq - b);
        plain += c;
        weighted += (b - mean_pre) * c;
    }
    Ok(PointAverages {
        period,
        rho_pre_post_at: plain / win.b(),
        rho_pre_post1_at: weighted / win.b(),
    })
}

pub fn trend_weighted_terms(win: &GroupWindow<'_>, kernel: CorrKernel) -> Result<TrendTerms> {
    if win.pre.len() < 2 {
        return Err(Error::DegeneratePeriod { group: win.group + 1, window: "pre", len: win.pre.len() });
    }
    if win.post.len() < 2 {
        return Err(Error::DegeneratePeriod { group: win.group + 1, window: "post", len: win.post.len() });
    }
    let g = &win.geom;
    let cpre: Vec<f64> = win.pre.iter().map(|t| t - g.mean_time_pre).collect();
    let cpost: Vec<f64> = win.post.iter().map(|t| t - g.mean_time_post).collect();
    let call: Vec<f64> = win.all.iter().map(|t| t - g.mean_time_full).collect();
    let b_len = win.pre.len();
    let post_ind: Vec<f64> = (0..win.all.len())
        .map(|p| if p >= b_len { 1.0 } else { 0.0 } - g.post_share)
        .collect();

    // Row-weighted full double sums (diagonal included).
    let row_sum = |ts: &[f64], weights: &[f64]| -> f64 {
        let mut s = 0.0;
        for (i, &ti) in ts.iter().enumerate() {
            for &tj in ts {
                s += weights[i] * kernel.corr(tj - ti);
            }
        }
        s
    };

    let (a, b) = (win.a(), win.b());
    let (mut pp1, mut pp2, mut pp4) = (0.0, 0.0, 0.0);
    for (i, &tb) in win.pre.iter().enumerate() {
        for (j, &tq) in win.post.iter().enumerate() {
            let c = kernel.corr(tq - tb);
            pp1 += cpre[i] * c;
            pp2 += cpost[j] * c;
            pp4 += cpost[j] * cpre[i] * c;
        }
    }
    let ab = a * b;

    let p = win.all.len();
    let mut full2 = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                full2 += call[i] * post_ind[j] * kernel.corr(win.all[j] - win.all[i]);
            }
        }
    }

    Ok(TrendTerms {
        rho_pre1: pair_average(win.pre, kernel, |i, j| cpre[i] * cpre[j]),
        rho_pre2: row_sum(win.pre, &cpre) / (b * b),
        rho_pre_post1: pp1 / ab,
        rho_post1: pair_average(win.post, kernel, |i, j| cpost[i] * cpost[j]),
        rho_post2: row_sum(win.post, &cpost) / (a * a),
        rho_pre_post2: pp2 / ab,
        rho_pre_post3: pp1 / ab,
        rho_pre_post4: pp4 / ab,
        rho_full1: pair_average(win.all, kernel, |i, j| post_ind[i] * post_ind[j]),
        rho_full2: full2 / (p * (p - 1)) as f64,
        rho_full3: pair_average(win.all, kernel, |i, j| call[i] * call[j]),
    })
}

/// All averaged terms of one timing group, as reported in variance breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrTerms {
    pub group: usize,
    #[serde(flatten)]
    pub basic: BasicAverages,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<PointAverages>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trend: Option<TrendTerms>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{time_geometry, validate_design, DesignSpec, EstimatorSpec, Family};
    use approx::assert_relative_eq;

    fn window_fixture(periods: usize, start: usize) -> ValidatedDesign {
        let spec = DesignSpec::new(periods, vec![start], vec![1.0], vec![1.0], 1.0);
        validate_design(&spec, &EstimatorSpec::pooled(Family::Did)).unwrap()
    }

    #[test]
    fn zero_autocorrelation_gives_zero_terms() {
        let d = window_fixture(8, 4);
        let win = GroupWindow::new(&d, 0, time_geometry(&d)[0]);
        let k = CorrKernel::ar1(0.0);
        let basic = basic_averages(&win, k);
        assert_eq!((basic.rho_pre, basic.rho_post, basic.rho_pre_post), (0.0, 0.0, 0.0));
        let t = trend_weighted_terms(&win, k).unwrap();
        for v in [t.rho_pre1, t.rho_pre2, t.rho_pre_post1, t.rho_post1, t.rho_post2, t.rho_pre_post4, t.rho_full1, t.rho_full2, t.rho_full3] {
            assert_eq!(v, 0.0);
        }
        assert_eq!(point_in_time_pre_post(&win, k, 6).unwrap().rho_pre_post_at, 0.0);
    }

    #[test]
    fn constant_structure_averages_to_itself() {
        let d = window_fixture(8, 4);
        let win = GroupWindow::new(&d, 0, time_geometry(&d)[0]);
        let basic = basic_averages(&win, CorrKernel::new(0.4, CorrStructure::Constant));
        assert_relative_eq!(basic.rho_pre, 0.4, epsilon = 1e-15);
        assert_relative_eq!(basic.rho_post, 0.4, epsilon = 1e-15);
        assert_relative_eq!(basic.rho_pre_post, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn enumerated_pre_period_average() {
        let d = window_fixture(8, 4);
        let win = GroupWindow::new(&d, 0, time_geometry(&d)[0]);
        let basic = basic_averages(&win, CorrKernel::ar1(0.5));
        // pairs (1,2), (1,3), (2,3) => (0.5 + 0.25 + 0.5) / 3
        assert_relative_eq!(basic.rho_pre, 1.25 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn point_in_time_decays_with_distance() {
        let d = window_fixture(8, 4);
        let win = GroupWindow::new(&d, 0, time_geometry(&d)[0]);
        let k = CorrKernel::ar1(0.5);
        let first = point_in_time_pre_post(&win, k, 4).unwrap();
        assert_relative_eq!(first.rho_pre_post_at, (0.125 + 0.25 + 0.5) / 3.0, epsilon = 1e-15);
        let last = point_in_time_pre_post(&win, k, 8).unwrap();
        assert_relative_eq!(last.rho_pre_post_at, (0.0078125 + 0.015625 + 0.03125) / 3.0, epsilon = 1e-15);
        assert_eq!(point_in_time_pre_post(&win, k, 3).unwrap_err().code(), "NOT_POST_PERIOD");
        assert_eq!(point_in_time_pre_post(&win, k, 9).unwrap_err().code(), "NOT_POST_PERIOD");
    }

    #[test]
    fn centred_pre_period_weights() {
        let d = window_fixture(6, 4);
        let win = GroupWindow::new(&d, 0, time_geometry(&d)[0]);
        let t = trend_weighted_terms(&win, CorrKernel::ar1(0.5)).unwrap();
        // centred times (-1, 0, 1): only the (1, 3) pair survives, -rho^2
        assert_relative_eq!(t.rho_pre1, -0.25 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_weights_vanish_for_even_spacing_or_constant_structure() {
        let d = window_fixture(12, 6);
        let win = GroupWindow::new(&d, 0, time_geometry(&d)[0]);
        for kernel in [CorrKernel::ar1(0.6), CorrKernel::new(0.6, CorrStructure::Constant)] {
            let t = trend_weighted_terms(&win, kernel).unwrap();
            assert!(t.rho_pre2.abs() < 1e-14);
            assert!(t.rho_post2.abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_windows_are_rejected() {
        let d = window_fixture(8, 2);
        let win = GroupWindow::new(&d, 0, time_geometry(&d)[0]);
        let err = trend_weighted_terms(&win, CorrKernel::ar1(0.3)).unwrap_err();
        assert_eq!(err.code(), "DEGENERATE_PERIOD");
        // unweighted averages fall back to zero for a single pre-period
        assert_eq!(basic_averages(&win, CorrKernel::ar1(0.3)).rho_pre, 0.0);
    }

    #[test]
    fn negative_rho_requires_whole_gaps() {
        let k = CorrKernel::ar1(-0.3);
        assert!(k.check_times(&[1.0, 2.0, 4.0]).is_ok());
        assert!(k.check_times(&[1.0, 2.5, 4.0]).is_err());
        assert_relative_eq!(k.corr(3.0), -0.027, epsilon = 1e-15);
    }
}
