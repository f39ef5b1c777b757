//! Monte Carlo check of the closed-form variances.
//!
//! Panels are drawn from the cluster-time error model with all fixed effects
//! and the true treatment effect set to zero, the DID or trendline estimator
//! is computed on each replication, and the spread of the estimates is
//! compared with [`crate::variance::variance`].
//!
//! Random numbers come from ChaCha8 seeded with the run seed, one stream per
//! (replication, cluster): `stream = replication << 24 | cluster`. Clusters
//! are numbered group by group, treatment clusters before comparison
//! clusters. Within a cluster the cluster-level series is drawn first, then
//! the individual errors (individual-major, then period). Parallel and serial
//! runs therefore produce identical panels.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{
    mean, validate_design, CorrStructure, DesignKind, DesignSpec, Estimand, EstimatorSpec, ErrorModel, Family,
    TrendModel, ValidatedDesign,
};
use crate::autocorr::CorrKernel;
use crate::error::{Error, Result};
use crate::variance::variance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub spec: DesignSpec,
    pub err: ErrorModel,
    pub replications: usize,
    pub seed: u64,
    /// Draw cell means directly instead of individual outcomes.
    #[serde(default = "default_true")]
    pub aggregate_to_cluster: bool,
}

fn default_true() -> bool {
    true
}

impl SimConfig {
    pub fn new(spec: DesignSpec, err: ErrorModel, replications: usize, seed: u64) -> Self {
        Self { spec, err, replications, seed, aggregate_to_cluster: true }
    }

    pub fn individual_level(mut self) -> Self {
        self.aggregate_to_cluster = false;
        self
    }

    fn check(&self) -> Result<()> {
        self.err.validate()?;
        if self.replications < 2 {
            return Err(Error::InvalidParameter(format!("replications = {} must be at least 2", self.replications)));
        }
        let counts = self.spec.treatment_clusters.iter().chain(&self.spec.comparison_clusters);
        if counts.clone().any(|m| m.fract() != 0.0 || *m < 0.0) {
            return Err(Error::InvalidParameter("simulation needs whole cluster counts".into()));
        }
        if self.spec.individuals.fract() != 0.0 {
            return Err(Error::InvalidParameter("simulation needs a whole number of individuals per cell".into()));
        }
        if self.err.corr_structure == CorrStructure::Constant && (self.err.rho < 0.0 || self.err.effective_psi() < 0.0) {
            return Err(Error::InvalidParameter("constant-correlation simulation needs non-negative correlations".into()));
        }
        let times = self.spec.resolved_times();
        CorrKernel::new(self.err.rho, self.err.corr_structure).check_times(&times)?;
        CorrKernel::new(self.err.effective_psi(), self.err.corr_structure).check_times(&times)
    }
}

/// One cluster's simulated series.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSeries {
    pub group: usize,
    pub treated: bool,
    /// Cluster-level error per period.
    pub theta: Vec<f64>,
    /// Cell mean outcome per period.
    pub outcome: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPanel {
    pub times: Vec<f64>,
    pub clusters: Vec<ClusterSeries>,
}

impl SimPanel {
    /// Add `delta` to every treated post-period cell.
    pub fn inject_effect(&mut self, design: &ValidatedDesign, delta: f64) {
        for c in self.clusters.iter_mut().filter(|c| c.treated) {
            let start = design.start(c.group);
            for y in &mut c.outcome[start - 1..] {
                *y += delta;
            }
        }
    }

    /// Add `intercept + slope * time` to every cell.
    pub fn inject_trend(&mut self, intercept: f64, slope: f64) {
        for c in &mut self.clusters {
            for (y, t) in c.outcome.iter_mut().zip(&self.times) {
                *y += intercept + slope * t;
            }
        }
    }

    /// Period-by-period mean outcome of one arm of one group.
    fn arm_means(&self, group: usize, treated: bool) -> Vec<f64> {
        let mut sum = vec![0.0; self.times.len()];
        let mut n = 0usize;
        for c in self.clusters.iter().filter(|c| c.group == group && c.treated == treated) {
            for (s, y) in sum.iter_mut().zip(&c.outcome) {
                *s += y;
            }
            n += 1;
        }
        sum.iter().map(|s| s / n as f64).collect()
    }
}

fn stream_rng(seed: u64, rep: usize, cluster: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((rep as u64) << 24) | cluster as u64);
    rng
}

/// Stationary series with marginal variance `var` and correlation `corr`.
fn draw_series(rng: &mut ChaCha8Rng, times: &[f64], var: f64, corr: f64, structure: CorrStructure) -> Vec<f64> {
    let sd = var.sqrt();
    match structure {
        CorrStructure::Ar1 => {
            let mut out = Vec::with_capacity(times.len());
            let mut prev: f64 = 0.0;
            for (i, t) in times.iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                let x = if i == 0 {
                    sd * z
                } else {
                    let phi = CorrKernel::ar1(corr).corr(t - times[i - 1]);
                    phi * prev + sd * (1.0 - phi * phi).sqrt() * z
                };
                out.push(x);
                prev = x;
            }
            out
        }
        CorrStructure::Constant => {
            let common: f64 = rng.sample(StandardNormal);
            times
                .iter()
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    sd * (corr.sqrt() * common + (1.0 - corr).sqrt() * z)
                })
                .collect()
        }
    }
}

/// Simulate replication `rep` of the configured panel.
pub fn simulate_panel(cfg: &SimConfig, rep: usize) -> Result<SimPanel> {
    cfg.check()?;
    Ok(simulate_unchecked(cfg, &cfg.spec.resolved_times(), rep))
}

fn simulate_unchecked(cfg: &SimConfig, times: &[f64], rep: usize) -> SimPanel {
    let err = &cfg.err;
    let n = cfg.spec.individuals;
    let sigma_theta2 = err.sigma_theta2();
    let sigma_eps2 = err.sigma_eps2();
    let psi = match err.design_kind {
        DesignKind::CrossSectional => 0.0,
        DesignKind::Longitudinal => err.psi,
    };
    let p = times.len();

    let mut clusters = Vec::new();
    let mut index = 0usize;
    for g in 0..cfg.spec.groups {
        let arms = [(true, cfg.spec.treatment_clusters[g]), (false, cfg.spec.comparison_clusters[g])];
        for (treated, count) in arms {
            for _ in 0..count as usize {
                let mut rng = stream_rng(cfg.seed, rep, index);
                index += 1;
                let theta = draw_series(&mut rng, times, sigma_theta2, err.rho, err.corr_structure);
                let noise = if cfg.aggregate_to_cluster {
                    // The mean of N independent copies of the individual
                    // process is the same process scaled by 1/N.
                    draw_series(&mut rng, times, sigma_eps2 / n, psi, err.corr_structure)
                } else {
                    let mut acc = vec![0.0; p];
                    for _ in 0..n as usize {
                        let e = draw_series(&mut rng, times, sigma_eps2, psi, err.corr_structure);
                        for (a, x) in acc.iter_mut().zip(e) {
                            *a += x;
                        }
                    }
                    acc.iter().map(|a| a / n).collect()
                };
                let outcome = theta.iter().zip(&noise).map(|(a, b)| a + b).collect();
                clusters.push(ClusterSeries { group: g, treated, theta, outcome });
            }
        }
    }
    SimPanel { times: times.to_vec(), clusters }
}

/// Impact estimates of every (group, post-period) cell and their aggregates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimates {
    /// `cells[k][q - 1]`, `None` before group `k` starts treatment.
    pub cells: Vec<Vec<Option<f64>>>,
    pub post_lengths: Vec<usize>,
    pub starts: Vec<usize>,
}

impl Estimates {
    /// Post-period-weighted pooled estimate.
    pub fn pooled(&self) -> f64 {
        let total: usize = self.post_lengths.iter().sum();
        self.cells.iter().flatten().flatten().sum::<f64>() / total as f64
    }

    /// Average over groups observed `l` periods into treatment.
    pub fn exposure(&self, l: usize) -> Option<f64> {
        let vals: Vec<f64> = (0..self.cells.len())
            .filter(|&k| l >= 1 && l <= self.post_lengths[k])
            .filter_map(|k| self.cells[k][l + self.starts[k] - 2])
            .collect();
        (!vals.is_empty()).then(|| mean(&vals))
    }

    /// Average over groups treated in calendar period `q`.
    pub fn calendar(&self, q: usize) -> Option<f64> {
        let vals: Vec<f64> = self.cells.iter().filter_map(|row| row.get(q.wrapping_sub(1)).copied().flatten()).collect();
        (!vals.is_empty()).then(|| mean(&vals))
    }

    pub fn aggregate(&self, estimand: Estimand) -> Option<f64> {
        match estimand {
            Estimand::Pooled => Some(self.pooled()),
            Estimand::Exposure(l) => self.exposure(l),
            Estimand::Calendar(q) => self.calendar(q),
        }
    }
}

/// Event-history DID: each post-period mean minus the pre-period mean,
/// treatment minus comparison.
pub fn estimate_did(panel: &SimPanel, design: &ValidatedDesign) -> Estimates {
    build_estimates(design, |k| {
        let b = design.pre_lengths()[k];
        let arm = |treated| {
            let y = panel.arm_means(k, treated);
            let pre = mean(&y[..b]);
            y[b..].iter().map(|v| v - pre).collect::<Vec<_>>()
        };
        let (t, c) = (arm(true), arm(false));
        Ok(t.iter().zip(&c).map(|(a, b)| a - b).collect())
    })
    .expect("mean differences cannot fail")
}

/// Least-squares line through `(x, y)`: returns (intercept, slope).
fn fit_line(x: &[f64], y: &[f64], group: usize) -> Result<(f64, f64)> {
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::SingularFit(format!("timing group {} has coincident measurement times", group + 1)));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

/// Post-period deviations of one arm from its projected pre-period trend.
fn arm_deviations(times: &[f64], y: &[f64], b: usize, model: TrendModel, group: usize) -> Result<Vec<f64>> {
    let (pre_t, post_t) = times.split_at(b);
    let (pre_y, post_y) = y.split_at(b);
    match model {
        TrendModel::Full => {
            let (a0, s0) = fit_line(pre_t, pre_y, group)?;
            let (a1, s1) = fit_line(post_t, post_y, group)?;
            Ok(post_t.iter().map(|t| (a1 + s1 * t) - (a0 + s0 * t)).collect())
        }
        TrendModel::Discrete => {
            let (a0, s0) = fit_line(pre_t, pre_y, group)?;
            Ok(post_t.iter().zip(post_y).map(|(t, v)| v - (a0 + s0 * t)).collect())
        }
        TrendModel::CommonSlopes => {
            // Separate pre/post intercepts with a shared slope.
            let (mt0, mt1) = (mean(pre_t), mean(post_t));
            let (my0, my1) = (mean(pre_y), mean(post_y));
            let mut sxx = 0.0;
            let mut sxy = 0.0;
            for (ts, ys, mt, my) in [(pre_t, pre_y, mt0, my0), (post_t, post_y, mt1, my1)] {
                for (t, v) in ts.iter().zip(ys) {
                    sxx += (t - mt) * (t - mt);
                    sxy += (t - mt) * (v - my);
                }
            }
            if sxx <= 0.0 {
                return Err(Error::SingularFit(format!("timing group {} has coincident measurement times", group + 1)));
            }
            let shift = (my1 - my0) - sxy / sxx * (mt1 - mt0);
            Ok(vec![shift; post_t.len()])
        }
    }
}

/// Trendline estimator: treatment deviations from the projected pre-trend,
/// minus the comparison deviations unless `its`.
pub fn estimate_cits(panel: &SimPanel, design: &ValidatedDesign, model: TrendModel, its: bool) -> Result<Estimates> {
    build_estimates(design, |k| {
        let b = design.pre_lengths()[k];
        let t = arm_deviations(&panel.times, &panel.arm_means(k, true), b, model, k)?;
        if its {
            return Ok(t);
        }
        let c = arm_deviations(&panel.times, &panel.arm_means(k, false), b, model, k)?;
        Ok(t.iter().zip(&c).map(|(a, b)| a - b).collect())
    })
}

fn build_estimates(design: &ValidatedDesign, per_group: impl Fn(usize) -> Result<Vec<f64>>) -> Result<Estimates> {
    let p = design.periods();
    let mut cells = Vec::with_capacity(design.groups());
    for k in 0..design.groups() {
        let b = design.pre_lengths()[k];
        let mut row = vec![None; p];
        for (i, v) in per_group(k)?.into_iter().enumerate() {
            row[b + i] = Some(v);
        }
        cells.push(row);
    }
    Ok(Estimates {
        cells,
        post_lengths: design.post_lengths().to_vec(),
        starts: (0..design.groups()).map(|k| design.start(k)).collect(),
    })
}

pub fn estimate(panel: &SimPanel, design: &ValidatedDesign, family: Family) -> Result<Estimates> {
    match family.trend_model() {
        None => Ok(estimate_did(panel, design)),
        Some(model) => estimate_cits(panel, design, model, family.is_its()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub family: Family,
    pub estimand: Estimand,
    pub replications: usize,
    pub seed: u64,
    pub empirical_variance: f64,
    pub closed_form: f64,
    /// `|empirical - closed| / closed`.
    pub relative_error: f64,
    /// Standard error of `empirical_variance` from the fourth central moment.
    pub monte_carlo_se: f64,
    /// `(empirical - closed) / monte_carlo_se`.
    pub z_score: f64,
    pub mean_estimate: f64,
    pub mean_se: f64,
}

impl OracleReport {
    pub fn within(&self, rel_tol: f64, se_tol: f64) -> bool {
        self.relative_error < rel_tol && self.z_score.abs() < se_tol
    }
}

/// Reports for several estimands of one family, plus the raw estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRun {
    pub reports: Vec<OracleReport>,
    /// `estimates[r][e]`: replication `r`, estimand `e`.
    #[serde(skip)]
    pub estimates: Vec<Vec<f64>>,
}

impl OracleRun {
    /// Per-replication estimates as CSV with a header row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = self
            .reports
            .iter()
            .map(|r| format!("{}:{}", r.family.name(), r.estimand))
            .collect();
        writeln!(out, "replication,{}", header.join(","))?;
        for (i, row) in self.estimates.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{i},{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Mean, unbiased variance, and the standard error of that variance.
pub fn variance_with_se(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m4, mut comp) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - m;
        m2 += d * d;
        m4 += d * d * d * d;
        comp += d;
    }
    // Compensated two-pass variance.
    let s2 = (m2 - comp * comp / n) / (n - 1.0);
    let mu4 = m4 / n;
    let var_s2 = (mu4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n;
    (m, s2, var_s2.max(0.0).sqrt())
}

/// Simulate `cfg.replications` panels and compare each estimand's empirical
/// variance with its closed form.
pub fn oracle_run(cfg: &SimConfig, family: Family, estimands: &[Estimand]) -> Result<OracleRun> {
    cfg.check()?;
    let probe = EstimatorSpec::pooled(family);
    let design = validate_design(&cfg.spec, &probe)?;
    let closed: Vec<f64> = estimands
        .iter()
        .map(|&e| variance(&design, &cfg.err, &EstimatorSpec::new(family, e)).map(|v| v.total))
        .collect::<Result<_>>()?;

    let times = cfg.spec.resolved_times();
    let estimates: Vec<Vec<f64>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>> {
            let panel = simulate_unchecked(cfg, &times, rep);
            let est = estimate(&panel, &design, family)?;
            estimands
                .iter()
                .map(|&e| est.aggregate(e).ok_or_else(|| Error::NoGroupIncluded(e.to_string())))
                .collect()
        })
        .collect::<Result<_>>()?;

    let reports = estimands
        .iter()
        .enumerate()
        .map(|(i, &estimand)| {
            let column: Vec<f64> = estimates.iter().map(|row| row[i]).collect();
            let (m, s2, se) = variance_with_se(&column);
            let closed_form = closed[i];
            OracleReport {
                family,
                estimand,
                replications: cfg.replications,
                seed: cfg.seed,
                empirical_variance: s2,
                closed_form,
                relative_error: if closed_form > 0.0 { (s2 - closed_form).abs() / closed_form } else { f64::NAN },
                monte_carlo_se: se,
                z_score: (s2 - closed_form) / se,
                mean_estimate: m,
                mean_se: (s2 / column.len() as f64).sqrt(),
            }
        })
        .collect();
    Ok(OracleRun { reports, estimates })
}

/// Single-estimand convenience wrapper around [`oracle_run`].
pub fn oracle_compare(cfg: &SimConfig, est: &EstimatorSpec) -> Result<OracleReport> {
    if est.covariates.is_some() {
        return Err(Error::InvalidParameter("the simulator does not model covariates".into()));
    }
    Ok(oracle_run(cfg, est.family, &[est.estimand])?.reports.remove(0))
}
