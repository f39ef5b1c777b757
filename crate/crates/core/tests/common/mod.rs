#![allow(dead_code)]

pub mod props;

use panelpower_core::autocorr::CorrKernel;
use panelpower_core::oracle::{estimate, ClusterSeries, SimPanel};
use panelpower_core::*;
use proptest::prelude::*;

/// Exact variance of an estimator by brute force: the estimator is linear in
/// the arm-by-period means, so its weights are read off unit-basis panels and
/// combined with the arm mean covariance matrix.
pub fn exact_variance(design: &ValidatedDesign, err: &ErrorModel, family: Family, estimand: Estimand) -> Option<f64> {
    let times = design.times().to_vec();
    let p = times.len();
    let theta = CorrKernel::new(err.rho, err.corr_structure);
    let eps = match err.design_kind {
        DesignKind::CrossSectional => CorrKernel::independent(),
        DesignKind::Longitudinal => CorrKernel::new(err.psi, err.corr_structure),
    };
    let arms: &[bool] = if family.is_its() { &[true] } else { &[true, false] };

    let mut total = 0.0;
    for k in 0..design.groups() {
        for &treated in arms {
            let m = if treated { design.treatment_clusters(k) } else { design.comparison_clusters(k) };
            let mut w = Vec::with_capacity(p);
            for t in 0..p {
                let mut clusters = Vec::new();
                for g in 0..design.groups() {
                    for &arm in arms {
                        let mut outcome = vec![0.0; p];
                        if g == k && arm == treated {
                            outcome[t] = 1.0;
                        }
                        clusters.push(ClusterSeries { group: g, treated: arm, theta: vec![0.0; p], outcome });
                    }
                }
                let panel = SimPanel { times: times.clone(), clusters };
                w.push(estimate(&panel, design, family).unwrap().aggregate(estimand)?);
            }
            let quad = |kernel: CorrKernel| -> f64 {
                let mut s = 0.0;
                for i in 0..p {
                    for j in 0..p {
                        s += w[i] * w[j] * kernel.corr(times[j] - times[i]);
                    }
                }
                s
            };
            total += (err.sigma_theta2() * quad(theta) + err.sigma_eps2() / design.individuals() * quad(eps)) / m;
        }
    }
    Some(total)
}

pub fn balanced(periods: usize, starts: Vec<usize>, total: f64, family: Family) -> DesignSpec {
    DesignSpec::balanced(periods, starts, total, 100.0, family.is_its())
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[derive(Debug, Clone)]
pub struct Case {
    pub spec: DesignSpec,
    pub err: ErrorModel,
}

/// Designs with at least three pre- and post-periods in every group, so all
/// estimator families apply.
pub fn case() -> impl Strategy<Value = Case> {
    (7usize..15, 1usize..4)
        .prop_flat_map(|(periods, groups)| {
            let starts = proptest::sample::subsequence((4..=periods - 2).collect::<Vec<_>>(), 1..=groups.min(periods - 5));
            (
                Just(periods),
                starts,
                proptest::collection::vec(1u32..30, 3),
                proptest::collection::vec(1u32..30, 3),
                1u32..500,
                0.0..0.6f64,
                -0.9..0.95f64,
                -0.9..0.95f64,
                any::<bool>(),
            )
        })
        .prop_map(|(periods, starts, t, c, n, icc, rho, psi, longitudinal)| {
            let k = starts.len();
            let spec = DesignSpec::new(
                periods,
                starts,
                t[..k].iter().map(|&x| x as f64).collect(),
                c[..k].iter().map(|&x| x as f64).collect(),
                n as f64,
            );
            let err = if longitudinal {
                ErrorModel::longitudinal(icc, rho, psi)
            } else {
                ErrorModel::cross_sectional(icc, rho)
            };
            Case { spec, err }
        })
}

pub fn its_spec(spec: &DesignSpec) -> DesignSpec {
    DesignSpec { comparison_clusters: vec![0.0; spec.groups], ..spec.clone() }
}

pub fn spec_for(case: &Case, family: Family) -> DesignSpec {
    if family.is_its() {
        its_spec(&case.spec)
    } else {
        case.spec.clone()
    }
}
