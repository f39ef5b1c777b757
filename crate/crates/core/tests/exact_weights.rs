//! Closed-form variances against the brute-force quadratic form of each
//! estimator's own weights.

mod common;

use common::{exact_variance, relative_gap};
use panelpower_core::*;

fn error_models() -> Vec<(&'static str, ErrorModel)> {
    vec![
        ("cross-ar1", ErrorModel::cross_sectional(0.05, 0.4)),
        ("cross-ar1-negative", ErrorModel::cross_sectional(0.2, -0.3)),
        ("cross-constant", ErrorModel::cross_sectional(0.1, 0.3).with_structure(CorrStructure::Constant)),
        ("long-ar1", ErrorModel::longitudinal(0.05, 0.4, 0.6)),
        ("long-ar1-mixed", ErrorModel::longitudinal(0.3, 0.8, -0.2)),
        ("long-constant", ErrorModel::longitudinal(0.1, 0.5, 0.2).with_structure(CorrStructure::Constant)),
    ]
}

fn designs(family: Family) -> Vec<(&'static str, DesignSpec)> {
    let its = family.is_its();
    let b = |p, s: Vec<usize>, total| DesignSpec::balanced(p, s, total, 100.0, its);
    let comparisons = |c: Vec<f64>| if its { vec![0.0; c.len()] } else { c };
    let mut out = vec![
        ("p8-s4-6", b(8, vec![4, 6], 40.0)),
        ("p12-s6-8-10", b(12, vec![6, 8, 10], 60.0)),
        ("p10-s5", b(10, vec![5], 20.0)),
        ("p16-s8-10", b(16, vec![8, 10], 36.0)),
        (
            "p12-unequal",
            DesignSpec::new(12, vec![5, 9], vec![3.0, 7.0], comparisons(vec![4.0, 2.0]), 37.0),
        ),
        ("p9-uneven-times", b(9, vec![4, 6], 40.0).with_times(vec![0.0, 1.0, 2.0, 4.0, 5.0, 7.0, 8.0, 10.0, 13.0])),
        ("p10-fractional-times", b(10, vec![5, 7], 24.0).with_times((0..10).map(|t| 0.5 * t as f64 + 3.0).collect())),
    ];
    if family == Family::Did {
        out.push(("p6-s2-4", b(6, vec![2, 4], 40.0)));
        out.push(("p8-s2-3-8", b(8, vec![2, 3, 8], 30.0)));
    }
    out
}

fn estimands(design: &ValidatedDesign) -> Vec<Estimand> {
    let max_post = *design.post_lengths().iter().max().unwrap();
    let first_start = (0..design.groups()).map(|k| design.start(k)).min().unwrap();
    let mut out = vec![Estimand::Pooled];
    out.extend((1..=max_post).map(Estimand::Exposure));
    out.extend((first_start..=design.periods()).map(Estimand::Calendar));
    out
}

#[test]
fn closed_forms_match_estimator_weights() {
    let mut checked = 0;
    let mut worst = 0.0f64;
    for family in Family::ALL {
        for (dname, spec) in designs(family) {
            for (ename, err) in error_models() {
                let probe = validate_design(&spec, &EstimatorSpec::pooled(family)).unwrap();
                for estimand in estimands(&probe) {
                    let est = EstimatorSpec::new(family, estimand);
                    let design = validate_design(&spec, &est).unwrap();
                    let closed = match variance(&design, &err, &est) {
                        Ok(v) => v.total,
                        Err(e) if (err.rho < 0.0 || err.psi < 0.0) && dname == "p10-fractional-times" => {
                            assert_eq!(e.code(), "INVALID_PARAMETER");
                            continue;
                        }
                        Err(e) => panic!("{} {estimand} {dname} {ename}: {e}", family.name()),
                    };
                    let exact = exact_variance(&design, &err, family, estimand).unwrap();
                    let gap = relative_gap(closed, exact);
                    worst = worst.max(gap);
                    assert!(
                        gap < 1e-10,
                        "{} {estimand} {dname} {ename}: closed {closed:.15e} exact {exact:.15e}",
                        family.name()
                    );
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 1000, "only {checked} cases");
    assert!(worst < 1e-10);
}

#[test]
fn per_group_variances_match_single_group_weights() {
    let err = ErrorModel::longitudinal(0.05, 0.4, 0.6);
    for family in Family::ALL {
        let spec = common::balanced(12, vec![6, 8], 40.0, family);
        let est = EstimatorSpec::pooled(family);
        let design = validate_design(&spec, &est).unwrap();
        let v = variance(&design, &err, &est).unwrap();
        // Each group alone, pooled over its own post-periods.
        for k in 0..2 {
            let start = design.start(k);
            let single = DesignSpec::new(
                12,
                vec![start],
                vec![design.treatment_clusters(k)],
                vec![design.comparison_clusters(k)],
                100.0,
            );
            let sd = validate_design(&single, &est).unwrap();
            let exact = exact_variance(&sd, &err, family, Estimand::Pooled).unwrap();
            assert!(relative_gap(v.per_group[k], exact) < 1e-10, "{} group {k}", family.name());
        }
    }
}
