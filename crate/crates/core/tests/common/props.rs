//! Property bodies shared by the property tests and the acceptance run.

use panelpower_core::oracle::{oracle_run, simulate_panel, SimConfig};
use panelpower_core::variance::{var_cits_common_slopes, var_cits_discrete, var_cits_full};
use panelpower_core::*;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use super::{relative_gap, spec_for, Case};

type Outcome = std::result::Result<(), TestCaseError>;

pub fn nonnegative(case: &Case, l: usize) -> Outcome {
    for family in Family::ALL {
        for estimand in [Estimand::Pooled, Estimand::Exposure(l)] {
            let est = EstimatorSpec::new(family, estimand);
            let design = validate_design(&spec_for(case, family), &est).unwrap();
            let v = variance(&design, &case.err, &est).unwrap();
            prop_assert!(v.total.is_finite() && v.total >= 0.0);
            prop_assert!(v.per_group.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }
    Ok(())
}

pub fn aggregation_identity(case: &Case, l: usize) -> Outcome {
    for family in Family::ALL {
        for estimand in [Estimand::Pooled, Estimand::Exposure(l)] {
            let est = EstimatorSpec::new(family, estimand);
            let design = validate_design(&spec_for(case, family), &est).unwrap();
            let v = variance(&design, &case.err, &est).unwrap();
            let num: f64 = v.weights.iter().zip(&v.per_group).map(|(w, x)| w * w * x).sum();
            let den: f64 = v.weights.iter().sum();
            prop_assert!(relative_gap(v.total, num / (den * den)) < 1e-12);
            prop_assert!(relative_gap(v.total, v.aggregate()) < 1e-12);
        }
    }
    Ok(())
}

pub fn its_below_cits(case: &Case) -> Outcome {
    let est = EstimatorSpec::pooled(Family::CitsFull);
    let design = validate_design(&case.spec, &est).unwrap();
    for f in [var_cits_full, var_cits_discrete, var_cits_common_slopes] {
        let cits = f(&design, &case.err, Estimand::Pooled, false).unwrap().total;
        let its = f(&design, &case.err, Estimand::Pooled, true).unwrap().total;
        prop_assert!(its < cits, "ITS {its} vs CITS {cits}");
    }
    Ok(())
}

/// Reversing time swaps pre- and post-periods of a single evenly spaced group.
pub fn mirror_symmetry(pre: usize, post: usize, rho: f64, constant: bool) -> Outcome {
    let err = if constant {
        ErrorModel::cross_sectional(0.05, rho.abs()).with_structure(CorrStructure::Constant)
    } else {
        ErrorModel::cross_sectional(0.05, rho)
    };
    let periods = pre + post;
    for family in [Family::Did, Family::CitsCommonSlopes, Family::ItsCommonSlopes] {
        let est = EstimatorSpec::pooled(family);
        let v = |b: usize| {
            let spec = DesignSpec::balanced(periods, vec![b + 1], 20.0, 100.0, family.is_its());
            variance(&validate_design(&spec, &est).unwrap(), &err, &est).unwrap().total
        };
        prop_assert!(relative_gap(v(pre), v(post)) < 1e-10);
    }
    Ok(())
}

pub fn shift_invariance(case: &Case, shift: f64) -> Outcome {
    let times: Vec<f64> = (1..=case.spec.periods).map(|t| t as f64 + shift).collect();
    for family in Family::ALL {
        let est = EstimatorSpec::pooled(family);
        let base = spec_for(case, family);
        let shifted = base.clone().with_times(times.clone());
        let a = variance(&validate_design(&base, &est).unwrap(), &case.err, &est).unwrap().total;
        let b = variance(&validate_design(&shifted, &est).unwrap(), &case.err, &est).unwrap().total;
        prop_assert!(relative_gap(a, b) < 1e-9, "{}: {a} vs {b}", family.name());
    }
    Ok(())
}

pub fn seed_determinism(seed: u64, rep: usize) -> Outcome {
    let spec = DesignSpec::balanced(8, vec![4, 6], 8.0, 5.0, false);
    let cfg = SimConfig::new(spec, ErrorModel::longitudinal(0.1, 0.5, 0.3), 4, seed);
    let a = simulate_panel(&cfg, rep).unwrap();
    prop_assert_eq!(&a, &simulate_panel(&cfg, rep).unwrap());
    prop_assert_ne!(&a, &simulate_panel(&cfg, rep + 1).unwrap());
    let run1 = oracle_run(&cfg, Family::CitsFull, &[Estimand::Pooled]).unwrap();
    let run2 = oracle_run(&cfg, Family::CitsFull, &[Estimand::Pooled]).unwrap();
    prop_assert_eq!(run1.estimates, run2.estimates);
    Ok(())
}
