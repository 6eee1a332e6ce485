//! Aggregation of externally produced prediction ensembles, treated as an
//! equally weighted mixture of point masses over class-probability vectors.

use crate::alpha::dpe_from_alpha;
use crate::error::{Error, Result};
use crate::model::ProbVector;

fn check_members(members: &[ProbVector]) -> Result<usize> {
    let first = members
        .first()
        .ok_or_else(|| Error::InvalidArgument("ensemble has no members".into()))?;
    let k = first.len();
    if members.iter().any(|m| m.len() != k) {
        return Err(Error::InvalidArgument("ensemble members disagree on the class count".into()));
    }
    Ok(k)
}

fn weighted_mean(members: &[ProbVector], weights: &[f64]) -> ProbVector {
    let k = members[0].len();
    let total: f64 = weights.iter().sum();
    let mut mean = vec![0.0; k];
    for (m, w) in members.iter().zip(weights) {
        for (acc, p) in mean.iter_mut().zip(m.as_slice()) {
            *acc += w * p;
        }
    }
    mean.iter_mut().for_each(|v| *v /= total);
    ProbVector::from_raw(mean)
}

pub fn ensemble_mean_cpe(members: &[ProbVector]) -> Result<ProbVector> {
    check_members(members)?;
    Ok(weighted_mean(members, &vec![1.0; members.len()]))
}

/// Mean over members of `1 - sum_k f_k^2`.
pub fn ensemble_dpe(members: &[ProbVector]) -> Result<f64> {
    check_members(members)?;
    Ok(members.iter().map(ProbVector::gini_simpson).sum::<f64>() / members.len() as f64)
}

/// Posterior class probabilities after observing `label`: members are
/// reweighted by the probability they assign to it.
pub fn ensemble_posterior_cpe(members: &[ProbVector], label: usize) -> Result<ProbVector> {
    let k = check_members(members)?;
    if label >= k {
        return Err(Error::InvalidArgument(format!("label {label} out of range for {k} classes")));
    }
    let weights: Vec<f64> = members.iter().map(|m| m[label]).collect();
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidArgument(format!(
            "every ensemble member gives class {label} probability zero"
        )));
    }
    Ok(weighted_mean(members, &weights))
}

/// Member weights used by [`ensemble_posterior_cpe`], normalized.
pub fn ensemble_posterior_weights(members: &[ProbVector], label: usize) -> Result<Vec<f64>> {
    let k = check_members(members)?;
    if label >= k {
        return Err(Error::InvalidArgument(format!("label {label} out of range for {k} classes")));
    }
    let total: f64 = members.iter().map(|m| m[label]).sum();
    if total == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "every ensemble member gives class {label} probability zero"
        )));
    }
    Ok(members.iter().map(|m| m[label] / total).collect())
}

/// Mean over members of the alpha-calibrated disagreement estimate.
pub fn ensemble_alpha_dpe(members: &[(ProbVector, f64)]) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::InvalidArgument("ensemble has no members".into()));
    }
    if let Some((_, a)) = members.iter().find(|(_, a)| !(*a > 0.0)) {
        return Err(Error::InvalidArgument(format!("alpha0 {a} must be positive")));
    }
    Ok(members.iter().map(|(f, a)| dpe_from_alpha(f, *a)).sum::<f64>() / members.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(ensemble_mean_cpe(&[pv(&[1.0, 0.0]), pv(&[0.0, 1.0])]).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(ensemble_mean_cpe(&[pv(&[0.3, 0.7])]).unwrap(), pv(&[0.3, 0.7]));
        let m = ensemble_mean_cpe(&[pv(&[0.6, 0.4]), pv(&[0.8, 0.2])]).unwrap();
        assert_abs_diff_eq!(m[0], 0.7, epsilon = 1e-15);
        assert!(ensemble_mean_cpe(&[]).is_err());
    }

    #[test]
    fn dpe_examples() {
        assert_eq!(ensemble_dpe(&[pv(&[1.0, 0.0]), pv(&[0.0, 1.0])]).unwrap(), 0.0);
        assert_eq!(ensemble_dpe(&[pv(&[0.5, 0.5]), pv(&[0.5, 0.5])]).unwrap(), 0.5);
        assert!(ensemble_dpe(&[]).is_err());
    }

    #[test]
    fn posterior_examples() {
        let p = ensemble_posterior_cpe(&[pv(&[0.8, 0.2]), pv(&[0.2, 0.8])], 0).unwrap();
        assert_abs_diff_eq!(p[0], 0.68, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.32, epsilon = 1e-15);
        let p = ensemble_posterior_cpe(&[pv(&[1.0, 0.0]), pv(&[0.0, 1.0])], 1).unwrap();
        assert_eq!(p.as_slice(), &[0.0, 1.0]);
        assert!(ensemble_posterior_cpe(&[pv(&[1.0, 0.0])], 1).is_err());
    }

    #[test]
    fn alpha_dpe_examples() {
        assert_abs_diff_eq!(ensemble_alpha_dpe(&[(pv(&[0.5, 0.5]), 1.0)]).unwrap(), 0.25, epsilon = 1e-15);
        let members = [(pv(&[0.5, 0.5]), f64::INFINITY), (pv(&[0.9, 0.1]), f64::INFINITY)];
        let plain: Vec<ProbVector> = members.iter().map(|m| m.0.clone()).collect();
        assert_abs_diff_eq!(
            ensemble_alpha_dpe(&members).unwrap(),
            ensemble_dpe(&plain).unwrap(),
            epsilon = 1e-15
        );
        assert!(ensemble_alpha_dpe(&[(pv(&[0.5, 0.5]), 0.0)]).is_err());
    }

    fn arb_members() -> impl Strategy<Value = Vec<ProbVector>> {
        (2usize..5).prop_flat_map(|k| {
            prop::collection::vec(prop::collection::vec(0.01f64..1.0, k), 1..6).prop_map(|ms| {
                ms.into_iter()
                    .map(|w| {
                        let s: f64 = w.iter().sum();
                        ProbVector::from_raw(w.iter().map(|v| v / s).collect())
                    })
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn identical_members_are_a_fixed_point(m in arb_members(), label in 0usize..2) {
            let same = vec![m[0].clone(); 3];
            let p = ensemble_posterior_cpe(&same, label).unwrap();
            for (a, b) in p.as_slice().iter().zip(m[0].as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn permutation_invariance(m in arb_members(), label in 0usize..2) {
            let mut r = m.clone();
            r.reverse();
            let tol = 1e-12;
            prop_assert!((ensemble_dpe(&m).unwrap() - ensemble_dpe(&r).unwrap()).abs() < tol);
            let (a, b) = (ensemble_mean_cpe(&m).unwrap(), ensemble_mean_cpe(&r).unwrap());
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < tol);
            }
            let (a, b) = (ensemble_posterior_cpe(&m, label).unwrap(), ensemble_posterior_cpe(&r, label).unwrap());
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < tol);
            }
        }

        #[test]
        fn posterior_weights_form_a_distribution(m in arb_members(), label in 0usize..2) {
            let w = ensemble_posterior_weights(&m, label).unwrap();
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn dpe_is_mixture_expectation(m in arb_members()) {
            // Exact expectation of 1 - sum zeta^2 over the uniform mixture.
            let direct: f64 = m.iter().map(|f| 1.0 - f.as_slice().iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
                / m.len() as f64;
            prop_assert!((ensemble_dpe(&m).unwrap() - direct).abs() < 1e-14);
        }
    }
}
