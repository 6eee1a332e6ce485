//! Per-bin statistics behind every binned calibration estimator.

use serde::{Deserialize, Serialize};

use crate::model::{assign_bins, BinningScheme};
use crate::numeric::ksum;

/// Which flavour of a binned or label-count estimator to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    Plugin,
    Debiased,
}

/// Statistics of one bin of `(prediction, empirical target)` pairs.
#[derive(Debug, Clone)]
pub(crate) struct BinSummary {
    pub lo: f64,
    pub hi: f64,
    pub members: Vec<usize>,
    /// Mean prediction, `None` for an empty bin.
    pub mean_value: Option<f64>,
    /// Mean empirical target, `None` for an empty bin.
    pub mean_target: Option<f64>,
    /// Population variance of the targets within the bin.
    pub target_variance: f64,
    /// `|I|/N (c - z)^2`.
    pub cl_plugin: f64,
    /// Plugin minus `|I|/N var/(|I|-1)`; zero for bins with at most one
    /// member.
    pub cl_debiased: f64,
}

impl BinSummary {
    pub fn count(&self) -> usize {
        self.members.len()
    }

    /// Too small for the between-instance variance correction.
    pub fn undersized(&self) -> bool {
        self.members.len() <= 1
    }
}

/// Bins `values` and summarizes `targets` per bin. `n_total` is the `N` in
/// the `|I|/N` weights.
pub(crate) fn summarize(values: &[f64], targets: &[f64], scheme: &BinningScheme, n_total: usize) -> Vec<BinSummary> {
    assert_eq!(values.len(), targets.len());
    let n = n_total as f64;
    assign_bins(values, scheme)
        .into_iter()
        .enumerate()
        .map(|(b, members)| {
            let (lo, hi) = scheme.bounds(b);
            let m = members.len();
            if m == 0 {
                return BinSummary {
                    lo,
                    hi,
                    members,
                    mean_value: None,
                    mean_target: None,
                    target_variance: 0.0,
                    cl_plugin: 0.0,
                    cl_debiased: 0.0,
                };
            }
            let mf = m as f64;
            let mean_value = ksum(members.iter().map(|&i| values[i])) / mf;
            let mean_target = ksum(members.iter().map(|&i| targets[i])) / mf;
            let target_variance = ksum(members.iter().map(|&i| (targets[i] - mean_target).powi(2))) / mf;
            let cl_plugin = mf / n * (mean_target - mean_value).powi(2);
            let cl_debiased = if m >= 2 {
                cl_plugin - mf / n * target_variance / (mf - 1.0)
            } else {
                0.0
            };
            BinSummary {
                lo,
                hi,
                members,
                mean_value: Some(mean_value),
                mean_target: Some(mean_target),
                target_variance,
                cl_plugin,
                cl_debiased,
            }
        })
        .collect()
}

/// `sqrt(max(0, cl))` and whether the clamp was needed.
pub(crate) fn calibration_error(cl: f64) -> (f64, bool) {
    if cl < 0.0 {
        (0.0, true)
    } else {
        (cl.sqrt(), false)
    }
}
