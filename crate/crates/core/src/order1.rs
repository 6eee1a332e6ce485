//! Class-probability metrics estimated from label histograms.
//!
//! With `mu_ik = y_ik / n_i` the empirical class frequency and `z_ik` the
//! prediction, the module estimates
//!
//! * the expected squared loss `L_sq`, unbiased for any `n_i >= 1`;
//! * the epistemic loss `EL = E[|Z - Q|^2]`, plugin (biased upward by the
//!   label sampling noise) and unbiased (`n_i >= 2`);
//! * the binned calibration loss `CL = sum_k CL_k`, plugin and debiased;
//! * the dispersion loss `DL = EL - CL`, plugin and debiased.
//!
//! Debiased estimators are signed and may come out negative on finite
//! samples. For a fixed binning `EL = CL + DL` holds per mode.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binned::{self, BinSummary};
pub use crate::binned::EstimatorMode;
use crate::error::{Error, Result};
use crate::model::{BinningScheme, EvalDataset, InstanceRecord};
use crate::numeric::ksum;

/// Instance weights for [`expected_squared_loss_unbiased`].
#[derive(Debug, Clone, PartialEq, Default)]
pub enum WeightPolicy {
    /// `w_i = 1`.
    #[default]
    Uniform,
    /// `w_i = n_i`.
    LabelCount,
    /// Caller-supplied non-negative weights in record order.
    Explicit(Vec<f64>),
}

impl WeightPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            WeightPolicy::Uniform => "uniform",
            WeightPolicy::LabelCount => "labels",
            WeightPolicy::Explicit(_) => "explicit",
        }
    }

    fn resolve(&self, data: &EvalDataset) -> Result<Vec<f64>> {
        let w = match self {
            WeightPolicy::Uniform => vec![1.0; data.len()],
            WeightPolicy::LabelCount => data.iter().map(|r| f64::from(r.n_labels())).collect(),
            WeightPolicy::Explicit(w) => {
                if w.len() != data.len() {
                    return Err(Error::InvalidArgument(format!(
                        "{} weights for {} records",
                        w.len(),
                        data.len()
                    )));
                }
                if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
                }
                w.clone()
            }
        };
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidArgument("all instance weights are zero".into()));
        }
        Ok(w)
    }
}

fn per_record<F>(data: &EvalDataset, f: F) -> Vec<f64>
where
    F: Fn(&InstanceRecord) -> f64 + Sync + Send,
{
    data.records().par_iter().map(f).collect()
}

fn squared_deviation(r: &InstanceRecord) -> f64 {
    let n = f64::from(r.n_labels());
    r.histogram
        .counts()
        .iter()
        .zip(r.prediction.as_slice())
        .map(|(&y, &z)| (f64::from(y) / n - z).powi(2))
        .sum()
}

/// `sum_k mu_k (1 - mu_k)`.
fn label_variance(r: &InstanceRecord) -> f64 {
    let n = f64::from(r.n_labels());
    r.histogram
        .counts()
        .iter()
        .map(|&y| {
            let mu = f64::from(y) / n;
            mu * (1.0 - mu)
        })
        .sum()
}

fn require_two_labels(data: &EvalDataset) -> Result<()> {
    match data.iter().find(|r| r.n_labels() < 2) {
        Some(r) => Err(Error::record(
            &r.id,
            format!("needs at least 2 labels, has {}", r.n_labels()),
        )),
        None => Ok(()),
    }
}

/// Unbiased estimate of the expected squared loss.
///
/// With one label per instance and uniform weights this is the probability
/// (Brier) score.
pub fn expected_squared_loss_unbiased(data: &EvalDataset, weights: &WeightPolicy) -> Result<f64> {
    let w = weights.resolve(data)?;
    let terms = per_record(data, |r| squared_deviation(r) + label_variance(r));
    let total = ksum(w.iter().copied());
    Ok(ksum(w.iter().zip(&terms).map(|(w, t)| w * t)) / total)
}

/// Plugin estimate `(1/N) sum_i |mu_i - z_i|^2`.
pub fn epistemic_loss_plugin(data: &EvalDataset) -> f64 {
    ksum(per_record(data, squared_deviation)) / data.len() as f64
}

/// Unbiased estimate of the epistemic loss; every record needs two or more
/// labels.
pub fn epistemic_loss_unbiased(data: &EvalDataset) -> Result<f64> {
    require_two_labels(data)?;
    let terms = per_record(data, |r| {
        squared_deviation(r) - label_variance(r) / (f64::from(r.n_labels()) - 1.0)
    });
    Ok(ksum(terms) / data.len() as f64)
}

/// Fraction of records whose predicted argmax equals the majority label.
pub fn accuracy(data: &EvalDataset) -> f64 {
    let hits = data
        .iter()
        .filter(|r| r.prediction.argmax() == r.histogram.majority())
        .count();
    hits as f64 / data.len() as f64
}

/// One `(class, bin)` cell of the binned decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinContribution {
    pub class: usize,
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean empirical frequency in the bin.
    pub mean_freq: Option<f64>,
    /// Mean prediction in the bin.
    pub mean_pred: Option<f64>,
    pub cl_plugin: f64,
    pub cl_debiased: f64,
    pub dl_plugin: f64,
    /// `None` when some member has fewer than two labels.
    pub dl_debiased: Option<f64>,
    /// At most one member, so no between-instance correction is possible.
    pub undersized: bool,
}

/// Per-class totals of the binned decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBreakdown {
    pub class: usize,
    pub cl_plugin: f64,
    pub cl_debiased: f64,
    pub dl_plugin: f64,
    pub dl_debiased: Option<f64>,
}

/// Output of [`calibration_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationLoss {
    pub mode: EstimatorMode,
    pub per_class: Vec<f64>,
    pub total: f64,
    /// `sqrt(max(0, total))`.
    pub ce: f64,
    /// The total was negative and `ce` was clamped to zero.
    pub ce_clamped: bool,
    pub per_bin: Vec<BinContribution>,
}

/// Output of [`dispersion_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionLoss {
    pub mode: EstimatorMode,
    pub per_class: Vec<f64>,
    pub total: f64,
    pub per_bin: Vec<BinContribution>,
}

/// Full binned decomposition for every class and bin.
struct Decomposition {
    cells: Vec<BinContribution>,
}

fn decompose(data: &EvalDataset, scheme: &BinningScheme) -> Decomposition {
    let n = data.len();
    let nf = n as f64;
    let with_corrections = data.min_labels() >= 2;
    let mut cells = Vec::with_capacity(data.k() * scheme.bins());
    for k in 0..data.k() {
        let values: Vec<f64> = data.iter().map(|r| r.prediction[k]).collect();
        let targets: Vec<f64> = data.iter().map(|r| r.histogram.frequency(k)).collect();
        let corrections: Option<Vec<f64>> = with_corrections.then(|| {
            data.iter()
                .map(|r| {
                    let mu = r.histogram.frequency(k);
                    mu * (1.0 - mu) / (f64::from(r.n_labels()) - 1.0)
                })
                .collect()
        });
        let summaries = binned::summarize(&values, &targets, scheme, n);
        for (b, s) in summaries.into_iter().enumerate() {
            cells.push(cell(k, b, &s, &values, &targets, corrections.as_deref(), nf));
        }
    }
    Decomposition { cells }
}

fn cell(
    class: usize,
    bin: usize,
    s: &BinSummary,
    values: &[f64],
    targets: &[f64],
    corrections: Option<&[f64]>,
    n: f64,
) -> BinContribution {
    let dl_plugin = match (s.mean_target, s.mean_value) {
        (Some(c), Some(z)) => ksum(s.members.iter().map(|&i| ((targets[i] - c) - (values[i] - z)).powi(2))) / n,
        _ => 0.0,
    };
    let dl_debiased = corrections.map(|corr| {
        let label_noise = ksum(s.members.iter().map(|&i| corr[i])) / n;
        match s.count() {
            0 => 0.0,
            // Debiased CL is zero here, so DL carries the whole unbiased
            // EL contribution of the lone member.
            1 => {
                let i = s.members[0];
                (targets[i] - values[i]).powi(2) / n - label_noise
            }
            m => {
                let m = m as f64;
                dl_plugin - label_noise + m / n * s.target_variance / (m - 1.0)
            }
        }
    });
    BinContribution {
        class,
        bin,
        lo: s.lo,
        hi: s.hi,
        count: s.count(),
        mean_freq: s.mean_target,
        mean_pred: s.mean_value,
        cl_plugin: s.cl_plugin,
        cl_debiased: s.cl_debiased,
        dl_plugin,
        dl_debiased,
        undersized: s.undersized(),
    }
}

fn class_totals<F>(k: usize, cells: &[BinContribution], f: F) -> Vec<f64>
where
    F: Fn(&BinContribution) -> f64,
{
    let mut totals = vec![0.0; k];
    for (class, total) in totals.iter_mut().enumerate() {
        *total = ksum(cells.iter().filter(|c| c.class == class).map(&f));
    }
    totals
}

/// Binned calibration loss per class and in total.
///
/// In debiased mode bins with at most one member contribute zero.
pub fn calibration_loss(data: &EvalDataset, scheme: &BinningScheme, mode: EstimatorMode) -> CalibrationLoss {
    let d = decompose(data, scheme);
    let per_class = match mode {
        EstimatorMode::Plugin => class_totals(data.k(), &d.cells, |c| c.cl_plugin),
        EstimatorMode::Debiased => class_totals(data.k(), &d.cells, |c| c.cl_debiased),
    };
    let total = ksum(per_class.iter().copied());
    let (ce, ce_clamped) = binned::calibration_error(total);
    CalibrationLoss {
        mode,
        per_class,
        total,
        ce,
        ce_clamped,
        per_bin: d.cells,
    }
}

/// Binned dispersion loss `EL - CL` per class and in total.
///
/// Debiased mode needs two or more labels on every record.
pub fn dispersion_loss(data: &EvalDataset, scheme: &BinningScheme, mode: EstimatorMode) -> Result<DispersionLoss> {
    if mode == EstimatorMode::Debiased {
        require_two_labels(data)?;
    }
    let d = decompose(data, scheme);
    let per_class = match mode {
        EstimatorMode::Plugin => class_totals(data.k(), &d.cells, |c| c.dl_plugin),
        EstimatorMode::Debiased => class_totals(data.k(), &d.cells, |c| c.dl_debiased.unwrap_or(f64::NAN)),
    };
    Ok(DispersionLoss {
        mode,
        total: ksum(per_class.iter().copied()),
        per_class,
        per_bin: d.cells,
    })
}

/// All first-order metrics for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order1Result {
    pub l_sq_unbiased: f64,
    pub el_plugin: f64,
    /// `None` unless every record has two or more labels.
    pub el_unbiased: Option<f64>,
    pub cl_plugin: f64,
    pub cl_debiased: f64,
    pub dl_plugin: f64,
    pub dl_debiased: Option<f64>,
    pub ce_debiased: f64,
    pub ce_clamped: bool,
    pub accuracy: f64,
    pub per_class: Vec<ClassBreakdown>,
    pub per_bin: Vec<BinContribution>,
}

pub fn evaluate_order1(data: &EvalDataset, scheme: &BinningScheme, weights: &WeightPolicy) -> Result<Order1Result> {
    let l_sq_unbiased = expected_squared_loss_unbiased(data, weights)?;
    let el_plugin = epistemic_loss_plugin(data);
    let el_unbiased = (data.min_labels() >= 2).then(|| epistemic_loss_unbiased(data)).transpose()?;
    let d = decompose(data, scheme);
    let k = data.k();
    let cl_p = class_totals(k, &d.cells, |c| c.cl_plugin);
    let cl_d = class_totals(k, &d.cells, |c| c.cl_debiased);
    let dl_p = class_totals(k, &d.cells, |c| c.dl_plugin);
    let dl_d = el_unbiased
        .is_some()
        .then(|| class_totals(k, &d.cells, |c| c.dl_debiased.unwrap_or(f64::NAN)));
    let per_class = (0..k)
        .map(|class| ClassBreakdown {
            class,
            cl_plugin: cl_p[class],
            cl_debiased: cl_d[class],
            dl_plugin: dl_p[class],
            dl_debiased: dl_d.as_ref().map(|d| d[class]),
        })
        .collect();
    let cl_debiased = ksum(cl_d.iter().copied());
    let (ce_debiased, ce_clamped) = binned::calibration_error(cl_debiased);
    Ok(Order1Result {
        l_sq_unbiased,
        el_plugin,
        el_unbiased,
        cl_plugin: ksum(cl_p.iter().copied()),
        cl_debiased,
        dl_plugin: ksum(dl_p.iter().copied()),
        dl_debiased: dl_d.map(|d| ksum(d)),
        ce_debiased,
        ce_clamped,
        accuracy: accuracy(data),
        per_class,
        per_bin: d.cells,
    })
}
