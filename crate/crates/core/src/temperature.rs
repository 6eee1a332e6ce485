//! Temperature scaling of logits, fitted to label histograms by
//! multinomial likelihood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EvalDataset, ProbVector};
use crate::numeric::{golden_section_minimize, ksum, log_sum_exp, softmax};
use crate::split::calibration_split;

/// Search interval for `log t`.
pub const LOG_TEMPERATURE_BOUNDS: [f64; 2] = [-6.0, 6.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureModel {
    pub t: f64,
}

impl TemperatureModel {
    pub fn new(t: f64) -> Result<Self> {
        if t > 0.0 && t.is_finite() {
            Ok(Self { t })
        } else {
            Err(Error::InvalidArgument(format!("temperature {t} must be positive")))
        }
    }
}

/// `softmax(u / t)`.
pub fn apply_temperature(logits: &[f64], model: TemperatureModel) -> ProbVector {
    let scaled: Vec<f64> = logits.iter().map(|u| u / model.t).collect();
    ProbVector::from_raw(softmax(&scaled))
}

/// Outcome of [`temperature_fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureFit {
    pub model: TemperatureModel,
    /// The minimum sits on an end of the search interval.
    pub boundary_flag: bool,
    /// Label-normalized NLL on the fitting split at the fitted `t`.
    pub fit_nll: f64,
    /// Same on the held-out split, `None` if that split is empty.
    pub held_out_nll: Option<f64>,
}

/// `-(1/sum n) sum_i sum_k y_ik log softmax(u_i/t)_k` over `idx`.
fn histogram_nll(data: &EvalDataset, idx: &[usize], t: f64) -> f64 {
    let mut labels = 0.0;
    let mut terms = Vec::with_capacity(idx.len());
    for &i in idx {
        let r = &data.records()[i];
        let logits = r.logits.as_deref().unwrap_or_default();
        let scaled: Vec<f64> = logits.iter().map(|u| u / t).collect();
        let lse = log_sum_exp(&scaled);
        for (&y, &s) in r.histogram.counts().iter().zip(&scaled) {
            if y > 0 {
                terms.push(f64::from(y) * (lse - s));
            }
        }
        labels += f64::from(r.n_labels());
    }
    ksum(terms) / labels
}

/// Fits the temperature by golden-section search over `log t` on a seeded
/// fitting split and reports the held-out NLL.
pub fn temperature_fit(data: &EvalDataset, split_fraction: f64, seed: u64) -> Result<TemperatureFit> {
    if let Some(r) = data.iter().find(|r| r.logits.is_none()) {
        return Err(Error::record(&r.id, "temperature scaling needs logits"));
    }
    let split = calibration_split(data, split_fraction, seed)?;
    let [lo, hi] = LOG_TEMPERATURE_BOUNDS;
    let best = golden_section_minimize(|s| histogram_nll(data, &split.fit, s.exp()), lo, hi, 1e-10);
    if !best.value.is_finite() {
        return Err(Error::Numeric("temperature objective is not finite".into()));
    }
    let t = best.x.exp();
    Ok(TemperatureFit {
        model: TemperatureModel { t },
        boundary_flag: best.at_boundary,
        fit_nll: best.value,
        held_out_nll: (!split.held_out.is_empty()).then(|| histogram_nll(data, &split.held_out, t)),
    })
}

/// Replaces every record's prediction with its tempered logits.
pub fn apply_temperature_dataset(data: &EvalDataset, model: TemperatureModel) -> Result<EvalDataset> {
    let preds = data
        .iter()
        .map(|r| {
            r.logits
                .as_deref()
                .map(|u| apply_temperature(u, model))
                .ok_or_else(|| Error::record(&r.id, "temperature scaling needs logits"))
        })
        .collect::<Result<Vec<_>>>()?;
    data.with_predictions(preds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InstanceRecord, LabelHistogram};
    use crate::numeric::argmax;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn apply_examples() {
        let p = apply_temperature(&[2.0, 0.0], TemperatureModel::new(2.0).unwrap());
        assert_abs_diff_eq!(p[0], 0.731_058_578_630_004_9, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.268_941_421_369_995_1, epsilon = 1e-12);
        let u = [0.3, -1.0, 2.0];
        let p = apply_temperature(&u, TemperatureModel::new(1.0).unwrap());
        assert_eq!(p.as_slice(), softmax(&u).as_slice());
        let p = apply_temperature(&u, TemperatureModel::new(1e12).unwrap());
        for v in p.as_slice() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_non_positive_temperature() {
        assert!(TemperatureModel::new(0.0).is_err());
        assert!(TemperatureModel::new(-1.0).is_err());
    }

    #[test]
    fn unanimous_single_record_hits_boundary() {
        let r = InstanceRecord::new("a", ProbVector::uniform(2), LabelHistogram::new(vec![3, 0]).unwrap())
            .with_logits(vec![1.0, 0.0]);
        let d = EvalDataset::new(vec![r]).unwrap();
        let fit = temperature_fit(&d, 0.8, 0).unwrap();
        assert!(fit.boundary_flag);
        assert!(fit.model.t < 0.01);
    }

    #[test]
    fn missing_logits_is_an_error() {
        let r = InstanceRecord::new("a", ProbVector::uniform(2), LabelHistogram::new(vec![1, 0]).unwrap());
        let d = EvalDataset::new(vec![r]).unwrap();
        assert!(temperature_fit(&d, 0.8, 0).is_err());
    }

    proptest! {
        #[test]
        fn argmax_is_preserved(u in prop::collection::vec(-20.0f64..20.0, 2..6), log_t in -5.0f64..5.0) {
            let p = apply_temperature(&u, TemperatureModel::new(log_t.exp()).unwrap());
            prop_assert_eq!(argmax(p.as_slice()), argmax(&u));
            prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
