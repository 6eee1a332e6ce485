//! Assembly of the full evaluation report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::binned::EstimatorMode;
use crate::ensemble::{ensemble_alpha_dpe, ensemble_dpe, ensemble_mean_cpe};
use crate::error::{Error, Result};
use crate::model::{BinningScheme, EvalDataset, InstanceRecord, ReportMeta};
use crate::order1::{evaluate_order1, Order1Result, WeightPolicy};
use crate::order2::{cl_phi, l_phi_unbiased, PhiBin, PhiPrediction, SymmetricStatistic};
use crate::synthetic::{true_metrics_oracle, GroundTruthRecord};

/// Disagreement metrics; all `None` when some record has fewer than two
/// labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order2Report {
    pub l_phi: Option<f64>,
    pub cl_phi_plugin: Option<f64>,
    pub cl_phi_debiased: Option<f64>,
    pub ce_phi: Option<f64>,
    pub ce_phi_clamped: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_bin: Vec<PhiBin>,
}

/// `el - cl - dl` per estimator mode; zero up to rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub plugin_gap: f64,
    pub debiased_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub meta: ReportMeta,
    pub order1: Order1Result,
    pub order2: Order2Report,
    pub identity: IdentityCheck,
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_std_errors: Option<BTreeMap<String, f64>>,
    /// Estimate minus oracle value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<BTreeMap<String, Option<f64>>>,
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions<'a> {
    pub scheme: BinningScheme,
    pub weights: WeightPolicy,
    pub truth: Option<&'a [GroundTruthRecord]>,
    /// Monte Carlo label draws for the oracle.
    pub mc_labels: usize,
    pub seed: Option<u64>,
}

impl Default for EvaluateOptions<'_> {
    fn default() -> Self {
        Self {
            scheme: BinningScheme::uniform(BinningScheme::DEFAULT_BINS).expect("default bins"),
            weights: WeightPolicy::Uniform,
            truth: None,
            mc_labels: 0,
            seed: None,
        }
    }
}

fn order2(data: &EvalDataset, scheme: &BinningScheme, flags: &mut Vec<String>) -> Result<Order2Report> {
    if data.min_labels() < 2 {
        flags.push("order2: disagreement metrics need >= 2 labels per record".into());
        return Ok(Order2Report {
            l_phi: None,
            cl_phi_plugin: None,
            cl_phi_debiased: None,
            ce_phi: None,
            ce_phi_clamped: None,
            per_bin: Vec::new(),
        });
    }
    let stat = SymmetricStatistic::disagreement();
    let preds = data
        .iter()
        .map(|r| PhiPrediction::new(r.disagreement_estimate()))
        .collect::<Result<Vec<_>>>()?;
    let plugin = cl_phi(data, &stat, &preds, scheme, EstimatorMode::Plugin)?;
    let debiased = cl_phi(data, &stat, &preds, scheme, EstimatorMode::Debiased)?;
    if debiased.ce_clamped {
        flags.push("order2: debiased cl_phi is negative; ce_phi clamped to 0".into());
    }
    Ok(Order2Report {
        l_phi: Some(l_phi_unbiased(data, &stat, &preds)?),
        cl_phi_plugin: Some(plugin.total),
        cl_phi_debiased: Some(debiased.total),
        ce_phi: Some(debiased.ce),
        ce_phi_clamped: Some(debiased.ce_clamped),
        per_bin: debiased.per_bin,
    })
}

/// Every metric for `data`, plus oracle values and deltas when ground truth
/// is supplied.
pub fn evaluate(data: &EvalDataset, options: &EvaluateOptions) -> Result<ReportFile> {
    let mut flags = Vec::new();
    let order1 = evaluate_order1(data, &options.scheme, &options.weights)?;
    if order1.el_unbiased.is_none() {
        flags.push("order1: el_unbiased and dl_debiased need >= 2 labels per record".into());
    }
    if order1.ce_clamped {
        flags.push("order1: debiased cl is negative; ce_debiased clamped to 0".into());
    }
    let undersized = order1.per_bin.iter().filter(|b| b.count == 1).count();
    if undersized > 0 {
        flags.push(format!(
            "order1: {undersized} class-bin cells hold a single record; their debiased cl is 0"
        ));
    }
    let order2 = order2(data, &options.scheme, &mut flags)?;
    let identity = IdentityCheck {
        plugin_gap: order1.el_plugin - order1.cl_plugin - order1.dl_plugin,
        debiased_gap: match (order1.el_unbiased, order1.dl_debiased) {
            (Some(el), Some(dl)) => Some(el - order1.cl_debiased - dl),
            _ => None,
        },
    };
    let meta = ReportMeta {
        n: data.len(),
        k: data.k(),
        bins: options.scheme.bins(),
        bin_edges: options.scheme.edges().to_vec(),
        weight_policy: options.weights.name().into(),
        seed: options.seed,
    };
    let mut report = ReportFile {
        meta,
        order1,
        order2,
        identity,
        flags,
        oracle: None,
        oracle_std_errors: None,
        deltas: None,
    };
    if let Some(truth) = options.truth {
        let oracle = true_metrics_oracle(data, truth, &options.scheme, options.mc_labels, options.seed.unwrap_or(0))?;
        let o = &oracle.entries;
        let r = &report;
        let pairs = [
            ("l_sq_unbiased", Some(r.order1.l_sq_unbiased), "l_sq"),
            ("el_plugin", Some(r.order1.el_plugin), "el"),
            ("el_unbiased", r.order1.el_unbiased, "el"),
            ("cl_plugin", Some(r.order1.cl_plugin), "cl"),
            ("cl_debiased", Some(r.order1.cl_debiased), "cl"),
            ("l_phi", r.order2.l_phi, "l_phi"),
            ("cl_phi_plugin", r.order2.cl_phi_plugin, "cl_phi"),
            ("cl_phi_debiased", r.order2.cl_phi_debiased, "cl_phi"),
        ];
        let deltas = pairs
            .into_iter()
            .map(|(name, est, key)| (name.to_string(), est.zip(o.get(key)).map(|(e, t)| e - t)))
            .collect();
        report.flags.extend(oracle.flags.iter().map(|f| format!("oracle: {f}")));
        report.deltas = Some(deltas);
        report.oracle_std_errors = (!oracle.std_errors.is_empty()).then(|| oracle.std_errors.clone());
        report.oracle = Some(oracle.entries);
    }
    Ok(report)
}

/// Which prediction of each record to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionSource {
    /// `probs`, with any attached `alpha0`/`dpe`.
    Probs,
    /// `posterior`, with disagreement estimated as `1 - sum z_k^2`.
    Posterior,
    /// Mean of the ensemble members, with the ensemble disagreement
    /// estimate (alpha-calibrated when `ensemble_alpha0` is present).
    Ensemble,
}

/// Copy of `data` whose predictions come from `source`.
pub fn select_predictions(data: &EvalDataset, source: PredictionSource) -> Result<EvalDataset> {
    let records = data
        .iter()
        .map(|r| {
            let bare = |prediction, dpe| InstanceRecord {
                prediction,
                dpe,
                alpha0: None,
                posterior: None,
                ..r.clone()
            };
            match source {
                PredictionSource::Probs => Ok(r.clone()),
                PredictionSource::Posterior => r
                    .posterior
                    .clone()
                    .map(|p| bare(p, None))
                    .ok_or_else(|| Error::record(&r.id, "no posterior probabilities; run alpha-apply with a posterior label")),
                PredictionSource::Ensemble => {
                    let members = r
                        .ensemble
                        .as_deref()
                        .ok_or_else(|| Error::record(&r.id, "no ensemble members"))?;
                    let dpe = match &r.ensemble_alpha0 {
                        Some(alphas) => {
                            let paired: Vec<_> = members.iter().cloned().zip(alphas.iter().copied()).collect();
                            ensemble_alpha_dpe(&paired)?
                        }
                        None => ensemble_dpe(members)?,
                    };
                    Ok(bare(ensemble_mean_cpe(members)?, Some(dpe)))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    EvalDataset::new(records)
}

/// `(disagreement estimate, U-statistic mean)` per record, for reliability
/// diagrams of the disagreement target.
pub fn disagreement_pairs(data: &EvalDataset) -> Result<(Vec<f64>, Vec<f64>)> {
    let stat = SymmetricStatistic::disagreement();
    let targets = crate::order2::statistic_means(data, &stat)?;
    Ok((data.iter().map(InstanceRecord::disagreement_estimate).collect(), targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::gen_uniform_binary;

    #[test]
    fn single_label_data_gets_nulls_and_flags() {
        let s = gen_uniform_binary(200, 1, 3).unwrap();
        let r = evaluate(&s.data, &EvaluateOptions::default()).unwrap();
        assert!(r.order1.el_unbiased.is_none());
        assert!(r.order2.l_phi.is_none());
        assert!(r.flags.iter().any(|f| f.contains(">= 2 labels")));
        let v = serde_json::to_value(&r).unwrap();
        assert!(v["order1"]["el_unbiased"].is_null());
    }

    #[test]
    fn ensemble_view_uses_member_mean_and_mixture_dpe() {
        use crate::model::{LabelHistogram, ProbVector};
        let members = vec![ProbVector::from_raw(vec![0.8, 0.2]), ProbVector::from_raw(vec![0.2, 0.8])];
        let r = InstanceRecord::new("a", ProbVector::uniform(2), LabelHistogram::from_raw(vec![1, 1]))
            .with_ensemble(members);
        let d = EvalDataset::new(vec![r]).unwrap();
        let v = select_predictions(&d, PredictionSource::Ensemble).unwrap();
        assert_eq!(v.records()[0].prediction.as_slice(), &[0.5, 0.5]);
        assert!((v.records()[0].dpe.unwrap() - 0.32).abs() < 1e-15);
        assert!(select_predictions(&d, PredictionSource::Posterior).is_err());
    }

    #[test]
    fn identity_gaps_vanish() {
        let s = gen_uniform_binary(500, 3, 4).unwrap();
        let r = evaluate(&s.data, &EvaluateOptions::default()).unwrap();
        assert!(r.identity.plugin_gap.abs() < 1e-12);
        assert!(r.identity.debiased_gap.unwrap().abs() < 1e-12);
    }

    #[test]
    fn truth_adds_oracle_and_deltas() {
        let s = gen_uniform_binary(300, 2, 5).unwrap();
        let opts = EvaluateOptions {
            truth: Some(&s.truth),
            mc_labels: 20,
            seed: Some(1),
            ..EvaluateOptions::default()
        };
        let r = evaluate(&s.data, &opts).unwrap();
        assert_eq!(r.oracle.as_ref().unwrap()["el"], 0.0);
        let d = r.deltas.as_ref().unwrap();
        assert_eq!(d["el_plugin"], Some(r.order1.el_plugin));
        assert!(r.oracle_std_errors.unwrap().contains_key("mc_cl_plugin"));
    }
}
