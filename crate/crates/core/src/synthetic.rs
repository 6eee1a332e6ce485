//! Synthetic datasets with known true class probabilities `Q`, prediction
//! distortion, and oracles for the population values of the metrics.
//!
//! Every generator draws from one `ChaCha8Rng` stream seeded with
//! `seed_from_u64`, in record order, so outputs depend only on the
//! arguments.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binned;
use crate::error::{Error, Result};
use crate::model::{BinningScheme, EvalDataset, InstanceRecord, LabelHistogram, MetricReport, ProbVector, ReportMeta};
use crate::numeric::{ksum, log_sum_exp, softmax};
use crate::order1::{calibration_loss, epistemic_loss_plugin};
use crate::binned::EstimatorMode;

/// Name of the random stream, recorded in report metadata.
pub const RNG_NAME: &str = "ChaCha8Rng/seed_from_u64";
/// Standard deviation of the noise added to synthetic features.
pub const FEATURE_NOISE: f64 = 0.1;
const LOGIT_FLOOR: f64 = 1e-8;

/// Known class probabilities of one synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub id: String,
    pub q: ProbVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<u64>,
}

/// A generated dataset together with its ground truth, aligned by index.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub data: EvalDataset,
    pub truth: Vec<GroundTruthRecord>,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn record_id(i: usize) -> String {
    format!("r{i:06}")
}

/// Draws from `Dir(alpha)`. Gammas are drawn in log space so tiny
/// concentrations do not underflow to an all-zero vector.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            if a >= 1.0 {
                Gamma::new(a, 1.0).expect("positive shape").sample(rng).ln()
            } else {
                let g = Gamma::new(a + 1.0, 1.0).expect("positive shape").sample(rng).ln();
                let u: f64 = rng.random();
                g + u.ln() / a
            }
        })
        .collect();
    let lse = log_sum_exp(&logs);
    logs.iter().map(|l| (l - lse).exp()).collect()
}

/// `n` i.i.d. categorical draws from `q`, as counts.
pub fn sample_histogram<R: Rng + ?Sized>(rng: &mut R, q: &[f64], n: u32) -> Vec<u32> {
    let mut counts = vec![0u32; q.len()];
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = q.len() - 1;
        for (j, &p) in q.iter().enumerate() {
            acc += p;
            if u < acc {
                k = j;
                break;
            }
        }
        counts[k] += 1;
    }
    counts
}

fn check_sizes(n_instances: usize, n_labels: u32) -> Result<()> {
    if n_instances == 0 {
        return Err(Error::InvalidArgument("need at least one instance".into()));
    }
    if n_labels == 0 {
        return Err(Error::InvalidArgument("need at least one label per instance".into()));
    }
    Ok(())
}

/// Binary instances with `Q_1 ~ U(0, 1)`, `n_labels` labels each, and the
/// perfect predictor `z = Q`.
pub fn gen_uniform_binary(n_instances: usize, n_labels: u32, seed: u64) -> Result<SyntheticData> {
    check_sizes(n_instances, n_labels)?;
    let mut rng = rng(seed);
    let mut records = Vec::with_capacity(n_instances);
    let mut truth = Vec::with_capacity(n_instances);
    for i in 0..n_instances {
        let q1: f64 = rng.random();
        let q = ProbVector::from_raw(vec![q1, 1.0 - q1]);
        let counts = sample_histogram(&mut rng, q.as_slice(), n_labels);
        let id = record_id(i);
        records.push(InstanceRecord::new(id.clone(), q.clone(), LabelHistogram::from_raw(counts)));
        truth.push(GroundTruthRecord { id, q, group: None });
    }
    Ok(SyntheticData {
        data: EvalDataset::new(records)?,
        truth,
    })
}

fn noisy_logit_features<R: Rng + ?Sized>(rng: &mut R, q: &[f64]) -> Vec<f64> {
    let noise = Normal::new(0.0, FEATURE_NOISE).expect("valid sigma");
    q.iter()
        .map(|&p| {
            let p = p.clamp(LOGIT_FLOOR, 1.0 - LOGIT_FLOOR);
            (p / (1.0 - p)).ln() + noise.sample(rng)
        })
        .collect()
}

/// `Q ~ Dir(concentration * 1)` over `k` classes, perfect predictor, and
/// features `logit(Q_k) + N(0, 0.1^2)`. An infinite concentration gives
/// uniform `Q`.
pub fn gen_dirichlet_multiclass(
    n_instances: usize,
    k: usize,
    n_labels: u32,
    concentration: f64,
    seed: u64,
) -> Result<SyntheticData> {
    check_sizes(n_instances, n_labels)?;
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least two classes, got {k}")));
    }
    if !(concentration > 0.0) {
        return Err(Error::InvalidArgument(format!("concentration {concentration} must be positive")));
    }
    let mut rng = rng(seed);
    let alpha = vec![concentration; k];
    let mut records = Vec::with_capacity(n_instances);
    let mut truth = Vec::with_capacity(n_instances);
    for i in 0..n_instances {
        let q = if concentration.is_infinite() {
            ProbVector::uniform(k)
        } else {
            ProbVector::from_raw(sample_dirichlet(&mut rng, &alpha))
        };
        let counts = sample_histogram(&mut rng, q.as_slice(), n_labels);
        let features = noisy_logit_features(&mut rng, q.as_slice());
        let id = record_id(i);
        records.push(InstanceRecord::new(id.clone(), q.clone(), LabelHistogram::from_raw(counts)).with_features(features));
        truth.push(GroundTruthRecord { id, q, group: None });
    }
    Ok(SyntheticData {
        data: EvalDataset::new(records)?,
        truth,
    })
}

/// One group of a grouped dataset: `Q ~ Dir(concentration * mean)` and
/// every member predicted as `prediction`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub mean: ProbVector,
    pub concentration: f64,
    pub prediction: ProbVector,
}

/// Instances in groups sharing one prediction, with group ids `0..`.
pub fn gen_grouped(groups: &[GroupSpec], per_group: usize, n_labels: u32, seed: u64) -> Result<SyntheticData> {
    check_sizes(per_group, n_labels)?;
    let k = groups
        .first()
        .map(|g| g.mean.len())
        .ok_or_else(|| Error::InvalidArgument("no groups".into()))?;
    let mut rng = rng(seed);
    let mut records = Vec::new();
    let mut truth = Vec::new();
    for (g, spec) in groups.iter().enumerate() {
        if spec.mean.len() != k || spec.prediction.len() != k {
            return Err(Error::InvalidArgument(format!("group {g} has a different class count")));
        }
        let alpha: Vec<f64> = spec.mean.as_slice().iter().map(|m| m * spec.concentration).collect();
        for _ in 0..per_group {
            let q = ProbVector::from_raw(sample_dirichlet(&mut rng, &alpha));
            let counts = sample_histogram(&mut rng, q.as_slice(), n_labels);
            let id = record_id(records.len());
            records.push(InstanceRecord::new(id.clone(), spec.prediction.clone(), LabelHistogram::from_raw(counts)));
            truth.push(GroundTruthRecord {
                id,
                q,
                group: Some(g as u64),
            });
        }
    }
    Ok(SyntheticData {
        data: EvalDataset::new(records)?,
        truth,
    })
}

/// Rescales predictions in log space: logits become `temperature * log z`
/// (with `z` floored at 1e-8) and predictions their softmax. Temperature
/// scaling the result with `t = temperature` restores `z`, so values above
/// one make the predictor overconfident and values below one
/// underconfident. Argmax is preserved.
pub fn distort_predictor(data: &EvalDataset, temperature: f64) -> Result<EvalDataset> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature {temperature} must be positive")));
    }
    let records = data
        .iter()
        .map(|r| {
            let z = r.prediction.floored(LOGIT_FLOOR);
            let logits: Vec<f64> = z.as_slice().iter().map(|p| temperature * p.ln()).collect();
            InstanceRecord {
                prediction: ProbVector::from_raw(softmax(&logits)),
                logits: Some(logits),
                dpe: None,
                alpha0: None,
                posterior: None,
                ..r.clone()
            }
        })
        .collect();
    EvalDataset::new(records)
}

/// Adds independent `N(0, noise_sd^2)` noise to `log z` per class and
/// stores the result as logits, with their softmax as predictions. This
/// mimics an imperfect classifier whose errors vary from instance to
/// instance; argmax may change.
pub fn add_logit_noise(data: &EvalDataset, noise_sd: f64, seed: u64) -> Result<EvalDataset> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sd {noise_sd} must be non-negative")));
    }
    let noise = Normal::new(0.0, noise_sd).expect("valid sigma");
    let mut rng = rng(seed);
    let records = data
        .iter()
        .map(|r| {
            let z = r.prediction.floored(LOGIT_FLOOR);
            let logits: Vec<f64> = z.as_slice().iter().map(|p| p.ln() + noise.sample(&mut rng)).collect();
            InstanceRecord {
                prediction: ProbVector::from_raw(softmax(&logits)),
                logits: Some(logits),
                dpe: None,
                alpha0: None,
                posterior: None,
                ..r.clone()
            }
        })
        .collect();
    EvalDataset::new(records)
}

/// Population quantities of one group of instances sharing a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupTruth {
    pub size: usize,
    /// `E[sum_k Q_k^2]`.
    pub u_q: f64,
    /// `sum_k Var[Q_k]`.
    pub v_q: f64,
    /// `sum_k Z_k^2` averaged over the group.
    pub s_z: f64,
    /// `E[sum_k (Z_k - Q_k)^2]`.
    pub el_g: f64,
}

fn aligned<'a>(data: &EvalDataset, truth: &'a [GroundTruthRecord]) -> Result<Vec<&'a GroundTruthRecord>> {
    if truth.len() != data.len() {
        return Err(Error::InvalidArgument(format!(
            "{} truth records for {} data records",
            truth.len(),
            data.len()
        )));
    }
    let by_id: BTreeMap<&str, &GroundTruthRecord> = truth.iter().map(|t| (t.id.as_str(), t)).collect();
    data.iter()
        .map(|r| {
            let t = by_id
                .get(r.id.as_str())
                .copied()
                .ok_or_else(|| Error::record(&r.id, "no ground truth for this id"))?;
            if t.q.len() != data.k() {
                return Err(Error::record(&r.id, "ground truth has a different class count"));
            }
            Ok(t)
        })
        .collect()
}

/// Group quantities for every group id present in the truth.
pub fn group_truths(data: &EvalDataset, truth: &[GroundTruthRecord]) -> Result<BTreeMap<u64, GroupTruth>> {
    let truth = aligned(data, truth)?;
    let mut members: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, t) in truth.iter().enumerate() {
        if let Some(g) = t.group {
            members.entry(g).or_default().push(i);
        }
    }
    let k = data.k();
    Ok(members
        .into_iter()
        .map(|(g, idx)| {
            let m = idx.len() as f64;
            let q = |i: usize, c: usize| truth[i].q[c];
            let z = |i: usize| &data.records()[i].prediction;
            let u_q = ksum(idx.iter().map(|&i| truth[i].q.sum_of_squares())) / m;
            let v_q = ksum((0..k).map(|c| {
                let mean = ksum(idx.iter().map(|&i| q(i, c))) / m;
                ksum(idx.iter().map(|&i| (q(i, c) - mean).powi(2))) / m
            }));
            let s_z = ksum(idx.iter().map(|&i| z(i).sum_of_squares())) / m;
            let el_g = ksum(idx.iter().map(|&i| ksum((0..k).map(|c| (z(i)[c] - q(i, c)).powi(2))))) / m;
            (
                g,
                GroupTruth {
                    size: idx.len(),
                    u_q,
                    v_q,
                    s_z,
                    el_g,
                },
            )
        })
        .collect())
}

/// Population values of the metrics for `data` given its true class
/// probabilities.
///
/// Entries: `el`, `l_sq` (uniform weights), `cl` (binned with `Q` in place
/// of label frequencies), `disagreement_mean`, `l_phi` and `cl_phi` for the
/// records' disagreement estimates, plus `group.<g>.{u_q,v_q,s_z,el_g}` for
/// grouped truth. With `mc_labels > 0`, also `mc_el_plugin` and
/// `mc_cl_plugin`: expected plugin estimates over `mc_labels` fresh label
/// draws, with standard errors.
pub fn true_metrics_oracle(
    data: &EvalDataset,
    truth: &[GroundTruthRecord],
    scheme: &BinningScheme,
    mc_labels: usize,
    seed: u64,
) -> Result<MetricReport> {
    let aligned_truth = aligned(data, truth)?;
    let n = data.len() as f64;
    let k = data.k();
    let mut report = MetricReport::new(ReportMeta {
        n: data.len(),
        k,
        bins: scheme.bins(),
        bin_edges: scheme.edges().to_vec(),
        weight_policy: "uniform".into(),
        seed: Some(seed),
    });
    let q = |i: usize| &aligned_truth[i].q;
    let recs = data.records();

    let el = ksum((0..recs.len()).map(|i| ksum((0..k).map(|c| (recs[i].prediction[c] - q(i)[c]).powi(2))))) / n;
    let irreducible = ksum((0..recs.len()).map(|i| q(i).gini_simpson())) / n;
    report.entries.insert("el".into(), el);
    report.entries.insert("l_sq".into(), el + irreducible);
    report.entries.insert("disagreement_mean".into(), irreducible);

    let mut cl = 0.0;
    for c in 0..k {
        let values: Vec<f64> = recs.iter().map(|r| r.prediction[c]).collect();
        let targets: Vec<f64> = (0..recs.len()).map(|i| q(i)[c]).collect();
        cl += ksum(binned::summarize(&values, &targets, scheme, recs.len()).iter().map(|s| s.cl_plugin));
    }
    report.entries.insert("cl".into(), cl);

    let phi_hat: Vec<f64> = recs.iter().map(InstanceRecord::disagreement_estimate).collect();
    let phi_true: Vec<f64> = (0..recs.len()).map(|i| q(i).gini_simpson()).collect();
    let l_phi = ksum(
        phi_hat
            .iter()
            .zip(&phi_true)
            .map(|(&p, &mu)| mu * (1.0 - p).powi(2) + (1.0 - mu) * p * p),
    ) / n;
    let cl_phi = ksum(binned::summarize(&phi_hat, &phi_true, scheme, recs.len()).iter().map(|s| s.cl_plugin));
    report.entries.insert("l_phi".into(), l_phi);
    report.entries.insert("cl_phi".into(), cl_phi);

    for (g, t) in group_truths(data, truth)? {
        for (name, v) in [("u_q", t.u_q), ("v_q", t.v_q), ("s_z", t.s_z), ("el_g", t.el_g)] {
            report.entries.insert(format!("group.{g}.{name}"), v);
        }
    }

    if mc_labels > 0 {
        let draws: Vec<Result<(f64, f64)>> = (0..mc_labels)
            .into_par_iter()
            .map(|m| {
                let mut rng = rng(seed.wrapping_add(m as u64));
                let records = recs
                    .iter()
                    .enumerate()
                    .map(|(i, r)| InstanceRecord {
                        histogram: LabelHistogram::from_raw(sample_histogram(&mut rng, q(i).as_slice(), r.n_labels())),
                        ..r.clone()
                    })
                    .collect();
                let replica = EvalDataset::new(records)?;
                Ok((
                    epistemic_loss_plugin(&replica),
                    calibration_loss(&replica, scheme, EstimatorMode::Plugin).total,
                ))
            })
            .collect();
        let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;
        for (name, values) in [
            ("mc_el_plugin", draws.iter().map(|d| d.0).collect::<Vec<_>>()),
            ("mc_cl_plugin", draws.iter().map(|d| d.1).collect()),
        ] {
            let (mean, se) = mean_and_se(&values);
            report.entries.insert(name.into(), mean);
            report.std_errors.insert(name.into(), se);
        }
        report.flags.push(format!("monte carlo over {mc_labels} label draws ({RNG_NAME})"));
    }
    Ok(report)
}

/// Sample mean and its standard error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = ksum(values.iter().copied()) / m;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = ksum(values.iter().map(|v| (v - mean).powi(2))) / (m - 1.0);
    (mean, (var / m).sqrt())
}
