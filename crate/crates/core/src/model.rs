//! Domain types shared by every metric and calibration module.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{argmax, ksum};

/// Allowed deviation of a probability vector's sum from one.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;
/// Deviations up to this much are renormalized away on construction.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates `probs`, renormalizing sums within [`RENORMALIZE_TOLERANCE`]
    /// of one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidProbVector("empty vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
            return Err(Error::InvalidProbVector(format!("entry {p} outside [0, 1]")));
        }
        let sum = ksum(probs.iter().copied());
        let deviation = (sum - 1.0).abs();
        if deviation <= SIMPLEX_TOLERANCE {
            Ok(Self(probs))
        } else if deviation <= RENORMALIZE_TOLERANCE {
            Ok(Self(probs.into_iter().map(|p| p / sum).collect()))
        } else {
            Err(Error::InvalidProbVector(format!("entries sum to {sum}")))
        }
    }

    /// Wraps `probs` without validation. [`validate_records`] reports any
    /// violation later.
    pub fn from_raw(probs: Vec<f64>) -> Self {
        Self(probs)
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    /// Clamps entries to at least `floor` and renormalizes.
    pub fn floored(&self, floor: f64) -> Self {
        let raised: Vec<f64> = self.0.iter().map(|p| p.max(floor)).collect();
        let sum = ksum(raised.iter().copied());
        Self(raised.into_iter().map(|p| p / sum).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.0.iter().map(|p| p * p).sum()
    }

    /// Gini-Simpson index `1 - sum p_k^2`.
    pub fn gini_simpson(&self) -> f64 {
        1.0 - self.sum_of_squares()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    fn violation(&self) -> Option<String> {
        if self.0.is_empty() {
            return Some("empty probability vector".into());
        }
        if let Some(p) = self.0.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
            return Some(format!("probability {p} outside [0, 1]"));
        }
        let sum = ksum(self.0.iter().copied());
        ((sum - 1.0).abs() > SIMPLEX_TOLERANCE).then(|| format!("probabilities sum to {sum}"))
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

/// Annotation counts per class for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelHistogram(Vec<u32>);

impl LabelHistogram {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidHistogram("no classes".into()));
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::InvalidHistogram("no annotations (n >= 1 required)".into()));
        }
        Ok(Self(counts))
    }

    pub fn from_raw(counts: Vec<u32>) -> Self {
        Self(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    /// Total number of annotations, `n_i`.
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Empirical class frequency `y_k / n`.
    pub fn frequency(&self, k: usize) -> f64 {
        f64::from(self.0[k]) / f64::from(self.total())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = f64::from(self.total());
        self.0.iter().map(|&c| f64::from(c) / n).collect()
    }

    /// Majority class, lowest index on ties.
    pub fn majority(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.0.iter().enumerate().skip(1) {
            if c > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Removes one annotation of class `k`.
    pub fn remove_one(&mut self, k: usize) -> Result<()> {
        match self.0.get_mut(k) {
            Some(c) if *c > 0 => {
                *c -= 1;
                Ok(())
            }
            _ => Err(Error::InvalidHistogram(format!("no annotation of class {k} to remove"))),
        }
    }
}

/// One evaluated instance: prediction, labels, and optional side data.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub id: String,
    pub prediction: ProbVector,
    pub histogram: LabelHistogram,
    /// Pre-softmax scores. `softmax(logits)` need not equal `prediction`,
    /// e.g. after a calibration step rewrote the probabilities.
    pub logits: Option<Vec<f64>>,
    /// Shared feature vector used by featurized alpha models.
    pub features: Option<Vec<f64>>,
    pub ensemble: Option<Vec<ProbVector>>,
    pub ensemble_alpha0: Option<Vec<f64>>,
    /// Dirichlet concentration attached by alpha-calibration.
    pub alpha0: Option<f64>,
    /// Disagreement probability estimate attached by alpha-calibration.
    pub dpe: Option<f64>,
    /// Posterior class probabilities after one consumed annotation.
    pub posterior: Option<ProbVector>,
    /// Class of the annotation consumed to form `posterior`; it is no
    /// longer counted in `histogram`.
    pub consumed_label: Option<usize>,
}

impl InstanceRecord {
    pub fn new(id: impl Into<String>, prediction: ProbVector, histogram: LabelHistogram) -> Self {
        Self {
            id: id.into(),
            prediction,
            histogram,
            logits: None,
            features: None,
            ensemble: None,
            ensemble_alpha0: None,
            alpha0: None,
            dpe: None,
            posterior: None,
            consumed_label: None,
        }
    }

    pub fn with_logits(mut self, logits: Vec<f64>) -> Self {
        self.logits = Some(logits);
        self
    }

    pub fn with_features(mut self, features: Vec<f64>) -> Self {
        self.features = Some(features);
        self
    }

    pub fn with_ensemble(mut self, members: Vec<ProbVector>) -> Self {
        self.ensemble = Some(members);
        self
    }

    pub fn n_labels(&self) -> u32 {
        self.histogram.total()
    }

    /// Disagreement probability estimate for this record: the attached
    /// `dpe`, else the one implied by `alpha0`, else the point-mass value
    /// `1 - sum z_k^2`.
    pub fn disagreement_estimate(&self) -> f64 {
        if let Some(d) = self.dpe {
            return d;
        }
        match self.alpha0 {
            Some(a) => crate::alpha::dpe_from_alpha(&self.prediction, a),
            None => self.prediction.gini_simpson(),
        }
    }
}

/// A record-level invariant that does not hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Offending record id, `None` for dataset-wide problems.
    pub record: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.record {
            Some(id) => write!(f, "record `{id}`: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

/// Checks every record invariant. The class count is taken from the first
/// record's prediction.
pub fn validate_records(records: &[InstanceRecord]) -> Vec<Violation> {
    let mut out = Vec::new();
    let Some(first) = records.first() else {
        out.push(Violation {
            record: None,
            message: "dataset is empty".into(),
        });
        return out;
    };
    let k = first.prediction.len();
    let mut seen = HashSet::new();
    for r in records {
        let mut push = |message: String| {
            out.push(Violation {
                record: Some(r.id.clone()),
                message,
            })
        };
        if !seen.insert(r.id.as_str()) {
            push("duplicate id".into());
        }
        if r.prediction.len() != k {
            push(format!("prediction has {} classes, expected {k}", r.prediction.len()));
        }
        if let Some(msg) = r.prediction.violation() {
            push(msg);
        }
        if r.histogram.k() != k {
            push(format!("histogram has {} classes, expected {k}", r.histogram.k()));
        }
        if r.histogram.total() == 0 {
            push("histogram has no annotations (n >= 1 required)".into());
        }
        if let Some(logits) = &r.logits {
            if logits.len() != k {
                push(format!("logits have {} entries, expected {k}", logits.len()));
            }
            if logits.iter().any(|u| !u.is_finite()) {
                push("non-finite logit".into());
            }
        }
        if let Some(features) = &r.features {
            if features.iter().any(|g| !g.is_finite()) {
                push("non-finite feature".into());
            }
        }
        if let Some(members) = &r.ensemble {
            if members.is_empty() {
                push("empty ensemble".into());
            }
            for (s, m) in members.iter().enumerate() {
                if m.len() != k {
                    push(format!("ensemble member {s} has {} classes, expected {k}", m.len()));
                }
                if let Some(msg) = m.violation() {
                    push(format!("ensemble member {s}: {msg}"));
                }
            }
            if let Some(a) = &r.ensemble_alpha0 {
                if a.len() != members.len() {
                    push(format!("{} ensemble_alpha0 values for {} members", a.len(), members.len()));
                }
            }
        } else if r.ensemble_alpha0.is_some() {
            push("ensemble_alpha0 without ensemble".into());
        }
        if let Some(a) = &r.ensemble_alpha0 {
            if a.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                push("ensemble_alpha0 values must be positive".into());
            }
        }
        if let Some(a) = r.alpha0 {
            if !a.is_finite() || a <= 0.0 {
                push(format!("alpha0 {a} is not positive"));
            }
        }
        if let Some(d) = r.dpe {
            if !(0.0..=1.0).contains(&d) {
                push(format!("dpe {d} outside [0, 1]"));
            }
        }
        if let Some(p) = &r.posterior {
            if p.len() != k {
                push(format!("posterior has {} classes, expected {k}", p.len()));
            }
            if let Some(msg) = p.violation() {
                push(format!("posterior: {msg}"));
            }
        }
        if let Some(c) = r.consumed_label {
            if c >= k {
                push(format!("consumed_label {c} out of range for {k} classes"));
            }
        }
    }
    out
}

/// Validated, non-empty collection of records sharing one class count.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDataset {
    records: Vec<InstanceRecord>,
    k: usize,
    min_labels: u32,
}

impl EvalDataset {
    pub fn new(records: Vec<InstanceRecord>) -> Result<Self> {
        let violations = validate_records(&records);
        if let Some(v) = violations.first() {
            let more = violations.len() - 1;
            let suffix = if more > 0 { format!(" (and {more} more)") } else { String::new() };
            return Err(match &v.record {
                Some(id) => Error::record(id.clone(), format!("{}{suffix}", v.message)),
                None => Error::InvalidDataset(v.message.clone()),
            });
        }
        let k = records[0].prediction.len();
        let min_labels = records.iter().map(InstanceRecord::n_labels).min().unwrap_or(0);
        Ok(Self {
            records,
            k,
            min_labels,
        })
    }

    pub fn records(&self) -> &[InstanceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<InstanceRecord> {
        self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, InstanceRecord> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Class count `K`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Smallest annotation count over all records.
    pub fn min_labels(&self) -> u32 {
        self.min_labels
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_records(&self.records)
    }

    /// Same records with predictions replaced, in record order.
    pub fn with_predictions(&self, predictions: Vec<ProbVector>) -> Result<Self> {
        if predictions.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} predictions for {} records",
                predictions.len(),
                self.len()
            )));
        }
        let records = self
            .records
            .iter()
            .zip(predictions)
            .map(|(r, p)| InstanceRecord {
                prediction: p,
                ..r.clone()
            })
            .collect();
        Self::new(records)
    }

    /// Records whose `posterior` replaces their prediction. Every record must
    /// carry a posterior.
    pub fn posterior_view(&self) -> Result<Self> {
        let predictions = self
            .records
            .iter()
            .map(|r| {
                r.posterior
                    .clone()
                    .ok_or_else(|| Error::record(&r.id, "no posterior probabilities"))
            })
            .collect::<Result<Vec<_>>>()?;
        self.with_predictions(predictions)
    }
}

impl<'a> IntoIterator for &'a EvalDataset {
    type Item = &'a InstanceRecord;
    type IntoIter = std::slice::Iter<'a, InstanceRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

/// Partition of `[0, 1]` into `[e_0, e_1), ..., [e_{B-1}, e_B]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningScheme {
    edges: Vec<f64>,
}

impl BinningScheme {
    pub const DEFAULT_BINS: usize = 15;

    /// `bins` equal-width bins.
    pub fn uniform(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidBinning("at least one bin required".into()));
        }
        let edges = (0..=bins).map(|b| b as f64 / bins as f64).collect();
        Ok(Self { edges })
    }

    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidBinning("need at least two edges".into()));
        }
        if edges[0] != 0.0 || edges[edges.len() - 1] != 1.0 {
            return Err(Error::InvalidBinning("edges must start at 0 and end at 1".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidBinning("edges must be strictly increasing".into()));
        }
        Ok(Self { edges })
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// `(lower, upper)` edges of bin `b`.
    pub fn bounds(&self, b: usize) -> (f64, f64) {
        (self.edges[b], self.edges[b + 1])
    }

    /// Bin holding `value`; 1.0 lands in the last bin. Values outside
    /// `[0, 1]` are clamped.
    pub fn bin_of(&self, value: f64) -> usize {
        debug_assert!(!value.is_nan(), "NaN cannot be binned");
        let interior = &self.edges[1..self.edges.len() - 1];
        interior.partition_point(|&e| e <= value)
    }
}

/// Index sets of `values` per bin, in input order within each bin.
pub fn assign_bins(values: &[f64], scheme: &BinningScheme) -> Vec<Vec<usize>> {
    let mut bins = vec![Vec::new(); scheme.bins()];
    for (i, &v) in values.iter().enumerate() {
        bins[scheme.bin_of(v)].push(i);
    }
    bins
}

/// Metadata attached to every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub n: usize,
    pub k: usize,
    pub bins: usize,
    pub bin_edges: Vec<f64>,
    pub weight_policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Named metric values with optional standard errors and notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub meta: ReportMeta,
    pub entries: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub std_errors: BTreeMap<String, f64>,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl MetricReport {
    pub fn new(meta: ReportMeta) -> Self {
        Self {
            meta,
            entries: BTreeMap::new(),
            std_errors: BTreeMap::new(),
            flags: Vec::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.get(name).copied()
    }
}
