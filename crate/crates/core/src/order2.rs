//! Evaluation of predicted probabilities for statistics of several labels.
//!
//! A symmetric binary statistic `phi` maps `n` labels of one instance to
//! `{0, 1}`; pairwise disagreement is the case of interest. Its per-instance
//! mean is estimated without bias by averaging `phi` over all size-`n`
//! subsets of the instance's labels (a U-statistic), and the squared loss
//! and binned calibration loss of a prediction `phi_hat` are built on top.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binned::{self, EstimatorMode};
use crate::error::{Error, Result};
use crate::model::{BinningScheme, EvalDataset, LabelHistogram};
use crate::numeric::ksum;

/// Upper limit on the number of label subsets a generic statistic may
/// enumerate for one instance.
pub const MAX_SUBSETS: u64 = 1_000_000;

type Evaluator = Arc<dyn Fn(&[usize]) -> bool + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Disagreement,
    Custom(Evaluator),
}

/// A statistic of `arity` labels, invariant under permuting them.
///
/// Labels are passed to the evaluator as class indices.
#[derive(Clone)]
pub struct SymmetricStatistic {
    name: String,
    arity: usize,
    kind: Kind,
}

impl fmt::Debug for SymmetricStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymmetricStatistic")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .finish()
    }
}

impl SymmetricStatistic {
    /// Pairwise disagreement `I[Y1 != Y2]`, evaluated in closed form.
    pub fn disagreement() -> Self {
        Self {
            name: "disagreement".into(),
            arity: 2,
            kind: Kind::Disagreement,
        }
    }

    /// A user statistic, evaluated by enumerating label subsets. The
    /// evaluator must not depend on the order of its arguments.
    pub fn custom<F>(name: impl Into<String>, arity: usize, evaluator: F) -> Result<Self>
    where
        F: Fn(&[usize]) -> bool + Send + Sync + 'static,
    {
        if arity == 0 {
            return Err(Error::InvalidArgument("statistic arity must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            arity,
            kind: Kind::Custom(Arc::new(evaluator)),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Evaluates the statistic on `arity` class labels.
    pub fn evaluate(&self, labels: &[usize]) -> bool {
        match &self.kind {
            Kind::Disagreement => labels[0] != labels[1],
            Kind::Custom(f) => f(labels),
        }
    }
}

fn binomial(n: u64, r: u64) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// Average of `stat` over all subsets of `arity` labels of the histogram.
pub fn u_statistic_mean(histogram: &LabelHistogram, stat: &SymmetricStatistic) -> Result<f64> {
    let n = histogram.total() as usize;
    if n < stat.arity {
        return Err(Error::InvalidHistogram(format!(
            "{n} labels, statistic `{}` needs {}",
            stat.name, stat.arity
        )));
    }
    match &stat.kind {
        Kind::Disagreement => {
            // Ordered pairs, in integers, so the result is one correctly
            // rounded ratio.
            let n = n as u64;
            let pairs = n * (n - 1);
            let agreeing: u64 = histogram.counts().iter().map(|&y| u64::from(y) * u64::from(y).saturating_sub(1)).sum();
            Ok((pairs - agreeing) as f64 / pairs as f64)
        }
        Kind::Custom(f) => enumerate_mean(histogram, stat.arity, f.as_ref()),
    }
}

fn enumerate_mean(histogram: &LabelHistogram, arity: usize, f: &(dyn Fn(&[usize]) -> bool + Send + Sync)) -> Result<f64> {
    let labels: Vec<usize> = histogram
        .counts()
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| std::iter::repeat(k).take(c as usize))
        .collect();
    let n = labels.len();
    let subsets = binomial(n as u64, arity as u64);
    if subsets > u128::from(MAX_SUBSETS) {
        return Err(Error::InvalidArgument(format!(
            "{subsets} label subsets exceed the enumeration limit of {MAX_SUBSETS}"
        )));
    }
    let mut idx: Vec<usize> = (0..arity).collect();
    let mut chosen = vec![0usize; arity];
    let mut hits: u64 = 0;
    loop {
        for (slot, &i) in chosen.iter_mut().zip(&idx) {
            *slot = labels[i];
        }
        if f(&chosen) {
            hits += 1;
        }
        // Advance to the next combination in lexicographic order.
        let mut pos = arity;
        while pos > 0 && idx[pos - 1] == n - arity + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        idx[pos - 1] += 1;
        for j in pos..arity {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(hits as f64 / subsets as f64)
}

/// Predicted probability that the statistic equals one.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhiPrediction(f64);

impl PhiPrediction {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::InvalidArgument(format!("prediction {value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Per-record U-statistic means, failing on the first record with too few
/// labels.
pub fn statistic_means(data: &EvalDataset, stat: &SymmetricStatistic) -> Result<Vec<f64>> {
    data.records()
        .par_iter()
        .map(|r| u_statistic_mean(&r.histogram, stat).map_err(|e| Error::record(&r.id, e.to_string())))
        .collect()
}

fn check_predictions(data: &EvalDataset, preds: &[PhiPrediction]) -> Result<()> {
    if preds.len() != data.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} records",
            preds.len(),
            data.len()
        )));
    }
    Ok(())
}

/// Unbiased estimate of the expected squared loss `E[(phi - phi_hat)^2]`.
pub fn l_phi_unbiased(data: &EvalDataset, stat: &SymmetricStatistic, preds: &[PhiPrediction]) -> Result<f64> {
    check_predictions(data, preds)?;
    let means = statistic_means(data, stat)?;
    // phi is binary, so the subset average of (phi - p)^2 only needs the
    // subset mean of phi.
    let terms = means
        .iter()
        .zip(preds)
        .map(|(&mu, p)| mu * (1.0 - p.0).powi(2) + (1.0 - mu) * p.0 * p.0);
    Ok(ksum(terms) / data.len() as f64)
}

/// One bin of [`PhiCalibration`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_pred: Option<f64>,
    pub mean_freq: Option<f64>,
    pub contribution: f64,
    pub undersized: bool,
}

/// Output of [`cl_phi`].
#[derive(Debug, Clone, PartialEq)]
pub struct PhiCalibration {
    pub mode: EstimatorMode,
    pub total: f64,
    pub ce: f64,
    pub ce_clamped: bool,
    pub per_bin: Vec<PhiBin>,
}

/// Binned calibration loss of `preds` against the statistic, binning on the
/// predictions. Debiased mode leaves bins with at most one member at zero.
pub fn cl_phi(
    data: &EvalDataset,
    stat: &SymmetricStatistic,
    preds: &[PhiPrediction],
    scheme: &BinningScheme,
    mode: EstimatorMode,
) -> Result<PhiCalibration> {
    check_predictions(data, preds)?;
    let means = statistic_means(data, stat)?;
    let values: Vec<f64> = preds.iter().map(|p| p.0).collect();
    let summaries = binned::summarize(&values, &means, scheme, data.len());
    let per_bin: Vec<PhiBin> = summaries
        .iter()
        .map(|s| PhiBin {
            lo: s.lo,
            hi: s.hi,
            count: s.count(),
            mean_pred: s.mean_value,
            mean_freq: s.mean_target,
            contribution: match mode {
                EstimatorMode::Plugin => s.cl_plugin,
                EstimatorMode::Debiased => s.cl_debiased,
            },
            undersized: s.undersized(),
        })
        .collect();
    let total = ksum(per_bin.iter().map(|b| b.contribution));
    let (ce, ce_clamped) = binned::calibration_error(total);
    Ok(PhiCalibration {
        mode,
        total,
        ce,
        ce_clamped,
        per_bin,
    })
}

/// One point of a reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub mean_pred: Option<f64>,
    pub mean_freq: Option<f64>,
    pub count: usize,
}

/// Per-bin mean prediction and mean empirical frequency.
pub fn reliability_curve(values: &[f64], targets: &[f64], scheme: &BinningScheme) -> Result<Vec<ReliabilityBin>> {
    if values.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} targets",
            values.len(),
            targets.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("prediction {v} outside [0, 1]")));
    }
    Ok(binned::summarize(values, targets, scheme, values.len().max(1))
        .into_iter()
        .map(|s| ReliabilityBin {
            bin_lo: s.lo,
            bin_hi: s.hi,
            count: s.count(),
            mean_pred: s.mean_value,
            mean_freq: s.mean_target,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InstanceRecord, ProbVector};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hist(c: &[u32]) -> LabelHistogram {
        LabelHistogram::new(c.to_vec()).unwrap()
    }

    fn dataset(hists: &[&[u32]]) -> EvalDataset {
        let records = hists
            .iter()
            .enumerate()
            .map(|(i, c)| InstanceRecord::new(format!("r{i}"), ProbVector::uniform(c.len()), hist(c)))
            .collect();
        EvalDataset::new(records).unwrap()
    }

    fn preds(v: &[f64]) -> Vec<PhiPrediction> {
        v.iter().map(|&p| PhiPrediction::new(p).unwrap()).collect()
    }

    fn pair_disagreement() -> SymmetricStatistic {
        SymmetricStatistic::custom("pairs", 2, |l| l[0] != l[1]).unwrap()
    }

    #[test]
    fn disagreement_worked_examples() {
        let d = SymmetricStatistic::disagreement();
        assert_eq!(u_statistic_mean(&hist(&[3, 0]), &d).unwrap(), 0.0);
        assert_abs_diff_eq!(u_statistic_mean(&hist(&[2, 1]), &d).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(u_statistic_mean(&hist(&[1, 1, 1]), &d).unwrap(), 1.0);
    }

    #[test]
    fn too_few_labels_is_an_error() {
        let d = dataset(&[&[1, 1], &[1, 0]]);
        let err = statistic_means(&d, &SymmetricStatistic::disagreement()).unwrap_err();
        assert!(matches!(err, Error::Record { ref id, .. } if id == "r1"));
    }

    #[test]
    fn enumeration_matches_hand_count_for_triples() {
        // All three labels distinct: of C(4,3) = 4 triples from (2,1,1),
        // two contain both singletons plus one of the pair.
        let all_distinct = SymmetricStatistic::custom("distinct3", 3, |l| {
            l[0] != l[1] && l[1] != l[2] && l[0] != l[2]
        })
        .unwrap();
        assert_abs_diff_eq!(u_statistic_mean(&hist(&[2, 1, 1]), &all_distinct).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn enumeration_guard_rejects_huge_subsets() {
        let stat = SymmetricStatistic::custom("any", 10, |_| true).unwrap();
        assert!(u_statistic_mean(&hist(&[30, 30]), &stat).is_err());
    }

    #[test]
    fn statistics_are_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stats = [SymmetricStatistic::disagreement(), pair_disagreement()];
        for _ in 0..200 {
            let mut labels = [rng.random_range(0..4usize), rng.random_range(0..4usize)];
            for s in &stats {
                let a = s.evaluate(&labels);
                labels.swap(0, 1);
                assert_eq!(a, s.evaluate(&labels));
            }
        }
    }

    #[test]
    fn l_phi_worked_examples() {
        let d = SymmetricStatistic::disagreement();
        let v = l_phi_unbiased(&dataset(&[&[1, 1]]), &d, &preds(&[0.25])).unwrap();
        assert_abs_diff_eq!(v, 0.5625, epsilon = 1e-15);
        assert_eq!(l_phi_unbiased(&dataset(&[&[2, 0]]), &d, &preds(&[0.0])).unwrap(), 0.0);
        let v = l_phi_unbiased(&dataset(&[&[2, 1]]), &d, &preds(&[2.0 / 3.0])).unwrap();
        assert_abs_diff_eq!(v, 2.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn l_phi_with_minimal_labels_is_brier_score() {
        // With exactly two labels there is a single pair per instance.
        let data = dataset(&[&[1, 1, 0], &[2, 0, 0], &[0, 1, 1], &[0, 0, 2]]);
        let p = [0.3, 0.6, 0.9, 0.1];
        let phi = [1.0, 0.0, 1.0, 0.0];
        let brier = phi.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 4.0;
        let v = l_phi_unbiased(&data, &SymmetricStatistic::disagreement(), &preds(&p)).unwrap();
        assert_abs_diff_eq!(v, brier, epsilon = 1e-15);
    }

    #[test]
    fn cl_phi_worked_examples() {
        let d = SymmetricStatistic::disagreement();
        let one_bin = BinningScheme::uniform(1).unwrap();
        let data = dataset(&[&[2, 0], &[0, 3]]);
        let cl = cl_phi(&data, &d, &preds(&[0.0, 0.0]), &one_bin, EstimatorMode::Debiased).unwrap();
        assert_eq!(cl.total, 0.0);

        // mu_phi values 0 and 1 with both predictions at 0.5.
        let data = dataset(&[&[2, 0], &[1, 1]]);
        let p = preds(&[0.5, 0.5]);
        let plugin = cl_phi(&data, &d, &p, &one_bin, EstimatorMode::Plugin).unwrap();
        let debiased = cl_phi(&data, &d, &p, &one_bin, EstimatorMode::Debiased).unwrap();
        assert_abs_diff_eq!(plugin.total, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(debiased.total, -0.25, epsilon = 1e-15);
        assert!(debiased.ce_clamped);
    }

    #[test]
    fn cl_phi_plugin_is_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let hists: Vec<Vec<u32>> = (0..30)
                .map(|_| vec![rng.random_range(0..4), rng.random_range(0..4), 2])
                .collect();
            let refs: Vec<&[u32]> = hists.iter().map(|h| h.as_slice()).collect();
            let data = dataset(&refs);
            let p: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
            let cl = cl_phi(
                &data,
                &SymmetricStatistic::disagreement(),
                &preds(&p),
                &BinningScheme::uniform(15).unwrap(),
                EstimatorMode::Plugin,
            )
            .unwrap();
            assert!(cl.total >= 0.0);
        }
    }

    #[test]
    fn reliability_curve_on_calibrated_grid() {
        let values: Vec<f64> = (0..300).map(|i| (i as f64 + 0.5) / 300.0).collect();
        let curve = reliability_curve(&values, &values, &BinningScheme::uniform(15).unwrap()).unwrap();
        for b in &curve {
            assert_eq!(b.mean_pred, b.mean_freq);
        }
    }

    #[test]
    fn reliability_curve_shows_constant_overestimate() {
        let targets: Vec<f64> = (0..500).map(|i| 0.8 * i as f64 / 499.0).collect();
        let values: Vec<f64> = targets.iter().map(|t| (t + 0.1).min(1.0)).collect();
        let curve = reliability_curve(&values, &targets, &BinningScheme::uniform(10).unwrap()).unwrap();
        for b in curve.iter().filter(|b| b.count > 0) {
            assert_abs_diff_eq!(b.mean_pred.unwrap() - b.mean_freq.unwrap(), 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn reliability_curve_keeps_empty_bins() {
        let curve = reliability_curve(&[0.05], &[0.0], &BinningScheme::uniform(15).unwrap()).unwrap();
        assert_eq!(curve.len(), 15);
        assert_eq!(curve[0].count, 1);
        assert!(curve[1..].iter().all(|b| b.count == 0 && b.mean_pred.is_none() && b.mean_freq.is_none()));
    }
}
