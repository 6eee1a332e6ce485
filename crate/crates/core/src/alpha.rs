//! Alpha-calibration: a Dirichlet distribution `Dir(alpha0(x) f(x))` over
//! class-probability estimates, fitted to validation label histograms.
//!
//! The mean of the distribution is the classifier's own prediction `f(x)`,
//! so calibrating `alpha0` never changes the class-probability estimates.
//! What it adds is spread: the disagreement probability estimate and the
//! posterior after an expert label both follow in closed form.
//!
//! `alpha0` is fitted by minimizing the Dirichlet-multinomial negative
//! log-likelihood of the histograms, normalized per label, plus
//! `lambda * (log alpha0)^2` per instance. Log-likelihoods use the
//! rising-factorial product form, exact for integer counts:
//!
//! ```text
//! log DirMult(y | a f) = log n!/prod(y_k!)
//!                      + sum_k sum_{l=1..y_k} log(a f_k + l - 1)
//!                      - sum_{l=1..n} log(a + l - 1)
//! ```

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EvalDataset, InstanceRecord, ProbVector};
use crate::numeric::{ksum, safeguarded_newton};
use crate::split::calibration_split;

/// Clamp interval for `log alpha0`.
pub const LOG_ALPHA0_BOUNDS: [f64; 2] = [-12.0, 12.0];
/// Regularization coefficient used unless told otherwise.
pub const DEFAULT_LAMBDA_ALPHA: f64 = 0.005;
/// Predictions are floored at this value (and renormalized) before any
/// likelihood is evaluated.
pub const PREDICTION_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMode {
    /// A free `log alpha0` per record id.
    Pointwise,
    /// `log alpha0(x) = theta . g(x) + bias` over record features.
    Featurized,
}

/// Fitted `log alpha0` of one record in a pointwise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseAlpha {
    pub id: String,
    pub log_alpha0: f64,
    /// The optimum lies at (or beyond) a clamp bound.
    pub boundary_flag: bool,
}

/// Concentration model `alpha0(x)`.
///
/// Serialized flat: `mode`, `lambda_alpha`, `bounds`, then either
/// `theta`/`bias` or `per_instance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaModel {
    pub mode: AlphaMode,
    pub lambda_alpha: f64,
    pub bounds: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_instance: Option<Vec<PointwiseAlpha>>,
}

impl AlphaModel {
    pub fn pointwise(entries: Vec<PointwiseAlpha>, lambda_alpha: f64) -> Self {
        Self {
            mode: AlphaMode::Pointwise,
            lambda_alpha,
            bounds: LOG_ALPHA0_BOUNDS,
            theta: None,
            bias: None,
            per_instance: Some(entries),
        }
    }

    pub fn featurized(theta: Vec<f64>, bias: f64, lambda_alpha: f64) -> Self {
        Self {
            mode: AlphaMode::Featurized,
            lambda_alpha,
            bounds: LOG_ALPHA0_BOUNDS,
            theta: Some(theta),
            bias: Some(bias),
            per_instance: None,
        }
    }

    /// Checks that the fields required by `mode` are present and sane.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_alpha >= 0.0 && self.lambda_alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda_alpha {} is negative", self.lambda_alpha)));
        }
        if !(self.bounds[0] < self.bounds[1]) {
            return Err(Error::InvalidArgument("alpha bounds are empty".into()));
        }
        match self.mode {
            AlphaMode::Pointwise if self.per_instance.is_none() => {
                Err(Error::InvalidArgument("pointwise model without per_instance values".into()))
            }
            AlphaMode::Featurized if self.theta.is_none() || self.bias.is_none() => {
                Err(Error::InvalidArgument("featurized model without theta and bias".into()))
            }
            _ => Ok(()),
        }
    }

    fn clamp(&self, t: f64) -> f64 {
        t.clamp(self.bounds[0], self.bounds[1])
    }

    fn featurized_log_alpha0(&self, record: &InstanceRecord) -> Result<f64> {
        let theta = self.theta.as_deref().unwrap_or_default();
        let features = record
            .features
            .as_deref()
            .ok_or_else(|| Error::record(&record.id, "featurized alpha model needs features"))?;
        if features.len() != theta.len() {
            return Err(Error::record(
                &record.id,
                format!("{} features, model expects {}", features.len(), theta.len()),
            ));
        }
        let t = self.bias.unwrap_or(0.0) + features.iter().zip(theta).map(|(g, w)| g * w).sum::<f64>();
        Ok(self.clamp(t))
    }

    /// Clamped `log alpha0` for one record.
    pub fn log_alpha0(&self, record: &InstanceRecord) -> Result<f64> {
        self.validate()?;
        match self.mode {
            AlphaMode::Featurized => self.featurized_log_alpha0(record),
            AlphaMode::Pointwise => self
                .per_instance
                .iter()
                .flatten()
                .find(|e| e.id == record.id)
                .map(|e| self.clamp(e.log_alpha0))
                .ok_or_else(|| Error::record(&record.id, "no alpha0 for this id in the model")),
        }
    }

    /// Clamped `log alpha0` for every record, in record order.
    pub fn log_alpha0_all(&self, data: &EvalDataset) -> Result<Vec<f64>> {
        self.validate()?;
        match self.mode {
            AlphaMode::Featurized => data.iter().map(|r| self.featurized_log_alpha0(r)).collect(),
            AlphaMode::Pointwise => {
                let by_id: HashMap<&str, f64> = self
                    .per_instance
                    .iter()
                    .flatten()
                    .map(|e| (e.id.as_str(), e.log_alpha0))
                    .collect();
                data.iter()
                    .map(|r| {
                        by_id
                            .get(r.id.as_str())
                            .map(|&t| self.clamp(t))
                            .ok_or_else(|| Error::record(&r.id, "no alpha0 for this id in the model"))
                    })
                    .collect()
            }
        }
    }
}

/// Mean and concentration of the Dirichlet over class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPrediction {
    pub alpha0: f64,
    pub mean: ProbVector,
}

impl DirichletPrediction {
    pub fn new(mean: ProbVector, alpha0: f64) -> Self {
        Self { alpha0, mean }
    }

    /// Concentration vector `alpha0 * f`.
    pub fn concentration(&self) -> Vec<f64> {
        self.mean.as_slice().iter().map(|f| self.alpha0 * f).collect()
    }

    pub fn disagreement(&self) -> f64 {
        dpe_from_alpha(&self.mean, self.alpha0)
    }
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|l| f64::from(l).ln()).sum()
}

/// `log DirMult(counts | alpha0 * f)` with `f` already floored.
fn log_prob_floored(counts: &[u32], f: &[f64], alpha0: f64) -> f64 {
    let n: u32 = counts.iter().sum();
    let mut acc = ln_factorial(n);
    for (&y, &fk) in counts.iter().zip(f) {
        acc -= ln_factorial(y);
        let a = alpha0 * fk;
        for l in 0..y {
            acc += (a + f64::from(l)).ln();
        }
    }
    for l in 0..n {
        acc -= (alpha0 + f64::from(l)).ln();
    }
    acc
}

/// Dirichlet-multinomial log-probability of a histogram.
pub fn dirmult_log_prob(counts: &[u32], prediction: &ProbVector, alpha0: f64) -> f64 {
    let f = prediction.floored(PREDICTION_FLOOR);
    log_prob_floored(counts, f.as_slice(), alpha0)
}

/// First and second derivative of `log DirMult` with respect to
/// `log alpha0`. Every summand is bounded, so no cancellation occurs when
/// `alpha0` is tiny.
fn log_prob_derivatives(counts: &[u32], f: &[f64], alpha0: f64) -> (f64, f64) {
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    let n: u32 = counts.iter().sum();
    for (&y, &fk) in counts.iter().zip(f) {
        let a = alpha0 * fk;
        for l in 0..y {
            let c = f64::from(l);
            d1 += a / (a + c);
            d2 += a * c / ((a + c) * (a + c));
        }
    }
    for l in 0..n {
        let c = f64::from(l);
        d1 -= alpha0 / (alpha0 + c);
        d2 -= alpha0 * c / ((alpha0 + c) * (alpha0 + c));
    }
    (d1, d2)
}

/// Regularized Dirichlet-multinomial NLL of a dataset under `model`:
/// `-(1/sum n_i) sum_i log DirMult(y_i | alpha0_i f_i) + (lambda/N) sum_i (log alpha0_i)^2`.
pub fn dirmult_nll(data: &EvalDataset, model: &AlphaModel) -> Result<f64> {
    let log_alpha = model.log_alpha0_all(data)?;
    let terms: Vec<f64> = data
        .records()
        .par_iter()
        .zip(&log_alpha)
        .map(|(r, &t)| dirmult_log_prob(r.histogram.counts(), &r.prediction, t.exp()))
        .collect();
    if let Some(i) = terms.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite log-likelihood for record `{}`",
            data.records()[i].id
        )));
    }
    let labels = ksum(data.iter().map(|r| f64::from(r.n_labels())));
    let penalty = ksum(log_alpha.iter().map(|t| t * t));
    Ok(-ksum(terms) / labels + model.lambda_alpha * penalty / data.len() as f64)
}

/// Derivative of one record's regularized NLL,
/// `-(1/n) log DirMult(y | alpha0 f) + lambda (log alpha0)^2`, with
/// respect to `log alpha0`. Negative values call for a larger `alpha0`.
pub fn nll_gradient_pointwise(record: &InstanceRecord, log_alpha0: f64, lambda_alpha: f64) -> f64 {
    let f = record.prediction.floored(PREDICTION_FLOOR);
    pointwise_derivatives(record.histogram.counts(), f.as_slice(), log_alpha0, lambda_alpha).0
}

fn pointwise_derivatives(counts: &[u32], f: &[f64], t: f64, lambda: f64) -> (f64, f64) {
    let n = f64::from(counts.iter().sum::<u32>());
    let (d1, d2) = log_prob_derivatives(counts, f, t.exp());
    (-d1 / n + 2.0 * lambda * t, -d2 / n + 2.0 * lambda)
}

/// Where a pointwise optimum ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Interior,
    LowerBound,
    UpperBound,
    /// The objective does not depend on `alpha0` (one label, no
    /// regularization); `log alpha0 = 0` is reported.
    Flat,
}

impl FitStatus {
    pub fn is_boundary(self) -> bool {
        matches!(self, FitStatus::LowerBound | FitStatus::UpperBound)
    }
}

/// Minimizer of one record's regularized NLL over the clamp interval.
pub fn fit_log_alpha0(record: &InstanceRecord, lambda_alpha: f64) -> (f64, FitStatus) {
    let f = record.prediction.floored(PREDICTION_FLOOR);
    let counts = record.histogram.counts();
    let [lo, hi] = LOG_ALPHA0_BOUNDS;
    let fdf = |t: f64| pointwise_derivatives(counts, f.as_slice(), t, lambda_alpha);
    let g_lo = fdf(lo).0;
    let g_hi = fdf(hi).0;
    match (g_lo < 0.0, g_hi > 0.0) {
        (true, true) => (safeguarded_newton(fdf, lo, hi, 1e-14, 200), FitStatus::Interior),
        (false, true) => (lo, FitStatus::LowerBound),
        (true, false) => (hi, FitStatus::UpperBound),
        (false, false) => {
            if g_lo == 0.0 && g_hi == 0.0 {
                return (0.0, FitStatus::Flat);
            }
            let nll = |t: f64| {
                -log_prob_floored(counts, f.as_slice(), t.exp()) / f64::from(record.n_labels())
                    + lambda_alpha * t * t
            };
            if nll(lo) <= nll(hi) {
                (lo, FitStatus::LowerBound)
            } else {
                (hi, FitStatus::UpperBound)
            }
        }
    }
}

/// Fits a free `log alpha0` to every record independently.
pub fn fit_alpha_pointwise(data: &EvalDataset, lambda_alpha: f64) -> Result<AlphaModel> {
    if !(lambda_alpha >= 0.0 && lambda_alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda_alpha {lambda_alpha} is negative")));
    }
    let entries = data
        .records()
        .par_iter()
        .map(|r| {
            let (t, status) = fit_log_alpha0(r, lambda_alpha);
            PointwiseAlpha {
                id: r.id.clone(),
                log_alpha0: t,
                boundary_flag: status.is_boundary(),
            }
        })
        .collect();
    Ok(AlphaModel::pointwise(entries, lambda_alpha))
}

/// Optimizer settings for [`fit_alpha_featurized`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturizedOptions {
    pub max_iterations: usize,
    /// Stop after this many iterations without held-out improvement.
    pub patience: usize,
    /// Stop once the largest gradient component drops below this.
    pub gradient_tolerance: f64,
}

impl Default for FeaturizedOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            patience: 10,
            gradient_tolerance: 1e-10,
        }
    }
}

/// Why the featurized optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    EarlyStopped,
    LineSearchStalled,
    MaxIterations,
}

/// Result of [`fit_alpha_featurized`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedFit {
    pub model: AlphaModel,
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Objective on the fitting split at the returned parameters.
    pub train_objective: f64,
    /// Objective on the held-out split, `None` if that split is empty.
    pub held_out_objective: Option<f64>,
}

/// Fitting-split view: design rows `(g, 1)`, counts, floored predictions.
struct Problem<'a> {
    rows: Vec<Vec<f64>>,
    counts: Vec<&'a [u32]>,
    preds: Vec<ProbVector>,
    labels: f64,
    lambda: f64,
}

impl<'a> Problem<'a> {
    fn new(data: &'a EvalDataset, idx: &[usize], lambda: f64) -> Self {
        let recs: Vec<&InstanceRecord> = idx.iter().map(|&i| &data.records()[i]).collect();
        let rows = recs
            .iter()
            .map(|r| {
                let mut row = r.features.clone().unwrap_or_default();
                row.push(1.0);
                row
            })
            .collect();
        Self {
            rows,
            counts: recs.iter().map(|r| r.histogram.counts()).collect(),
            preds: recs.iter().map(|r| r.prediction.floored(PREDICTION_FLOOR)).collect(),
            labels: recs.iter().map(|r| f64::from(r.n_labels())).sum(),
            lambda,
        }
    }

    fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn linear(&self, params: &DVector<f64>, i: usize) -> f64 {
        self.rows[i].iter().zip(params.iter()).map(|(x, p)| x * p).sum()
    }

    fn objective(&self, params: &DVector<f64>) -> f64 {
        let [lo, hi] = LOG_ALPHA0_BOUNDS;
        let n = self.rows.len() as f64;
        let terms: Vec<(f64, f64)> = (0..self.rows.len())
            .into_par_iter()
            .map(|i| {
                let t = self.linear(params, i).clamp(lo, hi);
                (log_prob_floored(self.counts[i], self.preds[i].as_slice(), t.exp()), t * t)
            })
            .collect();
        -ksum(terms.iter().map(|x| x.0)) / self.labels + self.lambda * ksum(terms.iter().map(|x| x.1)) / n
    }

    fn gradient_hessian(&self, params: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let [lo, hi] = LOG_ALPHA0_BOUNDS;
        let n = self.rows.len() as f64;
        let dim = params.len();
        let per: Vec<(f64, f64)> = (0..self.rows.len())
            .into_par_iter()
            .map(|i| {
                let raw = self.linear(params, i);
                if raw <= lo || raw >= hi {
                    return (0.0, 0.0);
                }
                let (d1, d2) = log_prob_derivatives(self.counts[i], self.preds[i].as_slice(), raw.exp());
                (
                    -d1 / self.labels + 2.0 * self.lambda * raw / n,
                    -d2 / self.labels + 2.0 * self.lambda / n,
                )
            })
            .collect();
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for (row, &(g, h)) in self.rows.iter().zip(&per) {
            for a in 0..dim {
                grad[a] += g * row[a];
                for b in 0..dim {
                    hess[(a, b)] += h * row[a] * row[b];
                }
            }
        }
        (grad, hess)
    }
}

/// Damped Newton direction: solves `(H + mu I) d = -g` with the smallest
/// tried `mu` that makes the system positive definite.
fn newton_direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> DVector<f64> {
    let dim = grad.len();
    let scale = hess.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let mut mu = 0.0;
    loop {
        let damped = hess + DMatrix::identity(dim, dim) * mu;
        if let Some(chol) = damped.cholesky() {
            let d = chol.solve(&(-grad));
            if d.dot(grad) < 0.0 {
                return d;
            }
        }
        mu = if mu == 0.0 { 1e-8 * scale } else { mu * 10.0 };
        if mu > 1e12 * scale {
            return -grad.clone();
        }
    }
}

/// Fits `log alpha0(x) = theta . g(x) + bias` on a seeded fitting split by
/// damped Newton iterations, stopping early when the held-out objective
/// stalls.
pub fn fit_alpha_featurized(
    data: &EvalDataset,
    lambda_alpha: f64,
    split_fraction: f64,
    seed: u64,
) -> Result<FeaturizedFit> {
    fit_alpha_featurized_with(data, lambda_alpha, split_fraction, seed, FeaturizedOptions::default())
}

pub fn fit_alpha_featurized_with(
    data: &EvalDataset,
    lambda_alpha: f64,
    split_fraction: f64,
    seed: u64,
    options: FeaturizedOptions,
) -> Result<FeaturizedFit> {
    if !(lambda_alpha >= 0.0 && lambda_alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda_alpha {lambda_alpha} is negative")));
    }
    let dim = feature_dimension(data)?;
    let split = calibration_split(data, split_fraction, seed)?;
    let fit = Problem::new(data, &split.fit, lambda_alpha);
    let held = Problem::new(data, &split.held_out, lambda_alpha);

    let mut params = DVector::zeros(dim + 1);
    let mut value = fit.objective(&params);
    let mut best_held = if held.is_empty() { f64::NAN } else { held.objective(&params) };
    let mut stale = 0;
    let mut iterations = 0;
    let mut stop_reason = StopReason::MaxIterations;
    while iterations < options.max_iterations {
        let (grad, hess) = fit.gradient_hessian(&params);
        if grad.amax() < options.gradient_tolerance {
            stop_reason = StopReason::Converged;
            break;
        }
        let dir = newton_direction(&grad, &hess);
        let slope = grad.dot(&dir);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &params + &dir * step;
            let v = fit.objective(&trial);
            if v.is_finite() && v <= value + 1e-4 * step * slope {
                accepted = Some((trial, v));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((next, v)) = accepted else {
            stop_reason = StopReason::LineSearchStalled;
            break;
        };
        params = next;
        value = v;
        if !held.is_empty() {
            let h = held.objective(&params);
            if h < best_held - 1e-12 {
                best_held = h;
                stale = 0;
            } else {
                stale += 1;
                if stale >= options.patience {
                    stop_reason = StopReason::EarlyStopped;
                    break;
                }
            }
        }
    }
    if !value.is_finite() {
        return Err(Error::Numeric("featurized alpha objective is not finite".into()));
    }
    let theta = params.rows(0, dim).iter().copied().collect();
    let bias = params[dim];
    Ok(FeaturizedFit {
        model: AlphaModel::featurized(theta, bias, lambda_alpha),
        iterations,
        stop_reason,
        train_objective: value,
        held_out_objective: (!held.is_empty()).then(|| held.objective(&params)),
    })
}

fn feature_dimension(data: &EvalDataset) -> Result<usize> {
    let mut dim = None;
    for r in data {
        let g = r
            .features
            .as_ref()
            .ok_or_else(|| Error::record(&r.id, "featurized alpha fit needs features"))?;
        match dim {
            None => dim = Some(g.len()),
            Some(d) if d != g.len() => {
                return Err(Error::record(&r.id, format!("{} features, expected {d}", g.len())));
            }
            _ => {}
        }
    }
    Ok(dim.unwrap_or(0))
}

/// FNV-1a hash of a record id, used to give each record its own stream.
fn id_hash(id: &str) -> u64 {
    id.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Picks one annotation of `record` uniformly at random, as a class index.
/// The draw depends only on the record id and `seed`.
pub fn draw_annotation(record: &InstanceRecord, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(id_hash(&record.id) ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut pick = rng.random_range(0..record.n_labels());
    for (k, &c) in record.histogram.counts().iter().enumerate() {
        if pick < c {
            return k;
        }
        pick -= c;
    }
    unreachable!("draw below the label total")
}

/// Attaches `alpha0` and the disagreement estimate to every record.
///
/// With `posterior_seed`, one annotation per record is also consumed as the
/// expert label: it is drawn by [`draw_annotation`], removed from the
/// histogram, recorded in `consumed_label`, and the posterior class
/// probabilities are stored in `posterior`. Every record then needs at least
/// two labels so that one remains for evaluation.
pub fn apply_alpha(data: &EvalDataset, model: &AlphaModel, posterior_seed: Option<u64>) -> Result<EvalDataset> {
    let log_alpha = model.log_alpha0_all(data)?;
    let records = data
        .iter()
        .zip(&log_alpha)
        .map(|(r, &t)| {
            let alpha0 = t.exp();
            let mut out = InstanceRecord {
                alpha0: Some(alpha0),
                dpe: Some(dpe_from_alpha(&r.prediction, alpha0)),
                ..r.clone()
            };
            if let Some(seed) = posterior_seed {
                if r.n_labels() < 2 {
                    return Err(Error::record(
                        &r.id,
                        "consuming a posterior label needs >= 2 labels so one remains for evaluation",
                    ));
                }
                let label = draw_annotation(r, seed);
                out.histogram.remove_one(label)?;
                out.posterior = Some(posterior_cpe(&r.prediction, alpha0, label)?);
                out.consumed_label = Some(label);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    EvalDataset::new(records)
}

/// `alpha0 / (alpha0 + 1)`, finite for `alpha0 = inf`.
fn shrink(alpha0: f64) -> f64 {
    1.0 / (1.0 + 1.0 / alpha0)
}

/// Disagreement probability under `Dir(alpha0 f)`:
/// `alpha0/(alpha0+1) * (1 - sum f_k^2)`.
pub fn dpe_from_alpha(prediction: &ProbVector, alpha0: f64) -> f64 {
    shrink(alpha0) * prediction.gini_simpson()
}

/// Posterior mean `(alpha0 f + e_label) / (alpha0 + 1)` after observing one
/// label.
pub fn posterior_cpe(prediction: &ProbVector, alpha0: f64, label: usize) -> Result<ProbVector> {
    if label >= prediction.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            prediction.len()
        )));
    }
    let g = shrink(alpha0);
    let probs = prediction
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, f)| g * f + if k == label { 1.0 - g } else { 0.0 })
        .collect();
    Ok(ProbVector::from_raw(probs))
}

/// Optimal `alpha0` for a task together with the improvement threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalAlpha {
    /// Every `alpha0` at or above this value does no worse than the
    /// point-mass model (`alpha0 -> inf`). Infinite when no finite value
    /// helps.
    pub threshold: f64,
    /// Minimizer, `None` when the loss keeps decreasing as `alpha0 -> inf`.
    pub optimum: Option<f64>,
}

/// Optimal `alpha0` for disagreement estimation within a group whose
/// predictions have `s_z = sum_k Z_k^2` and truth `u_q = E[sum_k Q_k^2]`.
pub fn optimal_alpha_dpe(s_z: f64, u_q: f64) -> OptimalAlpha {
    if u_q > s_z {
        OptimalAlpha {
            threshold: (1.0 - 2.0 * u_q + s_z) / (2.0 * (u_q - s_z)),
            optimum: Some((1.0 - u_q) / (u_q - s_z)),
        }
    } else {
        OptimalAlpha {
            threshold: f64::INFINITY,
            optimum: None,
        }
    }
}

/// Optimal `alpha0` for the posterior class probabilities within a group
/// with `u_q = E[sum_k Q_k^2]` and epistemic loss `el_g`.
pub fn optimal_alpha_posterior(u_q: f64, el_g: f64) -> OptimalAlpha {
    if el_g > 0.0 {
        OptimalAlpha {
            threshold: (1.0 - u_q - el_g) / (2.0 * el_g),
            optimum: Some((1.0 - u_q) / el_g),
        }
    } else {
        OptimalAlpha {
            threshold: f64::INFINITY,
            optimum: None,
        }
    }
}

/// Common optimum `(1 - u_q) / v_q` of both tasks when the predictions equal
/// the group mean of `Q`; `v_q = sum_k Var[Q_k]`.
pub fn calibrated_optimum(u_q: f64, v_q: f64) -> Option<f64> {
    (v_q > 0.0).then(|| (1.0 - u_q) / v_q)
}

/// Whether both task optima agree with [`calibrated_optimum`] to relative
/// tolerance `rtol`. Meaningful only for calibrated groups.
pub fn optima_coincide(s_z: f64, u_q: f64, v_q: f64, el_g: f64, rtol: f64) -> bool {
    let target = calibrated_optimum(u_q, v_q);
    let close = |o: Option<f64>| match (o, target) {
        (Some(a), Some(b)) => (a - b).abs() <= rtol * b.abs().max(1.0),
        (None, None) => true,
        _ => false,
    };
    close(optimal_alpha_dpe(s_z, u_q).optimum) && close(optimal_alpha_posterior(u_q, el_g).optimum)
}
