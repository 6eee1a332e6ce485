//! Evaluation of probabilistic classifiers against label histograms, and
//! post-hoc calibration of their uncertainty.
//!
//! Each evaluated instance carries a predicted class-probability vector and
//! a histogram of labels from several annotators. The crate provides
//!
//! * unbiased and debiased estimators of squared-loss, epistemic,
//!   calibration and dispersion losses ([`order1`]);
//! * U-statistic estimators for symmetric functions of several labels, such
//!   as the probability that two annotators disagree ([`order2`]);
//! * alpha-calibration, which fits a Dirichlet concentration over the
//!   predicted probabilities to produce disagreement estimates and
//!   posterior predictions after an expert label ([`alpha`]);
//! * temperature scaling ([`temperature`]) and ensemble aggregation
//!   ([`ensemble`]);
//! * synthetic data with known ground truth and population oracles
//!   ([`synthetic`]);
//! * file formats ([`io`]) and report assembly ([`evaluate`]).

pub mod alpha;
mod binned;
pub mod ensemble;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod model;
pub mod numeric;
pub mod order1;
pub mod order2;
pub mod split;
pub mod synthetic;
pub mod temperature;

pub use binned::EstimatorMode;
pub use error::{Error, Result};
pub use model::{
    BinningScheme, EvalDataset, InstanceRecord, LabelHistogram, MetricReport, ProbVector, ReportMeta, Violation,
};
