//! File formats: JSONL datasets and ground truth, JSON models and reports,
//! reliability CSV.
//!
//! Floats are written in shortest round-trip form, so reading a written
//! file reproduces every value bit for bit.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_records, EvalDataset, InstanceRecord, LabelHistogram, ProbVector};
use crate::order2::ReliabilityBin;
use crate::synthetic::GroundTruthRecord;

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordLine {
    pub id: String,
    pub probs: Vec<f64>,
    pub labels: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble_alpha0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dpe: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consumed_label: Option<usize>,
}

impl From<&InstanceRecord> for RecordLine {
    fn from(r: &InstanceRecord) -> Self {
        Self {
            id: r.id.clone(),
            probs: r.prediction.as_slice().to_vec(),
            labels: r.histogram.counts().to_vec(),
            logits: r.logits.clone(),
            features: r.features.clone(),
            ensemble: r
                .ensemble
                .as_ref()
                .map(|m| m.iter().map(|p| p.as_slice().to_vec()).collect()),
            ensemble_alpha0: r.ensemble_alpha0.clone(),
            alpha0: r.alpha0,
            dpe: r.dpe,
            posterior: r.posterior.as_ref().map(|p| p.as_slice().to_vec()),
            consumed_label: r.consumed_label,
        }
    }
}

impl RecordLine {
    /// Converts to a record, renormalizing probability vectors that are
    /// off the simplex by rounding only.
    pub fn into_record(self) -> Result<InstanceRecord> {
        let id = self.id;
        let prob = |v: Vec<f64>, what: &str| {
            ProbVector::new(v).map_err(|e| Error::record(&id, format!("{what}: {e}")))
        };
        let prediction = prob(self.probs, "probs")?;
        let histogram = LabelHistogram::new(self.labels).map_err(|e| Error::record(&id, format!("labels: {e}")))?;
        let ensemble = self
            .ensemble
            .map(|ms| ms.into_iter().map(|m| prob(m, "ensemble")).collect::<Result<Vec<_>>>())
            .transpose()?;
        let posterior = self.posterior.map(|p| prob(p, "posterior")).transpose()?;
        Ok(InstanceRecord {
            prediction,
            histogram,
            logits: self.logits,
            features: self.features,
            ensemble,
            ensemble_alpha0: self.ensemble_alpha0,
            alpha0: self.alpha0,
            dpe: self.dpe,
            posterior,
            consumed_label: self.consumed_label,
            id,
        })
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Parses non-blank JSONL lines into `T`, keeping 1-based line numbers.
fn read_lines<T: DeserializeOwned>(reader: impl BufRead, path: &Path) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| parse_error(path, i + 1, e.to_string()))?;
        out.push((i + 1, value));
    }
    Ok(out)
}

/// Reads a dataset from JSONL; `path` is only used in error messages.
pub fn parse_dataset(reader: impl BufRead, path: &Path) -> Result<EvalDataset> {
    let lines: Vec<(usize, RecordLine)> = read_lines(reader, path)?;
    if lines.is_empty() {
        return Err(parse_error(path, 0, "no records"));
    }
    let mut line_of = HashMap::new();
    let mut records = Vec::with_capacity(lines.len());
    for (line, raw) in lines {
        line_of.entry(raw.id.clone()).or_insert(line);
        records.push(raw.into_record().map_err(|e| parse_error(path, line, e.to_string()))?);
    }
    if let Some(v) = validate_records(&records).into_iter().next() {
        let line = v.record.as_ref().and_then(|id| line_of.get(id)).copied().unwrap_or(0);
        return Err(parse_error(path, line, v.to_string()));
    }
    EvalDataset::new(records)
}

pub fn read_dataset(path: &Path) -> Result<EvalDataset> {
    parse_dataset(open(path)?, path)
}

fn write_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dataset(path: &Path, data: &EvalDataset) -> Result<()> {
    write_lines(path, data.iter().map(RecordLine::from))
}

pub fn read_truth(path: &Path) -> Result<Vec<GroundTruthRecord>> {
    let lines: Vec<(usize, GroundTruthRecord)> = read_lines(open(path)?, path)?;
    lines
        .into_iter()
        .map(|(line, t)| {
            let GroundTruthRecord { id, q, group } = t;
            match ProbVector::new(q.into_inner()) {
                Ok(q) => Ok(GroundTruthRecord { id, q, group }),
                Err(e) => Err(parse_error(path, line, format!("record `{id}`: q: {e}"))),
            }
        })
        .collect()
}

pub fn write_truth(path: &Path, truth: &[GroundTruthRecord]) -> Result<()> {
    write_lines(path, truth)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| parse_error(path, e.line(), e.to_string()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::io(path, e.into()))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header `bin_lo,bin_hi,mean_pred,mean_freq,count`; empty bins leave the
/// means blank.
pub fn write_reliability_csv(path: &Path, bins: &[ReliabilityBin]) -> Result<()> {
    let mut w = create(path)?;
    let mut put = |s: String| w.write_all(s.as_bytes()).map_err(|e| Error::io(path, e));
    put("bin_lo,bin_hi,mean_pred,mean_freq,count\n".into())?;
    for b in bins {
        put(format!(
            "{},{},{},{},{}\n",
            b.bin_lo,
            b.bin_hi,
            csv_cell(b.mean_pred),
            csv_cell(b.mean_freq),
            b.count
        ))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
