use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use histcal::alpha::{apply_alpha, fit_alpha_featurized, fit_alpha_pointwise, AlphaModel};
use histcal::evaluate::{disagreement_pairs, evaluate as evaluate_report, select_predictions, EvaluateOptions, PredictionSource};
use histcal::io::{read_dataset, read_json, read_truth, write_dataset, write_json, write_reliability_csv, write_truth};
use histcal::order1::WeightPolicy;
use histcal::order2::reliability_curve;
use histcal::synthetic::{add_logit_noise, distort_predictor, gen_dirichlet_multiclass, gen_uniform_binary, RNG_NAME};
use histcal::temperature::{apply_temperature_dataset, temperature_fit, TemperatureModel};
use histcal::{BinningScheme, Error, EvalDataset, Result};

use crate::{
    AlphaApplyArgs, AlphaFitArgs, AlphaModeArg, EvaluateArgs, Kind, Predictions, ReliabilityArgs, SimulateArgs,
    Target, TsApplyArgs, TsFitArgs, Weights,
};

/// Resolved configuration embedded in every output.
fn config<T: Serialize>(command: &str, args: &T) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "rng": RNG_NAME,
        "args": args,
    })
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}

fn write_sidecar(path: &Path, config: &Value) -> Result<()> {
    write_json(&sidecar(path), config)
}

/// Serializes `value` as a JSON object with an added `config` key.
fn with_config<T: Serialize>(value: &T, config: Value) -> Result<Value> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    match &mut v {
        Value::Object(map) => {
            map.insert("config".into(), config);
            Ok(v)
        }
        _ => Err(Error::InvalidArgument("output is not a JSON object".into())),
    }
}

fn source(p: Predictions) -> PredictionSource {
    match p {
        Predictions::Probs => PredictionSource::Probs,
        Predictions::Posterior => PredictionSource::Posterior,
        Predictions::Ensemble => PredictionSource::Ensemble,
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut sim = match a.kind {
        Kind::UniformBinary => gen_uniform_binary(a.n_instances, a.n_labels, a.seed)?,
        Kind::Dirichlet => gen_dirichlet_multiclass(a.n_instances, a.k, a.n_labels, a.concentration, a.seed)?,
    };
    if let Some(sd) = a.logit_noise {
        // Offset keeps the noise stream apart from the generator's.
        sim.data = add_logit_noise(&sim.data, sd, a.seed.wrapping_add(1))?;
    }
    if let Some(t) = a.distort_temperature {
        sim.data = distort_predictor(&sim.data, t)?;
    }
    let cfg = config("simulate", a);
    write_dataset(&a.out_data, &sim.data)?;
    write_truth(&a.out_truth, &sim.truth)?;
    write_sidecar(&a.out_data, &cfg)?;
    write_sidecar(&a.out_truth, &cfg)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let data = select_predictions(&read_dataset(&a.data)?, source(a.predictions))?;
    let truth = a.truth.as_deref().map(read_truth).transpose()?;
    let options = EvaluateOptions {
        scheme: BinningScheme::uniform(a.bins)?,
        weights: match a.weight_policy {
            Weights::Uniform => WeightPolicy::Uniform,
            Weights::Labels => WeightPolicy::LabelCount,
        },
        truth: truth.as_deref(),
        mc_labels: a.mc_labels,
        seed: Some(a.seed),
    };
    let report = evaluate_report(&data, &options)?;
    write_json(&a.out, &with_config(&report, config("evaluate", a))?)
}

pub fn alpha_fit(a: &AlphaFitArgs) -> Result<()> {
    let data = read_dataset(&a.data)?;
    let (model, fit) = match a.mode {
        AlphaModeArg::Pointwise => {
            let model = fit_alpha_pointwise(&data, a.lambda)?;
            let boundary = model.per_instance.iter().flatten().filter(|e| e.boundary_flag).count();
            (model, json!({ "boundary_count": boundary }))
        }
        AlphaModeArg::Featurized => {
            let fit = fit_alpha_featurized(&data, a.lambda, a.split, a.seed)?;
            let summary = json!({
                "iterations": fit.iterations,
                "stop_reason": fit.stop_reason,
                "train_objective": fit.train_objective,
                "held_out_objective": fit.held_out_objective,
            });
            (fit.model, summary)
        }
    };
    let mut out = with_config(&model, config("alpha-fit", a))?;
    out["fit"] = fit;
    write_json(&a.model_out, &out)
}

fn check_alpha_model(model: &AlphaModel, data: &EvalDataset) -> Result<()> {
    model.validate()?;
    if let (Some(theta), Some(r)) = (&model.theta, data.records().first()) {
        let d = r.features.as_ref().map_or(0, Vec::len);
        if d != theta.len() {
            return Err(Error::InvalidArgument(format!(
                "model expects {} features, data records have {d}",
                theta.len()
            )));
        }
    }
    Ok(())
}

pub fn alpha_apply(a: &AlphaApplyArgs) -> Result<()> {
    let data = read_dataset(&a.data)?;
    let model: AlphaModel = read_json(&a.model)?;
    check_alpha_model(&model, &data)?;
    let out = apply_alpha(&data, &model, a.posterior_label.then_some(a.seed))?;
    write_dataset(&a.out_data, &out)?;
    write_sidecar(&a.out_data, &config("alpha-apply", a))
}

pub fn ts_fit(a: &TsFitArgs) -> Result<()> {
    let data = read_dataset(&a.data)?;
    let fit = temperature_fit(&data, a.split, a.seed)?;
    let mut out = with_config(&fit.model, config("ts-fit", a))?;
    out["fit"] = json!({
        "boundary_flag": fit.boundary_flag,
        "fit_nll": fit.fit_nll,
        "held_out_nll": fit.held_out_nll,
    });
    write_json(&a.model_out, &out)
}

pub fn ts_apply(a: &TsApplyArgs) -> Result<()> {
    let data = read_dataset(&a.data)?;
    let model: TemperatureModel = read_json(&a.model)?;
    let model = TemperatureModel::new(model.t)?;
    let tempered = apply_temperature_dataset(&data, model)?;
    // Attached uncertainty outputs were derived from the old probabilities.
    let records = tempered
        .into_records()
        .into_iter()
        .map(|r| histcal::InstanceRecord {
            alpha0: None,
            dpe: None,
            posterior: None,
            consumed_label: None,
            ..r
        })
        .collect();
    write_dataset(&a.out_data, &EvalDataset::new(records)?)?;
    write_sidecar(&a.out_data, &config("ts-apply", a))
}

pub fn reliability(a: &ReliabilityArgs) -> Result<()> {
    let data = select_predictions(&read_dataset(&a.data)?, source(a.predictions))?;
    let scheme = BinningScheme::uniform(a.bins)?;
    let (values, targets) = match a.target {
        Target::Disagreement => {
            if let Some(r) = data.iter().find(|r| r.n_labels() < 2) {
                return Err(Error::record(
                    &r.id,
                    format!(
                        "the disagreement target needs at least 2 labels per record, this one has {}; \
                         use --target cpe for single-labeled data",
                        r.n_labels()
                    ),
                ));
            }
            disagreement_pairs(&data)?
        }
        Target::Cpe => {
            let classes: Vec<usize> = match a.class {
                Some(c) if c >= data.k() => {
                    return Err(Error::InvalidArgument(format!(
                        "class {c} out of range; the data has {} classes (0..{})",
                        data.k(),
                        data.k() - 1
                    )))
                }
                Some(c) => vec![c],
                None => (0..data.k()).collect(),
            };
            let mut values = Vec::new();
            let mut targets = Vec::new();
            for r in &data {
                for &c in &classes {
                    values.push(r.prediction[c]);
                    targets.push(r.histogram.frequency(c));
                }
            }
            (values, targets)
        }
    };
    let bins = reliability_curve(&values, &targets, &scheme)?;
    write_reliability_csv(&a.out_csv, &bins)?;
    write_sidecar(&a.out_csv, &config("reliability", a))
}
