use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use histcal::numeric::softmax;
use histcal::synthetic::{distort_predictor, gen_dirichlet_multiclass, record_id, sample_histogram};
use histcal::split::calibration_split;
use histcal::temperature::{apply_temperature_dataset, temperature_fit};
use histcal::{EvalDataset, InstanceRecord, LabelHistogram, ProbVector};

/// Random logits `u`; labels drawn from `softmax(u / true_t)`.
fn logits_data(true_t: f64, seed: u64) -> EvalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 2.0).unwrap();
    let records = (0..5000)
        .map(|i| {
            let u: Vec<f64> = (0..3).map(|_| normal.sample(&mut rng)).collect();
            let q = softmax(&u.iter().map(|x| x / true_t).collect::<Vec<_>>());
            let counts = sample_histogram(&mut rng, &q, 3);
            InstanceRecord::new(record_id(i), ProbVector::from_raw(softmax(&u)), LabelHistogram::from_raw(counts))
                .with_logits(u)
        })
        .collect();
    EvalDataset::new(records).unwrap()
}

#[test]
fn calibrated_logits_give_unit_temperature() {
    let t = temperature_fit(&logits_data(1.0, 1), 0.8, 0).unwrap().model.t;
    assert!((0.9..=1.1).contains(&t), "t = {t}");
}

#[test]
fn overconfident_logits_give_temperature_two() {
    let t = temperature_fit(&logits_data(2.0, 2), 0.8, 0).unwrap().model.t;
    assert!((1.8..=2.2).contains(&t), "t = {t}");
}

#[test]
fn distortion_round_trip_restores_predictions() {
    let s = gen_dirichlet_multiclass(5000, 4, 3, 1.0, 9).unwrap();
    let distorted = distort_predictor(&s.data, 2.0).unwrap();
    let fit = temperature_fit(&distorted, 0.8, 3).unwrap();
    assert!((1.8..=2.2).contains(&fit.model.t));
    assert!(!fit.boundary_flag);
    let restored = apply_temperature_dataset(&distorted, fit.model).unwrap();
    let gap = restored
        .iter()
        .zip(s.data.iter())
        .flat_map(|(a, b)| a.prediction.as_slice().iter().zip(b.prediction.as_slice()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    assert!(gap < 0.1, "max probability gap {gap}");
}

#[test]
fn fitted_temperature_does_not_raise_fit_nll() {
    let d = logits_data(0.7, 4);
    let fit = temperature_fit(&d, 0.8, 1).unwrap();
    let split = calibration_split(&d, 0.8, 1).unwrap();
    let (mut nll, mut labels) = (0.0, 0.0);
    for &i in &split.fit {
        let r = &d.records()[i];
        let p = softmax(r.logits.as_ref().unwrap());
        for (&y, pk) in r.histogram.counts().iter().zip(&p) {
            nll -= f64::from(y) * pk.ln();
            labels += f64::from(y);
        }
    }
    assert!(fit.fit_nll <= nll / labels + 1e-12);
}

#[test]
fn unanimous_single_record_hits_boundary() {
    let r = InstanceRecord::new("a", ProbVector::from_raw(softmax(&[1.0, 0.0])), LabelHistogram::from_raw(vec![3, 0]))
        .with_logits(vec![1.0, 0.0]);
    let fit = temperature_fit(&EvalDataset::new(vec![r]).unwrap(), 0.8, 0).unwrap();
    assert!(fit.boundary_flag);
}
