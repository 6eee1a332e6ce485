use histcal::order1::{calibration_loss, epistemic_loss_plugin, epistemic_loss_unbiased};
use histcal::synthetic::{distort_predictor, gen_dirichlet_multiclass, gen_uniform_binary, mean_and_se};
use histcal::{BinningScheme, EstimatorMode};

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn binary_dirichlet_matches_uniform_binary() {
    let dir: Vec<f64> = gen_dirichlet_multiclass(10_000, 2, 1, 1.0, 1).unwrap().truth.iter().map(|t| t.q[0]).collect();
    let uni: Vec<f64> = gen_uniform_binary(10_000, 1, 2).unwrap().truth.iter().map(|t| t.q[0]).collect();
    let d = ks_statistic(dir, uni);
    // Critical value at level 0.001.
    let crit = 1.949 * (2.0 / 10_000.0f64).sqrt();
    assert!(d < crit, "KS statistic {d} above {crit}");
}

#[test]
fn infinite_concentration_gives_uniform_truth() {
    let s = gen_dirichlet_multiclass(50, 4, 2, f64::INFINITY, 0).unwrap();
    for t in &s.truth {
        assert!(t.q.as_slice().iter().all(|&p| p == 0.25));
    }
}

#[test]
fn sparse_dirichlet_debiased_el_near_zero() {
    for seed in 0..10 {
        let d = gen_dirichlet_multiclass(5000, 3, 5, 0.5, seed).unwrap().data;
        let el = epistemic_loss_unbiased(&d).unwrap();
        assert!(el.abs() <= 0.004, "seed {seed}: {el}");
    }
}

#[test]
fn plugin_el_matches_analytic_bias() {
    for (n_labels, bias) in [(2u32, 1.0 / 6.0), (5, 1.0 / 15.0)] {
        let values: Vec<f64> = (0..10)
            .map(|seed| epistemic_loss_plugin(&gen_uniform_binary(10_000, n_labels, seed).unwrap().data))
            .collect();
        let (m, se) = mean_and_se(&values);
        assert!((m - bias).abs() <= 3.0 * se, "n={n_labels}: {m} vs {bias} (se {se})");
    }
}

#[test]
fn sharpening_raises_plugin_cl() {
    let scheme = BinningScheme::uniform(15).unwrap();
    let d = gen_dirichlet_multiclass(10_000, 3, 3, 1.0, 7).unwrap().data;
    let sharp = distort_predictor(&d, 2.0).unwrap();
    let before = calibration_loss(&d, &scheme, EstimatorMode::Plugin).total;
    let after = calibration_loss(&sharp, &scheme, EstimatorMode::Plugin).total;
    assert!(after > before, "{before} -> {after}");
}

#[test]
fn generators_are_deterministic() {
    assert_eq!(gen_uniform_binary(100, 3, 5).unwrap(), gen_uniform_binary(100, 3, 5).unwrap());
    assert_eq!(
        gen_dirichlet_multiclass(100, 4, 2, 0.7, 5).unwrap(),
        gen_dirichlet_multiclass(100, 4, 2, 0.7, 5).unwrap()
    );
    assert_ne!(gen_uniform_binary(100, 3, 5).unwrap(), gen_uniform_binary(100, 3, 6).unwrap());
}
