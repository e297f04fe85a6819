use nclasso::design_lab::{gen_theta0, DesignSpec, NoiseSpec};
use nclasso::harness::{default_probe_instance, increment_instance, max_average_suite};
use nclasso::linalg::median;
use nclasso::model_zoo::{ModelKind, ModelSpec};
use nclasso::rng::derive_seed;
use nclasso::theory_probe::{gradient_identification_check, risk_curvature_scan, DEFAULT_ETA_STAR};

#[test]
fn increment_ratio_vanishes_at_truth_and_stays_below_rate() {
    let p = increment_instance(500, 20, 100, 20_000, 3).unwrap();
    assert_eq!(p.ratios[0], 0.0);
    assert_eq!(p.ratios.len(), 100);
    assert!(p.report.passed, "{:?}", p.report);
    assert!(p.ball_radius > 0.0);
}

#[test]
fn increment_ratio_shrinks_like_root_n() {
    let med = |n: usize| {
        let v: Vec<f64> = (0..8)
            .map(|r| increment_instance(n, 20, 100, 20_000, derive_seed(9, "rep", r)).unwrap().report.measured)
            .collect();
        median(&v)
    };
    let ratio = med(1000) / med(500);
    // 1/sqrt(2) ~ 0.71 up to log drift and Monte Carlo noise
    assert!((0.45..=0.95).contains(&ratio), "{ratio}");
}

#[test]
fn probe_records_are_deterministic() {
    let a: Vec<String> = max_average_suite(200, 5).unwrap().iter().map(|r| r.to_json_line()).collect();
    let b: Vec<String> = max_average_suite(200, 5).unwrap().iter().map(|r| r.to_json_line()).collect();
    assert_eq!(a, b);
    for r in max_average_suite(200, 5).unwrap() {
        assert_eq!(r.margin, r.bound - r.measured);
    }
}

#[test]
fn robust_curvature_positive_at_all_radii() {
    let (model, design, noise) = default_probe_instance(ModelKind::robust(), 1).unwrap();
    let r = risk_curvature_scan(&model, &design, &noise, DEFAULT_ETA_STAR, 5, 50_000, 2).unwrap();
    assert!(-r.measured > 0.0);
    assert!(r.passed, "{r:?}");
}

#[test]
fn binary_identification_on_default_instance() {
    let (model, design, noise) = default_probe_instance(ModelKind::binary(), 4).unwrap();
    for gamma in [0.25, 2.0] {
        let reports = gradient_identification_check(&model, &design, &noise, 20, gamma, 20_000, 8).unwrap();
        assert!(reports.iter().all(|r| r.passed), "{reports:?}");
    }
}

#[test]
fn identification_on_mixed_uniform_design() {
    let design = DesignSpec::uniform(6, 1.0).with_mixing(2);
    let model = ModelSpec::new(ModelKind::robust(), gen_theta0(6, 2, 1.0, 1).unwrap()).unwrap();
    let reports = gradient_identification_check(&model, &design, &NoiseSpec::Laplace { scale: 0.7 }, 12, 1.0, 20_000, 5).unwrap();
    assert!(reports.iter().all(|r| r.passed), "{reports:?}");
}
