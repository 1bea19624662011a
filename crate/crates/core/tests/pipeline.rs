//! Public-API round trips across the library modules.

use std::f64::consts::PI;

use chrono::{TimeZone, Utc};
use indexmap::IndexMap;
use voltgrid::forecast::{
    build_feature_matrix, fit_random_forest, predict, FeatureConfig, ForecastError, ForestParams, ModelDocument,
    ModelSpec,
};
use voltgrid::storage::{dispatch, grid_for, StorageSpec};
use voltgrid::timeseries::{AlignedFrame, TimeSeries, HOUR_SECONDS};
use voltgrid::volterra::KernelSpec;

fn hourly_load(hours: usize) -> Vec<f64> {
    (0..hours)
        .map(|i| {
            let t = i as f64;
            1_000.0 + 200.0 * (2.0 * PI * t / 24.0).sin() + 50.0 * (2.0 * PI * t / 168.0).cos()
        })
        .collect()
}

fn frame(load: Vec<f64>) -> AlignedFrame {
    let start = Utc.with_ymd_and_hms(2020, 3, 2, 0, 0, 0).unwrap();
    AlignedFrame::new(start, HOUR_SECONDS, IndexMap::from([("load".to_string(), load)])).unwrap()
}

fn no_temperature() -> FeatureConfig {
    FeatureConfig {
        temperature_columns: Vec::new(),
        ..FeatureConfig::default()
    }
}

#[test]
fn fitted_models_survive_a_json_round_trip() {
    let m = build_feature_matrix(&frame(hourly_load(24 * 21)), &no_temperature()).unwrap();
    for spec in [
        ModelSpec::Linear { ridge: 1e-6 },
        ModelSpec::RandomForest(ForestParams {
            n_trees: 15,
            seed: 3,
            ..ForestParams::default()
        }),
    ] {
        let model = spec.fit(&m).unwrap();
        let text = ModelDocument::new(model.clone()).to_json().unwrap();
        let back = ModelDocument::from_json(&text).unwrap().model;
        assert_eq!(predict(&model, &m).unwrap(), predict(&back, &m).unwrap(), "{}", spec.label());
    }
}

#[test]
fn models_reject_a_different_feature_layout() {
    let load = hourly_load(24 * 21);
    let m = build_feature_matrix(&frame(load.clone()), &no_temperature()).unwrap();
    let model = ModelSpec::Linear { ridge: 1e-6 }.fit(&m).unwrap();
    let other = FeatureConfig {
        ema_periods: vec![24],
        ..no_temperature()
    };
    let m2 = build_feature_matrix(&frame(load), &other).unwrap();
    assert!(matches!(predict(&model, &m2), Err(ForecastError::FeatureMismatch { .. })));
}

#[test]
fn forest_is_reproducible_from_its_seed() {
    let m = build_feature_matrix(&frame(hourly_load(24 * 14)), &no_temperature()).unwrap();
    let params = ForestParams {
        n_trees: 10,
        seed: 11,
        ..ForestParams::default()
    };
    let a = fit_random_forest(&m, &params).unwrap();
    let b = fit_random_forest(&m, &params).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dispatch_of_a_periodic_imbalance_is_bounded() {
    let start = Utc.with_ymd_and_hms(2020, 3, 2, 0, 0, 0).unwrap();
    let load = TimeSeries::hourly("load", start, hourly_load(24 * 7));
    let gen = TimeSeries::hourly("gen", start, vec![1_000.0; load.len()]);
    let res = TimeSeries::hourly("res", start, vec![0.0; load.len()]);
    let grid = grid_for(&load).unwrap();
    let report = dispatch(&res, &gen, &load, &KernelSpec::single_constant(0.92), &StorageSpec::default(), &grid)
        .unwrap();
    assert_eq!(report.x.len(), load.len());
    assert!(report.x.iter().all(|x| x.is_finite()));
    assert!(report.min_capacity > 0.0);
    assert!(report.equivalent_cycles > 0.0);
    // the hourly swing is bounded by the derivative of the load profile
    let peak = 200.0 * 2.0 * PI / 24.0 + 50.0 * 2.0 * PI / 168.0;
    assert!(report.max_abs_power < 1.5 * peak / 0.92, "{}", report.max_abs_power);
}
