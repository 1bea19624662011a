use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_feature_matrix, compute_metrics, fit_gbdt, fit_linear, fit_random_forest, predict, FeatureConfig,
    FeatureMatrix, ForecastError, ForecastModel, ForestParams, GbdtParams, Metrics, Result,
};
use crate::timeseries::{block_split, calendar_point, AlignedFrame};

/// Model family plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Linear { ridge: f64 },
    RandomForest(ForestParams),
    Gbdt(GbdtParams),
}

impl ModelSpec {
    /// Short label: `lm`, `rf` or `gbdt`.
    pub fn label(&self) -> &'static str {
        match self {
            ModelSpec::Linear { .. } => "lm",
            ModelSpec::RandomForest(_) => "rf",
            ModelSpec::Gbdt(_) => "gbdt",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelSpec::Linear { .. } => 0,
            ModelSpec::RandomForest(p) => p.seed,
            ModelSpec::Gbdt(p) => p.seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            ModelSpec::Linear { ridge } => ModelSpec::Linear { ridge: *ridge },
            ModelSpec::RandomForest(p) => ModelSpec::RandomForest(ForestParams { seed, ..*p }),
            ModelSpec::Gbdt(p) => ModelSpec::Gbdt(GbdtParams { seed, ..*p }),
        }
    }

    pub fn fit(&self, m: &FeatureMatrix) -> Result<ForecastModel> {
        Ok(match self {
            ModelSpec::Linear { ridge } => fit_linear(m, *ridge)?.into(),
            ModelSpec::RandomForest(p) => fit_random_forest(m, p)?.into(),
            ModelSpec::Gbdt(p) => fit_gbdt(m, p)?.into(),
        })
    }
}

/// Seed for fold `index`, independent of the order folds are run in.
fn fold_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub block: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionRow {
    pub timestamp: DateTime<Utc>,
    pub predicted: f64,
    pub actual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    /// Held-out tail, scored by the model refitted on all training blocks.
    pub validation: Metrics,
    /// Validation MAE by target weekday, Monday first; `None` without rows.
    pub by_weekday: Vec<Option<f64>>,
    /// Validation MAE by target hour.
    pub by_hour: Vec<Option<f64>>,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub predictions: Vec<PredictionRow>,
    pub model: ForecastModel,
}

fn fit_and_score(spec: &ModelSpec, train: &FeatureMatrix, test: &FeatureMatrix) -> Result<(ForecastModel, Vec<f64>, Metrics)> {
    let model = spec.fit(train)?;
    let predicted = predict(&model, test)?;
    let metrics = compute_metrics(&predicted, &test.targets)?;
    Ok((model, predicted, metrics))
}

fn grouped_mae(keys: impl Iterator<Item = usize>, errors: &[f64], groups: usize) -> Vec<Option<f64>> {
    let mut sum = vec![0.0; groups];
    let mut count = vec![0usize; groups];
    for (k, e) in keys.zip(errors) {
        sum[k] += e;
        count[k] += 1;
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect()
}

/// Chronological block cross-validation.
///
/// The frame's training part is cut into `n_blocks` contiguous blocks; rows
/// are assigned to blocks by their target time. Each block is scored by a
/// model fitted on the other blocks; finally a model fitted on all blocks is
/// scored on the last `validation_tail` frame rows.
pub fn block_cross_validate(
    spec: &ModelSpec,
    frame: &AlignedFrame,
    config: &FeatureConfig,
    n_blocks: usize,
    validation_tail: usize,
) -> Result<CvReport> {
    if n_blocks < 2 {
        return Err(ForecastError::TooFewBlocks(n_blocks));
    }
    let split = block_split(frame, validation_tail, n_blocks)?;
    let all = build_feature_matrix(frame, config)?;

    let block_of = |target_row: usize| split.blocks.iter().position(|b| b.contains(&target_row));
    let assignment: Vec<Option<usize>> = all.target_rows.iter().map(|&r| block_of(r)).collect();

    let folds = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..all.len())
                .filter(|&i| assignment[i].is_some())
                .partition(|&i| assignment[i] == Some(b));
            if test_idx.is_empty() || train_idx.is_empty() {
                return Err(ForecastError::EmptyBlock { block: b });
            }
            let fold_spec = spec.with_seed(fold_seed(spec.seed(), b));
            let (_, _, metrics) = fit_and_score(&fold_spec, &all.select(&train_idx), &all.select(&test_idx))?;
            Ok(FoldReport {
                block: b,
                train_rows: train_idx.len(),
                test_rows: test_idx.len(),
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let train_idx: Vec<usize> = (0..all.len()).filter(|&i| assignment[i].is_some()).collect();
    let val_idx: Vec<usize> = (0..all.len())
        .filter(|&i| split.validation.contains(&all.target_rows[i]))
        .collect();
    if val_idx.is_empty() {
        return Err(ForecastError::TooFewRows { rows: 0, needed: 1 });
    }
    let val = all.select(&val_idx);
    let (model, predicted, validation) = fit_and_score(spec, &all.select(&train_idx), &val)?;

    let errors: Vec<f64> = predicted.iter().zip(&val.targets).map(|(p, a)| (p - a).abs()).collect();
    let points: Vec<_> = val
        .target_times
        .iter()
        .map(|&t| calendar_point(t, &frame.holidays))
        .collect();
    let by_weekday = grouped_mae(points.iter().map(|p| p.day_of_week as usize), &errors, 7);
    let by_hour = grouped_mae(points.iter().map(|p| p.hour_of_day as usize), &errors, 24);

    let predictions = val
        .target_times
        .iter()
        .zip(predicted.iter().zip(&val.targets))
        .map(|(&timestamp, (&predicted, &actual))| PredictionRow {
            timestamp,
            predicted,
            actual,
        })
        .collect();

    Ok(CvReport {
        folds,
        validation,
        by_weekday,
        by_hour,
        train_rows: train_idx.len(),
        validation_rows: val_idx.len(),
        predictions,
        model,
    })
}
