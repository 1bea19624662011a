//! Day-ahead load forecasting.
//!
//! Features are built from an [`AlignedFrame`](crate::timeseries::AlignedFrame)
//! so that every regressor of a row is computable from data at or before its
//! forecast origin. Three model families are provided: ridge-stabilised
//! linear regression, random forests and stochastic gradient boosting. Model
//! quality is assessed by chronological block cross-validation.

mod cv;
mod ensemble;
mod features;
mod linear;
mod metrics;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::TimeSeriesError;

pub use cv::{block_cross_validate, CvReport, FoldReport, ModelSpec, PredictionRow};
pub use ensemble::{fit_gbdt, fit_random_forest, EnsembleKind, ForestParams, GbdtParams, TreeEnsembleModel};
pub use features::{build_feature_matrix, origin_features, FeatureConfig, FeatureMatrix};
pub use linear::{fit_linear, LinearModel, DEFAULT_RIDGE};
pub use metrics::{compute_metrics, Metrics, MetricsError};
pub use tree::{Node, RegressionTree};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("frame has no column '{0}'")]
    MissingColumn(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least {needed} rows, got {rows}")]
    TooFewRows { rows: usize, needed: usize },
    #[error("design matrix is rank deficient at feature '{feature}'; use ridge > 0")]
    RankDeficient { feature: String },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("feature mismatch: model expects {expected:?}, got {actual:?}")]
    FeatureMismatch {
        expected: Vec<String>,
        actual: Vec<String>,
    },
    #[error("need ≥ 2 blocks, got {0}")]
    TooFewBlocks(usize),
    #[error("block {block} has no usable rows")]
    EmptyBlock { block: usize },
    #[error("unsupported model document ({format} v{version})")]
    UnsupportedDocument { format: String, version: u32 },
    #[error(transparent)]
    TimeSeries(#[from] TimeSeriesError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ForecastError> = std::result::Result<T, E>;

/// Any fitted predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ForecastModel {
    Linear(LinearModel),
    Ensemble(TreeEnsembleModel),
}

impl ForecastModel {
    pub fn feature_names(&self) -> &[String] {
        match self {
            ForecastModel::Linear(m) => &m.feature_names,
            ForecastModel::Ensemble(m) => &m.feature_names,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            ForecastModel::Linear(m) => m.predict_row(row),
            ForecastModel::Ensemble(m) => m.predict_row(row),
        }
    }
}

impl From<LinearModel> for ForecastModel {
    fn from(m: LinearModel) -> Self {
        ForecastModel::Linear(m)
    }
}

impl From<TreeEnsembleModel> for ForecastModel {
    fn from(m: TreeEnsembleModel) -> Self {
        ForecastModel::Ensemble(m)
    }
}

/// One prediction per row of `m`. The matrix must carry the model's features
/// in training order.
pub fn predict(model: &ForecastModel, m: &FeatureMatrix) -> Result<Vec<f64>> {
    if model.feature_names() != m.feature_names.as_slice() {
        return Err(ForecastError::FeatureMismatch {
            expected: model.feature_names().to_vec(),
            actual: m.feature_names.clone(),
        });
    }
    Ok(m.rows.iter().map(|r| model.predict_row(r)).collect())
}

pub const MODEL_FORMAT: &str = "voltgrid-model";
pub const MODEL_VERSION: u32 = 1;

/// Versioned on-disk form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub model: ForecastModel,
}

impl ModelDocument {
    pub fn new(model: ForecastModel) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(ForecastError::UnsupportedDocument {
                format: doc.format,
                version: doc.version,
            });
        }
        Ok(doc)
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::FeatureMatrix;
    use chrono::{Duration, TimeZone, Utc};

    pub fn matrix(names: &[&str], rows: Vec<Vec<f64>>, targets: Vec<f64>) -> FeatureMatrix {
        let t0 = Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap();
        let n = rows.len();
        FeatureMatrix {
            feature_names: names.iter().map(|s| s.to_string()).collect(),
            rows,
            targets,
            target_times: (0..n).map(|i| t0 + Duration::hours(i as i64)).collect(),
            origins: (0..n).collect(),
            target_rows: (0..n).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::matrix;
    use super::*;

    #[test]
    fn linear_prediction() {
        let model = ForecastModel::Linear(LinearModel {
            feature_names: vec!["x1".into()],
            weights: vec![2.0],
            intercept: 1.0,
        });
        let m = matrix(&["x1"], vec![vec![3.0]], vec![0.0]);
        assert_eq!(predict(&model, &m).unwrap(), vec![7.0]);
    }

    #[test]
    fn feature_mismatch_is_an_error() {
        let model = ForecastModel::Linear(LinearModel {
            feature_names: vec!["x1".into(), "x2".into()],
            weights: vec![1.0, 1.0],
            intercept: 0.0,
        });
        let m = matrix(&["x2", "x1"], vec![vec![3.0, 4.0]], vec![0.0]);
        assert!(matches!(predict(&model, &m), Err(ForecastError::FeatureMismatch { .. })));
    }

    #[test]
    fn document_roundtrip() {
        let model = ForecastModel::Linear(LinearModel {
            feature_names: vec!["a".into()],
            weights: vec![0.1 + 0.2],
            intercept: -1.0 / 3.0,
        });
        let doc = ModelDocument::new(model);
        let back = ModelDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back, doc);

        let mut bad = doc.clone();
        bad.version = 7;
        let err = ModelDocument::from_json(&bad.to_json().unwrap()).unwrap_err();
        assert!(matches!(err, ForecastError::UnsupportedDocument { version: 7, .. }));
    }
}
