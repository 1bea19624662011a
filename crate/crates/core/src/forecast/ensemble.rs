use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::stable_mean;
use super::tree::{grow, GrowParams, RegressionTree};
use super::{FeatureMatrix, ForecastError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    RandomForest,
    Gbdt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features drawn at each split.
    pub mtry: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: 4,
            min_leaf: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    /// Minimum rows in a terminal node.
    pub min_node: usize,
    /// Fraction of rows drawn without replacement for each stage.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 9,
            shrinkage: 0.1,
            min_node: 10,
            subsample: 0.5,
            seed: 0,
        }
    }
}

/// Random forest or boosted trees.
///
/// A forest predicts the mean of its trees; boosting predicts
/// `base_score + shrinkage · Σ trees`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleModel {
    pub kind: EnsembleKind,
    pub feature_names: Vec<String>,
    pub trees: Vec<RegressionTree>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shrinkage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_score: Option<f64>,
    pub seed: u64,
    /// Out-of-bag RMSE of a forest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oob_rmse: Option<f64>,
}

impl TreeEnsembleModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.kind {
            EnsembleKind::RandomForest => {
                // summing in sorted order makes the mean independent of tree order
                let mut outputs: Vec<f64> = self.trees.iter().map(|t| t.predict(row)).collect();
                outputs.sort_unstable_by(f64::total_cmp);
                outputs.iter().sum::<f64>() / outputs.len() as f64
            }
            EnsembleKind::Gbdt => {
                let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
                self.base_score.unwrap_or(0.0) + self.shrinkage.unwrap_or(1.0) * sum
            }
        }
    }
}

/// Independent random stream for item `index` under `seed`.
pub(crate) fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn require_rows(m: &FeatureMatrix, min_leaf: usize) -> Result<()> {
    let needed = (2 * min_leaf).max(1);
    if m.len() < needed {
        return Err(ForecastError::TooFewRows { rows: m.len(), needed });
    }
    Ok(())
}

pub fn fit_random_forest(m: &FeatureMatrix, params: &ForestParams) -> Result<TreeEnsembleModel> {
    let p = m.n_features();
    if params.mtry == 0 || params.mtry > p {
        return Err(ForecastError::InvalidParameter(format!(
            "mtry must be in 1..={p}, got {}",
            params.mtry
        )));
    }
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(ForecastError::InvalidParameter(
            "n_trees and min_leaf must be positive".into(),
        ));
    }
    require_rows(m, params.min_leaf)?;

    let n = m.len();
    let columns = m.columns();
    let grow_params = GrowParams {
        min_leaf: params.min_leaf,
        max_depth: None,
        mtry: Some(params.mtry),
    };
    let grown: Vec<(RegressionTree, Vec<bool>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(params.seed, t as u64);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut in_bag = vec![false; n];
            for &i in &sample {
                in_bag[i] = true;
            }
            let tree = grow(&columns, &m.targets, sample, grow_params, &mut rng);
            (tree, in_bag)
        })
        .collect();

    let mut oob_sum = vec![0.0; n];
    let mut oob_count = vec![0usize; n];
    for (tree, in_bag) in &grown {
        for i in (0..n).filter(|&i| !in_bag[i]) {
            oob_sum[i] += tree.predict(&m.rows[i]);
            oob_count[i] += 1;
        }
    }
    let (sq, k) = (0..n)
        .filter(|&i| oob_count[i] > 0)
        .map(|i| (oob_sum[i] / oob_count[i] as f64 - m.targets[i]).powi(2))
        .fold((0.0, 0usize), |(s, k), e| (s + e, k + 1));
    let oob_rmse = (k > 0).then(|| (sq / k as f64).sqrt());

    Ok(TreeEnsembleModel {
        kind: EnsembleKind::RandomForest,
        feature_names: m.feature_names.clone(),
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        shrinkage: None,
        base_score: None,
        seed: params.seed,
        oob_rmse,
    })
}

pub fn fit_gbdt(m: &FeatureMatrix, params: &GbdtParams) -> Result<TreeEnsembleModel> {
    if !(params.shrinkage > 0.0 && params.shrinkage <= 1.0) {
        return Err(ForecastError::InvalidParameter(format!(
            "shrinkage must be in (0, 1], got {}",
            params.shrinkage
        )));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(ForecastError::InvalidParameter(format!(
            "subsample must be in (0, 1], got {}",
            params.subsample
        )));
    }
    if params.n_trees == 0 || params.min_node == 0 || params.max_depth == 0 {
        return Err(ForecastError::InvalidParameter(
            "n_trees, max_depth and min_node must be positive".into(),
        ));
    }
    require_rows(m, params.min_node)?;

    let n = m.len();
    let columns = m.columns();
    let base = stable_mean(&m.targets);
    let mut fitted = vec![base; n];
    let mut residual = vec![0.0; n];
    let draw = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let grow_params = GrowParams {
        min_leaf: params.min_node,
        max_depth: Some(params.max_depth),
        mtry: None,
    };

    let mut trees = Vec::with_capacity(params.n_trees);
    for stage in 0..params.n_trees {
        for i in 0..n {
            residual[i] = m.targets[i] - fitted[i];
        }
        let mut rng = stream_rng(params.seed, stage as u64);
        let sample = if draw == n {
            (0..n).collect()
        } else {
            let mut s = index::sample(&mut rng, n, draw).into_vec();
            s.sort_unstable();
            s
        };
        let tree = grow(&columns, &residual, sample, grow_params, &mut rng);
        for i in 0..n {
            fitted[i] += params.shrinkage * tree.predict(&m.rows[i]);
        }
        trees.push(tree);
    }

    Ok(TreeEnsembleModel {
        kind: EnsembleKind::Gbdt,
        feature_names: m.feature_names.clone(),
        trees,
        shrinkage: Some(params.shrinkage),
        base_score: Some(base),
        seed: params.seed,
        oob_rmse: None,
    })
}
