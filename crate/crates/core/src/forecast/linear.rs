use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, ForecastError, Result};

pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Relative size of an `R` diagonal entry below which the design is treated
/// as rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }
}

/// Mean that is exact for constant data.
pub(crate) fn stable_mean(values: &[f64]) -> f64 {
    match values.first() {
        None => 0.0,
        Some(&first) => first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64,
    }
}

/// Least squares with an unpenalized intercept and an L2 penalty `ridge·|w|²`.
///
/// Columns are centred and scaled, the penalty is appended as extra rows and
/// the stacked system is solved by Householder QR.
pub fn fit_linear(m: &FeatureMatrix, ridge: f64) -> Result<LinearModel> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(ForecastError::InvalidParameter(format!(
            "ridge must be finite and non-negative, got {ridge}"
        )));
    }
    let p = m.n_features();
    let n = m.len();
    if n < p + 1 {
        return Err(ForecastError::TooFewRows {
            rows: n,
            needed: p + 1,
        });
    }
    let columns = m.columns();
    let means: Vec<f64> = columns.iter().map(|c| stable_mean(c)).collect();
    let scales: Vec<f64> = columns
        .iter()
        .zip(&means)
        .map(|(c, mean)| {
            let ss: f64 = c.iter().map(|v| (v - mean).powi(2)).sum();
            let s = (ss / n as f64).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let y_mean = stable_mean(&m.targets);

    let extra = if ridge > 0.0 { p } else { 0 };
    let design = DMatrix::from_fn(n + extra, p, |r, c| {
        if r < n {
            (m.rows[r][c] - means[c]) / scales[c]
        } else if r - n == c {
            ridge.sqrt() / scales[c]
        } else {
            0.0
        }
    });
    let rhs = DVector::from_fn(n + extra, |r, _| if r < n { m.targets[r] - y_mean } else { 0.0 });

    let qr = design.qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let deficient = (0..p).find(|&i| r[(i, i)].abs() <= RANK_TOL * diag_max.max(f64::MIN_POSITIVE));
    if let (Some(col), true) = (deficient, ridge == 0.0) {
        return Err(ForecastError::RankDeficient {
            feature: m.feature_names[col].clone(),
        });
    }
    let qty = qr.q().transpose() * rhs;
    let scaled = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| ForecastError::RankDeficient {
            feature: "design".into(),
        })?;

    let weights: Vec<f64> = scaled.iter().zip(&scales).map(|(w, s)| w / s).collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(ForecastError::NonFinite("linear weights".into()));
    }
    let intercept = y_mean - weights.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>();
    Ok(LinearModel {
        feature_names: m.feature_names.clone(),
        weights,
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::testutil::matrix;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_line() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.5]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0] + 1.0).collect();
        let model = fit_linear(&matrix(&["x1"], xs, ys), DEFAULT_RIDGE).unwrap();
        assert_abs_diff_eq!(model.weights[0], 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(model.intercept, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(model.predict_row(&[3.0]), 7.0, epsilon = 1e-6);
    }

    #[test]
    fn constant_target() {
        let xs: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
        let model = fit_linear(&matrix(&["a", "b"], xs, vec![4.25; 30]), 0.0).unwrap();
        assert_eq!(model.weights, vec![0.0, 0.0]);
        assert_eq!(model.intercept, 4.25);
    }

    #[test]
    fn constant_features_with_ridge() {
        let xs = vec![vec![3.0, 3.0]; 10];
        let model = fit_linear(&matrix(&["a", "b"], xs, vec![50_000.0; 10]), DEFAULT_RIDGE).unwrap();
        assert_eq!(model.predict_row(&[3.0, 3.0]), 50_000.0);
    }

    #[test]
    fn duplicated_column_without_ridge_is_rank_deficient() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let ys: Vec<f64> = (0..10).map(|i| i as f64 * 3.0).collect();
        let err = fit_linear(&matrix(&["a", "a_copy"], xs.clone(), ys.clone()), 0.0).unwrap_err();
        assert!(matches!(err, ForecastError::RankDeficient { .. }));
        assert!(err.to_string().contains("ridge"));
        let model = fit_linear(&matrix(&["a", "a_copy"], xs, ys), 1e-6).unwrap();
        assert_abs_diff_eq!(model.weights[0] + model.weights[1], 3.0, epsilon = 1e-6);
    }

    #[test]
    fn too_few_rows() {
        let err = fit_linear(&matrix(&["a", "b"], vec![vec![1.0, 2.0]; 2], vec![1.0; 2]), 0.0);
        assert!(matches!(err, Err(ForecastError::TooFewRows { rows: 2, needed: 3 })));
    }
}
