use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub mape_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("predicted and actual lengths differ ({predicted} vs {actual})")]
    Length { predicted: usize, actual: usize },
    #[error("no samples")]
    Empty,
    /// MAPE is undefined; the scale-dependent errors are still reported.
    #[error("actual value is zero at index {index}; MAPE undefined (rmse {rmse}, mae {mae})")]
    ZeroActual { index: usize, rmse: f64, mae: f64 },
}

/// RMSE, MAE and MAPE of `predicted` against the real values `actual`.
///
/// MAPE divides each absolute error by `|actual|`.
pub fn compute_metrics(predicted: &[f64], actual: &[f64]) -> Result<Metrics, MetricsError> {
    if predicted.len() != actual.len() {
        return Err(MetricsError::Length {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = predicted.len() as f64;
    let mut squared = 0.0;
    let mut absolute = 0.0;
    let mut percent = 0.0;
    let mut zero = None;
    for (i, (p, a)) in predicted.iter().zip(actual).enumerate() {
        let err = (p - a).abs();
        squared += err * err;
        absolute += err;
        if *a == 0.0 {
            zero.get_or_insert(i);
        } else {
            percent += 100.0 * err / a.abs();
        }
    }
    let rmse = (squared / n).sqrt();
    let mae = absolute / n;
    match zero {
        Some(index) => Err(MetricsError::ZeroActual { index, rmse, mae }),
        None => Ok(Metrics {
            rmse,
            mae,
            mape_percent: percent / n,
        }),
    }
}
