use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::{ForecastError, Result};
use crate::timeseries::{
    calendar_point, ema_with_gaps, is_na, previous_day_stats, AlignedFrame, DayStat, NA,
};

/// Which regressors to build and how far ahead to forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Hours between the forecast origin `t` and the target `t + horizon`.
    pub horizon: usize,
    pub load_column: String,
    pub current_load: bool,
    /// Load 1 h, 24 h and 168 h before the origin.
    pub lags: bool,
    /// Mean and minimum of the previous calendar day.
    pub previous_day: bool,
    pub ema_periods: Vec<usize>,
    /// Day of week, hour of day and working-day flag of the target time.
    pub calendar: bool,
    /// Temperature columns, each read at the origin.
    pub temperature_columns: Vec<String>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            horizon: 24,
            load_column: "load".into(),
            current_load: true,
            lags: true,
            previous_day: true,
            ema_periods: vec![12, 24, 48, 168],
            calendar: true,
            temperature_columns: vec!["temperature".into()],
        }
    }
}

const LAGS: [usize; 3] = [1, 24, 168];

impl FeatureConfig {
    /// Feature labels in matrix column order.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.current_load {
            names.push("load_current".to_string());
        }
        if self.lags {
            names.extend(LAGS.iter().map(|k| format!("load_lag_{k}h")));
        }
        if self.previous_day {
            names.push("prev_day_mean".into());
            names.push("prev_day_min".into());
        }
        names.extend(self.ema_periods.iter().map(|p| format!("ema_{p}h")));
        if self.calendar {
            names.extend(["day_of_week", "hour_of_day", "is_working_day"].map(String::from));
        }
        names.extend(self.temperature_columns.iter().cloned());
        names
    }
}

/// Regressors with their targets. Row `r` forecasts the load at
/// `target_times[r]` from data available at frame row `origins[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub target_times: Vec<DateTime<Utc>>,
    /// Frame row of the forecast origin.
    pub origins: Vec<usize>,
    /// Frame row of the target (`origin + horizon`).
    pub target_rows: Vec<usize>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Rows picked by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            target_times: indices.iter().map(|&i| self.target_times[i]).collect(),
            origins: indices.iter().map(|&i| self.origins[i]).collect(),
            target_rows: indices.iter().map(|&i| self.target_rows[i]).collect(),
        }
    }

    /// Feature-major copy of the rows.
    pub(crate) fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_features())
            .map(|f| self.rows.iter().map(|r| r[f]).collect())
            .collect()
    }
}

/// Feature vector for every frame row taken as forecast origin; `None` where
/// any feature is missing. Only data at or before the origin is read, apart
/// from the calendar of the target timestamp.
pub fn origin_features(frame: &AlignedFrame, config: &FeatureConfig) -> Result<Vec<Option<Vec<f64>>>> {
    let load = frame
        .column(&config.load_column)
        .ok_or_else(|| ForecastError::MissingColumn(config.load_column.clone()))?;
    let temperatures = config
        .temperature_columns
        .iter()
        .map(|name| {
            frame
                .column(name)
                .ok_or_else(|| ForecastError::MissingColumn(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = frame.len();
    let (prev_mean, prev_min) = if config.previous_day {
        let series = frame.series(&config.load_column)?;
        (
            previous_day_stats(&series, DayStat::Mean).values,
            previous_day_stats(&series, DayStat::Min).values,
        )
    } else {
        (Vec::new(), Vec::new())
    };
    let emas: Vec<Vec<f64>> = config
        .ema_periods
        .iter()
        .map(|&p| {
            if p == 0 {
                Err(ForecastError::InvalidParameter("EMA period must be positive".into()))
            } else {
                Ok(ema_with_gaps(load, p))
            }
        })
        .collect::<Result<_>>()?;

    let lagged = |t: usize, k: usize| if t >= k { load[t - k] } else { NA };
    let horizon = Duration::seconds(frame.step * config.horizon as i64);

    let out = (0..n)
        .map(|t| {
            let mut row = Vec::with_capacity(config.feature_names().len());
            if config.current_load {
                row.push(load[t]);
            }
            if config.lags {
                row.extend(LAGS.iter().map(|&k| lagged(t, k)));
            }
            if config.previous_day {
                row.push(prev_mean[t]);
                row.push(prev_min[t]);
            }
            row.extend(emas.iter().map(|e| e[t]));
            if config.calendar {
                let p = calendar_point(frame.timestamp(t) + horizon, &frame.holidays);
                row.push(p.day_of_week as f64);
                row.push(p.hour_of_day as f64);
                row.push(if p.is_working_day { 1.0 } else { 0.0 });
            }
            row.extend(temperatures.iter().map(|c| c[t]));
            (!row.iter().any(|v| is_na(*v))).then_some(row)
        })
        .collect();
    Ok(out)
}

/// Pairs origin features with the load `horizon` hours later. Rows with any
/// missing feature or target are dropped.
pub fn build_feature_matrix(frame: &AlignedFrame, config: &FeatureConfig) -> Result<FeatureMatrix> {
    if config.horizon == 0 {
        return Err(ForecastError::InvalidParameter("horizon must be at least 1 hour".into()));
    }
    let features = origin_features(frame, config)?;
    let load = frame
        .column(&config.load_column)
        .ok_or_else(|| ForecastError::MissingColumn(config.load_column.clone()))?;
    let mut m = FeatureMatrix {
        feature_names: config.feature_names(),
        rows: Vec::new(),
        targets: Vec::new(),
        target_times: Vec::new(),
        origins: Vec::new(),
        target_rows: Vec::new(),
    };
    for (origin, row) in features.into_iter().enumerate() {
        let target_row = origin + config.horizon;
        if target_row >= frame.len() {
            break;
        }
        let target = load[target_row];
        if let Some(row) = row {
            if !is_na(target) {
                m.rows.push(row);
                m.targets.push(target);
                m.target_times.push(frame.timestamp(target_row));
                m.origins.push(origin);
                m.target_rows.push(target_row);
            }
        }
    }
    Ok(m)
}
