//! Hourly time series: ingestion, alignment and the transforms used to build
//! forecasting features.
//!
//! Missing samples are stored as [`NA`] (a NaN) at their slot, so the k-th
//! value of a series is always at `start + k * step`.

mod csv_io;

use std::collections::BTreeSet;
use std::ops::Range;

use chrono::{DateTime, Datelike, Duration, NaiveDate, Timelike, Utc};
use indexmap::IndexMap;
use thiserror::Error;

pub use csv_io::{
    parse_holidays, parse_timeseries_csv, read_frame_csv, write_frame_csv, CsvSpec,
    TIMESTAMP_OUTPUT_FORMAT,
};

/// Not-a-value marker for missing samples.
pub const NA: f64 = f64::NAN;

/// Step used by the hourly pipeline, in seconds.
pub const HOUR_SECONDS: i64 = 3600;

const DAY_SECONDS: i64 = 86_400;

#[inline]
pub fn is_na(value: f64) -> bool {
    value.is_nan()
}

#[derive(Debug, Error)]
pub enum TimeSeriesError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("duplicate timestamp at line {line} ({timestamp})")]
    DuplicateTimestamp { line: u64, timestamp: DateTime<Utc> },
    #[error("alignment error at line {line}: spacing of {delta_seconds} s is not a multiple of the {step} s step")]
    Spacing {
        line: u64,
        delta_seconds: i64,
        step: i64,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("step mismatch: series `{name}` has step {step} s, expected {expected} s")]
    StepMismatch {
        name: String,
        step: i64,
        expected: i64,
    },
    #[error("series `{0}` is not on the same hourly phase as the others")]
    PhaseMismatch(String),
    #[error("empty intersection between series time ranges")]
    EmptyIntersection,
    #[error("not-a-value in `{name}` at index {index}; impute before this operation")]
    NotANumber { name: String, index: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no data rows")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TimeSeriesError> = std::result::Result<T, E>;

/// Uniformly spaced series; sample `k` sits at `start + k * step`.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub name: String,
    pub start: DateTime<Utc>,
    /// Spacing in seconds.
    pub step: i64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, start: DateTime<Utc>, step: i64, values: Vec<f64>) -> Self {
        assert!(step > 0, "time series step must be positive");
        Self {
            name: name.into(),
            start,
            step,
            values,
        }
    }

    /// Hourly series starting at `start`.
    pub fn hourly(name: impl Into<String>, start: DateTime<Utc>, values: Vec<f64>) -> Self {
        Self::new(name, start, HOUR_SECONDS, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(self.step * index as i64)
    }

    /// Timestamp of the last sample; `None` for an empty series.
    pub fn end(&self) -> Option<DateTime<Utc>> {
        self.len().checked_sub(1).map(|i| self.timestamp(i))
    }

    pub fn na_count(&self) -> usize {
        self.values.iter().filter(|v| is_na(**v)).count()
    }

    fn with_values(&self, name: String, values: Vec<f64>) -> Self {
        Self {
            name,
            start: self.start,
            step: self.step,
            values,
        }
    }
}

/// Several series on one time base, plus the holiday calendar used by the
/// calendar features.
#[derive(Debug, Clone)]
pub struct AlignedFrame {
    pub start: DateTime<Utc>,
    pub step: i64,
    pub columns: IndexMap<String, Vec<f64>>,
    pub holidays: BTreeSet<NaiveDate>,
}

impl AlignedFrame {
    /// Builds a frame from named columns. All columns must share a length.
    pub fn new(
        start: DateTime<Utc>,
        step: i64,
        columns: IndexMap<String, Vec<f64>>,
    ) -> Result<Self> {
        if step <= 0 {
            return Err(TimeSeriesError::InvalidArgument(format!(
                "step must be positive, got {step}"
            )));
        }
        let mut lengths = columns.values().map(Vec::len);
        if let Some(first) = lengths.next() {
            if lengths.any(|len| len != first) {
                return Err(TimeSeriesError::InvalidArgument(
                    "frame columns differ in length".into(),
                ));
            }
        }
        Ok(Self {
            start,
            step,
            columns,
            holidays: BTreeSet::new(),
        })
    }

    pub fn with_holidays(mut self, holidays: BTreeSet<NaiveDate>) -> Self {
        self.holidays = holidays;
        self
    }

    pub fn len(&self) -> usize {
        self.columns.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(self.step * index as i64)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.get(name).map(Vec::as_slice)
    }

    /// The named column as a standalone series.
    pub fn series(&self, name: &str) -> Result<TimeSeries> {
        let values = self
            .columns
            .get(name)
            .ok_or_else(|| TimeSeriesError::MissingColumn(name.to_string()))?;
        Ok(TimeSeries::new(name, self.start, self.step, values.clone()))
    }

    /// True iff no column holds [`NA`] at `index`.
    pub fn is_complete(&self, index: usize) -> bool {
        self.columns.values().all(|c| !is_na(c[index]))
    }

    /// Rows `range` of this frame, keeping the holiday calendar.
    pub fn slice(&self, range: Range<usize>) -> AlignedFrame {
        let start = self.timestamp(range.start);
        let columns = self
            .columns
            .iter()
            .map(|(name, values)| (name.clone(), values[range.clone()].to_vec()))
            .collect();
        AlignedFrame {
            start,
            step: self.step,
            columns,
            holidays: self.holidays.clone(),
        }
    }

    pub fn na_counts(&self) -> IndexMap<String, usize> {
        self.columns
            .iter()
            .map(|(name, values)| (name.clone(), values.iter().filter(|v| is_na(**v)).count()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignPolicy {
    /// Keep only the time range covered by every series.
    Intersect,
    /// Span all series, padding with [`NA`].
    Union,
}

/// Places hourly series on a common time base.
pub fn align_hourly(series: &[TimeSeries], policy: AlignPolicy) -> Result<AlignedFrame> {
    let first = series
        .first()
        .ok_or_else(|| TimeSeriesError::InvalidArgument("no series to align".into()))?;
    for s in series {
        if s.step != HOUR_SECONDS {
            return Err(TimeSeriesError::StepMismatch {
                name: s.name.clone(),
                step: s.step,
                expected: HOUR_SECONDS,
            });
        }
        if s.is_empty() {
            return Err(TimeSeriesError::InvalidArgument(format!(
                "series `{}` is empty",
                s.name
            )));
        }
        if (s.start - first.start).num_seconds() % HOUR_SECONDS != 0 {
            return Err(TimeSeriesError::PhaseMismatch(s.name.clone()));
        }
    }

    let starts = series.iter().map(|s| s.start);
    let ends = series.iter().filter_map(TimeSeries::end);
    let (start, end) = match policy {
        AlignPolicy::Intersect => (starts.max().unwrap(), ends.min().unwrap()),
        AlignPolicy::Union => (starts.min().unwrap(), ends.max().unwrap()),
    };
    if start > end {
        return Err(TimeSeriesError::EmptyIntersection);
    }
    let len = ((end - start).num_seconds() / HOUR_SECONDS) as usize + 1;

    let mut columns = IndexMap::with_capacity(series.len());
    for s in series {
        let offset = (s.start - start).num_seconds() / HOUR_SECONDS;
        let values = (0..len as i64)
            .map(|i| {
                let k = i - offset;
                if k >= 0 && (k as usize) < s.len() {
                    s.values[k as usize]
                } else {
                    NA
                }
            })
            .collect();
        if columns.insert(s.name.clone(), values).is_some() {
            return Err(TimeSeriesError::InvalidArgument(format!(
                "duplicate series name `{}`",
                s.name
            )));
        }
    }
    AlignedFrame::new(start, HOUR_SECONDS, columns)
}

// The increment form keeps constant inputs exact.
fn ema_step(prev: f64, v: f64, beta: f64) -> f64 {
    if beta == 1.0 {
        v
    } else {
        prev + beta * (v - prev)
    }
}

/// Exponential moving average with smoothing factor `2 / (period + 1)`,
/// seeded with the first observation.
pub fn ema(series: &TimeSeries, period_hours: usize) -> Result<TimeSeries> {
    if period_hours == 0 {
        return Err(TimeSeriesError::InvalidArgument(
            "EMA period must be at least 1 hour".into(),
        ));
    }
    let beta = 2.0 / (period_hours as f64 + 1.0);
    let mut out = Vec::with_capacity(series.len());
    let mut prev = None;
    for (index, &v) in series.values.iter().enumerate() {
        if is_na(v) {
            return Err(TimeSeriesError::NotANumber {
                name: series.name.clone(),
                index,
            });
        }
        let y = match prev {
            None => v,
            Some(p) => ema_step(p, v, beta),
        };
        out.push(y);
        prev = Some(y);
    }
    Ok(series.with_values(format!("{}_ema_{period_hours}", series.name), out))
}

/// EMA that tolerates gaps: a missing sample yields [`NA`] and the average
/// restarts from the next observation.
pub(crate) fn ema_with_gaps(values: &[f64], period_hours: usize) -> Vec<f64> {
    let beta = 2.0 / (period_hours as f64 + 1.0);
    let mut prev: Option<f64> = None;
    values
        .iter()
        .map(|&v| {
            if is_na(v) {
                prev = None;
                return NA;
            }
            let y = match prev {
                None => v,
                Some(p) => ema_step(p, v, beta),
            };
            prev = Some(y);
            y
        })
        .collect()
}

/// Shifts values forward by `k_hours` samples; the first `k_hours` outputs
/// are [`NA`].
pub fn lag(series: &TimeSeries, k_hours: usize) -> Result<TimeSeries> {
    if k_hours == 0 {
        return Err(TimeSeriesError::InvalidArgument(
            "lag must be at least 1 hour".into(),
        ));
    }
    let n = series.len();
    let values = (0..n)
        .map(|i| if i >= k_hours { series.values[i - k_hours] } else { NA })
        .collect();
    Ok(series.with_values(format!("{}_lag_{k_hours}", series.name), values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DayStat {
    Mean,
    Min,
}

/// Every sample of UTC day D receives `stat` over the samples of day D-1.
///
/// Outputs are [`NA`] when the previous day is absent, only partially
/// covered by the series, or contains a missing sample.
pub fn previous_day_stats(series: &TimeSeries, stat: DayStat) -> TimeSeries {
    let per_day = if DAY_SECONDS % series.step == 0 {
        Some((DAY_SECONDS / series.step) as usize)
    } else {
        None
    };

    // (date, value) stats per calendar day in chronological order
    let mut days: Vec<(NaiveDate, Option<f64>)> = Vec::new();
    let mut day_of_sample = Vec::with_capacity(series.len());
    let mut i = 0;
    while i < series.len() {
        let date = series.timestamp(i).date_naive();
        let mut j = i;
        while j < series.len() && series.timestamp(j).date_naive() == date {
            j += 1;
        }
        let slice = &series.values[i..j];
        let complete = per_day.is_none_or(|n| slice.len() == n);
        let value = if complete && !slice.iter().any(|v| is_na(*v)) {
            Some(match stat {
                DayStat::Mean => {
                    slice[0] + slice.iter().map(|v| v - slice[0]).sum::<f64>() / slice.len() as f64
                }
                DayStat::Min => slice.iter().copied().fold(f64::INFINITY, f64::min),
            })
        } else {
            None
        };
        day_of_sample.extend(std::iter::repeat_n(days.len(), j - i));
        days.push((date, value));
        i = j;
    }

    let values = day_of_sample
        .iter()
        .map(|&d| {
            if d == 0 {
                return NA;
            }
            let (date, _) = days[d];
            let (prev_date, prev_value) = days[d - 1];
            match prev_value {
                Some(v) if date.pred_opt() == Some(prev_date) => v,
                _ => NA,
            }
        })
        .collect();
    let suffix = match stat {
        DayStat::Mean => "prev_day_mean",
        DayStat::Min => "prev_day_min",
    };
    series.with_values(format!("{}_{suffix}", series.name), values)
}

/// Calendar descriptors of a single timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CalendarPoint {
    /// Monday = 0 .. Sunday = 6.
    pub day_of_week: u32,
    pub hour_of_day: u32,
    pub is_working_day: bool,
}

pub fn calendar_point(timestamp: DateTime<Utc>, holidays: &BTreeSet<NaiveDate>) -> CalendarPoint {
    let day_of_week = timestamp.weekday().num_days_from_monday();
    CalendarPoint {
        day_of_week,
        hour_of_day: timestamp.hour(),
        is_working_day: day_of_week < 5 && !holidays.contains(&timestamp.date_naive()),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalendarColumns {
    pub day_of_week: Vec<f64>,
    pub hour_of_day: Vec<f64>,
    pub is_working_day: Vec<f64>,
}

/// Day of week, hour of day and working-day flag for every row of `frame`.
pub fn calendar_features(frame: &AlignedFrame) -> CalendarColumns {
    let mut out = CalendarColumns::default();
    for i in 0..frame.len() {
        let p = calendar_point(frame.timestamp(i), &frame.holidays);
        out.day_of_week.push(p.day_of_week as f64);
        out.hour_of_day.push(p.hour_of_day as f64);
        out.is_working_day.push(if p.is_working_day { 1.0 } else { 0.0 });
    }
    out
}

/// Chronological split into training blocks and a held-out tail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSplit {
    pub blocks: Vec<Range<usize>>,
    pub validation: Range<usize>,
}

impl BlockSplit {
    pub fn train_len(&self) -> usize {
        self.validation.start
    }
}

/// Cuts `len` rows into `n_blocks` contiguous training blocks followed by a
/// validation tail of `validation_tail` rows. Block lengths differ by at most
/// one; the earliest blocks take the remainder.
pub fn block_ranges(len: usize, validation_tail: usize, n_blocks: usize) -> Result<BlockSplit> {
    if validation_tail >= len {
        return Err(TimeSeriesError::InvalidArgument(format!(
            "validation tail {validation_tail} must be shorter than the frame ({len} rows)"
        )));
    }
    let train = len - validation_tail;
    if n_blocks == 0 || n_blocks > train {
        return Err(TimeSeriesError::InvalidArgument(format!(
            "cannot cut {train} training rows into {n_blocks} blocks"
        )));
    }
    let base = train / n_blocks;
    let extra = train % n_blocks;
    let mut blocks = Vec::with_capacity(n_blocks);
    let mut start = 0;
    for b in 0..n_blocks {
        let size = base + usize::from(b < extra);
        blocks.push(start..start + size);
        start += size;
    }
    Ok(BlockSplit {
        blocks,
        validation: train..len,
    })
}

pub fn block_split(
    frame: &AlignedFrame,
    validation_tail: usize,
    n_blocks: usize,
) -> Result<BlockSplit> {
    block_ranges(frame.len(), validation_tail, n_blocks)
}
