use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use indexmap::IndexMap;

use super::{AlignedFrame, Result, TimeSeries, TimeSeriesError, HOUR_SECONDS, NA};
use crate::numfmt::format_value;

/// Format used when writing timestamps.
pub const TIMESTAMP_OUTPUT_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

const FALLBACK_FORMATS: [&str; 4] = [
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%dT%H:%M",
];

/// Which columns of a CSV hold the timestamp and the values.
#[derive(Debug, Clone)]
pub struct CsvSpec {
    pub timestamp_column: String,
    pub value_column: String,
    /// chrono format string; `None` accepts RFC 3339 and `YYYY-MM-DD HH:MM`.
    pub timestamp_format: Option<String>,
    /// Declared spacing in seconds.
    pub step: i64,
    /// Name of the resulting series; defaults to the value column.
    pub name: Option<String>,
}

impl CsvSpec {
    pub fn new(timestamp_column: impl Into<String>, value_column: impl Into<String>) -> Self {
        Self {
            timestamp_column: timestamp_column.into(),
            value_column: value_column.into(),
            timestamp_format: None,
            step: HOUR_SECONDS,
            name: None,
        }
    }
}

/// Parses a timestamp; naive times are taken as UTC.
pub(crate) fn parse_timestamp(text: &str, format: Option<&str>) -> Option<DateTime<Utc>> {
    let text = text.trim();
    match format {
        Some(fmt) => DateTime::parse_from_str(text, fmt)
            .map(|t| t.with_timezone(&Utc))
            .ok()
            .or_else(|| NaiveDateTime::parse_from_str(text, fmt).ok().map(|t| t.and_utc())),
        None => DateTime::parse_from_rfc3339(text)
            .map(|t| t.with_timezone(&Utc))
            .ok()
            .or_else(|| {
                FALLBACK_FORMATS
                    .iter()
                    .find_map(|fmt| NaiveDateTime::parse_from_str(text, fmt).ok())
                    .map(|t| t.and_utc())
            }),
    }
}

fn parse_value(text: &str) -> Option<f64> {
    let text = text.trim();
    if text.is_empty() || text.eq_ignore_ascii_case("na") || text.eq_ignore_ascii_case("nan") {
        return Some(NA);
    }
    text.parse().ok()
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| TimeSeriesError::MissingColumn(name.to_string()))
}

/// Reads one series from CSV. Rows are sorted by time, duplicate timestamps
/// are rejected and gaps become [`NA`].
pub fn parse_timeseries_csv<R: Read>(source: R, spec: &CsvSpec) -> Result<TimeSeries> {
    if spec.step <= 0 {
        return Err(TimeSeriesError::InvalidArgument("step must be positive".into()));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let ts_col = column_index(&headers, &spec.timestamp_column)?;
    let value_col = column_index(&headers, &spec.value_column)?;

    let mut rows: Vec<(DateTime<Utc>, u64, f64)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let ts_text = record.get(ts_col).unwrap_or("");
        let ts = parse_timestamp(ts_text, spec.timestamp_format.as_deref()).ok_or_else(|| {
            TimeSeriesError::Parse {
                line,
                message: format!("bad timestamp `{ts_text}`"),
            }
        })?;
        let value_text = record.get(value_col).unwrap_or("");
        let value = parse_value(value_text).ok_or_else(|| TimeSeriesError::Parse {
            line,
            message: format!("bad value `{value_text}`"),
        })?;
        rows.push((ts, line, value));
    }
    if rows.is_empty() {
        return Err(TimeSeriesError::Empty);
    }
    rows.sort_by_key(|&(ts, line, _)| (ts, line));

    let start = rows[0].0;
    let mut values = Vec::with_capacity(rows.len());
    for pair in rows.windows(2) {
        let (prev, _, _) = pair[0];
        let (ts, line, _) = pair[1];
        if ts == prev {
            return Err(TimeSeriesError::DuplicateTimestamp { line, timestamp: ts });
        }
        let delta = (ts - prev).num_seconds();
        if delta % spec.step != 0 || (ts - prev).subsec_nanos() != 0 {
            return Err(TimeSeriesError::Spacing {
                line,
                delta_seconds: delta,
                step: spec.step,
            });
        }
    }
    let mut expected = start;
    for (ts, _, value) in &rows {
        while expected < *ts {
            values.push(NA);
            expected += chrono::Duration::seconds(spec.step);
        }
        values.push(*value);
        expected += chrono::Duration::seconds(spec.step);
    }
    let name = spec.name.clone().unwrap_or_else(|| spec.value_column.clone());
    Ok(TimeSeries::new(name, start, spec.step, values))
}

/// Reads a holiday calendar: one `YYYY-MM-DD` per line, `#` comments allowed.
pub fn parse_holidays<R: Read>(source: R) -> Result<BTreeSet<NaiveDate>> {
    let mut out = BTreeSet::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let text = line.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let date = NaiveDate::parse_from_str(text, "%Y-%m-%d").map_err(|e| {
            TimeSeriesError::Parse {
                line: i as u64 + 1,
                message: format!("bad date `{text}`: {e}"),
            }
        })?;
        out.insert(date);
    }
    Ok(out)
}

/// Writes `timestamp,<columns...>`; missing values are empty fields.
pub fn write_frame_csv<W: Write>(frame: &AlignedFrame, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec!["timestamp".to_string()];
    header.extend(frame.columns.keys().cloned());
    writer.write_record(&header)?;
    for i in 0..frame.len() {
        let mut record = vec![frame.timestamp(i).format(TIMESTAMP_OUTPUT_FORMAT).to_string()];
        record.extend(frame.columns.values().map(|c| format_value(c[i])));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a frame written by [`write_frame_csv`] (first column is the
/// timestamp, every other column a series). Rows must be hourly and ordered.
pub fn read_frame_csv<R: Read>(source: R) -> Result<AlignedFrame> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(TimeSeriesError::InvalidArgument(
            "frame CSV needs a timestamp and at least one value column".into(),
        ));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut start = None;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let ts_text = record.get(0).unwrap_or("");
        let ts = parse_timestamp(ts_text, None).ok_or_else(|| TimeSeriesError::Parse {
            line,
            message: format!("bad timestamp `{ts_text}`"),
        })?;
        let start = *start.get_or_insert(ts);
        if (ts - start).num_seconds() != HOUR_SECONDS * row as i64 {
            return Err(TimeSeriesError::Spacing {
                line,
                delta_seconds: (ts - start).num_seconds() - HOUR_SECONDS * (row as i64 - 1),
                step: HOUR_SECONDS,
            });
        }
        for (c, column) in columns.iter_mut().enumerate() {
            let text = record.get(c + 1).unwrap_or("");
            let value = parse_value(text).ok_or_else(|| TimeSeriesError::Parse {
                line,
                message: format!("bad value `{text}` in column `{}`", names[c]),
            })?;
            column.push(value);
        }
    }
    let start = start.ok_or(TimeSeriesError::Empty)?;
    let columns: IndexMap<String, Vec<f64>> = names.into_iter().zip(columns).collect();
    AlignedFrame::new(start, HOUR_SECONDS, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::is_na;

    fn spec() -> CsvSpec {
        CsvSpec::new("timestamp", "load")
    }

    #[test]
    fn parses_three_rows() {
        let text = "timestamp,load\n2013-01-01 00:00,50\n2013-01-01 01:00,52\n2013-01-01 02:00,58\n";
        let s = parse_timeseries_csv(text.as_bytes(), &spec()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.step, 3600);
        assert_eq!(s.values, vec![50.0, 52.0, 58.0]);
        assert_eq!(s.name, "load");
    }

    #[test]
    fn fills_gaps_and_sorts() {
        let text = "timestamp,load\n2013-01-01T02:00:00Z,3\n2013-01-01T00:00:00Z,1\n";
        let s = parse_timeseries_csv(text.as_bytes(), &spec()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.values[0], 1.0);
        assert!(is_na(s.values[1]));
        assert_eq!(s.values[2], 3.0);
    }

    #[test]
    fn rejects_duplicates_with_line() {
        let text = "timestamp,load\n2013-01-01 00:00,1\n2013-01-01 01:00,2\n2013-01-01 01:00,3\n";
        let err = parse_timeseries_csv(text.as_bytes(), &spec()).unwrap_err();
        assert_eq!(
            err.to_string(),
            "duplicate timestamp at line 4 (2013-01-01 01:00:00 UTC)"
        );
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "timestamp,load\n2013-01-01 00:00,1\n2013-01-01 01:00,abc\n";
        let err = parse_timeseries_csv(text.as_bytes(), &spec()).unwrap_err();
        assert!(matches!(err, TimeSeriesError::Parse { line: 3, .. }), "{err}");
        let text = "timestamp,load\nyesterday,1\n";
        let err = parse_timeseries_csv(text.as_bytes(), &spec()).unwrap_err();
        assert!(matches!(err, TimeSeriesError::Parse { line: 2, .. }));
    }

    #[test]
    fn off_grid_spacing_is_an_alignment_error() {
        let text = "timestamp,load\n2013-01-01 00:00,1\n2013-01-01 01:30,2\n";
        let err = parse_timeseries_csv(text.as_bytes(), &spec()).unwrap_err();
        assert!(matches!(err, TimeSeriesError::Spacing { line: 3, .. }));
    }

    #[test]
    fn custom_format_and_missing_column() {
        let mut spec = spec();
        spec.timestamp_format = Some("%d.%m.%Y %H:%M".into());
        let text = "timestamp,load\n01.01.2013 00:00,1\n01.01.2013 01:00,\n";
        let s = parse_timeseries_csv(text.as_bytes(), &spec).unwrap();
        assert!(is_na(s.values[1]));

        let text = "time,value\n2013-01-01 00:00,1\n";
        assert!(matches!(
            parse_timeseries_csv(text.as_bytes(), &CsvSpec::new("timestamp", "load")),
            Err(TimeSeriesError::MissingColumn(_))
        ));
    }

    #[test]
    fn holidays_file() {
        let text = "# German public holidays\n2013-12-25\n\n2013-12-26\n";
        let h = parse_holidays(text.as_bytes()).unwrap();
        assert_eq!(h.len(), 2);
        assert!(parse_holidays("2013-13-01\n".as_bytes()).is_err());
    }

    #[test]
    fn frame_csv_roundtrip() {
        let text = "timestamp,load,gen\n2013-01-01T00:00:00Z,1.5,\n2013-01-01T01:00:00Z,2,3\n";
        let frame = read_frame_csv(text.as_bytes()).unwrap();
        assert_eq!(frame.len(), 2);
        assert!(is_na(frame.column("gen").unwrap()[0]));
        let mut out = Vec::new();
        write_frame_csv(&frame, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}
