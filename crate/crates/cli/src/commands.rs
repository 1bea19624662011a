use std::collections::HashMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use serde_json::{json, Number, Value};
use voltgrid::forecast::{
    block_cross_validate, FeatureConfig, ForestParams, GbdtParams, ModelDocument, ModelSpec, DEFAULT_RIDGE,
};
use voltgrid::numfmt::format_value;
use voltgrid::storage::{count_cycles, dispatch as run_dispatch, grid_for, min_capacity, StorageSpec, DEFAULT_EFFICIENCY};
use voltgrid::timeseries::{
    align_hourly, parse_holidays, parse_timeseries_csv, read_frame_csv, write_frame_csv, AlignPolicy, AlignedFrame,
    CsvSpec, TimeSeries, HOUR_SECONDS, TIMESTAMP_OUTPUT_FORMAT,
};
use voltgrid::volterra::KernelSpec;

use crate::output::{create_dir, to_rounded_json, write_json};
use crate::{DispatchArgs, ForecastArgs, IngestArgs, ModelName, ReportArgs};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn headers(text: &str) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    Ok(reader.headers()?.iter().map(str::to_string).collect())
}

/// Reads one column of a timestamped CSV as series `name`.
///
/// Without an explicit column the first of `preferred` present in the header
/// is used, then the first non-timestamp column.
fn read_series(
    path: &Path,
    name: &str,
    column: Option<&str>,
    preferred: &[&str],
    timestamp_column: Option<&str>,
    time_format: Option<&str>,
) -> Result<(TimeSeries, String)> {
    let text = read_text(path)?;
    let header = headers(&text).with_context(|| format!("reading {}", path.display()))?;
    let ts_col = match timestamp_column {
        Some(c) => c.to_string(),
        None => header.first().cloned().unwrap_or_default(),
    };
    let value_col = match column {
        Some(c) => c.to_string(),
        None => preferred
            .iter()
            .find(|p| header.iter().any(|h| h == *p))
            .map(|p| p.to_string())
            .or_else(|| header.iter().find(|h| **h != ts_col).cloned())
            .with_context(|| format!("{} has no value column", path.display()))?,
    };
    let spec = CsvSpec {
        timestamp_column: ts_col,
        value_column: value_col.clone(),
        timestamp_format: time_format.map(str::to_string),
        step: HOUR_SECONDS,
        name: Some(name.to_string()),
    };
    let series = parse_timeseries_csv(text.as_bytes(), &spec).with_context(|| format!("reading {}", path.display()))?;
    Ok((series, value_col))
}

fn timestamp_text(frame: &AlignedFrame, row: usize) -> String {
    frame.timestamp(row).format(TIMESTAMP_OUTPUT_FORMAT).to_string()
}

fn temperature_names(paths: &[PathBuf]) -> Vec<String> {
    if paths.len() == 1 {
        return vec!["temperature".into()];
    }
    let mut seen: HashMap<String, usize> = HashMap::new();
    paths
        .iter()
        .map(|p| {
            let stem = p.file_stem().map_or_else(|| "site".into(), |s| s.to_string_lossy().into_owned());
            let base = format!("temperature_{stem}");
            let k = seen.entry(base.clone()).or_insert(0);
            *k += 1;
            if *k == 1 {
                base
            } else {
                format!("{base}_{k}")
            }
        })
        .collect()
}

pub fn ingest(args: &IngestArgs, seed: u64) -> Result<()> {
    let ts = args.timestamp_column.as_deref();
    let fmt = args.time_format.as_deref();
    let mut series = vec![read_series(&args.load, "load", None, &[], ts, fmt)?.0];
    if let Some(path) = &args.gen {
        series.push(read_series(path, "gen", None, &[], ts, fmt)?.0);
    }
    if let Some(path) = &args.res {
        series.push(read_series(path, "res", None, &[], ts, fmt)?.0);
    }
    for (path, name) in args.temps.iter().zip(temperature_names(&args.temps)) {
        series.push(read_series(path, &name, None, &[], ts, fmt)?.0);
    }
    let mut frame = align_hourly(&series, AlignPolicy::Intersect)?;
    if let Some(path) = &args.holidays {
        frame.holidays = parse_holidays(read_text(path)?.as_bytes())
            .with_context(|| format!("reading {}", path.display()))?;
    }

    create_dir(&args.out)?;
    let file = File::create(args.out.join("dataset.csv"))?;
    write_frame_csv(&frame, BufWriter::new(file))?;
    if args.holidays.is_some() {
        let text: String = frame.holidays.iter().map(|d| format!("{d}\n")).collect();
        fs::write(args.out.join("holidays.txt"), text)?;
    }
    let na_counts: serde_json::Map<String, Value> =
        frame.na_counts().into_iter().map(|(k, v)| (k, json!(v))).collect();
    let summary = json!({
        "rows": frame.len(),
        "start": timestamp_text(&frame, 0),
        "end": timestamp_text(&frame, frame.len() - 1),
        "columns": frame.columns.keys().collect::<Vec<_>>(),
        "na_counts": na_counts,
        "holidays": frame.holidays.len(),
        "seed": seed,
    });
    write_json(&args.out.join("summary.json"), &summary)
}

#[derive(Serialize)]
struct FoldSummary {
    block: usize,
    train_samples: usize,
    test_samples: usize,
    rmse: f64,
    mae: f64,
    mape_percent: f64,
}

pub fn forecast(args: &ForecastArgs, seed: u64) -> Result<()> {
    let frame = read_frame_csv(File::open(&args.data).with_context(|| format!("opening {}", args.data.display()))?)
        .with_context(|| format!("reading {}", args.data.display()))?;
    let holidays_path = args.holidays.clone().or_else(|| {
        let sibling = args.data.with_file_name("holidays.txt");
        sibling.exists().then_some(sibling)
    });
    let frame = match holidays_path {
        Some(path) => {
            let holidays =
                parse_holidays(read_text(&path)?.as_bytes()).with_context(|| format!("reading {}", path.display()))?;
            frame.with_holidays(holidays)
        }
        None => frame,
    };

    let config = FeatureConfig {
        horizon: args.horizon,
        load_column: args.load_column.clone(),
        temperature_columns: frame.columns.keys().filter(|k| k.starts_with("temp")).cloned().collect(),
        ..FeatureConfig::default()
    };
    let spec = match args.model {
        ModelName::Lm => ModelSpec::Linear {
            ridge: args.ridge.unwrap_or(DEFAULT_RIDGE),
        },
        ModelName::Rf => {
            let d = ForestParams::default();
            ModelSpec::RandomForest(ForestParams {
                n_trees: args.trees.unwrap_or(d.n_trees),
                mtry: args.mtry.unwrap_or(d.mtry),
                seed,
                ..d
            })
        }
        ModelName::Gbdt => {
            let d = GbdtParams::default();
            ModelSpec::Gbdt(GbdtParams {
                n_trees: args.trees.unwrap_or(d.n_trees),
                seed,
                ..d
            })
        }
    };
    let report = block_cross_validate(&spec, &frame, &config, args.blocks, args.tail)?;

    create_dir(&args.out)?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(args.out.join("forecast.csv"))?));
    writer.write_record(["timestamp", "predicted", "actual"])?;
    for row in &report.predictions {
        writer.write_record([
            row.timestamp.format(TIMESTAMP_OUTPUT_FORMAT).to_string(),
            format_value(row.predicted),
            format_value(row.actual),
        ])?;
    }
    writer.flush()?;

    let folds: Vec<FoldSummary> = report
        .folds
        .iter()
        .map(|f| FoldSummary {
            block: f.block,
            train_samples: f.train_rows,
            test_samples: f.test_rows,
            rmse: f.metrics.rmse,
            mae: f.metrics.mae,
            mape_percent: f.metrics.mape_percent,
        })
        .collect();
    let oob_rmse = match &report.model {
        voltgrid::forecast::ForecastModel::Ensemble(m) => m.oob_rmse,
        _ => None,
    };
    let metrics = json!({
        "model": spec.label(),
        "seed": seed,
        "horizon": args.horizon,
        "blocks": args.blocks,
        "rows": frame.len(),
        "train_rows": frame.len() - args.tail,
        "validation_rows": args.tail,
        "train_samples": report.train_rows,
        "validation_samples": report.validation_rows,
        "features": report.model.feature_names(),
        "rmse": report.validation.rmse,
        "mae": report.validation.mae,
        "mape_percent": report.validation.mape_percent,
        "by_weekday": report.by_weekday,
        "by_hour": report.by_hour,
        "folds": folds,
        "oob_rmse": oob_rmse,
    });
    write_json(&args.out.join("metrics.json"), &to_rounded_json(&metrics)?)?;

    let mut model_text = ModelDocument::new(report.model).to_json()?;
    model_text.push('\n');
    fs::write(args.out.join("model.json"), model_text)?;
    Ok(())
}

pub fn dispatch(args: &DispatchArgs, seed: u64) -> Result<()> {
    let (load, load_column) =
        read_series(&args.load, "load", args.load_column.as_deref(), &["predicted", "load"], None, None)?;
    let mut series = vec![load];
    if let Some(path) = &args.gen {
        series.push(read_series(path, "gen", args.gen_column.as_deref(), &["gen"], None, None)?.0);
    }
    if let Some(path) = &args.res {
        series.push(read_series(path, "res", args.res_column.as_deref(), &["res"], None, None)?.0);
    }
    let mut frame = align_hourly(&series, AlignPolicy::Intersect)?;
    if let Some(n) = args.grid_n {
        ensure!(n >= 2, "--grid-N must be at least 2");
        ensure!(
            frame.len() > n,
            "--grid-N {n} needs {} aligned samples, only {} available",
            n + 1,
            frame.len()
        );
        frame = frame.slice(0..n + 1);
    }
    ensure!(frame.len() >= 3, "dispatch needs at least 3 aligned samples, got {}", frame.len());

    let zeros = |name: &str| TimeSeries::new(name, frame.start, frame.step, vec![0.0; frame.len()]);
    let column = |name: &str| -> Result<TimeSeries> {
        Ok(if frame.column(name).is_some() {
            frame.series(name)?
        } else {
            zeros(name)
        })
    };
    let (f_load, f_gen, f_res) = (column("load")?, column("gen")?, column("res")?);

    let kernel = match &args.kernel {
        Some(path) => KernelSpec::from_json(&read_text(path)?).with_context(|| format!("reading {}", path.display()))?,
        None => KernelSpec::single_constant(DEFAULT_EFFICIENCY),
    };
    let storage: StorageSpec = match &args.storage {
        Some(path) => serde_json::from_str(&read_text(path)?).with_context(|| format!("reading {}", path.display()))?,
        None => StorageSpec::default(),
    };
    let grid = grid_for(&f_load)?;
    let report = run_dispatch(&f_res, &f_gen, &f_load, &kernel, &storage, &grid)?;

    create_dir(&args.out)?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(args.out.join("dispatch.csv"))?));
    writer.write_record(["t", "x", "v", "E"])?;
    for j in 0..report.x.len() {
        writer.write_record([
            format_value(report.t[j]),
            format_value(report.x[j]),
            format_value(report.v[j]),
            format_value(report.e[j]),
        ])?;
    }
    writer.flush()?;

    let mut value = to_rounded_json(&report.summary())?;
    let obj = value.as_object_mut().expect("summary is an object");
    // the solver residual is passed through at full precision
    obj.insert(
        "residual".into(),
        Number::from_f64(report.residual).map_or(Value::Null, Value::Number),
    );
    obj.insert("seed".into(), json!(seed));
    obj.insert("load_column".into(), json!(load_column));
    obj.insert("start".into(), json!(timestamp_text(&frame, 0)));
    obj.insert("step_hours".into(), to_rounded_json(&grid.step())?);
    write_json(&args.out.join("report.json"), &value)
}

struct DispatchRun {
    label: String,
    t: Vec<f64>,
    x: Vec<f64>,
    e: Vec<f64>,
}

fn read_dispatch(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let index = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} has no `{name}` column", path.display()))
    };
    let (it, ix, ie) = (index("t")?, index("x")?, index("E")?);
    let (mut t, mut x, mut e) = (Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64> {
            let text = record.get(i).unwrap_or("");
            text.parse()
                .with_context(|| format!("{} line {line}: bad number `{text}`", path.display()))
        };
        t.push(field(it)?);
        x.push(field(ix)?);
        e.push(field(ie)?);
    }
    ensure!(!t.is_empty(), "{} has no rows", path.display());
    Ok((t, x, e))
}

/// File stems, qualified by the parent directory where stems collide.
fn labels(paths: &[PathBuf]) -> Vec<String> {
    let stem = |p: &Path| p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let qualified = |p: &Path| {
        let parent = p
            .parent()
            .and_then(Path::file_name)
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        format!("{parent}/{}", stem(p))
    };
    let mut labels: Vec<String> = paths.iter().map(|p| stem(p)).collect();
    let count = |labels: &[String], l: &str| labels.iter().filter(|x| *x == l).count();
    let collide: Vec<bool> = labels.iter().map(|l| count(&labels, l) > 1).collect();
    for (i, c) in collide.iter().enumerate() {
        if *c {
            labels[i] = qualified(&paths[i]);
        }
    }
    let mut seen: HashMap<String, usize> = HashMap::new();
    labels
        .into_iter()
        .map(|l| {
            let k = seen.entry(l.clone()).or_insert(0);
            *k += 1;
            if *k == 1 {
                l
            } else {
                format!("{l}#{k}")
            }
        })
        .collect()
}

#[derive(Serialize)]
struct ComparisonRow {
    label: String,
    nodes: usize,
    min_capacity: f64,
    max_abs_x: f64,
    equivalent_cycles: f64,
    /// `max_t |x - x_reference|`.
    max_abs_diff_x: f64,
}

pub fn report(args: &ReportArgs, seed: u64) -> Result<()> {
    let runs = args
        .dispatch
        .iter()
        .zip(labels(&args.dispatch))
        .map(|(path, label)| {
            let (t, x, e) = read_dispatch(path)?;
            Ok(DispatchRun { label, t, x, e })
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = &runs[0];
    for run in &runs[1..] {
        let same = run.t.len() == reference.t.len()
            && run
                .t
                .iter()
                .zip(&reference.t)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0));
        if !same {
            bail!(
                "grid of `{}` ({} nodes) differs from `{}` ({} nodes)",
                run.label,
                run.t.len(),
                reference.label,
                reference.t.len()
            );
        }
    }

    let rows = runs
        .iter()
        .map(|run| {
            let capacity = min_capacity(&run.e);
            Ok(ComparisonRow {
                label: run.label.clone(),
                nodes: run.t.len(),
                min_capacity: capacity,
                max_abs_x: run.x.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                equivalent_cycles: if capacity > 0.0 { count_cycles(&run.e, capacity)? } else { 0.0 },
                max_abs_diff_x: run
                    .x
                    .iter()
                    .zip(&reference.x)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    create_dir(&args.out)?;
    let comparison = json!({
        "seed": seed,
        "reference": reference.label,
        "series": rows,
    });
    write_json(&args.out.join("comparison.json"), &to_rounded_json(&comparison)?)?;

    let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(args.out.join("merged.csv"))?));
    writer.write_record(["t", "series", "x", "E"])?;
    for run in &runs {
        for j in 0..run.t.len() {
            writer.write_record([
                format_value(run.t[j]),
                run.label.clone(),
                format_value(run.x[j]),
                format_value(run.e[j]),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}
