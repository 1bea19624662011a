mod common;

use std::fs;
use std::path::Path;

use chrono::Duration;
use common::{start, stderr, synthetic_load, voltgrid, write_series};
use serde_json::Value;
use tempfile::TempDir;

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn column(csv_text: &str, name: &str) -> Vec<f64> {
    let mut lines = csv_text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn ingest_aligns_over_the_overlap() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_series(&d.join("load.csv"), "MW", start(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    write_series(&d.join("gen.csv"), "MW", start() + Duration::hours(2), &[7.0, 8.0, 9.0, 10.0]);
    let out = voltgrid(&["ingest", "--load", "load.csv", "--gen", "gen.csv", "--out", "ds"], d);
    assert!(out.status.success(), "{}", stderr(&out));

    let summary = json(&d.join("ds/summary.json"));
    assert_eq!(summary["rows"], 3);
    assert_eq!(summary["start"], "2016-01-04T02:00:00Z");
    assert_eq!(summary["end"], "2016-01-04T04:00:00Z");
    let text = fs::read_to_string(d.join("ds/dataset.csv")).unwrap();
    assert_eq!(
        text,
        "timestamp,load,gen\n2016-01-04T02:00:00Z,3,7\n2016-01-04T03:00:00Z,4,8\n2016-01-04T04:00:00Z,5,9\n"
    );
}

#[test]
fn ingest_disjoint_ranges_exit_2() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_series(&d.join("load.csv"), "MW", start(), &[1.0; 5]);
    write_series(&d.join("gen.csv"), "MW", start() + Duration::hours(100), &[1.0; 5]);
    let out = voltgrid(&["ingest", "--load", "load.csv", "--gen", "gen.csv", "--out", "ds"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error"));
}

#[test]
fn ingest_reports_duplicate_timestamps() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("load.csv"), "timestamp,MW\n2016-01-04 00:00,1\n2016-01-04 00:00,2\n").unwrap();
    let out = voltgrid(&["ingest", "--load", "load.csv", "--out", "ds"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("duplicate timestamp at line 3"), "{}", stderr(&out));
}

#[test]
fn seed_comes_from_env_unless_given() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_series(&d.join("load.csv"), "MW", start(), &[1.0; 4]);
    let bin = env!("CARGO_BIN_EXE_voltgrid");
    let run = |extra: &[&str]| {
        let status = std::process::Command::new(bin)
            .args(["ingest", "--load", "load.csv", "--out", "ds"])
            .args(extra)
            .env("VOLTGRID_SEED", "5")
            .current_dir(d)
            .status()
            .unwrap();
        assert!(status.success());
        json(&d.join("ds/summary.json"))["seed"].clone()
    };
    assert_eq!(run(&[]), 5);
    assert_eq!(run(&["--seed", "9"]), 9);
}

#[test]
fn eight_year_row_counts() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let rows = 69_713;
    write_series(&d.join("load.csv"), "MW", start(), &synthetic_load(rows, 500.0, 3));
    let out = voltgrid(&["ingest", "--load", "load.csv", "--out", "ds"], d);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(json(&d.join("ds/summary.json"))["rows"], 69_713);

    let out = voltgrid(
        &["forecast", "--data", "ds/dataset.csv", "--model", "lm", "--tail", "8760", "--out", "fc"],
        d,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let metrics = json(&d.join("fc/metrics.json"));
    assert_eq!(metrics["train_rows"], 60_953);
    assert_eq!(metrics["validation_rows"], 8_760);
}

#[test]
fn forecast_on_constant_load_is_exact() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_series(&d.join("load.csv"), "MW", start(), &vec![40_000.0; 24 * 40]);
    assert!(voltgrid(&["ingest", "--load", "load.csv", "--out", "ds"], d).status.success());
    let out = voltgrid(
        &["forecast", "--data", "ds/dataset.csv", "--model", "lm", "--tail", "240", "--blocks", "3", "--out", "fc"],
        d,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let m = json(&d.join("fc/metrics.json"));
    for key in ["rmse", "mae", "mape_percent"] {
        assert_eq!(m[key].as_f64().unwrap(), 0.0, "{key}");
    }
    assert_eq!(m["by_weekday"].as_array().unwrap().len(), 7);
    assert_eq!(m["by_hour"].as_array().unwrap().len(), 24);
    let forecast = fs::read_to_string(d.join("fc/forecast.csv")).unwrap();
    assert!(forecast.starts_with("timestamp,predicted,actual\n"));
    assert_eq!(column(&forecast, "predicted"), vec![40_000.0; 240]);
}

#[test]
fn forecast_rejects_unknown_model_and_one_block() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_series(&d.join("load.csv"), "MW", start(), &synthetic_load(24 * 30, 0.0, 0));
    assert!(voltgrid(&["ingest", "--load", "load.csv", "--out", "ds"], d).status.success());
    let out = voltgrid(&["forecast", "--data", "ds/dataset.csv", "--model", "svr", "--out", "fc"], d);
    assert_eq!(out.status.code(), Some(2));
    let out = voltgrid(
        &["forecast", "--data", "ds/dataset.csv", "--model", "lm", "--blocks", "1", "--tail", "48", "--out", "fc"],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("need ≥ 2 blocks"));
}

#[test]
fn forecast_is_reproducible_under_a_seed() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_series(&d.join("load.csv"), "MW", start(), &synthetic_load(24 * 40, 500.0, 1));
    assert!(voltgrid(&["ingest", "--load", "load.csv", "--out", "ds"], d).status.success());
    let run = |out: &str, seed: &str| {
        let o = voltgrid(
            &[
                "forecast", "--data", "ds/dataset.csv", "--model", "rf", "--trees", "20", "--tail", "168", "--blocks",
                "3", "--seed", seed, "--out", out,
            ],
            d,
        );
        assert!(o.status.success(), "{}", stderr(&o));
    };
    run("a", "11");
    run("b", "11");
    run("c", "12");
    for f in ["forecast.csv", "metrics.json", "model.json"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(d.join("a/model.json")).unwrap(), fs::read(d.join("c/model.json")).unwrap());
}

#[test]
fn balanced_inputs_dispatch_nothing() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let load: Vec<f64> = (0..48).map(|i| 100.0 + i as f64).collect();
    let gen: Vec<f64> = load.iter().map(|l| l - 30.0).collect();
    write_series(&d.join("load.csv"), "load", start(), &load);
    write_series(&d.join("gen.csv"), "gen", start(), &gen);
    write_series(&d.join("res.csv"), "res", start(), &[30.0; 48]);
    let out = voltgrid(
        &["dispatch", "--load", "load.csv", "--gen", "gen.csv", "--res", "res.csv", "--out", "dp"],
        d,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(d.join("dp/dispatch.csv")).unwrap();
    assert!(text.starts_with("t,x,v,E\n"));
    assert!(column(&text, "x").iter().all(|x| *x == 0.0));
    let report = json(&d.join("dp/report.json"));
    assert_eq!(report["min_capacity"], 0.0);
    assert_eq!(report["lifetime_hours"], Value::Null);
}

#[test]
fn linear_ramp_dispatches_unit_power() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let n = 25;
    write_series(&d.join("load.csv"), "load", start(), &vec![0.0; n]);
    let gen: Vec<f64> = (0..n).map(|i| 0.92 * i as f64).collect();
    write_series(&d.join("gen.csv"), "gen", start(), &gen);
    fs::write(d.join("storage.json"), r#"{"interpretation": "power"}"#).unwrap();
    let out = voltgrid(
        &["dispatch", "--load", "load.csv", "--gen", "gen.csv", "--storage", "storage.json", "--out", "dp"],
        d,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(d.join("dp/dispatch.csv")).unwrap();
    for x in column(&text, "x") {
        assert!((x - 1.0).abs() <= 1e-12, "{x}");
    }
    let e = column(&text, "E");
    for (j, ej) in e.iter().enumerate() {
        assert!((ej - j as f64).abs() <= 1e-9);
    }
    let report = json(&d.join("dp/report.json"));
    assert!(report["residual"].as_f64().unwrap() <= 1e-12);
    assert_eq!(report["nodes"], 25);
}

#[test]
fn grid_n_truncates_and_is_validated() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_series(&d.join("load.csv"), "load", start(), &synthetic_load(100, 0.0, 0));
    let out = voltgrid(&["dispatch", "--load", "load.csv", "--grid-N", "10", "--out", "dp"], d);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(json(&d.join("dp/report.json"))["nodes"], 11);
    let out = voltgrid(&["dispatch", "--load", "load.csv", "--grid-N", "500", "--out", "dp"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_series(&d.join("load.csv"), "load", start(), &synthetic_load(30, 0.0, 0));
    // G = -1e8·x + x³ is not monotone for |x| < 5773
    fs::write(
        d.join("kernel.json"),
        r#"{"n": 1, "K": [{"type": "const", "value": 1.0}], "G": [{"type": "cubic", "a": -1.0e8, "b": 1.0}]}"#,
    )
    .unwrap();
    let out = voltgrid(&["dispatch", "--load", "load.csv", "--kernel", "kernel.json", "--out", "dp"], d);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("node"));
}

#[test]
fn bad_kernel_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_series(&d.join("load.csv"), "load", start(), &synthetic_load(30, 0.0, 0));
    fs::write(d.join("kernel.json"), r#"{"n": 2, "K": [{"type": "const", "value": 1.0}]}"#).unwrap();
    let out = voltgrid(&["dispatch", "--load", "load.csv", "--kernel", "kernel.json", "--out", "dp"], d);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn report_compares_runs_on_one_grid() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let actual = synthetic_load(72, 0.0, 0);
    let forecast: Vec<f64> = actual.iter().enumerate().map(|(i, v)| v + if i == 40 { 500.0 } else { 0.0 }).collect();
    write_series(&d.join("actual.csv"), "load", start(), &actual);
    write_series(&d.join("forecast.csv"), "predicted", start(), &forecast);
    write_series(&d.join("short.csv"), "load", start(), &actual[..48]);
    for (input, out) in [("actual.csv", "a"), ("forecast.csv", "f"), ("short.csv", "s")] {
        let o = voltgrid(&["dispatch", "--load", input, "--out", out], d);
        assert!(o.status.success(), "{}", stderr(&o));
    }

    let o = voltgrid(&["report", "--dispatch", "a/dispatch.csv", "--out", "r1"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&d.join("r1/comparison.json"))["series"].as_array().unwrap().len(), 1);

    let o = voltgrid(&["report", "--dispatch", "a/dispatch.csv", "f/dispatch.csv", "--out", "r2"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let cmp = json(&d.join("r2/comparison.json"));
    assert_eq!(cmp["reference"], "a/dispatch");
    let xa = column(&fs::read_to_string(d.join("a/dispatch.csv")).unwrap(), "x");
    let xf = column(&fs::read_to_string(d.join("f/dispatch.csv")).unwrap(), "x");
    let expected = xa.iter().zip(&xf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let reported = cmp["series"][1]["max_abs_diff_x"].as_f64().unwrap();
    assert!((reported - expected).abs() <= 1e-9 * expected);
    // a 500 MW spike at one hour moves x by 500/0.92 there and back
    assert!((expected - 500.0 / 0.92).abs() <= 1e-6, "{expected}");
    let merged = fs::read_to_string(d.join("r2/merged.csv")).unwrap();
    assert!(merged.starts_with("t,series,x,E\n"));
    assert_eq!(merged.lines().count(), 1 + 2 * 72);

    let o = voltgrid(&["report", "--dispatch", "a/dispatch.csv", "s/dispatch.csv", "--out", "r3"], d);
    assert_eq!(o.status.code(), Some(2));
}
