//! Synthetic hourly data shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chrono::{DateTime, Datelike, Duration, TimeZone, Utc};
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use voltgrid::timeseries::{AlignedFrame, HOUR_SECONDS};

pub fn start() -> DateTime<Utc> {
    // a Monday
    Utc.with_ymd_and_hms(2016, 1, 4, 0, 0, 0).unwrap()
}

/// `50000 + 8000·sin(2πt/24) + 4000·sin(2πt/168) + 3000·[working day] + N(0, σ²)`.
pub fn synthetic_load(hours: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    (0..hours)
        .map(|i| {
            let ts = start() + Duration::hours(i as i64);
            let working = if ts.weekday().num_days_from_monday() < 5 { 1.0 } else { 0.0 };
            let t = i as f64;
            50_000.0
                + 8_000.0 * (2.0 * PI * t / 24.0).sin()
                + 4_000.0 * (2.0 * PI * t / 168.0).sin()
                + 3_000.0 * working
                + if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 }
        })
        .collect()
}

pub fn load_frame(load: Vec<f64>) -> AlignedFrame {
    AlignedFrame::new(start(), HOUR_SECONDS, IndexMap::from([("load".to_string(), load)])).unwrap()
}

/// Writes `timestamp,<column>` with naive `YYYY-MM-DD HH:MM` stamps.
pub fn write_series(path: &Path, column: &str, first: DateTime<Utc>, values: &[f64]) {
    let mut text = format!("timestamp,{column}\n");
    for (i, v) in values.iter().enumerate() {
        let ts = first + Duration::hours(i as i64);
        writeln!(text, "{},{v}", ts.format("%Y-%m-%d %H:%M")).unwrap();
    }
    fs::write(path, text).unwrap();
}

pub fn voltgrid(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voltgrid"))
        .args(args)
        .current_dir(dir)
        .env_remove("VOLTGRID_SEED")
        .output()
        .expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}
