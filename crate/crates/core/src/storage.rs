//! Storage-side quantities derived from the alternating power function:
//! the imbalance it has to cover, charge-rate and state-of-charge
//! trajectories, constraint checks, capacity, cycles and lifetime.
//!
//! Sign convention: `x > 0` charges the storage (surplus absorbed), `x < 0`
//! discharges it to cover a deficit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::{is_na, TimeSeries};
use crate::volterra::{self, Grid, KernelSpec, VolterraError};

pub const DEFAULT_EFFICIENCY: f64 = 0.92;
pub const DEFAULT_RATED_CYCLES: u64 = 5000;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("series `{name}` is not aligned with `{reference}`")]
    Misaligned { name: String, reference: String },
    #[error("series `{name}` has a missing value at index {index}")]
    Missing { name: String, index: usize },
    #[error("invalid storage spec: {0}")]
    InvalidSpec(String),
    #[error("capacity must be positive, got {0}")]
    NonPositiveCapacity(f64),
    #[error("grid has {expected} nodes but the inputs have {actual}")]
    GridMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Solve(#[from] VolterraError),
}

pub type Result<T, E = StorageError> = std::result::Result<T, E>;

/// How `E` relates to the solved `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpretation {
    /// `E = E_init + ∫ v`, `v = ∫ x`: the double integral as the model is
    /// written.
    #[default]
    Literal,
    /// `E = E_init + ∫ x`: `x` is storage power.
    Power,
}

/// A state-of-charge bound: a constant, or a table `(t, value)` in hours
/// with linear interpolation (clamped at the ends).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Const(f64),
    Table { t: Vec<f64>, values: Vec<f64> },
}

impl Bound {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Self::Const(v) => *v,
            Self::Table { t: times, values } => {
                if times.is_empty() {
                    return f64::NAN;
                }
                if t <= times[0] {
                    return values[0];
                }
                let k = times.partition_point(|&x| x <= t);
                if k >= times.len() {
                    return values[times.len() - 1];
                }
                let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                values[k - 1] + w * (values[k] - values[k - 1])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Self::Table { t, values } = self {
            if t.is_empty() || t.len() != values.len() || t.windows(2).any(|w| w[1] <= w[0]) {
                return Err(StorageError::InvalidSpec(
                    "bound tables need matching, strictly increasing `t` and `values`".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageSpec {
    /// Cap on `v(t)`; `None` leaves it unchecked.
    pub v_max: Option<f64>,
    pub e_min: Option<Bound>,
    pub e_max: Option<Bound>,
    /// Round-trip factor in `(0, 1]`.
    pub efficiency: f64,
    /// Apply `efficiency` asymmetrically to charge/discharge when integrating
    /// the state of charge. Off by default: the efficiency normally lives in
    /// the kernel only.
    pub soc_efficiency: bool,
    pub rated_cycles: u64,
    pub e_init: f64,
    pub interpretation: Interpretation,
}

impl Default for StorageSpec {
    fn default() -> Self {
        Self {
            v_max: None,
            e_min: None,
            e_max: None,
            efficiency: DEFAULT_EFFICIENCY,
            soc_efficiency: false,
            rated_cycles: DEFAULT_RATED_CYCLES,
            e_init: 0.0,
            interpretation: Interpretation::Literal,
        }
    }
}

impl StorageSpec {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(StorageError::InvalidSpec(format!(
                "efficiency must lie in (0, 1], got {}",
                self.efficiency
            )));
        }
        if let Some(v_max) = self.v_max {
            if !(v_max > 0.0) {
                return Err(StorageError::InvalidSpec(format!(
                    "v_max must be positive, got {v_max}"
                )));
            }
        }
        if self.rated_cycles == 0 {
            return Err(StorageError::InvalidSpec("rated_cycles must be positive".into()));
        }
        for bound in [&self.e_min, &self.e_max].into_iter().flatten() {
            bound.validate()?;
        }
        if let (Some(lo), Some(hi)) = (&self.e_min, &self.e_max) {
            for t in grid.nodes() {
                if lo.at(t) > hi.at(t) {
                    return Err(StorageError::InvalidSpec(format!(
                        "E_min exceeds E_max at t = {t}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Imbalance ready for the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Imbalance {
    /// `raw_j - raw_0`, so the first value is exactly zero.
    pub values: Vec<f64>,
    /// `raw_0`, removed from every sample.
    pub shift: f64,
}

fn ensure_aligned(reference: &TimeSeries, other: &TimeSeries) -> Result<()> {
    if other.start != reference.start || other.step != reference.step || other.len() != reference.len()
    {
        return Err(StorageError::Misaligned {
            name: other.name.clone(),
            reference: reference.name.clone(),
        });
    }
    Ok(())
}

/// `f = f_res + f_gen - f_load`, shifted so that `f(0) = 0`.
pub fn imbalance(f_res: &TimeSeries, f_gen: &TimeSeries, f_load: &TimeSeries) -> Result<Imbalance> {
    ensure_aligned(f_load, f_res)?;
    ensure_aligned(f_load, f_gen)?;
    for s in [f_res, f_gen, f_load] {
        if let Some(index) = s.values.iter().position(|v| is_na(*v)) {
            return Err(StorageError::Missing {
                name: s.name.clone(),
                index,
            });
        }
    }
    let raw: Vec<f64> = f_res
        .values
        .iter()
        .zip(&f_gen.values)
        .zip(&f_load.values)
        .map(|((r, g), l)| r + g - l)
        .collect();
    let shift = raw.first().copied().unwrap_or(0.0);
    Ok(Imbalance {
        values: raw.iter().map(|v| v - shift).collect(),
        shift,
    })
}

/// Right-rectangle running integral: `v_0 = 0`, `v_j = v_{j-1} + h·x_j`.
pub fn integrate_cumulative(x: &[f64], h: f64) -> Vec<f64> {
    let mut acc = 0.0;
    x.iter()
        .enumerate()
        .map(|(j, &xj)| {
            if j > 0 {
                acc += h * xj;
            }
            acc
        })
        .collect()
}

/// State of charge on the solver grid; see [`Interpretation`].
pub fn soc_trajectory(x: &[f64], h: f64, spec: &StorageSpec) -> Vec<f64> {
    let flow: Vec<f64> = if spec.soc_efficiency {
        let eta = spec.efficiency;
        x.iter()
            .map(|&v| if v > 0.0 { eta * v } else { v / eta })
            .collect()
    } else {
        x.to_vec()
    };
    let once = integrate_cumulative(&flow, h);
    let relative = match spec.interpretation {
        Interpretation::Power => once,
        Interpretation::Literal => integrate_cumulative(&once, h),
    };
    relative.into_iter().map(|e| spec.e_init + e).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    VMax,
    EMin,
    EMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub node: usize,
    /// Distance past the bound (always positive).
    pub magnitude: f64,
}

/// Post-hoc check of the charge-rate cap and the state-of-charge band.
pub fn check_constraints(
    x: &[f64],
    v: &[f64],
    e: &[f64],
    spec: &StorageSpec,
    grid: &Grid,
) -> Vec<Violation> {
    debug_assert!(x.len() == v.len() && v.len() == e.len());
    let mut out = Vec::new();
    if let Some(v_max) = spec.v_max {
        for (node, &vj) in v.iter().enumerate() {
            if vj > v_max {
                out.push(Violation {
                    constraint: Constraint::VMax,
                    node,
                    magnitude: vj - v_max,
                });
            }
        }
    }
    for (node, &ej) in e.iter().enumerate() {
        let t = grid.node(node.min(grid.intervals()));
        let hi = spec.e_max.as_ref().map(|b| b.at(t));
        let lo = spec.e_min.as_ref().map(|b| b.at(t));
        let tol = 1e-9 * hi.or(lo).map_or(1.0, |b| b.abs().max(1.0));
        if let Some(lo) = lo {
            if ej < lo - tol {
                out.push(Violation {
                    constraint: Constraint::EMin,
                    node,
                    magnitude: lo - ej,
                });
            }
        }
        if let Some(hi) = hi {
            if ej > hi + tol {
                out.push(Violation {
                    constraint: Constraint::EMax,
                    node,
                    magnitude: ej - hi,
                });
            }
        }
    }
    out
}

/// Usable energy range needed to realize `e`: `max e - min e`.
pub fn min_capacity(e: &[f64]) -> f64 {
    if e.is_empty() {
        return 0.0;
    }
    let (lo, hi) = e
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Equivalent full cycles: total absolute throughput over `2·capacity`.
pub fn count_cycles(e: &[f64], capacity: f64) -> Result<f64> {
    if !(capacity > 0.0) {
        return Err(StorageError::NonPositiveCapacity(capacity));
    }
    let throughput: f64 = e.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(throughput / (2.0 * capacity))
}

/// Linear extrapolation of cycle consumption: `horizon · rated / used`.
/// Zero usage gives `+∞`.
pub fn lifetime(cycles_used: f64, horizon: f64, rated_cycles: u64) -> f64 {
    if cycles_used <= 0.0 {
        f64::INFINITY
    } else {
        horizon * rated_cycles as f64 / cycles_used
    }
}

#[derive(Debug, Clone)]
pub struct DispatchReport {
    /// Node times in hours from the first sample.
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub e: Vec<f64>,
    pub violations: Vec<Violation>,
    /// Energy range `max E - min E`.
    pub min_capacity: f64,
    /// Peak storage power `max |x|`.
    pub max_abs_power: f64,
    pub equivalent_cycles: f64,
    /// Hours; `+∞` when no cycling happens.
    pub lifetime_hours: f64,
    pub horizon_hours: f64,
    pub residual: f64,
    pub imbalance_shift: f64,
    /// Pre-charge that keeps `E` non-negative: `-min E`.
    pub suggested_initial_offset: f64,
}

impl DispatchReport {
    pub fn summary(&self) -> DispatchSummary {
        DispatchSummary {
            nodes: self.x.len(),
            horizon_hours: self.horizon_hours,
            min_capacity: self.min_capacity,
            max_abs_power: self.max_abs_power,
            equivalent_cycles: self.equivalent_cycles,
            lifetime_hours: self.lifetime_hours.is_finite().then_some(self.lifetime_hours),
            residual: self.residual,
            imbalance_shift: self.imbalance_shift,
            suggested_initial_offset: self.suggested_initial_offset,
            violations: self.violations.clone(),
        }
    }
}

/// Scalar part of a [`DispatchReport`], as written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchSummary {
    pub nodes: usize,
    pub horizon_hours: f64,
    /// Energy range of the state-of-charge trajectory (`max E - min E`).
    pub min_capacity: f64,
    /// Peak power `max |x|`, in the units of the input series.
    pub max_abs_power: f64,
    pub equivalent_cycles: f64,
    /// `null` means unlimited (no cycling).
    pub lifetime_hours: Option<f64>,
    pub residual: f64,
    pub imbalance_shift: f64,
    pub suggested_initial_offset: f64,
    pub violations: Vec<Violation>,
}

/// Hourly grid matching a series: one node per sample, `h` in hours.
pub fn grid_for(series: &TimeSeries) -> Result<Grid> {
    let intervals = series.len().saturating_sub(1);
    Ok(Grid::with_step(series.step as f64 / 3600.0, intervals)?)
}

/// Imbalance → solve → v → E → constraints → capacity → cycles → lifetime.
pub fn dispatch(
    f_res: &TimeSeries,
    f_gen: &TimeSeries,
    f_load: &TimeSeries,
    kernel: &KernelSpec,
    spec: &StorageSpec,
    grid: &Grid,
) -> Result<DispatchReport> {
    if grid.intervals() + 1 != f_load.len() {
        return Err(StorageError::GridMismatch {
            expected: grid.intervals() + 1,
            actual: f_load.len(),
        });
    }
    spec.validate(grid)?;
    let f = imbalance(f_res, f_gen, f_load)?;
    let solved = volterra::solve_apf(kernel, grid, &f.values)?;
    let h = grid.step();
    let x = solved.x;
    let v = integrate_cumulative(&x, h);
    let e = soc_trajectory(&x, h, spec);
    let violations = check_constraints(&x, &v, &e, spec, grid);
    let capacity = min_capacity(&e);
    let equivalent_cycles = if capacity > 0.0 {
        count_cycles(&e, capacity)?
    } else {
        0.0
    };
    let max_abs_power = x[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_e = e.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DispatchReport {
        t: grid.nodes(),
        min_capacity: capacity,
        max_abs_power,
        equivalent_cycles,
        lifetime_hours: lifetime(equivalent_cycles, grid.horizon(), spec.rated_cycles),
        horizon_hours: grid.horizon(),
        residual: solved.residual,
        imbalance_shift: f.shift,
        suggested_initial_offset: -min_e,
        violations,
        x,
        v,
        e,
    })
}
