use serde::Serialize;

use super::{Grid, KernelSpec, Result, VolterraError};
use crate::volterra::AlphaPartition;

/// Band boundaries closer than this fraction of `h` to a grid node are moved
/// onto the node, so rounding never produces sliver cells.
const SNAP_FRACTION: f64 = 1e-9;
const NEWTON_RTOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;
const BRACKET_EXPANSIONS: usize = 60;
const MONOTONE_SAMPLES: usize = 64;

/// Piece of `[0, t_j]` lying in one grid cell and one band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    /// Band index, 0-based (`0` is the band next to `s = 0`).
    pub segment: usize,
    pub a: f64,
    pub b: f64,
    /// Grid node closing the parent grid cell; its `x` value is used here.
    pub node: usize,
}

impl Cell {
    pub fn width(&self) -> f64 {
        self.b - self.a
    }
}

/// Cuts `[0, t_j]` into cells: grid cells intersected with the bands
/// `(α_{i-1}(t_j), α_i(t_j))`. Zero-width cells are dropped.
pub fn segment_cells(j: usize, grid: &Grid, partition: &AlphaPartition) -> Result<Vec<Cell>> {
    if j == 0 || j > grid.intervals() {
        return Err(VolterraError::InvalidGrid(format!(
            "node {j} is outside 1..={}",
            grid.intervals()
        )));
    }
    let t = grid.node(j);
    let h = grid.step();
    let mut bounds = partition.check_at(j, t)?;
    for b in &mut bounds {
        let m = (*b / h).round();
        // never snap onto t_j itself: a vanishing last band must surface as
        // a degenerate cell
        if m < 0.0 || m as usize >= j {
            continue;
        }
        let node = grid.node(m as usize);
        if (*b - node).abs() <= SNAP_FRACTION * h {
            *b = node;
        }
    }
    let mut cells = Vec::with_capacity(j + bounds.len());
    let mut segment = 0;
    let mut next = 0;
    for k in 1..=j {
        let a = grid.node(k - 1);
        let b = grid.node(k);
        while next < bounds.len() && bounds[next] <= a {
            next += 1;
            segment = next;
        }
        let mut cursor = a;
        while next < bounds.len() && bounds[next] < b {
            let cut = bounds[next];
            if cut > cursor {
                cells.push(Cell {
                    segment,
                    a: cursor,
                    b: cut,
                    node: k,
                });
            }
            cursor = cut;
            next += 1;
            segment = next;
        }
        cells.push(Cell {
            segment,
            a: cursor,
            b,
            node: k,
        });
    }
    Ok(cells)
}

fn check_len(values: &[f64], grid: &Grid) -> Result<()> {
    let expected = grid.intervals() + 1;
    if values.len() != expected {
        return Err(VolterraError::Length {
            expected,
            actual: values.len(),
        });
    }
    Ok(())
}

/// Direct problem: `f(t_j) = Σ_cells (b - a) · K_i(t_j, b) · G_i(b, x_node)`.
///
/// `x` holds values for nodes `0..=N`; `x[0]` is never used.
pub fn forward_apply(kernel: &KernelSpec, grid: &Grid, x: &[f64]) -> Result<Vec<f64>> {
    check_len(x, grid)?;
    kernel.validate(grid)?;
    let mut f = vec![0.0; x.len()];
    for (j, fj) in f.iter_mut().enumerate().skip(1) {
        let t = grid.node(j);
        *fj = segment_cells(j, grid, &kernel.partition)?
            .iter()
            .map(|c| {
                let seg = &kernel.segments[c.segment];
                c.width() * seg.kernel.eval(t, c.b) * seg.response.eval(c.b, x[c.node])
            })
            .sum();
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    /// Width of the cell ending at `t_j`.
    pub last_cell_width: f64,
    /// Newton/bisection iterations; 0 for a linear step.
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub grid: Grid,
    /// Values at nodes `0..=N`; `x[0]` repeats `x[1]`.
    pub x: Vec<f64>,
    /// `max_j |forward(x)_j - f_j|`.
    pub residual: f64,
    /// One entry per node `1..=N`.
    pub diagnostics: Vec<StepDiagnostics>,
}

/// One term `w · K · G(s, x)` of the step equation.
struct Term<'a> {
    weight: f64,
    s: f64,
    response: &'a super::Response,
}

fn step_value(terms: &[Term<'_>], x: f64) -> f64 {
    terms.iter().map(|t| t.weight * t.response.eval(t.s, x)).sum()
}

fn step_slope(terms: &[Term<'_>], x: f64) -> f64 {
    terms
        .iter()
        .map(|t| t.weight * t.response.derivative(t.s, x))
        .sum()
}

/// Solves `Σ terms(x) = rhs` by Newton's method safeguarded with bisection.
fn solve_step(
    kernel: &KernelSpec,
    node: usize,
    t: f64,
    terms: &[Term<'_>],
    rhs: f64,
    cap: f64,
    guess: f64,
) -> Result<(f64, usize)> {
    let g = |x: f64| step_value(terms, x) - rhs;
    let last = &kernel.last().response;
    let monotone = |lo: f64, hi: f64| {
        let samples: Vec<f64> = (0..=MONOTONE_SAMPLES)
            .map(|i| last.eval(t, lo + (hi - lo) * i as f64 / MONOTONE_SAMPLES as f64))
            .collect();
        samples.windows(2).all(|w| w[1] > w[0]) || samples.windows(2).all(|w| w[1] < w[0])
    };
    if !monotone(-cap, cap) {
        return Err(VolterraError::NonMonotone { node });
    }
    let (mut lo, mut hi) = (-cap, cap);
    let mut expansions = 0;
    while g(lo).signum() == g(hi).signum() && g(lo) != 0.0 && g(hi) != 0.0 {
        if expansions == BRACKET_EXPANSIONS {
            return Err(VolterraError::NoBracket { node });
        }
        lo *= 2.0;
        hi *= 2.0;
        expansions += 1;
    }
    if expansions > 0 && !monotone(lo, hi) {
        return Err(VolterraError::NonMonotone { node });
    }

    if g(lo) == 0.0 {
        return Ok((lo, 0));
    }
    if g(hi) == 0.0 {
        return Ok((hi, 0));
    }
    let lo_sign = g(lo).signum();
    let mut x = if guess.is_finite() && guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    for iteration in 1..=NEWTON_MAX_ITER {
        let gx = g(x);
        if gx == 0.0 {
            return Ok((x, iteration));
        }
        if gx.signum() == lo_sign {
            lo = x;
        } else {
            hi = x;
        }
        let slope = step_slope(terms, x);
        let mut next = x - gx / slope;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= NEWTON_RTOL * next.abs().max(1.0) {
            return Ok((next, iteration));
        }
        x = next;
    }
    Err(VolterraError::NonlinearFailure {
        node,
        iterations: NEWTON_MAX_ITER,
    })
}

/// Marching solve of the discretized first-kind equation for `x`.
///
/// Step `j` evaluates every cell of earlier grid cells with known values. The
/// cells inside the last grid cell `[t_{j-1}, t_j]` all use the unknown `x_j`;
/// their sum is a closed-form division for linear `G` and a scalar root
/// otherwise.
pub fn solve_apf(kernel: &KernelSpec, grid: &Grid, f: &[f64]) -> Result<SolveResult> {
    check_len(f, grid)?;
    if let Some(node) = f.iter().position(|v| !v.is_finite()) {
        return Err(VolterraError::NonFinite { node });
    }
    let f_scale = f.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if f[0].abs() > 1e-12 * f_scale {
        return Err(VolterraError::NonzeroOrigin(f[0]));
    }
    kernel.validate(grid)?;

    let n = grid.intervals();
    let h = grid.step();
    let f_max = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut x = vec![0.0; n + 1];
    let mut diagnostics = Vec::with_capacity(n);
    let mut residual = 0.0f64;

    for j in 1..=n {
        let t = grid.node(j);
        let cells = segment_cells(j, grid, &kernel.partition)?;
        let last = *cells.last().expect("at least one cell per node");
        if last.width() < kernel.cell_floor * h {
            return Err(VolterraError::DegenerateLastCell {
                node: j,
                width: last.width(),
                floor: kernel.cell_floor,
            });
        }

        let mut known = 0.0;
        let mut terms = Vec::with_capacity(2);
        for c in &cells {
            let seg = &kernel.segments[c.segment];
            let weight = c.width() * seg.kernel.eval(t, c.b);
            if c.node < j {
                known += weight * seg.response.eval(c.b, x[c.node]);
            } else {
                terms.push(Term {
                    weight,
                    s: c.b,
                    response: &seg.response,
                });
            }
        }
        let rhs = f[j] - known;

        let linear: Option<f64> = terms
            .iter()
            .map(|t| t.response.linear_slope().map(|slope| t.weight * slope))
            .sum();
        let (value, iterations) = match linear {
            Some(coefficient) => (rhs / coefficient, 0),
            None => {
                let k_last = kernel.last().kernel.eval(t, t).abs();
                let cap = (10.0 * f_max / (last.width() * k_last)).max(10.0);
                let guess = if j > 1 { x[j - 1] } else { 0.0 };
                solve_step(kernel, j, t, &terms, rhs, cap, guess)?
            }
        };
        if !value.is_finite() {
            return Err(VolterraError::NonFinite { node: j });
        }
        x[j] = value;
        residual = residual.max((known + step_value(&terms, value) - f[j]).abs());
        diagnostics.push(StepDiagnostics {
            last_cell_width: last.width(),
            iterations,
        });
    }
    x[0] = x[1];
    Ok(SolveResult {
        grid: *grid,
        x,
        residual,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderEstimate {
    /// Max node error on the `N` grid.
    pub coarse_error: f64,
    /// Max node error on the `2N` grid.
    pub fine_error: f64,
    /// `log2(coarse / fine)`; `+∞` when the fine error is zero.
    pub order: f64,
}

/// Observed convergence order of [`solve_apf`] against an analytic pair.
pub fn estimate_order(
    kernel: &KernelSpec,
    f_analytic: impl Fn(f64) -> f64,
    x_analytic: impl Fn(f64) -> f64,
    horizon: f64,
    intervals: usize,
) -> Result<OrderEstimate> {
    let error = |n: usize| -> Result<f64> {
        let grid = Grid::new(horizon, n)?;
        let mut f: Vec<f64> = grid.nodes().iter().map(|&t| f_analytic(t)).collect();
        f[0] = 0.0;
        let solved = solve_apf(kernel, &grid, &f)?;
        Ok((1..=n)
            .map(|j| (solved.x[j] - x_analytic(grid.node(j))).abs())
            .fold(0.0, f64::max))
    };
    let coarse_error = error(intervals)?;
    let fine_error = error(2 * intervals)?;
    let order = if fine_error == 0.0 {
        f64::INFINITY
    } else {
        (coarse_error / fine_error).log2()
    };
    Ok(OrderEstimate {
        coarse_error,
        fine_error,
        order,
    })
}
