//! First-kind Volterra equations with piecewise-continuous kernels.
//!
//! The unknown `x` (the alternating power function) satisfies
//! `∫_0^t K(t, s, x(s)) ds = f(t)` where the kernel switches between
//! `K_i(t, s) · G_i(s, x)` across bands `α_{i-1}(t) < s < α_i(t)`.
//!
//! Discretization is a product right-rectangle rule on a uniform grid: every
//! grid cell `[t_{k-1}, t_k]` is cut at the band boundaries, each sub-cell uses
//! the kernel at its right endpoint and the node value `x_k`. The resulting
//! system is lower triangular and is solved by marching in `j`.

mod io;
mod kernel;
mod solve;

use thiserror::Error;

pub use io::{read_tabulated, write_tabulated};
pub use kernel::{
    AlphaConfig, AlphaPartition, KernelConfig, KernelFn, KernelFnConfig, KernelSpec, Response,
    ResponseConfig, Segment, DEFAULT_CELL_FLOOR, DEFAULT_KERNEL_FLOOR,
};
pub use solve::{
    estimate_order, forward_apply, segment_cells, solve_apf, Cell, OrderEstimate, SolveResult,
    StepDiagnostics,
};

#[derive(Debug, Error)]
pub enum VolterraError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("partition invariant violated at node {node} (t = {t}): {message}")]
    PartitionAtNode {
        node: usize,
        t: f64,
        message: String,
    },
    #[error("kernel K_n(t,t) = {value:e} below floor {floor:e} at node {node} (t = {t})")]
    KernelFloor {
        node: usize,
        t: f64,
        value: f64,
        floor: f64,
    },
    #[error("degenerate last cell at node {node}: width {width:e} < {floor:e}·h")]
    DegenerateLastCell { node: usize, width: f64, floor: f64 },
    #[error("G_n is not strictly monotone on the solve bracket at node {node}")]
    NonMonotone { node: usize },
    #[error("no sign change found for the nonlinear step at node {node}")]
    NoBracket { node: usize },
    #[error("nonlinear iteration did not converge at node {node} after {iterations} iterations")]
    NonlinearFailure { node: usize, iterations: usize },
    #[error("right-hand side must vanish at t = 0, got {0}")]
    NonzeroOrigin(f64),
    #[error("expected {expected} node values, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },
    #[error("kernel config: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl VolterraError {
    /// True for failures of the marching scheme itself, as opposed to bad
    /// input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Self::PartitionAtNode { .. }
                | Self::KernelFloor { .. }
                | Self::DegenerateLastCell { .. }
                | Self::NonMonotone { .. }
                | Self::NoBracket { .. }
                | Self::NonlinearFailure { .. }
                | Self::NonFinite { .. }
        )
    }
}

pub type Result<T, E = VolterraError> = std::result::Result<T, E>;

/// Uniform grid `t_j = j·h` on `[0, T]`, `h = T / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    horizon: f64,
    intervals: usize,
}

impl Grid {
    pub fn new(horizon: f64, intervals: usize) -> Result<Self> {
        if intervals < 2 {
            return Err(VolterraError::InvalidGrid(format!(
                "need at least 2 intervals, got {intervals}"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(VolterraError::InvalidGrid(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        Ok(Self { horizon, intervals })
    }

    /// Grid with `intervals` steps of width `step`.
    pub fn with_step(step: f64, intervals: usize) -> Result<Self> {
        Self::new(step * intervals as f64, intervals)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of intervals `N`; nodes are `0..=N`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.intervals {
            self.horizon
        } else {
            j as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.intervals).map(|j| self.node(j)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_end_node_is_exact() {
        let g = Grid::new(2.0, 3).unwrap();
        assert_eq!(g.node(3), 2.0);
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.nodes().len(), 4);
        let g = Grid::with_step(0.1, 7).unwrap();
        assert!((g.node(7) - 0.7).abs() <= f64::EPSILON);
    }

    #[test]
    fn grid_rejects_degenerate_sizes() {
        assert!(Grid::new(1.0, 1).is_err());
        assert!(Grid::new(0.0, 10).is_err());
        assert!(Grid::new(f64::NAN, 10).is_err());
    }
}
