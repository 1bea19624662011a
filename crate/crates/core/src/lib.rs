//! Storage dispatch from a constrained first-kind Volterra model, plus a
//! day-ahead load forecasting harness that produces its inputs.
//!
//! The crate is split along the data flow:
//!
//! - [`timeseries`]: hourly series ingestion, alignment and feature transforms.
//! - [`forecast`]: feature matrices, linear / random forest / GBDT regressors,
//!   metrics and block cross-validation.
//! - [`volterra`]: piecewise kernels, the forward quadrature and the marching
//!   solver for the alternating power function.
//! - [`storage`]: imbalance construction, state-of-charge integration,
//!   constraint checks, capacity, cycle and lifetime estimates.

pub mod forecast;
pub mod numfmt;
pub mod storage;
pub mod timeseries;
pub mod volterra;
