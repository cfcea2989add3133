//! Spatio-temporal multi-step forecasting over a graph of stations.
//!
//! A [`bank::ModelBank`] holds `h` LSTM networks, one per offset inside an
//! `h`-hour forecast block. Model `M_i` sees `ℓ − i + 1` real observations of
//! every station followed by the `i − 1` forecasts already produced inside the
//! block, and predicts all stations at once.
//!
//! Module map:
//! - [`tensor`]: dense matrices and activations
//! - [`lstm`]: LSTM layers, stacked network, BPTT and gradient checking
//! - [`training`]: MAE loss, RMSprop and the early-stopping training loop
//! - [`dataset`]: CSV ingestion, gap repair, normalization, splits, samples
//! - [`bank`]: per-offset model bank, cascade training, block forecasts, file format
//! - [`baselines`]: persistence and AR(p) forecasters
//! - [`metrics`]: MAE/RMSE/NRMSE and block-wise evaluation
//! - [`synth`]: synthetic coupled multi-station generator

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bank;
pub mod baselines;
pub mod dataset;
mod dd;
pub mod error;
pub mod exec;
pub mod lstm;
pub mod metrics;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use exec::Exec;
