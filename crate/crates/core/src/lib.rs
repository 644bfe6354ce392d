//! Generalized multi-station streamflow forecasting over a 120-hour horizon.
//!
//! * [`data`] ingests station files, splits and normalizes them, and cuts
//!   72-hour lookback / 120-hour horizon windows.
//! * [`autodiff`] is a small reverse-mode engine with Adam and the
//!   plateau / early-stop training rules.
//! * [`models`] holds the five forecasters and the training loop.
//! * [`metrics`] implements NSE, KGE, Pearson's r, NRMSE and the
//!   multi-station aggregation reports.
//! * [`bench`] wires everything into the `flowcast` command line.

pub mod autodiff;
pub mod bench;
pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod par;

pub use error::{Error, Result};

/// Lookback window length in hours.
pub const PAST_HOURS: usize = 72;
/// Forecast horizon in hours.
pub const HORIZON: usize = 120;
/// Length of the unified lookback + horizon sequence.
pub const SEQ_LEN: usize = PAST_HOURS + HORIZON;
/// Features per lookback row: precipitation, ET, discharge, 7 statics.
pub const PAST_FEATURES: usize = 10;
/// Features per horizon row: precipitation, ET, 7 statics.
pub const FUTURE_FEATURES: usize = 9;
/// Number of static catchment attributes.
pub const N_STATIC: usize = 7;
