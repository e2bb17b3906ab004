//! Real-time PPG systolic-peak detection with three exponentially weighted
//! moving averages (SRMAC), the TERMA baseline, and the tooling to evaluate
//! both: peak matching, parameter search and leave-subject-out
//! cross-validation over synthetic or on-disk datasets.

pub mod crossval;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod filters;
pub mod metrics;
pub mod optimize;
pub mod signal;
pub mod srmac;
pub mod synth;
pub mod terma;

pub use error::{Error, Result};
