//! Metrology digital twin: synthetic CMM and FARO campaigns, deviation
//! statistics, regression learners, isolation-forest screening and a
//! continuously retrained runtime.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anomaly;
pub mod campaign;
pub mod error;
pub mod metrology;
pub mod ml;
pub mod report;
pub mod stats;
pub mod twin;

pub use error::{Error, Result};
