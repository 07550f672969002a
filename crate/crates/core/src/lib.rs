//! Monte Carlo pricing of bilateral counterparty risk on a CDS under a
//! margin agreement, with CIR-driven common-shock defaults.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cds;
pub mod config;
pub mod copula;
pub mod error;
pub mod exposure;
pub mod factors;
pub mod harness;
pub mod margin;
pub mod rng;
pub mod stats;

pub use config::{CaseTable, RunConfig};
pub use error::{Error, Result};
pub use exposure::{Engine, ExposureReport, ModelSpec, SpreadReport};
