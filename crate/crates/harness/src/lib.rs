//! Validation, plots and the command-line surface for the
//! tabulated BSSRDF in `bssrdf-core`.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod heatmap;
pub mod image;
pub mod rng;
pub mod stats;
pub mod trace;

pub use error::{HarnessError, Result};
