//! Tabulated BSSRDF for oblique incidence, built from photon beam diffusion.
//!
//! The pipeline: [`medium`] derives dipole constants, [`pbd`] integrates the
//! beam reference, [`wrapped_cauchy`] fits the azimuthal profile at each
//! `(ρ, θ, r)` node, [`catmullrom`] interpolates and samples, and [`table`]
//! ties it together with evaluation, importance sampling and binary I/O.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catmullrom;
pub mod error;
pub mod medium;
pub mod pbd;
pub mod table;
pub mod wrapped_cauchy;

pub use error::{Error, Result};
pub use medium::{derive_constants, DerivedConstants, MediumParams, SignConvention};
pub use pbd::{eval_sp_ms, BeamGeometry, BeamOracle};
pub use table::{build_table, BssrdfTable, BuildStats, TableGrids};
pub use wrapped_cauchy::{gwc_fit, AnchorSet, FitStatus, GwcFit, GwcParams};
