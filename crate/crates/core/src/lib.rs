//! Certification toolkit for almost-calibrated Reifenberg sets.
//!
//! The crate is organised bottom-up:
//!
//! - [`forms`]: constant-coefficient k-forms, oriented planes, calibration
//!   fields, the standard special-holonomy forms and comass estimation.
//! - [`geometry`]: point clouds with a nearest-neighbour index, Hausdorff and
//!   Grassmann distances, projections and best-fit plane search.
//! - [`flatness`]: multiscale θ / β∞ profiling, positivity and the
//!   Reifenberg hypothesis certificate.
//! - [`builder`]: Vitali covers and the glued surface family `S_r`.
//! - [`measure`]: Hausdorff measure, form integrals, Ahlfors ratios and the
//!   volume bounds along a family.
//! - [`generators`]: seeded ground-truth clouds (planes, graphs, complex
//!   curves, Koch curves).
//!
//! Everything here is `no_std` + `alloc`; file formats and the command line
//! live in the `reifcal` crate.
#![cfg_attr(not(feature = "std"), no_std)]
// NaN-rejecting guards are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod prelude;

pub mod builder;
pub mod error;
pub mod flatness;
pub mod forms;
pub mod generators;
pub mod geometry;
pub mod kdtree;
pub mod linalg;
pub mod measure;
pub mod optimize;
mod par;
pub mod serde_float;

pub use error::{Error, Result};
pub use forms::{CalibrationField, ConstantKForm, MultiIndex, OrientedPlane};
pub use geometry::{Ball, FitMode, PointCloud};
