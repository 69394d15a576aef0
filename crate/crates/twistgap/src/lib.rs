//! Floquet-Bloch band structures of periodically twisted waveguides.
//!
//! The straight tube omega x R with a 2pi-periodic twist rate beta reduces,
//! fiberwise over the dual torus, to a family of operators on the
//! cross-section times the period circle. This crate computes those fiber
//! spectra, charts the bands, extracts gap-edge data (extremizers, effective
//! masses, periodic coupling functions), and verifies the eigenvalue-counting
//! behaviour of the resulting effective 1D Hamiltonians by exact
//! finite-dimensional counting — including an independent Birman-Schwinger
//! route and a truncated full-tube cross-check.

pub mod bands;
pub mod bsch;
pub mod config;
pub mod coupling;
pub mod effective;
pub mod fiber;
pub mod fulltube;
pub mod geometry;
pub mod linalg;
pub mod pipeline;
pub mod report;
pub mod sparse;


pub use geometry::{build_grid, CrossSectionGrid, CrossSectionShape, TransverseOperators};
