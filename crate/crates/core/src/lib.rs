//! Leading-order WKB profiles for quasilinear hyperbolic boundary value
//! problems driven by several boundary phases.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod boundary_spectral;
pub mod char_variety;
pub mod error;
pub mod euler2d;
pub mod lattice_resonance;
pub mod linalg;
pub mod profile_solver;
pub mod report;
pub mod system_model;
pub mod tolerances;

pub use error::{Error, Result};
