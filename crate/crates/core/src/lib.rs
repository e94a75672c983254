//! Entropy-expansiveness toolkit for torus diffeomorphisms with dominated splittings.
//!
//! Systems are affine-plus-shear maps of the flat torus `T^d`. The crate computes Bowen
//! metrics and tail entropy, finite-time invariant bundles and their domination constants,
//! Pliss hyperbolic times along orbits, and central curves.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod entropy;
pub mod error;
pub mod geometry;
pub mod linalg;
mod par;
pub mod pliss;
pub mod splitting;
pub mod system;
pub mod torus;

pub use error::{DynError, Result};
pub use system::{lookup, make_orbit, registry, OrbitSegment, SystemSpec};
pub use torus::{torus_distance, TorusPoint};
