//! High-frequency forward and inverse scattering for the perturbed biharmonic
//! operator `Δ² + A·∇ + V - λ⁴` in three dimensions.
//!
//! The crate synthesizes scattering amplitudes from known compactly supported
//! fields `(A, V)` and reconstructs the gauge invariants `curl A` and
//! `V - ½∇·A` from them.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::excessive_precision
)]

pub mod error;
pub mod fields;
pub mod forward;
pub mod inversion;
pub mod jet;
pub mod nearfield;
pub mod quadrature;
pub mod stability;
pub mod transport;
pub mod vec3;

pub use error::{Error, Result};
pub use fields::{FieldPair, ScalarField, VectorField};
pub use num_complex::Complex64;
pub use vec3::Vec3;
