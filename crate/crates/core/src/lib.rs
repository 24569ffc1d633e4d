//! Numerical laboratory for the alternating sawtooth shear on the two-torus:
//! exact dynamics, backward-characteristic scalar fields, spectral diagnostics,
//! singularity-set geometry and anisotropic norm estimators.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases below fix `f64`.

pub mod real;
pub mod torus;
pub mod fields;
pub mod quad;
pub mod evolution;
pub mod geometry;
pub mod diagnostics;
pub mod norms;

pub use real::Real;

pub type Params = torus::MapParams<f64>;
pub type Point = torus::TorusPoint<f64>;
