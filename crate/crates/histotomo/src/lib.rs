//! Histogram tomography: forward models and reconstructions for scalar,
//! vector, and tensor ray transforms where each ray yields the distribution
//! of values along the ray, not just its integral.
//!
//! The crate covers:
//!
//! - distributions of functions with respect to length ([`distribution`]),
//! - the scalar Radon transform, filtered backprojection, and the
//!   histogram Radon transform with its moment identities ([`radon`]),
//! - reconstruction through sub-level sets of the cumulative histogram
//!   ([`levelset`]),
//! - symmetric tensor calculus and the longitudinal/transverse ray
//!   transforms with their histogram variants ([`tensor`]),
//! - recovery of a potential velocity field from second moments of
//!   histogram ray data ([`doppler`]),
//! - Bragg-edge transmission spectra as cumulative strain histograms and
//!   the rank-4 compatibility operator ([`bragg`]),
//! - diffraction patterns as Radon plane transforms of transverse strain
//!   curves, including an explicit non-uniqueness pair ([`diffraction`]).

pub mod bragg;
pub mod diffraction;
pub mod distribution;
pub mod doppler;
pub mod error;
pub mod fd;
pub mod grid;
pub mod io;
pub mod levelset;
pub mod radon;
pub mod ray;
pub mod sym;
pub mod tensor;

pub use error::{Error, Result};
pub use grid::{grid_from_function, sample_along_ray, sample_along_ray3, ScalarGrid};
pub use ray::{Ray, Ray3};
pub use sym::SymTensorField;
