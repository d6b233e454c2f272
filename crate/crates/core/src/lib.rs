//! Numerical toolkit for Busemann-Hausdorff (Finsler) area: metric checks,
//! spherical Radon transforms, Cartan area integrands, surface measures and
//! a solver for Finsler-minimal graphs.

pub mod cartan;
pub mod cli;
pub mod error;
pub mod graphsolver;
pub mod mesh;
pub mod metrics;
pub mod radon;
pub mod sphere;
pub mod surfaces;

pub use error::{Error, Result};
