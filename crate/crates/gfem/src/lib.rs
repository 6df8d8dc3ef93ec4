//! Generalized finite element solver for the Neumann Laplace problem on planar
//! domains with distributional boundary data, together with the machinery to
//! verify its partition-of-unity assumptions and measure convergence rates.

pub mod error;
pub mod geometry;
pub mod covering;
pub mod partition;
pub mod quadrature;
pub mod field;
pub mod localspace;
pub mod linalg;
pub mod assembly;
pub mod norms;
pub mod oracles;
pub mod config;
pub mod study;
mod spatial;

pub use error::{GfemError, Result};
