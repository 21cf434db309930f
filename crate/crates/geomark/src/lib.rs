//! Statistical learning of geometric marks of planar point processes.
//!
//! The pipeline simulates marked Poisson point patterns on a square torus,
//! represents them by wavelet scattering moments of rasterized images,
//! regresses marked-pattern moments from unmarked-pattern moments with
//! per-output ridge models, and reconstructs per-point marks by bounded
//! limited-memory quasi-Newton descent on the moment-matching objective.
//! A local-distance-matrix regression serves as the benchmark.

pub mod error;
pub mod geometry;
pub mod marks;
pub mod optim;
pub mod raster;
pub mod reconstruct;
pub mod regress;
pub mod scattering;

pub use error::{Error, Result};
