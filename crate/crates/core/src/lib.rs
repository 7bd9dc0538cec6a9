//! Planar Gaussian random fields with geometrically anisotropic Matérn
//! covariance, and three estimators for the anisotropy triple
//! (angle, ratio, range): exact maximum likelihood and two convolutional
//! networks, one reading raw 16×16 fields (NF) and one reading 13×13
//! variogram maps (NV).

pub mod bessel;
pub mod covariance;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod likelihood;
pub mod linalg;
pub mod ml;
pub mod nelder_mead;
pub mod nn;
pub mod rng;
pub mod simulate;
pub mod variogram;

pub use covariance::{AnisotropyMatrix, AnisotropyParams, MaternSpec};
pub use error::{Error, Result};
pub use grid::{FieldGrid, GridDomain};
pub use variogram::VariogramMap;
