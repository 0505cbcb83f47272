//! Brascamp–Lieb constants, Gaussian entropy inequalities and heat-flow
//! diagnostics for bosonic Gaussian states.

pub mod apps;
pub mod cli;
pub mod datum;
pub mod entropy;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod random;
pub mod solver;
pub mod symplectic;

pub use datum::{BLDatum, BLMap};
pub use entropy::{GaussianJoint, SystemKind};
pub use error::{Error, Result};
pub use symplectic::{CovMatrix, MapKind, SymplecticForm};
