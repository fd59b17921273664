//! Numerical kernels for random tridiagonal operators, their semigroups and
//! Feynman-Kac representations.

pub mod continuum;
pub mod couplings;
pub mod ensembles;
pub mod error;
pub mod randomness;
pub mod semigroup;
pub mod spectra;
pub mod stats;
pub mod tridiag;
pub mod walk_fk;

pub use error::{Error, Result};
