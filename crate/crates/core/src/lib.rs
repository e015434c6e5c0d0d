//! Asymptotic-preserving IMEX discontinuous Galerkin solver for 1D linear kinetic transport.

pub mod basis;
pub mod blocks;
pub mod boundary;
pub mod dg_ops;
pub mod eigen;
pub mod error;
pub mod field;
pub mod imex;
pub mod material;
pub mod mesh;
pub mod quadrature;
pub mod reference;
pub mod schur;
pub mod stability;
pub mod tableau;

pub use error::{Error, Result};
