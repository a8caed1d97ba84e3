//! Numerical lab for Szegő-type limit theorems of lattice Schrödinger
//! operators `H = Δ + V` on `ℓ²(ℤ^d)`.

pub mod error;
pub mod experiment;
pub mod fit;
pub mod lattice;
pub mod matrix;
pub mod parallel;
pub mod spectral;
pub mod symbols;
pub mod szego;
pub mod tauberian;
pub mod tridiagonal;

pub use error::{Error, Result};
pub use lattice::{LatticeBox, Potential};
pub use matrix::{ComplexOperator, SymmetricOperator};
pub use parallel::Execution;
pub use spectral::{HamiltonianModel, SpectralData};
