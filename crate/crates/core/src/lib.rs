//! Lattice free scalar field: propagators, observable algebras, BV complexes
//! and comparison checks between the resulting factorization structures.

pub mod acceptance;
pub mod bv;
pub mod comparison;
pub mod error;
pub mod hbar;
pub mod lattice;
pub mod linalg;
pub mod models;
pub mod observables;
pub mod propagators;
pub mod products;
pub mod report;
pub mod theory;

pub use error::{Error, Result};
