pub mod error;
pub mod generators;
pub mod growth;
pub mod holo;
pub mod io;
pub mod cli;
pub mod commutator;
pub mod matrix;
pub mod suites;

pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, C64};
