//! Numerical workbench for gauge field theories built on noncommutative
//! differential calculi, transitive Lie algebroids, finite spectral triples
//! and grid-based gravitation.

pub mod algebroid;
pub mod driver;
pub mod error;
pub mod gravity;
pub mod liealg;
pub mod latticeymh;
pub mod linalg;
pub mod ncforms;
pub mod ncgauge;
pub mod report;
pub mod spectral;

pub use error::{Error, Result};
