//! Measures of user bias, content bias and combined user-content bias for
//! information providers that return ranked result lists, with a synthetic
//! provider for validating them.

pub mod aggregation;
pub mod audit;
pub mod error;
pub mod io;
pub mod measures;
pub mod ranking;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use error::{BiasError, Result};
