//! Cyclic time-frequency analysis, mel filter banks, adaptive
//! filter-bank design and the associated approximation diagnostics,
//! plus small CNN building blocks for frame-level classification.

pub mod cnn;
pub mod error;
pub mod filterbank;
pub mod io;
pub mod mel;
pub mod spreading;
pub mod tf;

pub use error::{Error, Result};
