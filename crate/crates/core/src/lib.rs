//! Exact rational model of a mediated market of suppliers and demanders.

pub mod curves;
pub mod error;
pub mod games;
pub mod graphs;
pub mod intervals;
pub mod markets;
pub mod mechanism;
pub mod population;
pub mod pwa;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::{Ext, Scalar};
