//! Rain retrieval from passive-microwave brightness temperatures with a
//! 99-quantile convolutional encoder-decoder, together with the co-location,
//! dataset and verification tooling around it.

pub mod colocation;
pub mod dataset;
pub mod eval;
pub mod quantiles;
pub mod qunet;
pub mod error;
pub mod geo;
pub mod swath;

pub use error::{Error, Result};
