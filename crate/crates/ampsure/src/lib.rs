//! Standard-library companion to `ampsure-core`: operator and weight files,
//! grayscale image IO, key-value experiment configs, CSV/TSV reports, a
//! rayon executor and the experiment drivers used by the `ampsure` binary.

pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod imageio;
pub mod parallel;
pub mod report;

pub use error::{Error, Result};
