//! Denoiser-based approximate message passing (D-AMP) for compressive
//! sensing, together with Monte-Carlo SURE training of denoisers directly
//! from undersampled measurements.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, image IO,
//! threading and the command line live in the `ampsure` companion crate.
//!
//! Module map:
//!
//! * [`measure`]: Gaussian, coded-diffraction and radial-MRI measurement
//!   operators with their adjoints.
//! * [`denoise`]: the σ-parameterized [`Denoiser`](denoise::Denoiser)
//!   capability, analytic denoisers and the Monte-Carlo divergence probe.
//! * [`damp`]: the D-AMP iteration with Onsager correction and both noise
//!   level estimators.
//! * [`sure`]: MSE and MC-SURE losses and the unbiasedness harness.
//! * [`learn`]: trainable denoisers, their reverse-mode gradients, training,
//!   harvesting and the joint recovery/training loop.
//! * [`metrics`]: PSNR, residual histograms and normality statistics.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod damp;
pub mod dct;
pub mod denoise;
pub mod error;
pub mod exec;
pub mod fft;
pub mod image;
pub mod learn;
pub mod measure;
pub mod metrics;
pub mod phantom;
pub mod rng;
pub mod sure;

mod math;

pub use error::{Error, Result};
pub use image::Image;
