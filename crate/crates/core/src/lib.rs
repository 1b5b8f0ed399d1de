//! Multi-scale gradient U-Net conditional GAN for paired image-to-image
//! translation, built on a small reverse-mode autodiff engine.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: NCHW tensors, the operation tape and Adam.
//! - [`nets`]: generator with multi-scale input injection and output heads,
//!   per-scale patch discriminators and a frozen feature extractor.
//! - [`losses`]: least-squares adversarial, feature-matching and perceptual terms.
//! - [`data`]: paired datasets, scale pyramids, input degradation.
//! - [`metrics`]: PSNR, SSIM and pixel-domain VIF.
//! - [`harness`]: run configs, checkpoints, training, inference, ablation,
//!   gradient scans and FLOPs accounting.
//!
//! Arithmetic is `f32` by default; the `f64` feature switches the whole
//! engine to 64-bit for verification.

pub mod data;
mod error;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod tensor;

pub use error::{Error, Result};

#[cfg(feature = "f64")]
pub type Real = f64;
#[cfg(not(feature = "f64"))]
pub type Real = f32;
