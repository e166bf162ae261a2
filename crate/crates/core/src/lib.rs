//! Recurrent, self-enhancing video super-resolution built on a small
//! reverse-mode autodiff engine.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. Everything that touches the filesystem or the command line lives
//! in the `secn` companion crate.
//!
//! Layout:
//! - [`tensor`] dense `f64` arrays, [`autodiff`] the tape, primitives and Adam
//! - [`flow`], [`lffn`], [`erff`], [`sfe`] the four network stages
//! - [`metrics`] PSNR / SSIM / paired t-test
//! - [`datapipe`] synthetic scenes, degradation and augmentation
//! - [`trainer`] the recurrent training step, schedules and streaming inference
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod config;
pub mod datapipe;
pub mod erff;
pub mod error;
pub mod flow;
pub mod lffn;
pub(crate) mod math;
pub mod metrics;
pub mod nn;
pub mod params;
pub mod ring;
pub mod sfe;
pub mod stats;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
