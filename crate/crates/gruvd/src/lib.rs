//! Recurrent video denoising.
//!
//! This crate implements a complete, self-contained pipeline for removing
//! signal-dependent sensor noise from video: a small tensor library with
//! reverse-mode differentiation, convolutional gate networks, a gated
//! recurrent fusion cell, a heteroscedastic noise model, synthetic scene
//! generation, training with truncated backpropagation through time, and an
//! evaluation harness with PSNR/SSIM reporting.
//!
//! Start with [`cell`] for the recurrent core, or with the guide in `book/`
//! for a walk through the whole pipeline.

pub mod backbone;
pub mod cell;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod noise;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

// Compile and run every Rust snippet in the guide as part of `cargo test`,
// so the book can never drift out of sync with the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/cell.md")]
    mod cell {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/gradcheck.md")]
    mod gradcheck {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
