//! Blind image watermarking with a symmetry-based synchronization stage.
//!
//! A 64-bit message is spread over small bipolar chip patterns, masked with a
//! keyed bipolar matrix, and flip-tiled so that every tile corner becomes a
//! point-symmetry center of the watermark. The decoder estimates the watermark
//! from the attacked image, locates the corner lattice through the peaks of an
//! auto-convolution map, rectifies each detected unit with a four-point
//! homography, resolves the unit orientation by hypothesis testing, and
//! despreads the accumulated units back into message bits.
//!
//! The crate is organized along the pipeline stages:
//!
//! - [`keys`]: keyed generation of the chip and mask matrices
//! - [`codec`]: message ↔ watermark-unit coding and the flip-tiling rule
//! - [`embedder`]: luminance handling, adaptive strength, additive embedding
//! - [`estimator`]: MSE-minimizing watermark prediction from an attacked image
//! - [`synchronizer`]: auto-convolution symmetry map, peak lattice, rectification
//! - [`statedec`]: orientation hypothesis testing, accumulation, decoding
//! - [`attacks`]: the benchmark distortion suite
//! - [`bench`]: embed → attack → extract benchmark harness and reports
//! - [`pipeline`]: end-to-end embed/extract entry points

pub mod attacks;
pub mod bench;
pub mod codec;
pub mod desk;
pub mod embedder;
mod error;
pub mod estimator;
mod fft;
mod filters;
pub mod io;
pub mod keys;
pub mod pipeline;
pub mod statedec;
pub mod synchronizer;

pub use error::{Error, Result};
