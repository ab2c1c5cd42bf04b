//! Implicit neural representations with a single learnable-activation layer.
//!
//! The core model (`sl2a`) feeds tanh-normalized coordinates through a bank of
//! per-edge Chebyshev-polynomial activations, layer-normalizes the result, and
//! uses it both as the input to and as a Hadamard modulator of a ReLU MLP.
//! Everything is built on a small dense-matrix engine with explicit forward /
//! backward passes — no autograd framework.
//!
//! The crate ships:
//!
//! - [`matrix`] / [`rng`] / [`gradcheck`]: dense f64 matrices, a fixed
//!   SplitMix64 generator, and a central-difference gradient checker.
//! - [`layers`]: linear, low-rank linear, fixed activations, layer norm, and
//!   Fourier positional encoding, all implementing [`Differentiable`].
//! - [`chebyshev`]: the Chebyshev basis and the learnable-activation block.
//! - [`model`]: network assembly ([`ModelSpec`] → [`Network`]), parameter
//!   counting, and bit-exact checkpoints.
//! - [`train`] / [`metrics`]: MSE loss, Adam, the training loop, PSNR / SSIM /
//!   IoU.
//! - [`tasks`] / [`radon`]: image fitting, super-resolution, inpainting, CT
//!   with a differentiable parallel-beam Radon operator, occupancy volumes,
//!   and a frequency-resolved spectral-bias experiment.
//! - [`image`] / [`grid`] / [`config`] / [`cli`]: PNM image IO, volume grids,
//!   run configuration, and the subcommand entry points used by the `sl2a`
//!   binary.
//!
//! Start with the runnable examples (`cargo run --release --example
//! fit_image`); each one exercises a single capability end to end.

pub mod chebyshev;
pub mod cli;
pub mod config;
pub mod gradcheck;
pub mod grid;
pub mod image;
pub mod layers;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod radon;
pub mod rng;
pub mod tasks;
pub mod train;

pub use gradcheck::{gradient_check, Differentiable, GradCheckReport};
pub use matrix::Matrix;
pub use rng::Rng;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes are incompatible.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// An input value lies outside an operation's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// An invalid specification or configuration value.
    #[error("configuration error: {0}")]
    Config(String),
    /// A non-finite value or diverging computation was detected.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// An operation was called in an invalid order (e.g. backward before forward).
    #[error("usage error: {0}")]
    Usage(String),
    /// A file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
