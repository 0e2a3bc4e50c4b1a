//! Functional simulator and compiler for a CNN accelerator whose native
//! dialect is 3x3 convolution + ReLU + 2x2 max pooling.
//!
//! The crate is organized around the data path of the device:
//!
//! - [`dsfp`] — the chip's custom floating-point formats (9-bit activations,
//!   15-bit coefficients), exact integer multiply-accumulate, requantization.
//! - [`tensor`] — double-precision reference tensor ops; the oracle every
//!   equivalence test compares against.
//! - [`graph`] — the model IR, shape validation, and the on-disk bundle
//!   format (JSON manifest + raw weight blob).
//! - [`surgery`] — compiler passes that rewrite shortcut blocks, depthwise
//!   separable layers, and FC heads into the 3x3-only dialect.
//! - [`layout`] — the imagery/filter arrangement scheme that assigns data to
//!   engines, groups, subgroups, and cyclic rotation slots.
//! - [`engine`] — the ring of convolution engines exchanging imagery tiles
//!   over a cyclic shift network, simulated at rotation-step granularity.
//! - [`executor`] — end-to-end inference: tiling, per-layer scheduling,
//!   float reference execution, and output comparison.
//! - [`perf`] — analytic throughput, power-efficiency, and model-size
//!   reporting.

pub mod cli;
pub mod dsfp;
pub mod engine;
mod error;
pub mod executor;
pub mod graph;
pub mod layout;
pub mod perf;
pub mod surgery;
pub mod tensor;

pub use error::Error;

/// Convenience result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
