//! Recurrent-convolutional nowcasting toolkit.
//!
//! - [`grid`], [`gsq`], [`synth`], [`store`]: frame sequences, the GSQ1 file
//!   format and a synthetic advecting-field generator.
//! - [`nn`]: convolution, ConvGRU and residual blocks with explicit backward passes.
//! - [`forecaster`]: multiscale encoder-forecaster models and training.
//! - [`optim`]: Adam and AdaBelief.
//! - [`conditional`]: two-member models dispatched on the input rain maximum.
//! - [`ensemble`]: equal, ridge and sum-constrained ensemble weights.
//! - [`metrics`] and [`render`]: MSE reports and PGM prediction strips.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod conditional;
pub mod ensemble;
pub mod error;
pub mod forecaster;
pub mod grid;
pub mod gsq;
pub mod kv;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod predict;
pub mod render;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{Dataset, Dims, GridSequence, SamplePair, Split, Transform};
pub use predict::Predictor;
