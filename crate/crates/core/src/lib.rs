//! Stochastic thunderstorm fields from nowcasts, and reach-avoid
//! trajectory planning through them.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod grid;
pub mod nowcast;
pub mod pipeline;
pub mod reach;
pub mod rng;
pub mod scenario;
pub mod simulate;
pub mod stats;
pub mod storm;

pub use error::{Error, Result};
