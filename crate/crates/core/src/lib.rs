// NaN must fail parameter checks, hence `!(x > 0.0)` style comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aec;
pub mod cli;
pub mod error;
pub mod interference;
pub mod metrics;
pub mod omlsa;
pub mod pipeline;
pub mod signal;
pub mod stft;

pub use error::{Error, Result};
