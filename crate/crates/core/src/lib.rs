//! Closed-form laws of running maxima, drawdowns and last passage times,
//! with a Monte Carlo harness to check them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod cli;
pub mod config;
pub mod error;
pub mod expr;
pub mod func;
pub mod numerics;
pub mod scale;
pub mod simulate;
pub mod transforms;
pub mod verify;

pub use error::{Error, Result};
pub use func::Func;
