//! Feynman-Kac kernels, Schrödinger bridges and their diffusions on a 1-D grid.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod bridge;
pub mod diffusion;
pub mod example;
pub mod io;
pub mod kernels;
pub mod numerics;
pub mod scenario;
pub mod suite;
pub mod cli;

pub use error::{FkError, Result};
