//! Functional multi-reference alignment by deconvolution.
//!
//! Observations `y_n(t) = f(t - ζ_n) + η_n(t)` are reduced to the diagonal of
//! their second moment in frequency, the Fourier transform of `f` is rebuilt
//! by the Kotlarski log-derivative integral, and `f` itself is recovered with
//! a band-limited deconvolution kernel.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod synthetic;
pub mod estimator;
pub mod vanishing;
pub mod deconvolution;
pub mod kotlarski_nd;
pub mod harness;

pub use error::{Error, Result};
