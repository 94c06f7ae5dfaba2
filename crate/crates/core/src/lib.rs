//! Identification and prediction of nonlinear dynamics from noisy time
//! series via robust (ℓ₁-regularized) approximation of the Koopman
//! operator.
//!
//! Pipeline: simulate a ground-truth system ([`dynamics`]), corrupt it
//! like a field measurement ([`noise`]), lift it through an observable
//! dictionary ([`dictionary`]), estimate the finite operator and its
//! spectrum ([`operator`]), and roll out lifted linear forecasts
//! ([`predictor`]). The [`harness`] wires those into reproducible,
//! config-driven experiments behind the `koopman` CLI.

pub mod assignment;
pub mod config;
pub mod csvio;
pub mod dictionary;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod lasso;
pub mod linalg;
pub mod noise;
pub mod operator;
pub mod predictor;

pub use error::{Error, Result};
