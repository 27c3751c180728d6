//! Retinex decomposition and low-light image enhancement.
//!
//! An observed image is modelled as `I = R ∘ L + N`: a per-channel
//! reflectance `R` multiplied by a shared single-channel illumination `L`,
//! plus a signed noise residual `N`. The [`unfold`] module solves for the
//! triple with a fixed number of alternating proximal-gradient stages, the
//! [`enhance`] module rescales the illumination and restores the
//! reflectance, and the [`priors`] module provides small trainable
//! patch autoencoders that can replace the classical proximal operator
//! for `L` and act as a gradient-representation regularizer.

pub mod config;
pub mod enhance;
pub mod error;
pub mod hog;
pub mod image;
pub mod metrics;
pub mod ops;
pub mod priors;
pub mod tensor;
pub mod unfold;

pub use error::{CoreError, Result};
