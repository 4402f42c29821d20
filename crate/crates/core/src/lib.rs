//! Diffusion LMS networks whose links are underwater visible-light channels
//! with log-normal turbulence fading and additive Gaussian noise.
//!
//! * [`channel`]: single-link path loss, fading statistics, variance tables.
//! * [`network`]: topology, combination weights, random link matrices.
//! * [`diffusion`]: CTA/ATC recursions and Monte-Carlo MSD estimation.
//! * [`steady_state`]: steady-state MSD theory for CTA.
//! * [`experiments`]: configuration, built-in experiments, result bundles.

pub mod channel;
pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod network;
pub mod steady_state;

pub use error::{Error, Result};
