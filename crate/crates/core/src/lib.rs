//! Discriminator-driven rejection of GAN-style generator samples.
//!
//! The library wraps a generator whose samples are imperfect and a
//! probabilistic discriminator into a Metropolis-Hastings independence
//! sampler (plus a discriminator-rejection baseline), with calibration
//! of discriminator scores and sample-quality metrics for synthetic
//! Gaussian-mixture benchmarks.

pub mod calibration;
pub mod config;
pub mod error;
pub mod metrics;
pub mod mixtures;
pub mod mlp;
pub mod models;
pub mod numeric;
pub mod runner;
pub mod samplers;

pub use error::{Error, Result};
