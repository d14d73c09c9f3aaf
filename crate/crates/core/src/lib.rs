//! Contrastive diffusion planning for offline reinforcement learning.
//!
//! This crate holds the full algorithmic core: a dense-tensor MLP engine with
//! reverse-mode gradients and Adam, denoising-diffusion schedules and sampling,
//! offline datasets with per-state returns, return-guided trajectory planning,
//! and the contrastive machinery that pulls generated states toward high-return
//! states and away from low-return states.
//!
//! The crate is `no_std` + `alloc`; everything that touches files, clocks, or
//! the command line lives in the companion `cdp-cli` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adam;
pub mod analysis;
pub mod contrastive;
pub mod dataset;
pub mod diffusion;
pub mod env;
pub mod error;
pub mod graph;
pub mod guide;
pub mod kmeans;
pub mod mlp;
pub mod models;
pub mod planner;
pub mod rng;
pub mod schedule;
pub mod tensor;
pub mod training;

pub use error::{CoreError, Result};
pub use tensor::Tensor;
