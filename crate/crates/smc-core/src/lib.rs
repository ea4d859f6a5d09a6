//! Sequential Monte Carlo toolkit.
//!
//! Everything here is `no_std` with `alloc`: log-domain numerics, counter-based
//! random streams, resampling, the SIS/SMC engine and the algorithm family built
//! on top of it (twisted targets, adaptive proposals, pseudo-marginal MCMC,
//! conditional SMC, distributed samplers and divergence estimators).
//!
//! Time steps are numbered from 1, matching the usual `x_{1:T}` notation; particle
//! indices are 0-based.
#![no_std]

extern crate alloc;

pub mod adapt;
pub mod csmc;
pub mod empirical;
pub mod engine;
pub mod error;
pub mod evaluate;
pub mod linalg;
pub mod logspace;
pub mod models;
pub mod parallel;
pub mod pm;
pub mod proposals;
pub mod resampling;
pub mod rng;
pub mod special;
pub mod stats;
pub mod twisting;

pub use empirical::WeightedEmpirical;
pub use engine::{run_is, run_sis, run_smc, Kernel, ParticleSystem, Proposal, SmcConfig, Target};
pub use error::SmcError;
pub use logspace::{log_sum_exp, normalize_log_weights, LogValue};
pub use resampling::{AdaptivePolicy, ResamplingScheme};
pub use rng::{Address, Draws, SeedStream};
