//! Bayesian nonparametric inference for panel count data with an informative
//! observation process.
//!
//! The observation (visit) process and the recurrent event process of each
//! subject are modelled as two nonhomogeneous Poisson processes whose
//! baseline log-intensities are Gaussian processes and whose subject-level
//! frailties are bivariate lognormal. Inference runs a Gibbs sweep over all
//! blocks: adaptive rejection sampling for the regression coefficients and
//! frailties, Hamiltonian Monte Carlo with the GP prior precision as mass
//! matrix for the latent curves, and conjugate or ARMS updates for the
//! hyperparameters.
//!
//! Module map:
//!
//! - [`data`]: panel count datasets and CSV ingestion.
//! - [`kernels`]: Matérn correlation and factorized Gram matrices.
//! - [`grid`]: time discretization and integrals of `exp(g)`.
//! - [`conditionals`]: likelihoods, full conditionals and gradients.
//! - [`samplers`]: ARS, ARMS, HMC, elliptical slice and conjugate draws.
//! - [`engine`]: the Gibbs sampler, persistence, summaries, diagnostics, DIC.
//! - [`simulate`]: synthetic scenarios and the replication study harness.
//! - [`predict`]: posterior predictive recurrence counts.
//! - [`cli`]: the `pcox` command-line front end.

pub mod cli;
pub mod conditionals;
pub mod data;
pub mod engine;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod predict;
pub mod rng;
pub mod samplers;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
