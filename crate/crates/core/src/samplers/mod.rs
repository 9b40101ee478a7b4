//! Sampling primitives used by the Gibbs sweep.

pub mod ars;
pub mod conjugate;
pub mod ess;
pub mod hmc;

pub use ars::{arms_sample, arms_sample_with, ars_sample, ArmsStep, Target1D};
pub use conjugate::{draw_inv_gamma, draw_inv_wishart, draw_normal, draw_sigma2_conjugate};
pub use ess::{ess_step, EssOutcome};
pub use hmc::{hmc_step, leapfrog, DualAveraging, GradientTarget, HmcOutcome, HmcSettings};
