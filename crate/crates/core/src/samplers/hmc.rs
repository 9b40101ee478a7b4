//! Hamiltonian Monte Carlo with a fixed dense mass matrix.
//!
//! The metric is given by its inverse: a [`GramFactor`] whose matrix is
//! `M⁻¹`. For the latent curves `M⁻¹` is the GP prior covariance, so the mass
//! matrix is the prior precision. With `M⁻¹ = L Lᵀ`:
//! momentum `p = L⁻ᵀ ξ`, velocity `M⁻¹ p = L (Lᵀ p)`, kinetic energy
//! `½ |Lᵀ p|²`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::kernels::GramFactor;

/// A differentiable log density.
pub trait GradientTarget {
    fn logpdf_grad(&self, x: &[f64]) -> (f64, Vec<f64>);
}

impl<F> GradientTarget for F
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    fn logpdf_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcSettings {
    pub step_size: f64,
    pub n_leapfrog: usize,
    pub target_accept: f64,
    /// Iterations of step-size adaptation; `None` adapts during all of burn-in.
    pub adapt_iters: Option<usize>,
    /// Each step size is drawn uniformly from `ε·(1 ± step_jitter)`.
    pub step_jitter: f64,
}

impl Default for HmcSettings {
    fn default() -> Self {
        HmcSettings {
            step_size: 0.1,
            n_leapfrog: 20,
            target_accept: 0.75,
            adapt_iters: None,
            step_jitter: 0.1,
        }
    }
}

impl HmcSettings {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.step_size > 0.0) || self.n_leapfrog == 0 {
            return Err(crate::Error::validation(
                "hmc.step_size must be positive and hmc.n_leapfrog at least 1",
            ));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(crate::Error::validation("hmc.target_accept must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.step_jitter) {
            return Err(crate::Error::validation("hmc.step_jitter must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HmcOutcome {
    pub position: Vec<f64>,
    pub accepted: bool,
    /// `H(end) − H(start)`; infinite when the trajectory diverged.
    pub energy_error: f64,
    pub accept_prob: f64,
    pub logpdf: f64,
    /// Gradient evaluations used.
    pub evals: usize,
}

pub fn kinetic_energy(inv_mass: &GramFactor, p: &[f64]) -> f64 {
    0.5 * inv_mass.mul_lower_t(p).iter().map(|v| v * v).sum::<f64>()
}

/// Draws `p ~ N(0, M)`.
pub fn sample_momentum<R: Rng + ?Sized>(inv_mass: &GramFactor, rng: &mut R) -> Vec<f64> {
    let xi: Vec<f64> = (0..inv_mass.dim()).map(|_| rng.sample(StandardNormal)).collect();
    inv_mass.solve_lower_t(&xi)
}

/// State after a leapfrog trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub logpdf: f64,
    pub grad: Vec<f64>,
}

/// `n` leapfrog steps of size `eps` from `(q, p)`, given `logpdf` and `grad`
/// at `q`. Stops early if the density becomes non-finite.
pub fn leapfrog<T: GradientTarget + ?Sized>(
    target: &T,
    inv_mass: &GramFactor,
    q: &[f64],
    p: &[f64],
    grad: &[f64],
    eps: f64,
    n: usize,
) -> Trajectory {
    let mut q = q.to_vec();
    let mut p = p.to_vec();
    let mut grad = grad.to_vec();
    let mut logpdf = f64::NAN;
    for _ in 0..n {
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * eps * gi;
        }
        let v = inv_mass.mul(&p);
        for (qi, vi) in q.iter_mut().zip(&v) {
            *qi += eps * vi;
        }
        let (lp, g) = target.logpdf_grad(&q);
        logpdf = lp;
        grad = g;
        if !lp.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            logpdf = f64::NEG_INFINITY;
            break;
        }
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * eps * gi;
        }
    }
    Trajectory { position: q, momentum: p, logpdf, grad }
}

/// One HMC transition with step size `eps` (before jitter).
pub fn hmc_step<T: GradientTarget + ?Sized, R: Rng + ?Sized>(
    position: &[f64],
    target: &T,
    settings: &HmcSettings,
    eps: f64,
    inv_mass: &GramFactor,
    rng: &mut R,
) -> HmcOutcome {
    let (lp0, grad0) = target.logpdf_grad(position);
    let p0 = sample_momentum(inv_mass, rng);
    let jitter = if settings.step_jitter > 0.0 {
        1.0 + settings.step_jitter * (2.0 * rng.random::<f64>() - 1.0)
    } else {
        1.0
    };
    let log_u = (1.0 - rng.random::<f64>()).ln();
    let h0 = -lp0 + kinetic_energy(inv_mass, &p0);
    let traj = leapfrog(target, inv_mass, position, &p0, &grad0, eps * jitter, settings.n_leapfrog);
    let h1 = if traj.logpdf.is_finite() {
        -traj.logpdf + kinetic_energy(inv_mass, &traj.momentum)
    } else {
        f64::INFINITY
    };
    let energy_error = if h0.is_finite() { h1 - h0 } else { f64::INFINITY };
    let accept_prob = if energy_error.is_nan() {
        0.0
    } else {
        (-energy_error).exp().min(1.0)
    };
    let accepted = energy_error.is_finite() && log_u <= -energy_error;
    HmcOutcome {
        position: if accepted { traj.position } else { position.to_vec() },
        accepted,
        energy_error,
        accept_prob,
        logpdf: if accepted { traj.logpdf } else { lp0 },
        evals: settings.n_leapfrog + 1,
    }
}

/// Dual-averaging step-size adaptation toward a target acceptance rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualAveraging {
    mu: f64,
    target: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    t: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(initial_step: f64, target_accept: f64) -> Self {
        DualAveraging {
            mu: (10.0 * initial_step).ln(),
            target: target_accept,
            h_bar: 0.0,
            log_eps: initial_step.ln(),
            log_eps_bar: initial_step.ln(),
            t: 0.0,
        }
    }

    /// Step size to use for the next transition while adapting.
    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// Step size to use once adaptation has stopped.
    pub fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }

    pub fn update(&mut self, accept_prob: f64) {
        self.t += 1.0;
        let t = self.t;
        let w = 1.0 / (t + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        self.log_eps = self.mu - t.sqrt() / Self::GAMMA * self.h_bar;
        // Keep the step within a sane range even if early proposals diverge.
        self.log_eps = self.log_eps.clamp(-20.0, 2.0);
        let eta = t.powf(-Self::KAPPA);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
    }
}
