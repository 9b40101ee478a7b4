//! Elliptical slice sampling for posteriors with a Gaussian prior.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::kernels::GramFactor;

#[derive(Debug, Clone)]
pub struct EssOutcome {
    pub position: Vec<f64>,
    pub loglik: f64,
    /// Likelihood evaluations used, including the shrinkage steps.
    pub evals: usize,
}

/// One elliptical slice transition for `p(g) ∝ N(g; mean, Σ) exp(loglik(g))`,
/// where `prior` factors `Σ`. `current_loglik` is `loglik(g)`.
pub fn ess_step<F, R>(
    g: &[f64],
    current_loglik: f64,
    loglik: F,
    mean: &[f64],
    prior: &GramFactor,
    rng: &mut R,
) -> EssOutcome
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let xi: Vec<f64> = (0..prior.dim()).map(|_| rng.sample(StandardNormal)).collect();
    let nu = prior.mul_lower(&xi);
    let centered: Vec<f64> = g.iter().zip(mean).map(|(a, m)| a - m).collect();
    let log_y = current_loglik + (1.0 - rng.random::<f64>()).ln();
    let two_pi = std::f64::consts::TAU;
    let mut angle = rng.random::<f64>() * two_pi;
    let mut lo = angle - two_pi;
    let mut hi = angle;
    let mut evals = 0;
    loop {
        let (s, c) = angle.sin_cos();
        let proposal: Vec<f64> = centered
            .iter()
            .zip(&nu)
            .zip(mean)
            .map(|((f, n), m)| m + f * c + n * s)
            .collect();
        let ll = loglik(&proposal);
        evals += 1;
        if ll > log_y {
            return EssOutcome { position: proposal, loglik: ll, evals };
        }
        if angle < 0.0 {
            lo = angle;
        } else {
            hi = angle;
        }
        if hi - lo < 1e-300 {
            // Shrunk onto the current point.
            return EssOutcome { position: g.to_vec(), loglik: current_loglik, evals };
        }
        angle = lo + rng.random::<f64>() * (hi - lo);
    }
}
