//! Posterior predictive recurrence counts for a future subject.
//!
//! For each stored draw a fresh event frailty `ũ ~ lognormal(0, D22)` is
//! drawn, the expected count `Ẽ = exp(x̃'β) ũ ∫_window λ0` is formed and
//! `ỹ ~ Poisson(Ẽ)`. Frailties and counts use separate random streams, so
//! predictions for different windows share the same `ũ` draws.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conditionals::dot;
use crate::engine::ChainOutput;
use crate::error::{Error, Result};
use crate::grid::integral_exp;
use crate::rng::substream;
use crate::stats::{mean, variance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRequest {
    pub x_new: Vec<f64>,
    /// Window `(a, b]` in original time units.
    pub window: (f64, f64),
    #[serde(default = "one")]
    pub n_draws_per_sample: usize,
}

fn one() -> usize {
    1
}

impl PredictionRequest {
    pub fn new(x_new: Vec<f64>, window: (f64, f64)) -> Self {
        PredictionRequest { x_new, window, n_draws_per_sample: 1 }
    }

    fn validate(&self, chain: &ChainOutput) -> Result<()> {
        let p = chain.covariate_names.len();
        if self.x_new.len() != p {
            return Err(Error::validation(format!(
                "x has {} entries but the model has {p} covariates",
                self.x_new.len()
            )));
        }
        let (a, b) = self.window;
        let horizon = chain.time_scale;
        if !(a >= 0.0 && a <= b && b <= horizon * (1.0 + 1e-12)) {
            return Err(Error::validation(format!(
                "window ({a}, {b}] must lie within the fitted horizon [0, {horizon}]"
            )));
        }
        if self.n_draws_per_sample == 0 {
            return Err(Error::validation("n_draws_per_sample must be at least 1"));
        }
        if chain.draws.is_empty() {
            return Err(Error::validation("chain has no stored draws"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiseaseFree {
    /// Rao–Blackwellized estimate, the mean of `exp(−Ẽ)`.
    pub probability: f64,
    pub probability_se: f64,
    /// Fraction of predictive draws with `ỹ = 0`.
    pub empirical: f64,
    pub empirical_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfEntry {
    pub count: u64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub x_new: Vec<f64>,
    pub window: (f64, f64),
    pub n_samples: usize,
    pub pmf: Vec<PmfEntry>,
    pub mean: f64,
    pub lo95: u64,
    pub hi95: u64,
    pub disease_free: DiseaseFree,
    /// Expected counts `Ẽ` behind each draw.
    #[serde(skip)]
    pub expected: Vec<f64>,
    #[serde(skip)]
    pub samples: Vec<u64>,
}

impl PredictiveDistribution {
    pub fn prob(&self, k: u64) -> f64 {
        self.pmf.iter().find(|e| e.count == k).map_or(0.0, |e| e.prob)
    }
}

const FRAILTY_STREAM: u64 = 0xF4A1;
const COUNT_STREAM: u64 = 0xC0C0;

/// `∫_a^b λ0` in original time units for one stored draw, with the window
/// attributed grid cells exactly as observed intervals are in the likelihood.
pub fn window_integral(chain: &ChainOutput, g2: &[f64], window: (f64, f64)) -> f64 {
    let grid = chain.grid();
    let t = chain.time_scale;
    integral_exp(g2, &grid, window.0 / t, (window.1 / t).min(1.0))
}

/// Expected counts `Ẽ` for every (draw, replicate) pair.
pub fn expected_counts(chain: &ChainOutput, req: &PredictionRequest, seed: u64) -> Result<Vec<f64>> {
    req.validate(chain)?;
    let mut rng = substream(seed, FRAILTY_STREAM, 0);
    let mut out = Vec::with_capacity(chain.draws.len() * req.n_draws_per_sample);
    for s in &chain.draws {
        let base = dot(&req.x_new, &s.beta).exp() * window_integral(chain, &s.g2, req.window);
        let sd = s.d.d22.max(0.0).sqrt();
        for _ in 0..req.n_draws_per_sample {
            let xi: f64 = rng.sample(StandardNormal);
            out.push(base * (sd * xi).exp());
        }
    }
    Ok(out)
}

pub fn predictive_counts(chain: &ChainOutput, req: &PredictionRequest, seed: u64) -> Result<PredictiveDistribution> {
    let expected = expected_counts(chain, req, seed)?;
    let mut rng = substream(seed, COUNT_STREAM, 0);
    let samples: Vec<u64> = expected
        .iter()
        .map(|&e| {
            if e > 0.0 && e.is_finite() {
                Poisson::new(e).expect("positive mean").sample(&mut rng) as u64
            } else {
                0
            }
        })
        .collect();
    let n = samples.len();
    let max = *samples.iter().max().unwrap_or(&0);
    let mut freq = vec![0usize; max as usize + 1];
    for &y in &samples {
        freq[y as usize] += 1;
    }
    let pmf: Vec<PmfEntry> = freq
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .map(|(k, c)| PmfEntry { count: k as u64, prob: *c as f64 / n as f64 })
        .collect();
    let mut sorted = samples.clone();
    sorted.sort_unstable();
    let q = |p: f64| sorted[((n as f64 * p).ceil() as usize).clamp(1, n) - 1];
    let as_f: Vec<f64> = samples.iter().map(|&y| y as f64).collect();
    let disease_free = disease_free_from(&expected, &samples);
    Ok(PredictiveDistribution {
        x_new: req.x_new.clone(),
        window: req.window,
        n_samples: n,
        pmf,
        mean: mean(&as_f),
        lo95: q(0.025),
        hi95: q(0.975),
        disease_free,
        expected,
        samples,
    })
}

fn disease_free_from(expected: &[f64], samples: &[u64]) -> DiseaseFree {
    let n = expected.len() as f64;
    let rb: Vec<f64> = expected.iter().map(|e| (-e).exp()).collect();
    let zeros: Vec<f64> = samples.iter().map(|&y| if y == 0 { 1.0 } else { 0.0 }).collect();
    DiseaseFree {
        probability: mean(&rb),
        probability_se: (variance(&rb) / n).sqrt(),
        empirical: mean(&zeros),
        empirical_se: (variance(&zeros) / n).sqrt(),
    }
}

/// `P(ỹ = 0)` over the window; see [`DiseaseFree`] for both estimators.
pub fn disease_free_prob(chain: &ChainOutput, req: &PredictionRequest, seed: u64) -> Result<DiseaseFree> {
    Ok(predictive_counts(chain, req, seed)?.disease_free)
}

pub fn write_prediction(dir: &Path, pred: &PredictiveDistribution) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("pred.json"), serde_json::to_string_pretty(pred)? + "\n")?;
    Ok(())
}
