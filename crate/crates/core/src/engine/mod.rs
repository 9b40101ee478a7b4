//! Gibbs sampler over all parameter blocks, chain persistence, posterior
//! summaries, convergence diagnostics and DIC.

mod chain_io;
mod diagnostics;
mod dic;
mod summary;

pub use chain_io::{config_hash, read_chain, read_chains, write_chain, write_chains};
pub use diagnostics::{diagnose_trace, diagnostics, geweke_z, ScalarDiagnostics, REPORTED_LAGS};
pub use dic::{dic, dic_from, posterior_mean_state, Dic};
pub use summary::{
    curve_bands, pool_chains, scalar_traces, summarize, write_curves, write_summary, CurveBand, PosteriorSummary,
    ScalarSummary,
};

use std::cell::RefCell;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

use crate::conditionals::{
    frailty_slice, intercept_posterior, loglik_events, loglik_obs, deviance, CurveTarget,
    GammaPrior, ModelData, ModelState, PriorConfig, RegressionSlice, Sym2,
};
use crate::data::PanelDataset;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Process};
use crate::kernels::{build_gram, GramFactor, KernelConfig, Smoothness};
use crate::rng::{derive_seed, rng_from_seed, ChainRng};
use crate::samplers::ars::{arms_sample_with, ars_sample, default_arms_abscissae, Target1D};
use crate::samplers::conjugate::{draw_inv_wishart, draw_normal, draw_sigma2_conjugate};
use crate::samplers::ess::ess_step;
use crate::samplers::hmc::{hmc_step, DualAveraging, HmcSettings};

/// Sampler used for the latent curve blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CurveSampler {
    #[default]
    Hmc,
    Ess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Number of grid cells `L`.
    pub grid_cells: usize,
    /// Matérn smoothness of the observation and event curves.
    pub nu: [Smoothness; 2],
    pub priors: PriorConfig,
    pub hmc: HmcSettings,
    pub curve_sampler: CurveSampler,
    pub n_chains: usize,
    pub seed: u64,
    /// Length-scales held fixed, in study time units.
    pub fixed_theta: Option<[f64; 2]>,
    /// Lower edge of the length-scale support used by ARMS.
    pub theta_lower: f64,
    /// Upper prior tail mass cut off from the length-scale support.
    pub theta_tail: f64,
    /// Start from an overdispersed random state instead of the default one.
    pub random_init: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_iter: 20_000,
            burn_in: 5_000,
            thin: 1,
            grid_cells: 100,
            nu: [Smoothness::FiveHalves; 2],
            priors: PriorConfig::default(),
            hmc: HmcSettings::default(),
            curve_sampler: CurveSampler::Hmc,
            n_chains: 1,
            seed: 1,
            fixed_theta: None,
            theta_lower: 1e-6,
            theta_tail: 1e-10,
            random_init: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::validation(format!(
                "burn_in < n_iter violated (burn_in = {}, n_iter = {})",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::validation("thin must be at least 1"));
        }
        if self.grid_cells < 2 {
            return Err(Error::validation("grid_cells must be at least 2"));
        }
        if self.n_chains == 0 {
            return Err(Error::validation("n_chains must be at least 1"));
        }
        if let Some(th) = self.fixed_theta {
            if !th.iter().all(|t| *t > 0.0 && t.is_finite()) {
                return Err(Error::validation("fixed_theta entries must be positive"));
            }
        }
        if !(self.theta_lower > 0.0) {
            return Err(Error::validation("theta_lower must be positive"));
        }
        if !(self.theta_tail > 0.0 && self.theta_tail < 0.5) {
            return Err(Error::validation("theta_tail must lie in (0, 0.5)"));
        }
        self.priors.validate()?;
        self.hmc.validate()
    }

    pub fn n_stored(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    fn adapt_iters(&self) -> usize {
        self.hmc.adapt_iters.unwrap_or(self.burn_in).min(self.burn_in)
    }

    /// Support `(lo, hi)` of the ARMS update of length-scale `k`.
    pub fn theta_support(&self, k: usize) -> (f64, f64) {
        let p = self.priors.theta_prior[k];
        let hi = GammaDist::new(p.shape, p.rate)
            .map(|g| g.inverse_cdf(1.0 - self.theta_tail))
            .unwrap_or(50.0);
        (self.theta_lower, hi.max(self.theta_lower * 10.0))
    }
}

/// Post-burn-in acceptance statistics of the Metropolis-type blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    /// HMC acceptance rate of `g1`, `g2`; one for elliptical slice.
    pub curve: [f64; 2],
    /// ARMS move rate of `θ1`, `θ2`; absent when the length-scales are fixed.
    pub theta: Option<[f64; 2]>,
    /// Final HMC step sizes.
    pub step_size: [f64; 2],
}

/// Stored draws of one chain plus everything needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub draws: Vec<ModelState>,
    /// Deviance `−2 log L` at each stored draw.
    pub deviance: Vec<f64>,
    /// Zero-based sweep index of each stored draw.
    pub iterations: Vec<usize>,
    pub acceptance: Acceptance,
    /// Wall-clock seconds; not persisted.
    pub runtime_secs: f64,
    pub seed: u64,
    pub config: FitConfig,
    /// `T_max`, the time rescaling factor.
    pub time_scale: f64,
    pub covariate_names: Vec<String>,
    pub subject_ids: Vec<String>,
}

impl ChainOutput {
    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.config.grid_cells).expect("validated grid")
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
struct Counters {
    curve_accept: [u64; 2],
    theta_moves: [u64; 2],
    post_burn: u64,
}

/// Complete sampler state, sufficient to resume a chain bit-identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub seed: u64,
    pub state: ModelState,
    rng: ChainRng,
    adaptation: [DualAveraging; 2],
    step_size: [f64; 2],
    counters: Counters,
    draws: Vec<ModelState>,
    deviance: Vec<f64>,
    iterations: Vec<usize>,
}

pub struct GibbsSampler {
    data: ModelData,
    cfg: FitConfig,
    seed: u64,
    centers: Vec<f64>,
    state: ModelState,
    rng: ChainRng,
    iteration: usize,
    /// Correlation factors `R(θ_k)` of each curve.
    corr: [GramFactor; 2],
    /// Covariance factors `σ_k² R(θ_k)`.
    cov: [GramFactor; 2],
    adaptation: [DualAveraging; 2],
    step_size: [f64; 2],
    counters: Counters,
    draws: Vec<ModelState>,
    deviance: Vec<f64>,
    iterations: Vec<usize>,
    covariate_names: Vec<String>,
    subject_ids: Vec<String>,
}

const CHAIN_STREAM: u64 = 0xC4A1;

impl GibbsSampler {
    pub fn new(dataset: &PanelDataset, cfg: &FitConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        dataset.check_fittable()?;
        if dataset.n_covariates() == 0 {
            return Err(Error::validation("at least one covariate is required"));
        }
        let grid = GridSpec::new(cfg.grid_cells)?;
        let data = ModelData::new(dataset, grid);
        let mut rng = rng_from_seed(seed);
        let state = initial_state(&data, cfg, &mut rng);
        let centers = grid.cell_centers();
        let corr = [
            correlation_factor(&centers, cfg.nu[0], state.theta[0], data.time_scale)?,
            correlation_factor(&centers, cfg.nu[1], state.theta[1], data.time_scale)?,
        ];
        let cov = [corr[0].scaled(state.sigma2[0]), corr[1].scaled(state.sigma2[1])];
        let ll = loglik_obs(&state, &data) + loglik_events(&state, &data);
        if !ll.is_finite() || !state.is_finite() {
            return Err(Error::Numerical("bad initial state".into()));
        }
        let eps = cfg.hmc.step_size;
        Ok(GibbsSampler {
            data,
            seed,
            centers,
            state,
            rng,
            iteration: 0,
            corr,
            cov,
            adaptation: [
                DualAveraging::new(eps, cfg.hmc.target_accept),
                DualAveraging::new(eps, cfg.hmc.target_accept),
            ],
            step_size: [eps; 2],
            counters: Counters::default(),
            draws: Vec::with_capacity(cfg.n_stored()),
            deviance: Vec::with_capacity(cfg.n_stored()),
            iterations: Vec::with_capacity(cfg.n_stored()),
            covariate_names: dataset.covariate_names.clone(),
            subject_ids: dataset.subjects.iter().map(|s| s.id.clone()).collect(),
            cfg: cfg.clone(),
        })
    }

    /// Rebuilds a sampler from a checkpoint taken with the same data and config.
    pub fn from_checkpoint(dataset: &PanelDataset, cfg: &FitConfig, cp: Checkpoint) -> Result<Self> {
        let mut s = GibbsSampler::new(dataset, cfg, cp.seed)?;
        s.corr = [
            correlation_factor(&s.centers, cfg.nu[0], cp.state.theta[0], s.data.time_scale)?,
            correlation_factor(&s.centers, cfg.nu[1], cp.state.theta[1], s.data.time_scale)?,
        ];
        s.cov = [s.corr[0].scaled(cp.state.sigma2[0]), s.corr[1].scaled(cp.state.sigma2[1])];
        s.state = cp.state;
        s.rng = cp.rng;
        s.iteration = cp.iteration;
        s.adaptation = cp.adaptation;
        s.step_size = cp.step_size;
        s.counters = cp.counters;
        s.draws = cp.draws;
        s.deviance = cp.deviance;
        s.iterations = cp.iterations;
        Ok(s)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            iteration: self.iteration,
            seed: self.seed,
            state: self.state.clone(),
            rng: self.rng.clone(),
            adaptation: self.adaptation.clone(),
            step_size: self.step_size,
            counters: self.counters,
            draws: self.draws.clone(),
            deviance: self.deviance.clone(),
            iterations: self.iterations.clone(),
        }
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn data(&self) -> &ModelData {
        &self.data
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.cfg.n_iter
    }

    /// Runs one full sweep and stores the draw if it is kept.
    pub fn step(&mut self) -> Result<()> {
        self.sweep()?;
        let it = self.iteration;
        self.iteration += 1;
        if it >= self.cfg.burn_in {
            self.counters.post_burn += 1;
            if (it - self.cfg.burn_in + 1) % self.cfg.thin == 0 {
                self.store(it)?;
            }
        }
        Ok(())
    }

    fn store(&mut self, it: usize) -> Result<()> {
        let s = &self.state;
        if !s.is_finite() || !s.d.is_spd() || s.sigma2.iter().chain(&s.theta).any(|v| !(*v > 0.0)) {
            return Err(Error::Numerical(format!("invalid state at iteration {it}")));
        }
        self.deviance.push(deviance(s, &self.data));
        self.draws.push(s.clone());
        self.iterations.push(it);
        Ok(())
    }

    /// Runs the remaining sweeps and returns the stored chain.
    pub fn run(mut self) -> Result<ChainOutput> {
        let start = Instant::now();
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.finish(start.elapsed().as_secs_f64()))
    }

    fn finish(self, runtime_secs: f64) -> ChainOutput {
        let n = self.counters.post_burn.max(1) as f64;
        let c = &self.counters;
        let curve = match self.cfg.curve_sampler {
            CurveSampler::Hmc => [c.curve_accept[0] as f64 / n, c.curve_accept[1] as f64 / n],
            CurveSampler::Ess => [1.0, 1.0],
        };
        let theta = if self.cfg.fixed_theta.is_some() {
            None
        } else {
            Some([c.theta_moves[0] as f64 / n, c.theta_moves[1] as f64 / n])
        };
        ChainOutput {
            draws: self.draws,
            deviance: self.deviance,
            iterations: self.iterations,
            acceptance: Acceptance { curve, theta, step_size: self.step_size },
            runtime_secs,
            seed: self.seed,
            config: self.cfg,
            time_scale: self.data.time_scale,
            covariate_names: self.covariate_names,
            subject_ids: self.subject_ids,
        }
    }

    fn sweep(&mut self) -> Result<()> {
        self.update_regression(Process::Observation)?;
        self.update_regression(Process::Event)?;
        self.update_intercepts();
        self.update_frailties()?;
        self.update_d();
        self.update_curve(Process::Observation);
        self.update_curve(Process::Event);
        self.update_sigma2();
        if self.cfg.fixed_theta.is_none() {
            self.update_theta(0)?;
            self.update_theta(1)?;
        }
        Ok(())
    }

    fn update_regression(&mut self, which: Process) -> Result<()> {
        let integrals = match which {
            Process::Observation => self.data.obs_integrals(&self.state.g1),
            Process::Event => self.data.event_exposures(&self.state.g2),
        };
        let mut coef = self.state.coefficients(which).to_vec();
        for k in 0..coef.len() {
            let slice = RegressionSlice::new(
                which,
                k,
                &coef,
                &self.state,
                &self.data,
                &integrals,
                self.cfg.priors.coef_prior_var,
            );
            let f = |c: f64| slice.logpdf(c);
            coef[k] = ars_sample(&Target1D::new(&f), coef[k], &mut self.rng)?;
        }
        match which {
            Process::Observation => self.state.gamma = coef,
            Process::Event => self.state.beta = coef,
        }
        Ok(())
    }

    fn update_intercepts(&mut self) {
        let v = self.cfg.priors.intercept_prior_var;
        let (m, var) = intercept_posterior(&self.state.g1, &self.cov[0], v);
        self.state.gamma0 = draw_normal(m, var, &mut self.rng);
        let (m, var) = intercept_posterior(&self.state.g2, &self.cov[1], v);
        self.state.beta0 = draw_normal(m, var, &mut self.rng);
    }

    fn update_frailties(&mut self) -> Result<()> {
        let obs = self.data.obs_integrals(&self.state.g1);
        let ev = self.data.event_exposures(&self.state.g2);
        for i in 0..self.data.n_subjects() {
            let slice = frailty_slice(i, &self.state, &self.data, obs[i], ev[i])?;
            let mut z = self.state.z[i];
            for k in 0..2 {
                let f = |v: f64| {
                    let mut zz = z;
                    zz[k] = v;
                    slice.logpdf(zz)
                };
                z[k] = ars_sample(&Target1D::new(&f), z[k], &mut self.rng)?;
            }
            self.state.z[i] = z;
        }
        Ok(())
    }

    fn update_d(&mut self) {
        let mut s = self.cfg.priors.v0;
        for z in &self.state.z {
            s = s.add(&Sym2::new(z[0] * z[0], z[0] * z[1], z[1] * z[1]));
        }
        let df = self.data.n_subjects() as f64 + self.cfg.priors.k0;
        self.state.d = draw_inv_wishart(df, &s, &mut self.rng);
    }

    fn update_curve(&mut self, which: Process) {
        let k = which.index();
        let target = CurveTarget::new(which, &self.state, &self.data, &self.cov[k]);
        let current = self.state.curve(which).to_vec();
        let new = match self.cfg.curve_sampler {
            CurveSampler::Hmc => {
                let adapting = self.iteration < self.cfg.adapt_iters();
                let eps = if adapting { self.adaptation[k].current() } else { self.step_size[k] };
                let f = |g: &[f64]| target.logpdf_grad(g);
                let out = hmc_step(&current, &f, &self.cfg.hmc, eps, &self.cov[k], &mut self.rng);
                if adapting {
                    self.adaptation[k].update(out.accept_prob);
                    self.step_size[k] = self.adaptation[k].final_step();
                }
                if self.iteration >= self.cfg.burn_in && out.accepted {
                    self.counters.curve_accept[k] += 1;
                }
                out.position
            }
            CurveSampler::Ess => {
                let mean = vec![self.state.mean_level(which); current.len()];
                let ll = target.data_loglik(&current);
                let f = |g: &[f64]| target.data_loglik(g);
                ess_step(&current, ll, f, &mean, &self.cov[k], &mut self.rng).position
            }
        };
        match which {
            Process::Observation => self.state.g1 = new,
            Process::Event => self.state.g2 = new,
        }
    }

    fn update_sigma2(&mut self) {
        let p = &self.cfg.priors;
        for k in 0..2 {
            let which = if k == 0 { Process::Observation } else { Process::Event };
            let s2 = draw_sigma2_conjugate(
                self.state.curve(which),
                self.state.mean_level(which),
                &self.corr[k],
                p.a0,
                p.b0,
                &mut self.rng,
            );
            self.state.sigma2[k] = s2;
            self.cov[k] = self.corr[k].scaled(s2);
        }
    }

    fn update_theta(&mut self, k: usize) -> Result<()> {
        let which = if k == 0 { Process::Observation } else { Process::Event };
        let prior: GammaPrior = self.cfg.priors.theta_prior[k];
        let sigma2 = self.state.sigma2[k];
        let mu = self.state.mean_level(which);
        let centered: Vec<f64> = self.state.curve(which).iter().map(|v| v - mu).collect();
        let l = centered.len() as f64;
        let (lo, hi) = self.cfg.theta_support(k);
        let nu = self.cfg.nu[k];
        let scale = self.data.time_scale;
        let centers = &self.centers;
        let current = self.state.theta[k].clamp(lo * (1.0 + 1e-12), hi * (1.0 - 1e-12));
        let cache: RefCell<Vec<(f64, GramFactor)>> = RefCell::new(Vec::new());
        let f = |th: f64| -> f64 {
            let r = match correlation_factor(centers, nu, th, scale) {
                Ok(r) => r,
                Err(_) => return f64::NEG_INFINITY,
            };
            let v = -0.5 * l * sigma2.ln() - 0.5 * r.log_det() - 0.5 * r.quad_form(&centered) / sigma2
                + prior.log_kernel(th);
            cache.borrow_mut().push((th, r));
            v
        };
        let target = Target1D::new(&f).with_support(lo, hi).non_concave();
        let step = arms_sample_with(&target, &default_arms_abscissae(lo, hi), current, &mut self.rng)?;
        if step.moved {
            let factor = cache
                .borrow_mut()
                .drain(..)
                .find(|(th, _)| *th == step.value)
                .map(|(_, r)| r);
            let r = match factor {
                Some(r) => r,
                None => correlation_factor(centers, nu, step.value, scale)?,
            };
            self.state.theta[k] = step.value;
            self.cov[k] = r.scaled(sigma2);
            self.corr[k] = r;
            if self.iteration >= self.cfg.burn_in {
                self.counters.theta_moves[k] += 1;
            }
        }
        Ok(())
    }
}

/// Factor of the Matérn correlation matrix on the cell centers, with the
/// length-scale given in study time units.
pub fn correlation_factor(centers: &[f64], nu: Smoothness, theta: f64, time_scale: f64) -> Result<GramFactor> {
    build_gram(centers, &KernelConfig::new(nu, theta / time_scale, 1.0)?, 0.0)
}

fn initial_state<R: Rng + ?Sized>(data: &ModelData, cfg: &FitConfig, rng: &mut R) -> ModelState {
    let n = data.n_subjects();
    let p = data.n_covariates;
    let l = data.grid.len();
    let h = data.grid.cell_length();
    // Method-of-moments constant intensities on the rescaled time axis.
    let visits: f64 = data.subjects.iter().map(|s| s.n_visits as f64).sum();
    let exposure: f64 = data.subjects.iter().map(|s| s.censor_cells as f64 * h).sum();
    let events: f64 = data.subjects.iter().map(|s| s.final_count as f64).sum();
    let event_exposure: f64 = data
        .subjects
        .iter()
        .map(|s| s.intervals.last().map_or(0.0, |iv| iv.hi as f64 * h))
        .sum();
    let level = |count: f64, time: f64| {
        if n == 0 || time <= 0.0 {
            0.0
        } else {
            (count.max(0.5) / time).ln()
        }
    };
    let mut gamma0 = level(visits, exposure);
    let mut beta0 = level(events, event_exposure);
    let theta = match cfg.fixed_theta {
        Some(t) => t,
        None => [cfg.priors.theta_prior[0].mean(), cfg.priors.theta_prior[1].mean()],
    };
    let mut gamma = vec![0.0; p];
    let mut beta = vec![0.0; p];
    let mut z = vec![[0.0, 0.0]; n];
    if cfg.random_init {
        let mut jitter = |scale: f64| scale * rng.sample::<f64, _>(StandardNormal);
        for c in gamma.iter_mut().chain(beta.iter_mut()) {
            *c = jitter(0.5);
        }
        gamma0 += jitter(0.5);
        beta0 += jitter(0.5);
        for zi in &mut z {
            *zi = [jitter(0.3), jitter(0.3)];
        }
    }
    let mut state = ModelState {
        gamma,
        beta,
        gamma0,
        beta0,
        z,
        d: Sym2::identity(),
        g1: vec![gamma0; l],
        g2: vec![beta0; l],
        sigma2: [0.5, 0.5],
        theta,
    };
    // Keep the default start inside the support of every count likelihood.
    if !loglik_events(&state, data).is_finite() {
        state.g2 = vec![beta0.max(0.0); l];
    }
    state
}

/// Runs `cfg.n_chains` independent chains; chain `c` uses the seed
/// [`chain_seed`]`(cfg.seed, c)`.
pub fn run_chains(dataset: &PanelDataset, cfg: &FitConfig) -> Result<Vec<ChainOutput>> {
    use rayon::prelude::*;
    cfg.validate()?;
    (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| gibbs_run_seeded(dataset, cfg, chain_seed(cfg.seed, c)))
        .collect()
}

pub fn chain_seed(master: u64, chain: usize) -> u64 {
    derive_seed(master, CHAIN_STREAM, chain as u64)
}

/// Runs a single chain seeded with `chain_seed(cfg.seed, 0)`.
pub fn gibbs_run(dataset: &PanelDataset, cfg: &FitConfig) -> Result<ChainOutput> {
    gibbs_run_seeded(dataset, cfg, chain_seed(cfg.seed, 0))
}

pub fn gibbs_run_seeded(dataset: &PanelDataset, cfg: &FitConfig, seed: u64) -> Result<ChainOutput> {
    GibbsSampler::new(dataset, cfg, seed)?.run()
}
