//! Synthetic panel count data and the replication study harness.
//!
//! Visit times are drawn from a nonhomogeneous Poisson process by thinning;
//! counts between consecutive visits are Poisson with the exact integral of
//! the event intensity over the interval.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::conditionals::Sym2;
use crate::data::{PanelDataset, Subject};
use crate::engine::{gibbs_run_seeded, FitConfig};
use crate::error::{Error, Result};
use crate::grid::rescaled_cumulative_at;
use crate::kernels::Smoothness;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::quantile;

/// Closed-form baseline intensities in original time units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Intensity {
    /// `rate`.
    Constant { rate: f64 },
    /// `coef / t` for `t ≥ cutoff`, zero before the cutoff.
    Reciprocal { coef: f64, cutoff: f64 },
    /// `amp · exp(−t / scale)`.
    ExpDecay { amp: f64, scale: f64 },
    /// `amp · exp(−((t − center) / width)²)`.
    GaussBump { amp: f64, center: f64, width: f64 },
    /// `slope · t`.
    Linear { slope: f64 },
    Sum { terms: Vec<Intensity> },
}

impl Intensity {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Intensity::Constant { rate } => *rate,
            Intensity::Reciprocal { coef, cutoff } => {
                if t < *cutoff {
                    0.0
                } else {
                    coef / t
                }
            }
            Intensity::ExpDecay { amp, scale } => amp * (-t / scale).exp(),
            Intensity::GaussBump { amp, center, width } => {
                let u = (t - center) / width;
                amp * (-u * u).exp()
            }
            Intensity::Linear { slope } => slope * t,
            Intensity::Sum { terms } => terms.iter().map(|f| f.eval(t)).sum(),
        }
    }

    /// `∫_a^b` of the intensity, for `0 ≤ a ≤ b`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self {
            Intensity::Constant { rate } => rate * (b - a),
            Intensity::Reciprocal { coef, cutoff } => {
                let lo = a.max(*cutoff);
                if b <= lo {
                    0.0
                } else {
                    coef * (b / lo).ln()
                }
            }
            Intensity::ExpDecay { amp, scale } => {
                amp * scale * ((-a / scale).exp() - (-b / scale).exp())
            }
            Intensity::GaussBump { amp, center, width } => {
                let half_sqrt_pi = 0.5 * std::f64::consts::PI.sqrt();
                amp * width * half_sqrt_pi * (erf((b - center) / width) - erf((a - center) / width))
            }
            Intensity::Linear { slope } => 0.5 * slope * (b * b - a * a),
            Intensity::Sum { terms } => terms.iter().map(|f| f.integral(a, b)).sum(),
        }
    }

    /// An upper bound of the intensity on `[a, b]`.
    pub fn bound(&self, a: f64, b: f64) -> f64 {
        match self {
            Intensity::Constant { rate } => *rate,
            Intensity::Reciprocal { coef, cutoff } => {
                if b < *cutoff {
                    0.0
                } else {
                    coef / a.max(*cutoff)
                }
            }
            Intensity::ExpDecay { amp, scale } => {
                let t = if *scale > 0.0 { a } else { b };
                amp * (-t / scale).exp()
            }
            Intensity::GaussBump { amp, center, width } => {
                let d = if *center < a {
                    a - center
                } else if *center > b {
                    center - b
                } else {
                    0.0
                };
                amp * (-(d / width).powi(2)).exp()
            }
            Intensity::Linear { slope } => slope * a.max(b),
            Intensity::Sum { terms } => terms.iter().map(|f| f.bound(a, b)).sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::validation(format!("invalid intensity: {m}")));
        match self {
            Intensity::Constant { rate } if !(*rate >= 0.0) => bad("rate must be nonnegative"),
            Intensity::Reciprocal { coef, cutoff } if !(*coef >= 0.0 && *cutoff > 0.0) => {
                bad("reciprocal needs coef >= 0 and cutoff > 0")
            }
            Intensity::ExpDecay { amp, scale } if !(*amp >= 0.0 && *scale != 0.0) => {
                bad("exp_decay needs amp >= 0 and nonzero scale")
            }
            Intensity::GaussBump { amp, width, .. } if !(*amp >= 0.0 && *width > 0.0) => {
                bad("gauss_bump needs amp >= 0 and width > 0")
            }
            Intensity::Linear { slope } if !(*slope >= 0.0) => bad("linear slope must be nonnegative"),
            Intensity::Sum { terms } => terms.iter().try_for_each(|t| t.validate()),
            _ => Ok(()),
        }
    }
}

/// Dominating constant for an arbitrary intensity on `[a, b]`: the maximum
/// over a 10,000-point grid, inflated by 5%.
pub fn grid_bound(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let n = 10_000;
    (0..=n)
        .map(|k| f(a + (b - a) * k as f64 / n as f64))
        .fold(0.0, f64::max)
        * 1.05
}

/// Event times of a nonhomogeneous Poisson process on `(0, t_end]` by
/// Lewis–Shedler thinning against the constant rate `bound`.
pub fn simulate_nhpp<R: Rng + ?Sized>(
    intensity: impl Fn(f64) -> f64,
    t_end: f64,
    bound: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    if !(bound > 0.0) || !(t_end > 0.0) {
        return Ok(out);
    }
    let mut t = 0.0;
    loop {
        t += -(1.0 - rng.random::<f64>()).ln() / bound;
        if t > t_end {
            return Ok(out);
        }
        let v = intensity(t);
        if v > bound * (1.0 + 1e-12) {
            return Err(Error::Numerical(format!(
                "dominating bound violated: intensity {v} exceeds bound {bound} at t = {t}"
            )));
        }
        if rng.random::<f64>() * bound < v {
            out.push(t);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CensorDist {
    Uniform { lo: f64, hi: f64 },
    Fixed { value: f64 },
}

impl CensorDist {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            CensorDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            CensorDist::Fixed { value } => *value,
        }
    }

    /// Largest possible censoring time.
    pub fn upper(&self) -> f64 {
        match self {
            CensorDist::Uniform { hi, .. } => *hi,
            CensorDist::Fixed { value } => *value,
        }
    }
}

/// How the second gamma parameter is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GammaParam {
    #[default]
    ShapeRate,
    ShapeScale,
}

fn draw_gamma<R: Rng + ?Sized>(shape: f64, second: f64, param: GammaParam, rng: &mut R) -> f64 {
    let scale = match param {
        GammaParam::ShapeRate => 1.0 / second,
        GammaParam::ShapeScale => second,
    };
    Gamma::new(shape, scale).expect("valid gamma parameters").sample(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrailtyModel {
    /// `u^O ~ Ga(shape, second)`, `u^N = (u^O)^power + Ga(extra_shape, extra_second)`.
    LinkedGamma {
        shape: f64,
        second: f64,
        power: f64,
        extra_shape: f64,
        extra_second: f64,
        #[serde(default)]
        param: GammaParam,
    },
    /// Independent `log u ~ N(0, var)` for both processes.
    IndependentLognormal { var: f64 },
    /// `(log u^O, log u^N) ~ N2(0, D)`.
    BivariateLognormal { d: Sym2 },
}

impl FrailtyModel {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        match self {
            FrailtyModel::LinkedGamma { shape, second, power, extra_shape, extra_second, param } => {
                let uo = draw_gamma(*shape, *second, *param, rng);
                let un = uo.powf(*power) + draw_gamma(*extra_shape, *extra_second, *param, rng);
                [uo, un]
            }
            FrailtyModel::IndependentLognormal { var } => {
                let s = var.sqrt();
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                [(s * a).exp(), (s * b).exp()]
            }
            FrailtyModel::BivariateLognormal { d } => {
                let [l11, l21, l22] = d.cholesky().expect("validated SPD");
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                [(l11 * a).exp(), (l21 * a + l22 * b).exp()]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateDist {
    Bernoulli { p: f64 },
    Uniform,
}

impl CovariateDist {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            CovariateDist::Bernoulli { p } => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            CovariateDist::Uniform => rng.random::<f64>(),
        }
    }
}

/// A complete data-generating mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub n: usize,
    pub mu0: Intensity,
    pub lambda0: Intensity,
    pub censor: CensorDist,
    pub frailty: FrailtyModel,
    pub covariates: Vec<CovariateDist>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    /// Window `[0, T]` over which the cumulative baseline is rescaled to end
    /// at one; defaults to the largest censoring time.
    #[serde(default)]
    pub rescale_horizon: Option<f64>,
}

/// Left truncation point of the `1/t` baseline of setting 1.
pub const RECIPROCAL_CUTOFF: f64 = 0.01;

impl ScenarioSpec {
    /// Built-in simulation settings 1, 2 and 3 with `n` subjects.
    pub fn setting(k: u8, n: usize) -> Result<Self> {
        let spec = match k {
            1 => ScenarioSpec {
                name: "setting1".into(),
                n,
                mu0: Intensity::Constant { rate: 0.125 },
                lambda0: Intensity::Reciprocal { coef: 1.0, cutoff: RECIPROCAL_CUTOFF },
                censor: CensorDist::Uniform { lo: 2.0, hi: 9.0 },
                frailty: FrailtyModel::LinkedGamma {
                    shape: 2.0,
                    second: 0.2,
                    power: 0.5,
                    extra_shape: 1.0,
                    extra_second: 2.0,
                    param: GammaParam::ShapeRate,
                },
                covariates: vec![CovariateDist::Bernoulli { p: 0.5 }],
                gamma: vec![1.0],
                beta: vec![1.0],
                rescale_horizon: None,
            },
            2 => ScenarioSpec {
                name: "setting2".into(),
                n,
                mu0: Intensity::Sum {
                    terms: vec![
                        Intensity::ExpDecay { amp: 0.25, scale: 20.0 },
                        Intensity::GaussBump { amp: 0.125, center: 70.0, width: 40.0 },
                    ],
                },
                lambda0: Intensity::Sum {
                    terms: vec![
                        Intensity::ExpDecay { amp: 0.125, scale: 10.0 },
                        Intensity::GaussBump { amp: 0.0625, center: 70.0, width: 20.0 },
                    ],
                },
                censor: CensorDist::Uniform { lo: 50.0, hi: 100.0 },
                frailty: FrailtyModel::IndependentLognormal { var: 0.25 },
                covariates: vec![CovariateDist::Uniform],
                gamma: vec![1.0],
                beta: vec![1.0],
                rescale_horizon: None,
            },
            3 => ScenarioSpec {
                name: "setting3".into(),
                n,
                mu0: Intensity::ExpDecay { amp: 0.25, scale: 100.0 },
                lambda0: Intensity::Sum {
                    terms: [20.0, 50.0, 80.0]
                        .iter()
                        .map(|&c| Intensity::GaussBump { amp: 0.25, center: c, width: 5.0 })
                        .collect(),
                },
                censor: CensorDist::Fixed { value: 100.0 },
                frailty: FrailtyModel::BivariateLognormal { d: Sym2::new(0.25, 0.125, 0.25) },
                covariates: vec![CovariateDist::Uniform, CovariateDist::Uniform],
                gamma: vec![-1.0, 1.0],
                beta: vec![-1.0, 1.0],
                rescale_horizon: None,
            },
            _ => return Err(Error::validation(format!("unknown setting {k} (expected 1, 2 or 3)"))),
        };
        Ok(spec)
    }

    /// Fit configuration used for the built-in settings: ν = 2.5 and the
    /// length-scales held fixed.
    pub fn default_fit_config(&self) -> FitConfig {
        let theta = match self.name.as_str() {
            "setting1" => [0.5, 0.5],
            "setting3" => [4.0, 2.0],
            _ => [4.0, 4.0],
        };
        FitConfig {
            nu: [Smoothness::FiveHalves; 2],
            fixed_theta: Some(theta),
            ..FitConfig::default()
        }
    }

    /// Evaluation times of the rescaled cumulative baseline.
    pub fn default_eval_times(&self) -> Vec<f64> {
        let t = self.horizon();
        [0.2, 0.4, 0.6, 0.8].iter().map(|q| q * t).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.rescale_horizon.unwrap_or_else(|| self.censor.upper())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::validation("scenario n must be at least 1"));
        }
        let p = self.covariates.len();
        if p == 0 {
            return Err(Error::validation("scenario needs at least one covariate"));
        }
        if self.gamma.len() != p || self.beta.len() != p {
            return Err(Error::validation(format!(
                "scenario gamma and beta must have {p} entries to match covariates"
            )));
        }
        self.mu0.validate()?;
        self.lambda0.validate()?;
        match self.censor {
            CensorDist::Uniform { lo, hi } if !(lo > 0.0 && hi >= lo) => {
                return Err(Error::validation("censor uniform needs 0 < lo <= hi"));
            }
            CensorDist::Fixed { value } if !(value > 0.0) => {
                return Err(Error::validation("censor value must be positive"));
            }
            _ => {}
        }
        match &self.frailty {
            FrailtyModel::BivariateLognormal { d } if !d.is_spd() => {
                return Err(Error::validation("frailty covariance d must be positive-definite"));
            }
            FrailtyModel::IndependentLognormal { var } if !(*var >= 0.0) => {
                return Err(Error::validation("frailty var must be nonnegative"));
            }
            _ => {}
        }
        for c in &self.covariates {
            if let CovariateDist::Bernoulli { p } = c {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::validation("bernoulli p must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// `∫_0^t λ0 / ∫_0^T λ0` with `T` the rescaling horizon.
    pub fn true_rescaled_lambda0(&self, t: f64) -> f64 {
        let total = self.lambda0.integral(0.0, self.horizon());
        self.lambda0.integral(0.0, t.min(self.horizon())) / total
    }
}

/// Ground truth behind a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub scenario: ScenarioSpec,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    /// Frailties `(u^O_i, u^N_i)`.
    pub frailties: Vec<[f64; 2]>,
    pub eval_times: Vec<f64>,
    pub rescaled_lambda0: Vec<f64>,
}

/// Simulates one dataset from `spec`.
pub fn simulate_dataset<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<(PanelDataset, Truth)> {
    spec.validate()?;
    let names: Vec<String> = (1..=spec.covariates.len()).map(|k| format!("x{k}")).collect();
    let mut subjects = Vec::with_capacity(spec.n);
    let mut frailties = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let x: Vec<f64> = spec.covariates.iter().map(|c| c.sample(rng)).collect();
        let censor = spec.censor.sample(rng);
        let u = spec.frailty.sample(rng);
        let obs_scale = (dot(&x, &spec.gamma)).exp() * u[0];
        let event_scale = (dot(&x, &spec.beta)).exp() * u[1];
        let bound = spec.mu0.bound(0.0, censor) * obs_scale;
        let times = simulate_nhpp(|t| spec.mu0.eval(t) * obs_scale, censor, bound, rng)?;
        let mut counts = Vec::with_capacity(times.len());
        let mut total = 0u64;
        let mut prev = 0.0;
        for &t in &times {
            let mean = event_scale * spec.lambda0.integral(prev, t);
            total += draw_poisson(mean, rng);
            counts.push(total);
            prev = t;
        }
        subjects.push(Subject::new(format!("s{:04}", i + 1), times, counts, x, censor)?);
        frailties.push(u);
    }
    let data = PanelDataset::new(subjects, names)?;
    let eval_times = spec.default_eval_times();
    let truth = Truth {
        scenario: spec.clone(),
        gamma: spec.gamma.clone(),
        beta: spec.beta.clone(),
        frailties,
        rescaled_lambda0: eval_times.iter().map(|&t| spec.true_rescaled_lambda0(t)).collect(),
        eval_times,
    };
    Ok((data, truth))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn draw_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

/// Point estimate and central 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub estimate: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// Named estimates produced by one fit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Estimates {
    pub values: Vec<(String, IntervalEstimate)>,
}

/// Anything that maps a dataset to interval estimates of `beta`, `gamma` and
/// the rescaled cumulative event baseline at the evaluation times.
pub trait Estimator: Sync {
    fn estimate(&self, data: &PanelDataset, eval_times: &[f64], seed: u64) -> Result<Estimates>;
}

/// Names of the study quantities, in a fixed order.
pub fn study_names(p: usize, eval_times: &[f64]) -> Vec<String> {
    let mut names = Vec::new();
    for k in 1..=p {
        names.push(format!("beta[x{k}]"));
    }
    for k in 1..=p {
        names.push(format!("gamma[x{k}]"));
    }
    for t in eval_times {
        names.push(format!("Lambda0({t})"));
    }
    names
}

fn truth_values(spec: &ScenarioSpec, eval_times: &[f64]) -> Vec<f64> {
    let mut v = spec.beta.clone();
    v.extend(&spec.gamma);
    v.extend(eval_times.iter().map(|&t| spec.true_rescaled_lambda0(t)));
    v
}

/// The Gibbs sampler used as an estimator: posterior means and central 95%
/// credible intervals.
#[derive(Debug, Clone)]
pub struct GibbsEstimator {
    pub config: FitConfig,
}

fn interval(xs: &[f64]) -> IntervalEstimate {
    IntervalEstimate {
        estimate: crate::stats::mean(xs),
        lo95: quantile(xs, 0.025),
        hi95: quantile(xs, 0.975),
    }
}

impl Estimator for GibbsEstimator {
    fn estimate(&self, data: &PanelDataset, eval_times: &[f64], seed: u64) -> Result<Estimates> {
        let chain = gibbs_run_seeded(data, &self.config, seed)?;
        let p = data.n_covariates();
        let names = study_names(p, eval_times);
        let grid = chain.grid();
        let mut values = Vec::new();
        for k in 0..p {
            let xs: Vec<f64> = chain.draws.iter().map(|s| s.beta[k]).collect();
            values.push((names[k].clone(), interval(&xs)));
        }
        for k in 0..p {
            let xs: Vec<f64> = chain.draws.iter().map(|s| s.gamma[k]).collect();
            values.push((names[p + k].clone(), interval(&xs)));
        }
        for (j, &t) in eval_times.iter().enumerate() {
            let xs: Vec<f64> = chain
                .draws
                .iter()
                .map(|s| rescaled_cumulative_at(&s.g2, &grid, t / chain.time_scale))
                .collect();
            values.push((names[2 * p + j].clone(), interval(&xs)));
        }
        Ok(Estimates { values })
    }
}

/// One row of `study.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub replicate: usize,
    pub name: String,
    pub estimate: f64,
    pub truth: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// One row of `study_summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummaryRow {
    pub name: String,
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
    pub cp: f64,
    pub mean_estimate: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub replicates: usize,
    pub failures: Vec<(usize, String)>,
    pub rows: Vec<StudyRow>,
    pub summary: Vec<StudySummaryRow>,
}

impl StudyResult {
    pub fn get(&self, name: &str) -> Option<&StudySummaryRow> {
        self.summary.iter().find(|r| r.name == name)
    }
}

const SIM_STREAM: u64 = 0x5151;
const FIT_STREAM: u64 = 0xF17;

/// Simulates `replicates` datasets from `spec`, fits each with `estimator`
/// and aggregates bias, RMSE and coverage. Replicates run on `jobs` threads;
/// results do not depend on `jobs`.
pub fn replicate_study(
    spec: &ScenarioSpec,
    replicates: usize,
    estimator: &dyn Estimator,
    eval_times: &[f64],
    seed: u64,
    jobs: usize,
) -> Result<StudyResult> {
    use rayon::prelude::*;
    if replicates < 2 {
        return Err(Error::validation("a study needs at least 2 replicates"));
    }
    spec.validate()?;
    let names = study_names(spec.covariates.len(), eval_times);
    let truth = truth_values(spec, eval_times);
    let run = |r: usize| -> Result<Estimates> {
        let mut rng = rng_from_seed(derive_seed(seed, SIM_STREAM, r as u64));
        let (data, _) = simulate_dataset(spec, &mut rng)?;
        estimator.estimate(&data, eval_times, derive_seed(seed, FIT_STREAM, r as u64))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<Estimates>> = pool.install(|| (0..replicates).into_par_iter().map(run).collect());
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(est) => {
                for (name, tv) in names.iter().zip(&truth) {
                    let e = est
                        .values
                        .iter()
                        .find(|(n, _)| n == name)
                        .map(|(_, e)| *e)
                        .ok_or_else(|| Error::Numerical(format!("estimator did not report {name}")))?;
                    rows.push(StudyRow {
                        replicate: r,
                        name: name.clone(),
                        estimate: e.estimate,
                        truth: *tv,
                        lo95: e.lo95,
                        hi95: e.hi95,
                    });
                }
            }
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    let summary = names
        .iter()
        .zip(&truth)
        .map(|(name, tv)| {
            let sel: Vec<&StudyRow> = rows.iter().filter(|r| &r.name == name).collect();
            let n = sel.len();
            let nf = n.max(1) as f64;
            let bias = sel.iter().map(|r| r.estimate - r.truth).sum::<f64>() / nf;
            let mse = sel.iter().map(|r| (r.estimate - r.truth).powi(2)).sum::<f64>() / nf;
            let cover = sel.iter().filter(|r| r.lo95 <= r.truth && r.truth <= r.hi95).count();
            StudySummaryRow {
                name: name.clone(),
                truth: *tv,
                bias,
                rmse: mse.sqrt(),
                cp: cover as f64 / nf,
                mean_estimate: sel.iter().map(|r| r.estimate).sum::<f64>() / nf,
                n,
            }
        })
        .collect();
    Ok(StudyResult { replicates, failures, rows, summary })
}

/// Writes `study.csv` and `study_summary.csv`.
pub fn write_study(dir: &Path, result: &StudyResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("study.csv"))?;
    for r in &result.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("study_summary.csv"))?;
    for r in &result.summary {
        w.serialize(r)?;
    }
    w.flush()?;
    if !result.failures.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("study_failures.csv"))?;
        w.write_record(["replicate", "error"])?;
        for (r, e) in &result.failures {
            w.write_record([r.to_string(), e.clone()])?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_integrals_match_quadrature() {
        let f = ScenarioSpec::setting(3, 1).unwrap().lambda0;
        let n = 200_000;
        let (a, b) = (3.0, 71.0);
        let h = (b - a) / n as f64;
        let q: f64 = (0..n).map(|k| f.eval(a + (k as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((q - f.integral(a, b)).abs() < 1e-8);
    }

    #[test]
    fn rescaled_truth_ends_at_one() {
        let s = ScenarioSpec::setting(3, 1).unwrap();
        assert_eq!(s.true_rescaled_lambda0(100.0), 1.0);
    }

    #[test]
    fn unknown_setting_is_rejected() {
        assert!(ScenarioSpec::setting(4, 10).is_err());
    }
}
