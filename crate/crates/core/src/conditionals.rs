//! Likelihoods, full conditional densities and gradients of the bivariate
//! log-Gaussian Cox process model.
//!
//! The curves `g1`, `g2` hold the total log baseline intensity on the grid
//! (rescaled time), including their mean levels; `gamma0` and `beta0` only
//! appear as the mean of the GP prior. Regression terms therefore carry no
//! intercept.

use serde::{Deserialize, Serialize};

use crate::data::PanelDataset;
use crate::error::{Error, Result};
use crate::grid::{exp_prefix, GridSpec, Process};
use crate::kernels::{GramFactor, KernelConfig};
use crate::stats::ln_factorial;

/// Symmetric 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub d11: f64,
    pub d12: f64,
    pub d22: f64,
}

impl Sym2 {
    pub fn new(d11: f64, d12: f64, d22: f64) -> Self {
        Sym2 { d11, d12, d22 }
    }

    pub fn identity() -> Self {
        Sym2::new(1.0, 0.0, 1.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Sym2::new(self.d11 * c, self.d12 * c, self.d22 * c)
    }

    pub fn add(&self, o: &Sym2) -> Self {
        Sym2::new(self.d11 + o.d11, self.d12 + o.d12, self.d22 + o.d22)
    }

    pub fn det(&self) -> f64 {
        self.d11 * self.d22 - self.d12 * self.d12
    }

    pub fn is_spd(&self) -> bool {
        self.d11 > 0.0 && self.det() > 0.0 && self.d11.is_finite() && self.d22.is_finite()
    }

    pub fn inverse(&self) -> Option<Sym2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Sym2::new(self.d22 / det, -self.d12 / det, self.d11 / det))
    }

    /// Lower Cholesky factor `[[l11, 0], [l21, l22]]`.
    pub fn cholesky(&self) -> Option<[f64; 3]> {
        if !self.is_spd() {
            return None;
        }
        let l11 = self.d11.sqrt();
        let l21 = self.d12 / l11;
        let l22 = (self.d22 - l21 * l21).sqrt();
        Some([l11, l21, l22])
    }

    pub fn quad(&self, z: [f64; 2]) -> f64 {
        self.d11 * z[0] * z[0] + 2.0 * self.d12 * z[0] * z[1] + self.d22 * z[1] * z[1]
    }
}

/// Gamma prior in shape/rate form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    /// Log density up to a constant.
    pub fn log_kernel(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (self.shape - 1.0) * x.ln() - self.rate * x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Inverse-Wishart degrees of freedom for `D`.
    pub k0: f64,
    /// Inverse-Wishart scale for `D`.
    pub v0: Sym2,
    /// Inverse-gamma shape for `σ²`.
    pub a0: f64,
    /// Inverse-gamma rate for `σ²`.
    pub b0: f64,
    /// Gamma priors on the length-scales, in study time units.
    pub theta_prior: [GammaPrior; 2],
    /// Optional `N(0, v)` prior on each regression coefficient; flat if absent.
    pub coef_prior_var: Option<f64>,
    /// Optional `N(0, v)` prior on `gamma0`, `beta0`; flat if absent.
    pub intercept_prior_var: Option<f64>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            k0: 3.0,
            v0: Sym2::identity(),
            a0: 1.0,
            b0: 1.0,
            theta_prior: [GammaPrior { shape: 4.0, rate: 4.0 }; 2],
            coef_prior_var: None,
            intercept_prior_var: None,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k0 > 1.0) {
            return Err(Error::validation(format!("priors.k0 must exceed 1, got {}", self.k0)));
        }
        if !self.v0.is_spd() {
            return Err(Error::validation("priors.v0 must be positive-definite"));
        }
        if !(self.a0 > 0.0 && self.b0 > 0.0) {
            return Err(Error::validation("priors.a0 and priors.b0 must be positive"));
        }
        for g in &self.theta_prior {
            if !(g.shape > 0.0 && g.rate > 0.0) {
                return Err(Error::validation("priors.theta_prior shape and rate must be positive"));
            }
        }
        for (name, v) in [
            ("coef_prior_var", self.coef_prior_var),
            ("intercept_prior_var", self.intercept_prior_var),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::validation(format!("priors.{name} must be positive")));
                }
            }
        }
        Ok(())
    }
}

/// One full draw of every parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma0: f64,
    pub beta0: f64,
    /// Rows `(log u^O_i, log u^N_i)`.
    pub z: Vec<[f64; 2]>,
    pub d: Sym2,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub sigma2: [f64; 2],
    /// Length-scales in study time units.
    pub theta: [f64; 2],
}

impl ModelState {
    pub fn curve(&self, which: Process) -> &[f64] {
        match which {
            Process::Observation => &self.g1,
            Process::Event => &self.g2,
        }
    }

    pub fn mean_level(&self, which: Process) -> f64 {
        match which {
            Process::Observation => self.gamma0,
            Process::Event => self.beta0,
        }
    }

    pub fn coefficients(&self, which: Process) -> &[f64] {
        match which {
            Process::Observation => &self.gamma,
            Process::Event => &self.beta,
        }
    }

    pub fn is_finite(&self) -> bool {
        let f = |v: &[f64]| v.iter().all(|x| x.is_finite());
        f(&self.gamma)
            && f(&self.beta)
            && self.gamma0.is_finite()
            && self.beta0.is_finite()
            && self.z.iter().all(|z| z[0].is_finite() && z[1].is_finite())
            && f(&self.g1)
            && f(&self.g2)
            && f(&self.sigma2)
            && f(&self.theta)
    }
}

/// Event counts attributed to a run of grid cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellInterval {
    pub lo: usize,
    pub hi: usize,
    pub count: u64,
}

/// A subject's data mapped onto the grid.
#[derive(Debug, Clone)]
pub struct SubjectCells {
    pub x: Vec<f64>,
    pub n_visits: usize,
    pub final_count: u64,
    /// Zero-based cell of each visit time.
    pub visit_cells: Vec<usize>,
    /// Observation exposure covers cells `0..censor_cells`.
    pub censor_cells: usize,
    pub intervals: Vec<CellInterval>,
    pub log_factorials: f64,
}

/// Dataset rescaled to `(0, 1]` and indexed on a grid.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub grid: GridSpec,
    /// `T_max`; original time = rescaled time × `time_scale`.
    pub time_scale: f64,
    pub n_covariates: usize,
    pub subjects: Vec<SubjectCells>,
    /// Number of visits falling in each cell.
    pub visit_cell_counts: Vec<f64>,
}

impl ModelData {
    pub fn new(data: &PanelDataset, grid: GridSpec) -> Self {
        let scale = data.time_horizon;
        let mut visit_cell_counts = vec![0.0; grid.len()];
        let subjects = data
            .subjects
            .iter()
            .map(|s| {
                let visit_cells: Vec<usize> = s
                    .obs_times
                    .iter()
                    .map(|&t| grid.ceil_cells(t / scale).max(1) - 1)
                    .collect();
                for &c in &visit_cells {
                    visit_cell_counts[c] += 1.0;
                }
                let intervals = s
                    .increments()
                    .iter()
                    .map(|inc| {
                        let r = grid.cell_range(inc.start / scale, inc.end / scale);
                        if r.is_empty() && inc.count > 0 {
                            // Both visits fall in one cell: charge the interval that cell.
                            let c = grid.ceil_cells(inc.end / scale).max(1);
                            CellInterval { lo: c - 1, hi: c, count: inc.count }
                        } else {
                            CellInterval { lo: r.start, hi: r.end, count: inc.count }
                        }
                    })
                    .collect::<Vec<_>>();
                let log_factorials = intervals.iter().map(|iv| ln_factorial(iv.count)).sum();
                SubjectCells {
                    x: s.covariates.clone(),
                    n_visits: s.n_visits(),
                    final_count: s.final_count(),
                    visit_cells,
                    censor_cells: grid.ceil_cells(s.censor_time / scale),
                    intervals,
                    log_factorials,
                }
            })
            .collect();
        ModelData {
            grid,
            time_scale: scale,
            n_covariates: data.n_covariates(),
            subjects,
            visit_cell_counts,
        }
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// `∫_0^{C_i} exp(g1)` for every subject.
    pub fn obs_integrals(&self, g1: &[f64]) -> Vec<f64> {
        let p = exp_prefix(g1, &self.grid);
        self.subjects.iter().map(|s| p[s.censor_cells]).collect()
    }

    /// Event-side exposure `Σ_j ∫_{t_{j-1}}^{t_j} exp(g2)` for every subject,
    /// which is `∫_0^{t_{i,m_i}} exp(g2)` unless an interval was charged a
    /// shared cell.
    pub fn event_exposures(&self, g2: &[f64]) -> Vec<f64> {
        let p = exp_prefix(g2, &self.grid);
        self.subjects
            .iter()
            .map(|s| s.intervals.iter().map(|iv| p[iv.hi] - p[iv.lo]).sum())
            .collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log L1`: the Poisson process likelihood of the visit times.
pub fn loglik_obs(state: &ModelState, data: &ModelData) -> f64 {
    let integrals = data.obs_integrals(&state.g1);
    data.subjects
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let eta = dot(&s.x, &state.gamma) + state.z[i][0];
            let visits: f64 = s.visit_cells.iter().map(|&c| state.g1[c]).sum();
            -eta.exp() * integrals[i] + visits + s.n_visits as f64 * eta
        })
        .sum()
}

/// `log L2`: Poisson likelihood of the count increments given the visits.
pub fn loglik_events(state: &ModelState, data: &ModelData) -> f64 {
    let p = exp_prefix(&state.g2, &data.grid);
    let mut total = 0.0;
    for (i, s) in data.subjects.iter().enumerate() {
        let rate = (dot(&s.x, &state.beta) + state.z[i][1]).exp();
        for iv in &s.intervals {
            let lambda = rate * (p[iv.hi] - p[iv.lo]);
            if iv.count == 0 {
                total -= lambda;
            } else if lambda <= 0.0 {
                return f64::NEG_INFINITY;
            } else {
                total += iv.count as f64 * lambda.ln() - lambda;
            }
        }
        total -= s.log_factorials;
    }
    total
}

/// `−2 (log L1 + log L2)`, conditional on frailties and curves.
pub fn deviance(state: &ModelState, data: &ModelData) -> f64 {
    -2.0 * (loglik_obs(state, data) + loglik_events(state, data))
}

/// One-dimensional slice of the regression-coefficient conditional:
/// `c ↦ Σ_i (count_i x_ik c − w_i exp(eta_i + x_ik c)) − c²/(2v)`.
#[derive(Debug, Clone)]
pub struct RegressionSlice {
    pub x: Vec<f64>,
    pub eta_rest: Vec<f64>,
    pub weight: Vec<f64>,
    pub linear: f64,
    pub prior_var: Option<f64>,
}

impl RegressionSlice {
    /// Slice through coordinate `k` of the observation (`gamma`) or event
    /// (`beta`) regression, with `integrals` from [`ModelData::obs_integrals`]
    /// or [`ModelData::event_exposures`].
    pub fn new(
        which: Process,
        k: usize,
        coef: &[f64],
        state: &ModelState,
        data: &ModelData,
        integrals: &[f64],
        prior_var: Option<f64>,
    ) -> Self {
        let col = which.index();
        let mut x = Vec::with_capacity(data.n_subjects());
        let mut eta_rest = Vec::with_capacity(data.n_subjects());
        let mut weight = Vec::with_capacity(data.n_subjects());
        let mut linear = 0.0;
        for (i, s) in data.subjects.iter().enumerate() {
            let count = match which {
                Process::Observation => s.n_visits as f64,
                Process::Event => s.final_count as f64,
            };
            linear += count * s.x[k];
            x.push(s.x[k]);
            eta_rest.push(dot(&s.x, coef) - s.x[k] * coef[k]);
            weight.push(state.z[i][col].exp() * integrals[i]);
        }
        RegressionSlice { x, eta_rest, weight, linear, prior_var }
    }

    pub fn logpdf(&self, c: f64) -> f64 {
        let mut v = self.linear * c;
        for ((x, e), w) in self.x.iter().zip(&self.eta_rest).zip(&self.weight) {
            if *w != 0.0 {
                v -= w * (e + x * c).exp();
            }
        }
        if let Some(var) = self.prior_var {
            v -= 0.5 * c * c / var;
        }
        v
    }

    pub fn derivative(&self, c: f64) -> f64 {
        let mut v = self.linear;
        for ((x, e), w) in self.x.iter().zip(&self.eta_rest).zip(&self.weight) {
            v -= w * x * (e + x * c).exp();
        }
        if let Some(var) = self.prior_var {
            v -= c / var;
        }
        v
    }
}

/// Unnormalized log full conditional of the regression coefficients of one
/// process, evaluated at `coef`.
pub fn cond_regression_logpdf(
    which: Process,
    coef: &[f64],
    state: &ModelState,
    data: &ModelData,
) -> f64 {
    let (integrals, col) = match which {
        Process::Observation => (data.obs_integrals(&state.g1), 0),
        Process::Event => (data.event_exposures(&state.g2), 1),
    };
    data.subjects
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let count = match which {
                Process::Observation => s.n_visits as f64,
                Process::Event => s.final_count as f64,
            };
            let eta = dot(&s.x, coef);
            count * eta - (eta + state.z[i][col]).exp() * integrals[i]
        })
        .sum()
}

/// Normal full conditional of a GP mean level: mean `1ᵀΩg / 1ᵀΩ1`, variance
/// `1/1ᵀΩ1`, with `Ω` the precision of the discretized GP.
pub fn intercept_posterior(values: &[f64], covariance: &GramFactor, prior_var: Option<f64>) -> (f64, f64) {
    let ones = vec![1.0; values.len()];
    let omega_one = covariance.solve(&ones);
    let prec: f64 = omega_one.iter().sum::<f64>() + prior_var.map_or(0.0, |v| 1.0 / v);
    let num = dot(&omega_one, values);
    (num / prec, 1.0 / prec)
}

/// Per-subject constants for the frailty conditional.
#[derive(Debug, Clone, Copy)]
pub struct FrailtySlice {
    pub d_inv: Sym2,
    pub n_visits: f64,
    pub final_count: f64,
    /// `exp(x'γ) ∫_0^{C_i} exp(g1)`.
    pub obs_weight: f64,
    /// `exp(x'β) × event exposure`.
    pub event_weight: f64,
}

impl FrailtySlice {
    pub fn logpdf(&self, z: [f64; 2]) -> f64 {
        -0.5 * self.d_inv.quad(z) + z[0] * self.n_visits + z[1] * self.final_count
            - z[0].exp() * self.obs_weight
            - z[1].exp() * self.event_weight
    }

    /// Partial derivative in coordinate `k`.
    pub fn derivative(&self, z: [f64; 2], k: usize) -> f64 {
        let di = &self.d_inv;
        if k == 0 {
            -(di.d11 * z[0] + di.d12 * z[1]) + self.n_visits - z[0].exp() * self.obs_weight
        } else {
            -(di.d12 * z[0] + di.d22 * z[1]) + self.final_count - z[1].exp() * self.event_weight
        }
    }
}

pub fn frailty_slice(
    i: usize,
    state: &ModelState,
    data: &ModelData,
    obs_integral: f64,
    event_exposure: f64,
) -> Result<FrailtySlice> {
    let s = &data.subjects[i];
    let d_inv = state
        .d
        .inverse()
        .ok_or_else(|| Error::Numerical("frailty covariance D is singular".into()))?;
    Ok(FrailtySlice {
        d_inv,
        n_visits: s.n_visits as f64,
        final_count: s.final_count as f64,
        obs_weight: dot(&s.x, &state.gamma).exp() * obs_integral,
        event_weight: dot(&s.x, &state.beta).exp() * event_exposure,
    })
}

/// Unnormalized log full conditional of `z_i`.
pub fn cond_z_logpdf(i: usize, z: [f64; 2], state: &ModelState, data: &ModelData) -> Result<f64> {
    let a = data.obs_integrals(&state.g1)[i];
    let b = data.event_exposures(&state.g2)[i];
    Ok(frailty_slice(i, state, data, a, b)?.logpdf(z))
}

/// Log full conditional of one latent curve on the grid, with gradient.
///
/// Observation curve: `−½(g−μ)'Ω(g−μ) + Σ_l f_l g_l − Σ_l W_l e^{g_l}/L`.
/// Event curve: `−½(g−μ)'Ω(g−μ) + Σ_{ij} y_ij log S_ij − Σ_l W_l e^{g_l}/L`,
/// where `S_ij` is the cell sum of interval `j` and `W_l` the summed subject
/// rate over intervals covering cell `l`.
#[derive(Debug, Clone)]
pub struct CurveTarget<'a> {
    which: Process,
    mean_level: f64,
    covariance: &'a GramFactor,
    cell_length: f64,
    weights: Vec<f64>,
    visit_counts: &'a [f64],
    intervals: Vec<CellInterval>,
}

impl<'a> CurveTarget<'a> {
    pub fn new(
        which: Process,
        state: &ModelState,
        data: &'a ModelData,
        covariance: &'a GramFactor,
    ) -> Self {
        let l = data.grid.len();
        let mut diff = vec![0.0; l + 1];
        let mut intervals = Vec::new();
        for (i, s) in data.subjects.iter().enumerate() {
            match which {
                Process::Observation => {
                    let w = (dot(&s.x, &state.gamma) + state.z[i][0]).exp();
                    diff[0] += w;
                    diff[s.censor_cells] -= w;
                }
                Process::Event => {
                    let w = (dot(&s.x, &state.beta) + state.z[i][1]).exp();
                    for iv in &s.intervals {
                        diff[iv.lo] += w;
                        diff[iv.hi] -= w;
                        if iv.count > 0 {
                            intervals.push(*iv);
                        }
                    }
                }
            }
        }
        let mut acc = 0.0;
        let weights = diff[..l]
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect();
        CurveTarget {
            which,
            mean_level: state.mean_level(which),
            covariance,
            cell_length: data.grid.cell_length(),
            weights,
            visit_counts: &data.visit_cell_counts,
            intervals,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Data part only: the log-likelihood terms that depend on `g`.
    pub fn data_loglik(&self, g: &[f64]) -> f64 {
        let h = self.cell_length;
        let mut v = -g
            .iter()
            .zip(&self.weights)
            .map(|(gl, w)| w * gl.exp() * h)
            .sum::<f64>();
        match self.which {
            Process::Observation => {
                v += dot(self.visit_counts, g);
            }
            Process::Event => {
                let p = exp_prefix_h(g, h);
                for iv in &self.intervals {
                    let s = p[iv.hi] - p[iv.lo];
                    if s <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    v += iv.count as f64 * s.ln();
                }
            }
        }
        v
    }

    /// Log density (up to a constant) and gradient.
    pub fn logpdf_grad(&self, g: &[f64]) -> (f64, Vec<f64>) {
        let l = g.len();
        let h = self.cell_length;
        let centered: Vec<f64> = g.iter().map(|v| v - self.mean_level).collect();
        let prec = self.covariance.solve(&centered);
        let mut logp = -0.5 * dot(&centered, &prec);
        let e: Vec<f64> = g.iter().map(|v| v.exp() * h).collect();
        let mut grad: Vec<f64> = prec.iter().map(|v| -v).collect();
        logp -= dot(&self.weights, &e);
        let mut q: Vec<f64> = self.weights.iter().map(|w| -w).collect();
        match self.which {
            Process::Observation => {
                logp += dot(self.visit_counts, g);
                for (gr, f) in grad.iter_mut().zip(self.visit_counts) {
                    *gr += f;
                }
            }
            Process::Event => {
                let mut p = Vec::with_capacity(l + 1);
                let mut acc = 0.0;
                p.push(0.0);
                for v in &e {
                    acc += v;
                    p.push(acc);
                }
                let mut diff = vec![0.0; l + 1];
                for iv in &self.intervals {
                    let s = p[iv.hi] - p[iv.lo];
                    if !(s > 0.0) {
                        return (f64::NEG_INFINITY, grad);
                    }
                    let y = iv.count as f64;
                    logp += y * s.ln();
                    diff[iv.lo] += y / s;
                    diff[iv.hi] -= y / s;
                }
                let mut run = 0.0;
                for (ql, d) in q.iter_mut().zip(&diff[..l]) {
                    run += d;
                    *ql += run;
                }
            }
        }
        for ((gr, ql), el) in grad.iter_mut().zip(&q).zip(&e) {
            *gr += ql * el;
        }
        (logp, grad)
    }
}

fn exp_prefix_h(g: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for v in g {
        acc += v.exp() * h;
        out.push(acc);
    }
    out
}

/// Log full conditional of `g1` or `g2` under the grid approximation, with
/// its gradient. `covariance` is the factor of the GP covariance of that curve.
pub fn cond_g_logpdf_grad(
    which: Process,
    g: &[f64],
    state: &ModelState,
    data: &ModelData,
    covariance: &GramFactor,
) -> (f64, Vec<f64>) {
    CurveTarget::new(which, state, data, covariance).logpdf_grad(g)
}

/// Closed-form first and second moments of the subject intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntensityMoments {
    pub e_mu: f64,
    pub e_lambda: f64,
    pub cov_mu: f64,
    pub cov_lambda: f64,
    pub cross_cov: f64,
}

/// Moments of `μ_i(t)` and `λ_i(t)` at lag `h` (rescaled time) for covariates
/// `x`, given the regression coefficients and the frailties of subject `i`.
/// The GP mean levels enter as `exp(gamma0)`, `exp(beta0)`.
pub fn intensity_moments(
    kernels: [&KernelConfig; 2],
    state: &ModelState,
    x: &[f64],
    h: f64,
    i: usize,
) -> IntensityMoments {
    let u_obs = state.z[i][0].exp();
    let u_event = state.z[i][1].exp();
    let c1_0 = kernels[0].covariance(0.0);
    let c2_0 = kernels[1].covariance(0.0);
    let e_mu = (state.gamma0 + dot(x, &state.gamma) + c1_0 / 2.0).exp() * u_obs;
    let e_lambda = (state.beta0 + dot(x, &state.beta) + c2_0 / 2.0).exp() * u_event;
    IntensityMoments {
        e_mu,
        e_lambda,
        cov_mu: e_mu * e_mu * kernels[0].covariance(h).exp_m1(),
        cov_lambda: e_lambda * e_lambda * kernels[1].covariance(h).exp_m1(),
        cross_cov: e_mu * e_lambda * state.d.d12.exp_m1(),
    }
}
