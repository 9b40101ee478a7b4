//! Posterior summaries of scalar parameters and baseline curves.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChainOutput, Dic};
use crate::error::{Error, Result};
use crate::grid::{cumulative_curve, rescaled_cumulative};
use crate::stats::{mean, quantile_sorted, sorted_copy, variance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl ScalarSummary {
    pub fn from_draws(name: impl Into<String>, xs: &[f64]) -> Self {
        let sorted = sorted_copy(xs);
        ScalarSummary {
            name: name.into(),
            mean: mean(xs),
            sd: variance(xs).sqrt(),
            lo95: quantile_sorted(&sorted, 0.025),
            hi95: quantile_sorted(&sorted, 0.975),
        }
    }
}

/// Pointwise posterior mean and central 95% band of a curve, in original
/// time units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBand {
    pub name: String,
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_draws: usize,
    pub scalars: Vec<ScalarSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dic: Option<Dic>,
    #[serde(skip)]
    pub curves: Vec<CurveBand>,
}

impl PosteriorSummary {
    pub fn scalar(&self, name: &str) -> Option<&ScalarSummary> {
        self.scalars.iter().find(|s| s.name == name)
    }

    pub fn curve(&self, name: &str) -> Option<&CurveBand> {
        self.curves.iter().find(|c| c.name == name)
    }
}

/// Named traces of every scalar parameter except the frailties.
pub fn scalar_traces(chain: &ChainOutput) -> Vec<(String, Vec<f64>)> {
    let d = &chain.draws;
    let mut out = Vec::new();
    for (k, name) in chain.covariate_names.iter().enumerate() {
        out.push((format!("gamma[{name}]"), d.iter().map(|s| s.gamma[k]).collect()));
    }
    for (k, name) in chain.covariate_names.iter().enumerate() {
        out.push((format!("beta[{name}]"), d.iter().map(|s| s.beta[k]).collect()));
    }
    let mut push = |name: &str, f: &dyn Fn(&crate::conditionals::ModelState) -> f64| {
        out.push((name.to_string(), d.iter().map(f).collect()));
    };
    push("gamma0", &|s| s.gamma0);
    push("beta0", &|s| s.beta0);
    push("D11", &|s| s.d.d11);
    push("D12", &|s| s.d.d12);
    push("D22", &|s| s.d.d22);
    push("sigma2_1", &|s| s.sigma2[0]);
    push("sigma2_2", &|s| s.sigma2[1]);
    push("theta_1", &|s| s.theta[0]);
    push("theta_2", &|s| s.theta[1]);
    out
}

fn band(name: &str, t: Vec<f64>, rows: &[Vec<f64>]) -> CurveBand {
    let l = t.len();
    let mut m = Vec::with_capacity(l);
    let mut lo = Vec::with_capacity(l);
    let mut hi = Vec::with_capacity(l);
    for j in 0..l {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let sorted = sorted_copy(&col);
        m.push(mean(&col));
        lo.push(quantile_sorted(&sorted, 0.025));
        hi.push(quantile_sorted(&sorted, 0.975));
    }
    CurveBand { name: name.to_string(), t, mean: m, lo95: lo, hi95: hi }
}

/// Pointwise bands of the baseline intensities `μ0`, `λ0`, their cumulative
/// functions and rescaled cumulative functions, all at the cell centers.
pub fn curve_bands(chain: &ChainOutput) -> Vec<CurveBand> {
    let grid = chain.grid();
    let scale = chain.time_scale;
    let centers: Vec<f64> = grid.cell_centers().iter().map(|c| c * scale).collect();
    let mut out = Vec::new();
    for (suffix, get) in [
        ("mu0", (|s: &crate::conditionals::ModelState| s.g1.clone()) as fn(&_) -> Vec<f64>),
        ("lambda0", |s: &crate::conditionals::ModelState| s.g2.clone()),
    ] {
        let curves: Vec<Vec<f64>> = chain.draws.iter().map(get).collect();
        let intensity: Vec<Vec<f64>> = curves
            .iter()
            .map(|g| g.iter().map(|v| v.exp() / scale).collect())
            .collect();
        let cumulative: Vec<Vec<f64>> = curves.iter().map(|g| cumulative_curve(g, &grid)).collect();
        let rescaled: Vec<Vec<f64>> = curves.iter().map(|g| rescaled_cumulative(g, &grid)).collect();
        out.push(band(suffix, centers.clone(), &intensity));
        out.push(band(&format!("cum_{suffix}"), centers.clone(), &cumulative));
        out.push(band(&format!("rescaled_cum_{suffix}"), centers.clone(), &rescaled));
    }
    out
}

pub fn summarize(chain: &ChainOutput) -> Result<PosteriorSummary> {
    if chain.n_draws() < 2 {
        return Err(Error::validation("summary needs at least 2 stored draws"));
    }
    Ok(PosteriorSummary {
        n_draws: chain.n_draws(),
        scalars: scalar_traces(chain)
            .iter()
            .map(|(n, xs)| ScalarSummary::from_draws(n.clone(), xs))
            .collect(),
        dic: None,
        curves: curve_bands(chain),
    })
}

/// Concatenates the draws of several chains fitted to the same data.
pub fn pool_chains(chains: &[ChainOutput]) -> Result<ChainOutput> {
    let first = chains.first().ok_or_else(|| Error::validation("no chains to pool"))?;
    let mut out = first.clone();
    for c in &chains[1..] {
        if c.config.grid_cells != first.config.grid_cells
            || c.covariate_names != first.covariate_names
            || c.subject_ids != first.subject_ids
        {
            return Err(Error::validation("chains to pool were fitted to different data"));
        }
        out.draws.extend(c.draws.iter().cloned());
        out.deviance.extend(&c.deviance);
        out.iterations.extend(&c.iterations);
    }
    Ok(out)
}

/// Writes `summary.json` and `curves.csv` into `dir`.
pub fn write_summary(dir: &Path, summary: &PosteriorSummary) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    write_curves(dir, summary)
}

/// Writes the curve bands as `curves.csv` (curve, t, mean, lo95, hi95).
pub fn write_curves(dir: &Path, summary: &PosteriorSummary) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("curves.csv"))?;
    w.write_record(["curve", "t", "mean", "lo95", "hi95"])?;
    for c in &summary.curves {
        for j in 0..c.t.len() {
            w.write_record([
                c.name.clone(),
                c.t[j].to_string(),
                c.mean[j].to_string(),
                c.lo95[j].to_string(),
                c.hi95[j].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
