//! Convergence diagnostics for stored chains.

use serde::{Deserialize, Serialize};

use super::summary::scalar_traces;
use super::ChainOutput;
use crate::stats::{autocorrelations, effective_sample_size, mc_standard_error, mean};

/// Lags reported by [`diagnostics`].
pub const REPORTED_LAGS: [usize; 4] = [1, 5, 10, 50];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarDiagnostics {
    pub name: String,
    /// Effective sample size; absent for a constant trace.
    pub ess: Option<f64>,
    /// Geweke z-score of the first 10% against the last 50% of the trace.
    pub geweke_z: Option<f64>,
    /// Autocorrelations at [`REPORTED_LAGS`].
    pub autocorrelations: Vec<f64>,
    pub degenerate: bool,
}

/// Geweke z-score comparing the means of the first 10% and last 50% of a
/// trace, with autocorrelation-adjusted standard errors.
pub fn geweke_z(xs: &[f64]) -> Option<f64> {
    let n = xs.len();
    let a = &xs[..n / 10];
    let b = &xs[n - n / 2..];
    if a.len() < 4 || b.len() < 4 {
        return None;
    }
    let se2 = mc_standard_error(a).powi(2) + mc_standard_error(b).powi(2);
    if se2 == 0.0 {
        return None;
    }
    Some((mean(a) - mean(b)) / se2.sqrt())
}

pub fn diagnose_trace(name: &str, xs: &[f64]) -> ScalarDiagnostics {
    let ess = effective_sample_size(xs);
    let acf = autocorrelations(xs, *REPORTED_LAGS.last().unwrap());
    ScalarDiagnostics {
        name: name.to_string(),
        ess,
        geweke_z: if ess.is_some() { geweke_z(xs) } else { None },
        autocorrelations: REPORTED_LAGS.iter().map(|&k| acf.get(k).copied().unwrap_or(0.0)).collect(),
        degenerate: ess.is_none(),
    }
}

/// Diagnostics for every scalar parameter and the deviance.
pub fn diagnostics(chain: &ChainOutput) -> Vec<ScalarDiagnostics> {
    let mut out: Vec<ScalarDiagnostics> = scalar_traces(chain)
        .iter()
        .map(|(n, xs)| diagnose_trace(n, xs))
        .collect();
    out.push(diagnose_trace("deviance", &chain.deviance));
    out
}
