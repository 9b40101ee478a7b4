//! Deviance information criterion, conditional on frailties and curves.

use serde::{Deserialize, Serialize};

use super::ChainOutput;
use crate::conditionals::{deviance, ModelData, ModelState, Sym2};
use crate::stats::mean;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dic {
    pub dic: f64,
    pub mean_deviance: f64,
    pub p_d: f64,
}

/// `DIC = 2 mean(D) − D(ξ̄)`, `p_D = mean(D) − D(ξ̄)`.
pub fn dic_from(deviances: &[f64], deviance_at_mean: f64) -> Dic {
    let m = mean(deviances);
    Dic { dic: 2.0 * m - deviance_at_mean, mean_deviance: m, p_d: m - deviance_at_mean }
}

fn average(v: &[Vec<f64>]) -> Vec<f64> {
    let n = v.len() as f64;
    let mut out = vec![0.0; v[0].len()];
    for row in v {
        for (o, x) in out.iter_mut().zip(row) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Entrywise posterior mean of every block.
pub fn posterior_mean_state(draws: &[ModelState]) -> ModelState {
    let f = |get: &dyn Fn(&ModelState) -> Vec<f64>| average(&draws.iter().map(get).collect::<Vec<_>>());
    let z = f(&|s| s.z.iter().flat_map(|z| *z).collect());
    let d = f(&|s| vec![s.d.d11, s.d.d12, s.d.d22]);
    let h = f(&|s| vec![s.gamma0, s.beta0, s.sigma2[0], s.sigma2[1], s.theta[0], s.theta[1]]);
    ModelState {
        gamma: f(&|s| s.gamma.clone()),
        beta: f(&|s| s.beta.clone()),
        gamma0: h[0],
        beta0: h[1],
        z: z.chunks(2).map(|c| [c[0], c[1]]).collect(),
        d: Sym2::new(d[0], d[1], d[2]),
        g1: f(&|s| s.g1.clone()),
        g2: f(&|s| s.g2.clone()),
        sigma2: [h[2], h[3]],
        theta: [h[4], h[5]],
    }
}

/// DIC of a chain for the data it was fitted to.
pub fn dic(chain: &ChainOutput, data: &ModelData) -> Dic {
    let at_mean = deviance(&posterior_mean_state(&chain.draws), data);
    dic_from(&chain.deviance, at_mean)
}
