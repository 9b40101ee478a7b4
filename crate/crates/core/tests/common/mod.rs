//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use pcox::conditionals::{ModelState, Sym2};
use pcox::data::{PanelDataset, Subject};
use pcox::rng::rng_from_seed;
use pcox::simulate::{simulate_dataset, ScenarioSpec};
use rand::Rng;
use rand_distr::StandardNormal;

/// `K_ν(x)` from `∫_0^∞ exp(−x cosh t) cosh(νt) dt` by the trapezoidal rule,
/// which converges geometrically for this even, analytic integrand.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0);
    let t_max = (1.0 + 750.0 / x).acosh();
    let h = 1e-3;
    let n = (t_max / h).ceil() as usize;
    let f = |t: f64| (-x * t.cosh()).exp() * (nu * t).cosh();
    let mut s = 0.5 * f(0.0);
    for k in 1..=n {
        s += f(k as f64 * h);
    }
    s * h
}

/// Matérn correlation `2^{1−ν}/Γ(ν) u^ν K_ν(u)` with `u = h/θ`.
pub fn matern_bessel(h: f64, nu: f64, theta: f64) -> f64 {
    if h == 0.0 {
        return 1.0;
    }
    let u = h / theta;
    let gamma_nu = statrs::function::gamma::gamma(nu);
    2f64.powf(1.0 - nu) / gamma_nu * u.powf(nu) * bessel_k(nu, u)
}

/// Composite Gauss–Legendre (5 nodes per panel) over `[a, b]`.
pub fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(&W) {
            s += w * f(mid + 0.5 * h * x);
        }
    }
    s * 0.5 * h
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|k| {
            let step = h * x[k].abs().max(1.0);
            y[k] = x[k] + step;
            let up = f(&y);
            y[k] = x[k] - step;
            let down = f(&y);
            y[k] = x[k];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// A simulated dataset from one of the built-in settings.
pub fn setting_data(setting: u8, n: usize, seed: u64) -> PanelDataset {
    let spec = ScenarioSpec::setting(setting, n).unwrap();
    simulate_dataset(&spec, &mut rng_from_seed(seed)).unwrap().0
}

/// A small hand-written dataset with one covariate on `[0, 10]`.
pub fn tiny_data() -> PanelDataset {
    let s = |id: &str, t: Vec<f64>, y: Vec<u64>, x: f64, c: f64| {
        Subject::new(id.to_string(), t, y, vec![x], c).unwrap()
    };
    PanelDataset::new(
        vec![
            s("a", vec![1.0, 4.0, 7.5], vec![0, 2, 3], 0.5, 9.0),
            s("b", vec![2.5, 6.0], vec![1, 1], 1.0, 10.0),
            s("c", vec![3.0, 5.0, 8.0, 9.5], vec![1, 3, 3, 5], 0.0, 10.0),
            s("d", vec![0.5], vec![2], 0.2, 4.0),
        ],
        vec!["x1".to_string()],
    )
    .unwrap()
}

/// A random but well-conditioned state for `p` covariates, `n` subjects and
/// `l` cells.
pub fn random_state<R: Rng>(p: usize, n: usize, l: usize, rng: &mut R) -> ModelState {
    let mut nrm = |s: f64| s * rng.sample::<f64, _>(StandardNormal);
    let gamma0 = nrm(0.5);
    let beta0 = nrm(0.5);
    let gamma = (0..p).map(|_| nrm(0.7)).collect();
    let beta = (0..p).map(|_| nrm(0.7)).collect();
    let z = (0..n).map(|_| [nrm(0.4), nrm(0.4)]).collect();
    let g1 = (0..l).map(|_| gamma0 + nrm(0.5)).collect();
    let g2 = (0..l).map(|_| beta0 + nrm(0.5)).collect();
    ModelState {
        gamma,
        beta,
        gamma0,
        beta0,
        z,
        d: Sym2::new(0.5, 0.1, 0.4),
        g1,
        g2,
        sigma2: [0.6, 0.8],
        theta: [4.0, 4.0],
    }
}

/// Inverse-Wishart second moments for a 2×2 scale `psi` and `df` degrees of
/// freedom: returns `Var(D11), Var(D12), Var(D22)`.
pub fn inv_wishart_variances(df: f64, psi: &Sym2) -> [f64; 3] {
    let p = 2.0;
    let a = df - p;
    let denom = a * (a - 1.0).powi(2) * (a - 3.0);
    let var = |ij: f64, ii: f64, jj: f64| ((a + 1.0) * ij * ij + (a - 1.0) * ii * jj) / denom;
    [
        var(psi.d11, psi.d11, psi.d11),
        var(psi.d12, psi.d11, psi.d22),
        var(psi.d22, psi.d22, psi.d22),
    ]
}
