//! Matérn correlation kernels and factorized Gram matrices on a grid.
//!
//! Only the half-integer smoothness values 1/2, 3/2 and 5/2 are supported;
//! for those the Matérn correlation has a closed form and no Bessel function
//! evaluation is needed.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Matérn smoothness `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum Smoothness {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl TryFrom<f64> for Smoothness {
    type Error = Error;

    fn try_from(nu: f64) -> Result<Self> {
        match nu {
            x if x == 0.5 => Ok(Smoothness::Half),
            x if x == 1.5 => Ok(Smoothness::ThreeHalves),
            x if x == 2.5 => Ok(Smoothness::FiveHalves),
            _ => Err(Error::validation(format!(
                "unsupported Matérn smoothness nu = {nu} (expected 0.5, 1.5 or 2.5)"
            ))),
        }
    }
}

impl From<Smoothness> for f64 {
    fn from(s: Smoothness) -> f64 {
        s.value()
    }
}

impl Smoothness {
    pub fn value(self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
            Smoothness::ThreeHalves => 1.5,
            Smoothness::FiveHalves => 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub nu: Smoothness,
    /// Length-scale on the rescaled `[0, 1]` time axis.
    pub theta: f64,
    pub sigma2: f64,
}

impl KernelConfig {
    pub fn new(nu: Smoothness, theta: f64, sigma2: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Domain(format!("length-scale theta must be positive, got {theta}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Domain(format!("variance sigma2 must be positive, got {sigma2}")));
        }
        Ok(KernelConfig { nu, theta, sigma2 })
    }

    /// `C(h) = sigma2 * r(h)`.
    pub fn covariance(&self, h: f64) -> f64 {
        self.sigma2 * corr_unchecked(h.abs(), self.nu, self.theta)
    }
}

fn corr_unchecked(h: f64, nu: Smoothness, theta: f64) -> f64 {
    let u = h / theta;
    let decay = (-u).exp();
    match nu {
        Smoothness::Half => decay,
        Smoothness::ThreeHalves => (1.0 + u) * decay,
        Smoothness::FiveHalves => (1.0 + u + u * u / 3.0) * decay,
    }
}

/// Matérn correlation `r(h)` for lag `h >= 0`.
pub fn matern_corr(h: f64, nu: Smoothness, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("length-scale theta must be positive, got {theta}")));
    }
    if !(h >= 0.0) {
        return Err(Error::Domain(format!("lag must be nonnegative, got {h}")));
    }
    Ok(corr_unchecked(h, nu, theta))
}

/// Dense covariance matrix together with its Cholesky factor.
///
/// The factor is of `Σ + jitter·I`; all solves use the jittered matrix.
/// `chol` is stored row-major, lower triangle only.
#[derive(Debug, Clone)]
pub struct GramFactor {
    dim: usize,
    covariance: Vec<f64>,
    chol: Vec<f64>,
    log_det: f64,
    jitter: f64,
}

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

impl GramFactor {
    /// Factorizes a symmetric positive-definite matrix given row-major.
    ///
    /// Jitter starts at `jitter` (or is skipped when zero) and then escalates
    /// from `1e-10` to `1e-4` times the mean diagonal, by factors of ten.
    pub fn from_covariance(dim: usize, covariance: Vec<f64>, jitter: f64) -> Result<Self> {
        assert_eq!(covariance.len(), dim * dim, "covariance has wrong size");
        let scale = if dim == 0 {
            1.0
        } else {
            (0..dim).map(|i| covariance[i * dim + i]).sum::<f64>() / dim as f64
        };
        let mut attempts = Vec::new();
        if jitter >= 0.0 {
            attempts.push(jitter);
        }
        let mut j = JITTER_START * scale;
        while j <= JITTER_MAX * scale * (1.0 + 1e-9) {
            if j > jitter {
                attempts.push(j);
            }
            j *= 10.0;
        }
        let base = DMatrix::from_row_slice(dim, dim, &covariance);
        for &jit in &attempts {
            let mut m = base.clone();
            for i in 0..dim {
                m[(i, i)] += jit;
            }
            if let Some(ch) = nalgebra::linalg::Cholesky::new(m) {
                let l = ch.l();
                let mut chol = vec![0.0; dim * dim];
                let mut log_det = 0.0;
                for i in 0..dim {
                    for k in 0..=i {
                        chol[i * dim + k] = l[(i, k)];
                    }
                    log_det += 2.0 * l[(i, i)].ln();
                }
                if log_det.is_finite() {
                    return Ok(GramFactor {
                        dim,
                        covariance,
                        chol,
                        log_det,
                        jitter: jit,
                    });
                }
            }
        }
        Err(Error::Singular {
            jitter: attempts.last().copied().unwrap_or(0.0),
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        GramFactor {
            dim,
            covariance: eye.clone(),
            chol: eye,
            log_det: 0.0,
            jitter: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn covariance(&self, i: usize, k: usize) -> f64 {
        self.covariance[i * self.dim + k]
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.covariance)
    }

    /// Lower Cholesky factor as a matrix.
    pub fn cholesky_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.chol)
    }

    /// Factor of `c·Σ`, without refactorizing.
    pub fn scaled(&self, c: f64) -> GramFactor {
        let s = c.sqrt();
        GramFactor {
            dim: self.dim,
            covariance: self.covariance.iter().map(|v| v * c).collect(),
            chol: self.chol.iter().map(|v| v * s).collect(),
            log_det: self.log_det + self.dim as f64 * c.ln(),
            jitter: self.jitter * c,
        }
    }

    /// `y = L z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|i| {
                let row = &self.chol[i * n..i * n + i + 1];
                row.iter().zip(&z[..=i]).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `y = Lᵀ z`.
    pub fn mul_lower_t(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let zi = z[i];
            let row = &self.chol[i * n..i * n + i + 1];
            for (o, a) in out[..=i].iter_mut().zip(row) {
                *o += a * zi;
            }
        }
        out
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut x = vec![0.0; n];
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (b[i] - s) / self.chol[i * n + i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_lower_t(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.chol[i * n + i];
            let xi = x[i];
            let row = &self.chol[i * n..i * n + i];
            for (xk, a) in x[..i].iter_mut().zip(row) {
                *xk -= a * xi;
            }
        }
        x
    }

    /// `Σ⁻¹ v` by two triangular solves.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        self.solve_lower_t(&self.solve_lower(v))
    }

    /// `Σ v` using the factor, i.e. including jitter.
    pub fn mul(&self, v: &[f64]) -> Vec<f64> {
        self.mul_lower(&self.mul_lower_t(v))
    }

    /// `vᵀ Σ⁻¹ v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.solve_lower(v).iter().map(|w| w * w).sum()
    }

    /// Log density of `N(mean, Σ)` at `x`.
    pub fn mvn_logpdf(&self, x: &[f64], mean: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
        -0.5 * (self.quad_form(&d)
            + self.log_det
            + self.dim as f64 * (2.0 * std::f64::consts::PI).ln())
    }
}

/// Covariance `Σ_kl = σ² r(|s_k − s_l|)` on the grid points, factorized.
pub fn build_gram(points: &[f64], cfg: &KernelConfig, jitter: f64) -> Result<GramFactor> {
    if !(jitter >= 0.0) {
        return Err(Error::Domain(format!("jitter must be nonnegative, got {jitter}")));
    }
    let n = points.len();
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        cov[i * n + i] = cfg.sigma2;
        for k in 0..i {
            let c = cfg.covariance(points[i] - points[k]);
            cov[i * n + k] = c;
            cov[k * n + i] = c;
        }
    }
    GramFactor::from_covariance(n, cov, jitter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(matern_corr(0.0, Smoothness::FiveHalves, 1.0).unwrap(), 1.0);
        let e1 = (-1f64).exp();
        assert!((matern_corr(2.0, Smoothness::Half, 2.0).unwrap() - e1).abs() < 1e-15);
        assert!((matern_corr(1.0, Smoothness::ThreeHalves, 1.0).unwrap() - 2.0 * e1).abs() < 1e-15);
        assert!(
            (matern_corr(1.0, Smoothness::FiveHalves, 1.0).unwrap() - 7.0 / 3.0 * e1).abs() < 1e-15
        );
        assert!((2.0 * e1 - 0.735759).abs() < 1e-6);
        assert!((7.0 / 3.0 * e1 - 0.858385).abs() < 1e-6);
    }

    #[test]
    fn domain_errors() {
        assert!(matern_corr(1.0, Smoothness::Half, 0.0).is_err());
        assert!(matern_corr(1.0, Smoothness::Half, -1.0).is_err());
        assert!(Smoothness::try_from(1.0).is_err());
        assert!(KernelConfig::new(Smoothness::Half, 1.0, 0.0).is_err());
    }

    #[test]
    fn single_point_gram() {
        let cfg = KernelConfig::new(Smoothness::FiveHalves, 1.0, 1.0).unwrap();
        let g = build_gram(&[0.3], &cfg, 0.0).unwrap();
        assert_eq!(g.covariance(0, 0), 1.0);
        assert_eq!(g.log_det(), 0.0);
    }

    #[test]
    fn two_point_offdiagonal() {
        let cfg = KernelConfig::new(Smoothness::ThreeHalves, 0.7, 1.0).unwrap();
        let g = build_gram(&[0.1, 0.6], &cfg, 0.0).unwrap();
        let r = matern_corr(0.5, Smoothness::ThreeHalves, 0.7).unwrap();
        assert!((g.covariance(0, 1) - r).abs() < 1e-15);
        assert_eq!(g.covariance(0, 1), g.covariance(1, 0));
    }

    #[test]
    fn solve_times_covariance_is_identity() {
        let pts: Vec<f64> = (0..50).map(|l| (l as f64 + 0.5) / 50.0).collect();
        let cfg = KernelConfig::new(Smoothness::FiveHalves, 4.0 / 50.0, 1.0).unwrap();
        let g = build_gram(&pts, &cfg, 0.0).unwrap();
        let sigma = g.covariance_matrix();
        for j in 0..50 {
            let col: Vec<f64> = sigma.column(j).iter().cloned().collect();
            let x = g.solve(&col);
            for (i, xi) in x.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((xi - target).abs() < 1e-8, "entry ({i},{j}) = {xi}");
            }
        }
    }

    #[test]
    fn scaled_factor_matches_direct() {
        let pts = [0.1, 0.3, 0.7];
        let cfg = KernelConfig::new(Smoothness::ThreeHalves, 0.4, 1.0).unwrap();
        let g = build_gram(&pts, &cfg, 0.0).unwrap();
        let g4 = build_gram(&pts, &KernelConfig { sigma2: 4.0, ..cfg }, 0.0).unwrap();
        let s = g.scaled(4.0);
        let v = [0.3, -1.0, 2.0];
        assert!((s.quad_form(&v) - g4.quad_form(&v)).abs() < 1e-12);
        assert!((s.log_det() - g4.log_det()).abs() < 1e-12);
    }

    #[test]
    fn triangular_helpers_are_consistent() {
        let pts = [0.05, 0.2, 0.45, 0.9];
        let cfg = KernelConfig::new(Smoothness::FiveHalves, 0.3, 2.0).unwrap();
        let g = build_gram(&pts, &cfg, 0.0).unwrap();
        let v = [1.0, -0.5, 0.25, 2.0];
        let back = g.solve_lower_t(&g.mul_lower_t(&v));
        let back2 = g.solve_lower(&g.mul_lower(&v));
        for i in 0..4 {
            assert!((back[i] - v[i]).abs() < 1e-10);
            assert!((back2[i] - v[i]).abs() < 1e-10);
        }
        let sv = g.mul(&v);
        let direct = g.covariance_matrix() * nalgebra::DVector::from_row_slice(&v);
        for i in 0..4 {
            assert!((sv[i] - direct[i]).abs() < 1e-8);
        }
    }
}
