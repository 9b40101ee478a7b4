//! Conjugate draws: inverse-Wishart, inverse-gamma and normal.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use crate::conditionals::Sym2;
use crate::kernels::GramFactor;

/// Draws from the 2×2 inverse-Wishart with `df` degrees of freedom and the
/// given scale matrix, mean `scale / (df − 3)`.
///
/// With `scale = U Uᵀ` and `A` the Bartlett factor of a standard Wishart,
/// the draw is `U (A Aᵀ)⁻¹ Uᵀ`.
pub fn draw_inv_wishart<R: Rng + ?Sized>(df: f64, scale: &Sym2, rng: &mut R) -> Sym2 {
    assert!(df > 1.0, "inverse-Wishart needs df > 1");
    let [u11, u21, u22] = scale.cholesky().expect("inverse-Wishart scale must be SPD");
    let a11 = ChiSquared::new(df).expect("df > 0").sample(rng).sqrt();
    let a22 = ChiSquared::new(df - 1.0).expect("df > 1").sample(rng).sqrt();
    let a21: f64 = rng.sample(StandardNormal);
    // (A Aᵀ)⁻¹ = A⁻ᵀ A⁻¹ with A⁻¹ = [[1/a11, 0], [−a21/(a11 a22), 1/a22]].
    let i11 = 1.0 / a11;
    let i21 = -a21 / (a11 * a22);
    let i22 = 1.0 / a22;
    let b11 = i11 * i11 + i21 * i21;
    let b12 = i21 * i22;
    let b22 = i22 * i22;
    // U B Uᵀ with U lower triangular.
    let m11 = u11 * b11;
    let m12 = u11 * b12;
    let m21 = u21 * b11 + u22 * b12;
    let m22 = u21 * b12 + u22 * b22;
    Sym2::new(m11 * u11, m11 * u21 + m12 * u22, m21 * u21 + m22 * u22)
}

/// Draws from `IG(shape, rate)`.
pub fn draw_inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    rate / g
}

/// Parameters `(shape, rate)` of the inverse-gamma conditional of `σ²`
/// given a curve with mean level `mean_level` and correlation factor `R`.
pub fn sigma2_posterior(
    values: &[f64],
    mean_level: f64,
    corr_factor: &GramFactor,
    a0: f64,
    b0: f64,
) -> (f64, f64) {
    let centered: Vec<f64> = values.iter().map(|v| v - mean_level).collect();
    let q = corr_factor.quad_form(&centered);
    (a0 + 0.5 * values.len() as f64, b0 + 0.5 * q)
}

/// Draws `σ² ~ IG(a0 + L/2, b0 + ½ (g−μ)ᵀ R⁻¹ (g−μ))`.
pub fn draw_sigma2_conjugate<R: Rng + ?Sized>(
    values: &[f64],
    mean_level: f64,
    corr_factor: &GramFactor,
    a0: f64,
    b0: f64,
    rng: &mut R,
) -> f64 {
    let (shape, rate) = sigma2_posterior(values, mean_level, corr_factor, a0, b0);
    draw_inv_gamma(shape, rate, rng)
}

pub fn draw_normal<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + var.sqrt() * z
}
