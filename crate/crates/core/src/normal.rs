//! Standard normal density, CDF and quantile.

use statrs::function::erf::erfc_inv;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// `Φ(u)`, accurate in both tails.
#[inline]
pub fn cdf(u: f64) -> f64 {
    0.5 * libm::erfc(-u / std::f64::consts::SQRT_2)
}

/// Inverse of [`cdf`] on `(0, 1)`; returns `∓∞` at the endpoints.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let u = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // one Newton step against the accurate CDF
    let d = pdf(u);
    if d > 0.0 {
        u - (cdf(u) - p) / d
    } else {
        u
    }
}
