//! Independent finite-difference oracles shared by the integration tests.
#![allow(dead_code)]

use ctdrl_core::envlib::EnvSpec;

pub fn central<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn second<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

/// The distributional HJB operator applied to a 1-D composite CDF
/// `F(x, z)` with every derivative taken by central differences.
pub struct CompositeFd {
    pub drift: f64,
    pub advection: f64,
    pub diffusion: f64,
}

impl CompositeFd {
    pub fn residual(&self) -> f64 {
        self.drift + self.advection + self.diffusion
    }
}

pub fn composite_fd<F: Fn(f64, f64) -> f64>(env: &EnvSpec, f: F, x: f64, z: f64, hx: f64, hz: f64) -> CompositeFd {
    let mu = env.drift(&[x])[0];
    let sigma = env.diffusion(&[x]);
    let s2: f64 = sigma.iter().map(|v| v * v).sum();
    let fx = central(|y| f(y, z), x, hx);
    let fxx = second(|y| f(y, z), x, hx);
    let fz = central(|w| f(x, w), z, hz);
    CompositeFd {
        drift: mu * fx,
        advection: -(env.reward(&[x]) + z * env.log_discount()) * fz,
        diffusion: 0.5 * s2 * fxx,
    }
}

/// `‖a − b‖∞ / max(‖b‖∞, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(floor);
    num / den
}
