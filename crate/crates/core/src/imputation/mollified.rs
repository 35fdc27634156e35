use nalgebra::DMatrix;

use super::{Cdf, StatKind, StatVec};
use crate::envlib::ReturnInterval;
use crate::error::{Error, Result};
use crate::normal;

/// `h_N = 0.5 · (v_max − v_min) / N` on the working interval.
pub fn default_bandwidth(interval: &ReturnInterval, n: usize) -> f64 {
    0.5 * interval.working().width() / n.max(1) as f64
}

/// `(1/N) Σ Φ((z − s_i)/h)`.
pub fn mollified_cdf(s: &[f64], z: f64, h: f64) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    s.iter().map(|&si| normal::cdf((z - si) / h)).sum::<f64>() / s.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedGrads {
    pub dz: f64,
    pub ds: Vec<f64>,
    /// `∂²/∂s_i²`; mixed partials vanish because each ramp depends on one statistic.
    pub ds2_diag: Vec<f64>,
}

pub fn mollified_grads(s: &[f64], z: f64, h: f64) -> MollifiedGrads {
    let n = s.len().max(1) as f64;
    let mut dz = 0.0;
    let mut ds = Vec::with_capacity(s.len());
    let mut ds2 = Vec::with_capacity(s.len());
    for &si in s {
        let u = (z - si) / h;
        let k = normal::pdf(u);
        dz += k;
        ds.push(-k / (n * h));
        ds2.push(-u * k / (n * h * h));
    }
    MollifiedGrads {
        dz: dz / (n * h),
        ds,
        ds2_diag: ds2,
    }
}

/// A mollified quantile CDF as a standalone distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedCdf {
    pub stats: StatVec,
    pub bandwidth: f64,
}

impl MollifiedCdf {
    pub fn new(stats: StatVec, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if stats.kind != StatKind::Quantile {
            return Err(Error::InvalidStats("mollification applies to quantile statistics".into()));
        }
        Ok(Self { stats, bandwidth })
    }
}

impl Cdf for MollifiedCdf {
    fn cdf(&self, z: f64) -> f64 {
        mollified_cdf(&self.stats.values, z, self.bandwidth)
    }
}

/// Second derivatives of `Φ(s, z)` in the statistics.
#[derive(Debug, Clone, PartialEq)]
pub enum StatHessian {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl StatHessian {
    /// `Jᵀ H J` for a `N × d` Jacobian `J`.
    pub fn sandwich(&self, jac: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            StatHessian::Diagonal(diag) => {
                let d = jac.ncols();
                let mut out = DMatrix::zeros(d, d);
                for (k, &hk) in diag.iter().enumerate() {
                    if hk == 0.0 {
                        continue;
                    }
                    for a in 0..d {
                        for b in 0..d {
                            out[(a, b)] += hk * jac[(k, a)] * jac[(k, b)];
                        }
                    }
                }
                out
            }
            StatHessian::Dense(h) => jac.transpose() * h * jac,
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            StatHessian::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    0.0
                }
            }
            StatHessian::Dense(h) => h[(i, j)],
        }
    }
}

/// Value and derivatives of `Φ(s, z)` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationGrads {
    pub value: f64,
    pub dz: f64,
    pub ds: Vec<f64>,
    pub hess: StatHessian,
}

/// An imputation strategy whose CDF is twice differentiable in the
/// statistics and once in `z`.
pub trait SmoothImputation: Send + Sync {
    /// Required statistic count, if the strategy fixes one.
    fn n_stats(&self) -> Option<usize> {
        None
    }

    fn cdf(&self, s: &[f64], z: f64) -> f64;

    fn grads(&self, s: &[f64], z: f64) -> ImputationGrads;

    /// Length scale over which `Φ(s, ·)` changes; quadrature panels are kept
    /// below it.
    fn resolution(&self, s: &[f64]) -> f64;

    /// Points in `z` around which `Φ(s, ·)` concentrates its variation.
    fn breakpoints(&self, _s: &[f64]) -> Vec<f64> {
        Vec::new()
    }
}

/// Quantile imputation with every Heaviside step replaced by a Gaussian CDF
/// ramp of bandwidth `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifiedQuantile {
    pub bandwidth: f64,
}

impl MollifiedQuantile {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(Self { bandwidth })
        } else {
            Err(Error::InvalidConfig(format!("bandwidth must be positive, got {bandwidth}")))
        }
    }
}

impl SmoothImputation for MollifiedQuantile {
    fn cdf(&self, s: &[f64], z: f64) -> f64 {
        mollified_cdf(s, z, self.bandwidth)
    }

    fn grads(&self, s: &[f64], z: f64) -> ImputationGrads {
        let g = mollified_grads(s, z, self.bandwidth);
        ImputationGrads {
            value: mollified_cdf(s, z, self.bandwidth),
            dz: g.dz,
            ds: g.ds,
            hess: StatHessian::Diagonal(g.ds2_diag),
        }
    }

    fn resolution(&self, _s: &[f64]) -> f64 {
        self.bandwidth
    }

    fn breakpoints(&self, s: &[f64]) -> Vec<f64> {
        s.to_vec()
    }
}

/// Gaussian imputation over `(μ, σ²)`; smooth while `σ² > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SmoothGaussian;

impl SmoothImputation for SmoothGaussian {
    fn n_stats(&self) -> Option<usize> {
        Some(2)
    }

    fn cdf(&self, s: &[f64], z: f64) -> f64 {
        normal::cdf((z - s[0]) / s[1].sqrt())
    }

    fn grads(&self, s: &[f64], z: f64) -> ImputationGrads {
        let v = s[1];
        let sd = v.sqrt();
        let u = (z - s[0]) / sd;
        let k = normal::pdf(u);
        let d_mu = -k / sd;
        let d_v = -u * k / (2.0 * v);
        let h_mumu = -u * k / v;
        let h_muv = k * (1.0 - u * u) / (2.0 * v * sd);
        let h_vv = u * k * (3.0 - u * u) / (4.0 * v * v);
        ImputationGrads {
            value: normal::cdf(u),
            dz: k / sd,
            ds: vec![d_mu, d_v],
            hess: StatHessian::Dense(DMatrix::from_row_slice(2, 2, &[h_mumu, h_muv, h_muv, h_vv])),
        }
    }

    fn resolution(&self, s: &[f64]) -> f64 {
        s[1].max(0.0).sqrt()
    }

    fn breakpoints(&self, s: &[f64]) -> Vec<f64> {
        vec![s[0]]
    }
}
