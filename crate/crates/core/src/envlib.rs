//! Fixed-policy diffusion environments.
//!
//! An [`EnvSpec`] bundles the policy-induced dynamics `dX = μ(X)dt + σ(X)dB`,
//! a bounded reward rate `r`, a discount `γ ∈ (0, 1)` and the state box. The
//! bundled fixtures ([`make_const_env`], [`make_ou_env`]) come with an
//! [`AnalyticBaseline`] holding whatever is known in closed form.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Policy-induced dynamics. Buffers are caller-owned so the simulation loop
/// never allocates.
pub trait Dynamics: Send + Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    /// Writes `μ(x)` (length `dim`).
    fn drift(&self, x: &[f64], out: &mut [f64]);
    /// Writes `σ(x)` row-major, `dim × noise_dim`.
    fn diffusion(&self, x: &[f64], out: &mut [f64]);
    fn reward(&self, x: &[f64]) -> f64;
}

#[derive(Clone)]
pub struct EnvSpec {
    discount: f64,
    state_lo: Vec<f64>,
    state_hi: Vec<f64>,
    reward_range: (f64, f64),
    dynamics: Arc<dyn Dynamics>,
}

impl fmt::Debug for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvSpec")
            .field("dim", &self.dim())
            .field("noise_dim", &self.noise_dim())
            .field("discount", &self.discount)
            .field("state_lo", &self.state_lo)
            .field("state_hi", &self.state_hi)
            .field("reward_range", &self.reward_range)
            .finish()
    }
}

impl EnvSpec {
    /// `reward_range` must bound `r` on the state box; it is what
    /// [`return_bounds`] is computed from.
    pub fn new(
        dynamics: Arc<dyn Dynamics>,
        discount: f64,
        state_lo: Vec<f64>,
        state_hi: Vec<f64>,
        reward_range: (f64, f64),
    ) -> Result<Self> {
        check_discount(discount)?;
        let d = dynamics.dim();
        if d == 0 || dynamics.noise_dim() == 0 {
            return Err(Error::InvalidConfig("state and noise dimensions must be positive".into()));
        }
        for (name, v) in [("state_lo", &state_lo), ("state_hi", &state_hi)] {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    context: name,
                    expected: d,
                    got: v.len(),
                });
            }
        }
        if state_lo.iter().zip(&state_hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::InvalidConfig("state box must satisfy lo <= hi with finite bounds".into()));
        }
        let (rmin, rmax) = reward_range;
        if !(rmin.is_finite() && rmax.is_finite() && rmin <= rmax) {
            return Err(Error::InvalidConfig(format!("reward range [{rmin}, {rmax}] is not a finite interval")));
        }
        Ok(Self {
            discount,
            state_lo,
            state_hi,
            reward_range,
            dynamics,
        })
    }

    pub fn dim(&self) -> usize {
        self.dynamics.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.dynamics.noise_dim()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// `ln γ` (negative).
    pub fn log_discount(&self) -> f64 {
        self.discount.ln()
    }

    pub fn state_lo(&self) -> &[f64] {
        &self.state_lo
    }

    pub fn state_hi(&self) -> &[f64] {
        &self.state_hi
    }

    /// `(r_min, r_max)` on the state box.
    pub fn reward_range(&self) -> (f64, f64) {
        self.reward_range
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn drift(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.dynamics.drift(x, out.as_mut_slice());
        out
    }

    /// `σ(x)` as a `dim × noise_dim` matrix.
    pub fn diffusion(&self, x: &[f64]) -> DMatrix<f64> {
        let (d, m) = (self.dim(), self.noise_dim());
        let mut buf = vec![0.0; d * m];
        self.dynamics.diffusion(x, &mut buf);
        DMatrix::from_row_slice(d, m, &buf)
    }

    pub fn reward(&self, x: &[f64]) -> f64 {
        self.dynamics.reward(x)
    }

    pub fn clamp_to_box(&self, x: &mut [f64]) {
        for ((xi, lo), hi) in x.iter_mut().zip(&self.state_lo).zip(&self.state_hi) {
            *xi = xi.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(&self.state_lo)
                .zip(&self.state_hi)
                .all(|((xi, lo), hi)| lo <= xi && xi <= hi)
    }
}

fn check_discount(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidDiscount(gamma))
    }
}

/// `[V_min, V_max]`, the set every realizable discounted return lies in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnInterval {
    pub v_min: f64,
    pub v_max: f64,
}

impl ReturnInterval {
    pub fn new(v_min: f64, v_max: f64) -> Result<Self> {
        if v_min <= v_max && v_min.is_finite() && v_max.is_finite() {
            Ok(Self { v_min, v_max })
        } else {
            Err(Error::InvalidConfig(format!("return interval [{v_min}, {v_max}] is not ordered")))
        }
    }

    pub fn width(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn contains(&self, z: f64) -> bool {
        self.v_min <= z && z <= self.v_max
    }

    /// A nondegenerate interval for pairing against test functions.
    ///
    /// A deterministic return collapses the interval to a point; it is then
    /// widened to `[v - max(|v|, 1), v + max(|v|, 1)]`.
    pub fn working(&self) -> Self {
        let scale = self.v_min.abs().max(self.v_max.abs()).max(1.0);
        if self.width() > 1e-12 * scale {
            *self
        } else {
            let v = 0.5 * (self.v_min + self.v_max);
            let pad = v.abs().max(1.0);
            Self {
                v_min: v - pad,
                v_max: v + pad,
            }
        }
    }

    /// Evenly spaced points from `v_min` to `v_max` inclusive.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        linspace(self.v_min, self.v_max, n)
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `∫₀^∞ γ^t dt = 1 / ln(1/γ)`, so returns lie in `[r_min, r_max] / ln(1/γ)`.
pub fn return_bounds(env: &EnvSpec) -> Result<ReturnInterval> {
    check_discount(env.discount)?;
    let horizon = 1.0 / (-env.discount.ln());
    let (rmin, rmax) = env.reward_range;
    ReturnInterval::new(rmin * horizon, rmax * horizon)
}

/// Value, gradient and Hessian of a scalar function of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueJet {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

pub type ValueFn = Arc<dyn Fn(&[f64]) -> ValueJet + Send + Sync>;
pub type ReturnCdfFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Closed-form quantities of a fixture, where they exist.
#[derive(Clone, Default)]
pub struct AnalyticBaseline {
    /// `V^π` with its first two derivatives.
    pub value: Option<ValueFn>,
    /// `F(x, z)`, the CDF of the return from `x`.
    pub return_cdf: Option<ReturnCdfFn>,
    /// `F⁻¹(x, τ) = inf{z : F(x, z) ≥ τ}`.
    pub return_quantile: Option<ReturnCdfFn>,
}

impl fmt::Debug for AnalyticBaseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticBaseline")
            .field("value", &self.value.is_some())
            .field("return_cdf", &self.return_cdf.is_some())
            .field("return_quantile", &self.return_quantile.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
struct ConstantReward {
    c: f64,
}

impl Dynamics for ConstantReward {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn drift(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn diffusion(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn reward(&self, _x: &[f64]) -> f64 {
        self.c
    }
}

/// 1-D Ornstein–Uhlenbeck state with reward `r(x) = x` clipped to the box.
#[derive(Debug, Clone)]
pub struct OrnsteinUhlenbeck {
    pub theta: f64,
    pub sigma0: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Dynamics for OrnsteinUhlenbeck {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -self.theta * x[0];
    }
    fn diffusion(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma0;
    }
    fn reward(&self, x: &[f64]) -> f64 {
        x[0].clamp(self.lo, self.hi)
    }
}

fn step_cdf(at: f64) -> ReturnCdfFn {
    Arc::new(move |_x: &[f64], z: f64| if z >= at { 1.0 } else { 0.0 })
}

/// Deterministic environment: no motion, constant reward `c`. Every return
/// equals `c / ln(1/γ)`.
pub fn make_const_env(c: f64, gamma: f64) -> Result<(EnvSpec, AnalyticBaseline)> {
    make_const_env_on(c, gamma, -1.0, 1.0)
}

pub fn make_const_env_on(c: f64, gamma: f64, lo: f64, hi: f64) -> Result<(EnvSpec, AnalyticBaseline)> {
    check_discount(gamma)?;
    if !c.is_finite() {
        return Err(Error::InvalidConfig(format!("reward constant {c} is not finite")));
    }
    let env = EnvSpec::new(Arc::new(ConstantReward { c }), gamma, vec![lo], vec![hi], (c, c))?;
    let v = c / (-gamma.ln());
    let baseline = AnalyticBaseline {
        value: Some(Arc::new(move |_x: &[f64]| ValueJet {
            value: v,
            grad: DVector::zeros(1),
            hess: DMatrix::zeros(1, 1),
        })),
        return_cdf: Some(step_cdf(v)),
        return_quantile: Some(Arc::new(move |_x: &[f64], _tau: f64| v)),
    };
    Ok((env, baseline))
}

/// Default OU state box `±(3σ₀/√(2θ) + 1)`.
pub fn ou_default_box(theta: f64, sigma0: f64) -> (f64, f64) {
    let half = 3.0 * sigma0 / (2.0 * theta).sqrt() + 1.0;
    (-half, half)
}

/// Variance of `∫₀^∞ γ^t X_t dt` for the unconfined OU process.
///
/// The return is a linear functional of a Gaussian process, hence Gaussian;
/// by Itô isometry its variance is `σ₀² / (2β (θ + β)²)` with `β = ln(1/γ)`.
pub fn ou_return_variance(theta: f64, sigma0: f64, gamma: f64) -> f64 {
    let beta = -gamma.ln();
    sigma0 * sigma0 / (2.0 * beta * (theta + beta).powi(2))
}

pub fn make_ou_env(theta: f64, sigma0: f64, gamma: f64) -> Result<(EnvSpec, AnalyticBaseline)> {
    let (lo, hi) = ou_default_box(theta, sigma0);
    make_ou_env_on(theta, sigma0, gamma, lo, hi)
}

/// OU fixture on an explicit box. The baseline ignores confinement at the
/// box edges.
pub fn make_ou_env_on(
    theta: f64,
    sigma0: f64,
    gamma: f64,
    lo: f64,
    hi: f64,
) -> Result<(EnvSpec, AnalyticBaseline)> {
    check_discount(gamma)?;
    if !(theta > 0.0) {
        return Err(Error::InvalidConfig(format!("OU mean-reversion rate must be positive, got {theta}")));
    }
    if !(sigma0 >= 0.0) {
        return Err(Error::InvalidConfig(format!("OU diffusion must be nonnegative, got {sigma0}")));
    }
    let dyns = OrnsteinUhlenbeck { theta, sigma0, lo, hi };
    let env = EnvSpec::new(Arc::new(dyns), gamma, vec![lo], vec![hi], (lo, hi))?;

    let slope = 1.0 / (theta - gamma.ln());
    let sd = ou_return_variance(theta, sigma0, gamma).sqrt();
    let value: ValueFn = Arc::new(move |x: &[f64]| ValueJet {
        value: slope * x[0],
        grad: DVector::from_element(1, slope),
        hess: DMatrix::zeros(1, 1),
    });
    let (return_cdf, return_quantile): (ReturnCdfFn, ReturnCdfFn) = if sd > 0.0 {
        (
            Arc::new(move |x: &[f64], z: f64| normal::cdf((z - slope * x[0]) / sd)),
            Arc::new(move |x: &[f64], tau: f64| slope * x[0] + sd * normal::quantile(tau)),
        )
    } else {
        (
            Arc::new(move |x: &[f64], z: f64| if z >= slope * x[0] { 1.0 } else { 0.0 }),
            Arc::new(move |x: &[f64], _tau: f64| slope * x[0]),
        )
    };
    let baseline = AnalyticBaseline {
        value: Some(value),
        return_cdf: Some(return_cdf),
        return_quantile: Some(return_quantile),
    };
    Ok((env, baseline))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    #[serde(alias = "constant")]
    Const,
    Ou,
}

/// Either a scalar (1-D box) or a per-coordinate vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Bound {
    fn scalar(&self) -> Result<f64> {
        match self {
            Bound::Scalar(v) => Ok(*v),
            Bound::Vector(v) if v.len() == 1 => Ok(v[0]),
            Bound::Vector(v) => Err(Error::DimensionMismatch {
                context: "state bound",
                expected: 1,
                got: v.len(),
            }),
        }
    }
}

/// JSON environment description:
/// `{kind, theta, sigma0, gamma, c, state_lo, state_hi}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub kind: EnvKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_lo: Option<Bound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_hi: Option<Bound>,
}

impl EnvConfig {
    pub fn ou(theta: f64, sigma0: f64, gamma: f64) -> Self {
        Self {
            kind: EnvKind::Ou,
            theta: Some(theta),
            sigma0: Some(sigma0),
            gamma,
            c: None,
            state_lo: None,
            state_hi: None,
        }
    }

    pub fn constant(c: f64, gamma: f64) -> Self {
        Self {
            kind: EnvKind::Const,
            theta: None,
            sigma0: None,
            gamma,
            c: Some(c),
            state_lo: None,
            state_hi: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn build(&self) -> Result<(EnvSpec, AnalyticBaseline)> {
        let lo = self.state_lo.as_ref().map(Bound::scalar).transpose()?;
        let hi = self.state_hi.as_ref().map(Bound::scalar).transpose()?;
        match self.kind {
            EnvKind::Const => {
                let c = self
                    .c
                    .ok_or_else(|| Error::InvalidConfig("const env requires `c`".into()))?;
                make_const_env_on(c, self.gamma, lo.unwrap_or(-1.0), hi.unwrap_or(1.0))
            }
            EnvKind::Ou => {
                let theta = self
                    .theta
                    .ok_or_else(|| Error::InvalidConfig("ou env requires `theta`".into()))?;
                let sigma0 = self.sigma0.unwrap_or(0.0);
                if !(theta > 0.0) {
                    return Err(Error::InvalidConfig(format!("OU mean-reversion rate must be positive, got {theta}")));
                }
                let (dlo, dhi) = ou_default_box(theta, sigma0.max(0.0));
                make_ou_env_on(theta, sigma0, self.gamma, lo.unwrap_or(dlo), hi.unwrap_or(dhi))
            }
        }
    }
}
