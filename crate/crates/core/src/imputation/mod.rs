//! Imputation strategies: maps from a finite statistic vector back to a
//! return distribution, plus the distances used to compare CDFs.
//!
//! The quantile strategy places mass `1/N` on each statistic,
//! `Φ(s, z) = (1/N) Σ H(z − s_i)` with `H(t) = 1[t ≥ 0]`. Its derivatives in
//! `z` and `s` are Dirac masses, so the loss machinery works with
//! [`MollifiedQuantile`], which swaps each step for a Gaussian-kernel ramp.

mod distance;
mod mollified;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

pub use distance::{kolmogorov_distance, weak_distance, TestFunctionFamily};
pub use mollified::{
    default_bandwidth, mollified_cdf, mollified_grads, ImputationGrads, MollifiedCdf, MollifiedGrads, MollifiedQuantile,
    SmoothGaussian, SmoothImputation, StatHessian,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    Quantile,
    CategoricalProbs,
    GaussianParams,
}

/// `N` statistics tagged with the strategy that interprets them. Serializes
/// as `{"kind": ..., "values": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatVec {
    pub kind: StatKind,
    pub values: Vec<f64>,
}

impl StatVec {
    pub fn quantile(values: Vec<f64>) -> Self {
        Self {
            kind: StatKind::Quantile,
            values,
        }
    }

    pub fn categorical(values: Vec<f64>) -> Self {
        Self {
            kind: StatKind::CategoricalProbs,
            values,
        }
    }

    pub fn gaussian(mu: f64, sigma2: f64) -> Self {
        Self {
            kind: StatKind::GaussianParams,
            values: vec![mu, sigma2],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Checks the kind's invariants; `interval` additionally bounds quantiles.
    pub fn validate(&self, interval: Option<&crate::envlib::ReturnInterval>) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidStats("statistics must be finite".into()));
        }
        match self.kind {
            StatKind::Quantile => {
                if self.values.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::InvalidStats("quantiles must be nondecreasing".into()));
                }
                if let Some(iv) = interval {
                    if self.values.iter().any(|&v| !iv.contains(v)) {
                        return Err(Error::InvalidStats("quantiles must lie in the return interval".into()));
                    }
                }
            }
            StatKind::CategoricalProbs => check_simplex(&self.values)?,
            StatKind::GaussianParams => {
                if self.values.len() != 2 || self.values[1] < 0.0 {
                    return Err(Error::InvalidStats("gaussian statistics are (mean, variance >= 0)".into()));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn check_simplex(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    if p.is_empty() || min < -1e-12 || (sum - 1.0).abs() > 1e-12 {
        Err(Error::NotInSimplex { sum, min })
    } else {
        Ok(())
    }
}

/// A cumulative distribution function on the real line.
pub trait Cdf {
    /// `P(X ≤ z)`.
    fn cdf(&self, z: f64) -> f64;

    /// `P(X < z)`; equal to [`Cdf::cdf`] except at jumps.
    fn cdf_left(&self, z: f64) -> f64 {
        self.cdf(z)
    }

    /// Locations of the jump discontinuities, if any.
    fn jumps(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl<F: Fn(f64) -> f64> Cdf for F {
    fn cdf(&self, z: f64) -> f64 {
        self(z)
    }
}

/// `(1/N) #{i : z ≥ s_i}`.
pub fn quantile_cdf_exact(s: &[f64], z: f64) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    s.iter().filter(|&&si| z >= si).count() as f64 / s.len() as f64
}

/// The exact quantile imputation as a step CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCdf {
    atoms: Vec<f64>,
}

impl QuantileCdf {
    pub fn new(s: &StatVec) -> Result<Self> {
        if s.kind != StatKind::Quantile || s.is_empty() {
            return Err(Error::InvalidStats("quantile imputation needs a nonempty quantile vector".into()));
        }
        s.validate(None)?;
        Ok(Self {
            atoms: s.values.clone(),
        })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }
}

impl Cdf for QuantileCdf {
    fn cdf(&self, z: f64) -> f64 {
        self.atoms.partition_point(|&a| a <= z) as f64 / self.atoms.len() as f64
    }
    fn cdf_left(&self, z: f64) -> f64 {
        self.atoms.partition_point(|&a| a < z) as f64 / self.atoms.len() as f64
    }
    fn jumps(&self) -> Vec<f64> {
        let mut j = self.atoms.clone();
        j.dedup();
        j
    }
}

/// `Σ_{i : ξ_i ≤ z} p_i` on a fixed sorted support.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalCdf {
    support: Vec<f64>,
    probs: Vec<f64>,
}

pub fn categorical_impute(p: &StatVec, support: &[f64]) -> Result<CategoricalCdf> {
    if p.kind != StatKind::CategoricalProbs {
        return Err(Error::InvalidStats("expected categorical probabilities".into()));
    }
    if p.len() != support.len() {
        return Err(Error::DimensionMismatch {
            context: "categorical support",
            expected: p.len(),
            got: support.len(),
        });
    }
    check_simplex(&p.values)?;
    if support.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidStats("categorical support must be sorted".into()));
    }
    Ok(CategoricalCdf {
        support: support.to_vec(),
        probs: p.values.clone(),
    })
}

impl Cdf for CategoricalCdf {
    fn cdf(&self, z: f64) -> f64 {
        let k = self.support.partition_point(|&x| x <= z);
        self.probs[..k].iter().sum::<f64>().min(1.0)
    }
    fn cdf_left(&self, z: f64) -> f64 {
        let k = self.support.partition_point(|&x| x < z);
        self.probs[..k].iter().sum::<f64>().min(1.0)
    }
    fn jumps(&self) -> Vec<f64> {
        self.support
            .iter()
            .zip(&self.probs)
            .filter(|(_, &p)| p > 0.0)
            .map(|(&x, _)| x)
            .collect()
    }
}

/// `N(μ, σ²)`, or a unit step at `μ` when `σ² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCdf {
    pub mu: f64,
    pub sigma2: f64,
}

pub fn gaussian_impute(mu: f64, sigma2: f64) -> Result<GaussianCdf> {
    if !(sigma2 >= 0.0) || !mu.is_finite() || !sigma2.is_finite() {
        return Err(Error::InvalidStats(format!("invalid gaussian statistics ({mu}, {sigma2})")));
    }
    Ok(GaussianCdf { mu, sigma2 })
}

impl Cdf for GaussianCdf {
    fn cdf(&self, z: f64) -> f64 {
        if self.sigma2 == 0.0 {
            if z >= self.mu {
                1.0
            } else {
                0.0
            }
        } else {
            normal::cdf((z - self.mu) / self.sigma2.sqrt())
        }
    }
    fn cdf_left(&self, z: f64) -> f64 {
        if self.sigma2 == 0.0 {
            if z > self.mu {
                1.0
            } else {
                0.0
            }
        } else {
            self.cdf(z)
        }
    }
    fn jumps(&self) -> Vec<f64> {
        if self.sigma2 == 0.0 {
            vec![self.mu]
        } else {
            vec![]
        }
    }
}

/// Uniform distribution on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformCdf {
    pub lo: f64,
    pub hi: f64,
}

impl Cdf for UniformCdf {
    fn cdf(&self, z: f64) -> f64 {
        ((z - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

/// `N(mean, std²)` conditioned on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormalCdf {
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Cdf for TruncatedNormalCdf {
    fn cdf(&self, z: f64) -> f64 {
        let a = normal::cdf((self.lo - self.mean) / self.std);
        let b = normal::cdf((self.hi - self.mean) / self.std);
        let z = z.clamp(self.lo, self.hi);
        ((normal::cdf((z - self.mean) / self.std) - a) / (b - a)).clamp(0.0, 1.0)
    }
}

/// `inf{z ∈ [lo, hi] : F(z) ≥ τ}` by bisection on a nondecreasing `F`.
pub fn quantile_by_bisection<C: Cdf + ?Sized>(f: &C, tau: f64, lo: f64, hi: f64) -> f64 {
    if f.cdf(lo) >= tau {
        return lo;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if f.cdf(m) >= tau {
            b = m;
        } else {
            a = m;
        }
    }
    b
}

/// Midpoint levels `(2i − 1) / (2N)`.
pub fn midpoint_levels(n: usize) -> Vec<f64> {
    (1..=n).map(|i| (2 * i - 1) as f64 / (2 * n) as f64).collect()
}

/// Midpoint-level quantiles of `f` located by bisection on `[lo, hi]`.
pub fn midpoint_quantiles<C: Cdf + ?Sized>(f: &C, n: usize, lo: f64, hi: f64) -> StatVec {
    StatVec::quantile(
        midpoint_levels(n)
            .into_iter()
            .map(|t| quantile_by_bisection(f, t, lo, hi))
            .collect(),
    )
}

/// Writes `z,F(z)` rows with a header line.
pub fn write_cdf_csv<W: Write, C: Cdf + ?Sized>(mut w: W, f: &C, grid: &[f64]) -> Result<()> {
    writeln!(w, "z,F")?;
    for &z in grid {
        writeln!(w, "{z},{}", f.cdf(z))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_cdf_examples() {
        let s = [0.25, 0.75];
        assert_eq!(quantile_cdf_exact(&s, 0.5), 0.5);
        assert_eq!(quantile_cdf_exact(&s, 0.1), 0.0);
        assert_eq!(quantile_cdf_exact(&s, 0.75), 1.0);
        assert_eq!(quantile_cdf_exact(&s, 0.25), 0.5);
        let q = QuantileCdf::new(&StatVec::quantile(s.to_vec())).unwrap();
        assert_eq!(q.cdf_left(0.25), 0.0);
        assert_eq!(q.cdf(0.6), quantile_cdf_exact(&s, 0.6));
    }

    #[test]
    fn categorical_examples() {
        let p = StatVec::categorical(vec![1.0, 0.0, 0.0]);
        let c = categorical_impute(&p, &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(c.cdf(-0.1), 0.0);
        assert_eq!(c.cdf(0.0), 1.0);

        let c = categorical_impute(&StatVec::categorical(vec![0.5, 0.5]), &[0.0, 1.0]).unwrap();
        assert_eq!(c.cdf(0.5), 0.5);
        assert_eq!(c.cdf(1.0), 1.0);
        assert_eq!(c.cdf(7.0), 1.0);

        let bad = StatVec::categorical(vec![0.6, 0.5]);
        assert!(matches!(categorical_impute(&bad, &[0.0, 1.0]), Err(Error::NotInSimplex { .. })));
        let neg = StatVec::categorical(vec![1.1, -0.1]);
        assert!(categorical_impute(&neg, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn gaussian_examples() {
        let g = gaussian_impute(0.3, 2.0).unwrap();
        assert!((g.cdf(0.3) - 0.5).abs() < 1e-15);
        let d = gaussian_impute(0.3, 0.0).unwrap();
        assert_eq!(d.cdf(0.29), 0.0);
        assert_eq!(d.cdf(0.3), 1.0);
        let s = gaussian_impute(0.0, 1.0).unwrap();
        assert!((s.cdf(1.96) - 0.9750).abs() < 5e-5);
        assert!(gaussian_impute(0.0, -1.0).is_err());
    }

    #[test]
    fn stat_vec_json_shape() {
        let s = StatVec::quantile(vec![0.25, 0.75]);
        let j = s.to_json().unwrap();
        assert_eq!(j, r#"{"kind":"quantile","values":[0.25,0.75]}"#);
        assert_eq!(StatVec::from_json(&j).unwrap(), s);
        assert!(StatVec::gaussian(0.0, -1.0).validate(None).is_err());
        assert!(StatVec::quantile(vec![1.0, 0.0]).validate(None).is_err());
    }

    #[test]
    fn bisection_finds_inf() {
        let u = UniformCdf { lo: 0.0, hi: 1.0 };
        let q = midpoint_quantiles(&u, 4, 0.0, 1.0).values;
        for (a, b) in q.iter().zip([0.125, 0.375, 0.625, 0.875]) {
            assert!((a - b).abs() < 1e-14);
        }
        let c = categorical_impute(&StatVec::categorical(vec![0.5, 0.5]), &[0.0, 1.0]).unwrap();
        assert!((quantile_by_bisection(&c, 0.5, -1.0, 2.0) - 0.0).abs() < 1e-14);
        assert!((quantile_by_bisection(&c, 0.75, -1.0, 2.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn truncated_normal_endpoints() {
        let t = TruncatedNormalCdf { mean: 0.3, std: 0.7, lo: -1.0, hi: 2.0 };
        assert_eq!(t.cdf(-1.0), 0.0);
        assert_eq!(t.cdf(2.0), 1.0);
        assert!(t.cdf(0.3) > 0.5 - 0.2 && t.cdf(0.3) < 0.6);
    }

    #[test]
    fn cdf_csv() {
        let mut buf = Vec::new();
        write_cdf_csv(&mut buf, &UniformCdf { lo: 0.0, hi: 2.0 }, &[0.0, 1.0]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "z,F\n0,0\n1,0.5\n");
    }

    proptest::proptest! {
        #[test]
        fn quantile_cdf_is_monotone_step(
            mut s in proptest::collection::vec(-3.0f64..3.0, 1..20),
            zs in proptest::collection::vec(-4.0f64..4.0, 2..30),
        ) {
            s.sort_by(f64::total_cmp);
            let n = s.len() as f64;
            let mut zs = zs;
            zs.sort_by(f64::total_cmp);
            let vals: Vec<f64> = zs.iter().map(|&z| quantile_cdf_exact(&s, z)).collect();
            proptest::prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            for v in vals {
                proptest::prop_assert!(((v * n).round() - v * n).abs() < 1e-9);
            }
            // right-continuity at each atom
            for &a in &s {
                proptest::prop_assert_eq!(quantile_cdf_exact(&s, a), quantile_cdf_exact(&s, a + 1e-12));
            }
        }
    }
}
