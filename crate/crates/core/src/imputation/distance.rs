use super::Cdf;
use crate::envlib::{linspace, ReturnInterval};
use crate::error::{Error, Result};
use crate::normal;
use crate::quadrature::PanelQuadrature;

/// `sup |F1 − F2|` over `grid` and over both one-sided limits at every jump
/// of either CDF.
pub fn kolmogorov_distance<A: Cdf + ?Sized, B: Cdf + ?Sized>(f1: &A, f2: &B, grid: &[f64]) -> f64 {
    let mut d = grid
        .iter()
        .map(|&z| (f1.cdf(z) - f2.cdf(z)).abs())
        .fold(0.0, f64::max);
    for z in f2.jumps().into_iter().chain(f1.jumps()) {
        d = d
            .max((f1.cdf(z) - f2.cdf(z)).abs())
            .max((f1.cdf_left(z) - f2.cdf_left(z)).abs());
    }
    d
}

/// Finite family of Gaussian bumps `φ_j(z) = exp(−(z − c_j)² / (2 w_j²))`
/// used as test functions for weak pairings on a return interval.
///
/// Each member has unit sup-norm. The weak norm computed against this family
/// is a lower bound on the supremum over all unit test functions, so numbers
/// are relative to the family.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctionFamily {
    centers: Vec<f64>,
    widths: Vec<f64>,
    domain: ReturnInterval,
}

impl TestFunctionFamily {
    pub const STANDARD_SIZE: usize = 17;

    /// 17 bumps centred uniformly over the (working) interval, each of width
    /// one eighth of it.
    pub fn standard(interval: &ReturnInterval) -> Self {
        let dom = interval.working();
        let w = dom.width() / 8.0;
        Self {
            centers: linspace(dom.v_min, dom.v_max, Self::STANDARD_SIZE),
            widths: vec![w; Self::STANDARD_SIZE],
            domain: dom,
        }
    }

    pub fn new(centers: Vec<f64>, widths: Vec<f64>, domain: ReturnInterval) -> Result<Self> {
        if centers.is_empty() || centers.len() != widths.len() {
            return Err(Error::InvalidConfig("test family needs matching nonempty centers and widths".into()));
        }
        if widths.iter().any(|&w| !(w > 0.0)) || centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("test family widths must be positive, centers finite".into()));
        }
        if !(domain.width() > 0.0) {
            return Err(Error::InvalidConfig("test family domain must have positive width".into()));
        }
        Ok(Self {
            centers,
            widths,
            domain,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn domain(&self) -> ReturnInterval {
        self.domain
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    #[inline]
    pub fn eval(&self, j: usize, z: f64) -> f64 {
        let u = (z - self.centers[j]) / self.widths[j];
        (-0.5 * u * u).exp()
    }

    /// Panel width that resolves every member.
    pub fn panel_width(&self) -> f64 {
        self.widths.iter().copied().fold(f64::INFINITY, f64::min) / 4.0
    }

    /// `∫_R g(z) φ_j(z) dz` for every member, with panel edges at `breaks`
    /// and no panel wider than `max_width`.
    pub fn pair<G: Fn(f64) -> f64>(&self, g: G, breaks: &[f64], max_width: f64) -> Result<Vec<f64>> {
        self.pair_with(&PanelQuadrature::default(), g, breaks, max_width)
    }

    pub fn pair_with<G: Fn(f64) -> f64>(
        &self,
        quad: &PanelQuadrature,
        g: G,
        breaks: &[f64],
        max_width: f64,
    ) -> Result<Vec<f64>> {
        let width = max_width.min(self.panel_width());
        quad.integrate_vec(
            |z, out| {
                let gz = g(z);
                for (j, o) in out.iter_mut().enumerate() {
                    *o = gz * self.eval(j, z);
                }
            },
            self.len(),
            self.domain.v_min,
            self.domain.v_max,
            width,
            breaks,
        )
    }

    /// `∫_R φ_j` for each member, by quadrature.
    pub fn masses(&self) -> Result<Vec<f64>> {
        self.pair(|_| 1.0, &[], f64::INFINITY)
    }

    /// `∫_R φ_j` for each member, via the normal CDF.
    pub fn masses_closed_form(&self) -> Vec<f64> {
        let (lo, hi) = (self.domain.v_min, self.domain.v_max);
        self.centers
            .iter()
            .zip(&self.widths)
            .map(|(&c, &w)| {
                w * (2.0 * std::f64::consts::PI).sqrt()
                    * (normal::cdf((hi - c) / w) - normal::cdf((lo - c) / w))
            })
            .collect()
    }

    /// `M = max_j ∫_R φ_j`, by quadrature.
    pub fn max_mass(&self) -> Result<f64> {
        Ok(self.masses()?.into_iter().fold(0.0, f64::max))
    }
}

/// `max_j |∫_R (F1 − F2) φ_j dz|`.
pub fn weak_distance<A: Cdf + ?Sized, B: Cdf + ?Sized>(f1: &A, f2: &B, fam: &TestFunctionFamily) -> Result<f64> {
    let mut breaks = f1.jumps();
    breaks.extend(f2.jumps());
    let pairs = fam.pair(|z| f1.cdf(z) - f2.cdf(z), &breaks, fam.panel_width())?;
    Ok(pairs.into_iter().map(f64::abs).fold(0.0, f64::max))
}
