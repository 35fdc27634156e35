//! Composite Gauss–Legendre quadrature with breakpoints and a refinement check.

use crate::error::{Error, Result};

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Chebyshev initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (mid + half * t, w * half))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, dp)
}

/// Sorted panel boundaries covering `[lo, hi]` with every panel no wider than
/// `max_width` and every `extra` point inside `(lo, hi)` as a boundary.
pub fn panel_breaks(lo: f64, hi: f64, max_width: f64, extra: &[f64]) -> Vec<f64> {
    assert!(hi >= lo);
    if hi == lo {
        return vec![lo, hi];
    }
    let n = ((hi - lo) / max_width).ceil().max(1.0) as usize;
    let mut b: Vec<f64> = (0..=n)
        .map(|k| lo + (hi - lo) * k as f64 / n as f64)
        .collect();
    b.extend(extra.iter().copied().filter(|&e| e > lo && e < hi));
    b.sort_by(f64::total_cmp);
    let span = hi - lo;
    b.dedup_by(|a, c| (*a - *c).abs() <= 1e-14 * span);
    *b.last_mut().unwrap() = hi;
    b
}

/// Composite rule that integrates a vector-valued integrand and refines every
/// panel by halving until two successive levels agree.
#[derive(Debug, Clone)]
pub struct PanelQuadrature {
    rule: GaussLegendre,
    pub tol: f64,
    pub max_levels: usize,
}

impl Default for PanelQuadrature {
    fn default() -> Self {
        Self {
            rule: GaussLegendre::new(10),
            tol: 1e-8,
            max_levels: 8,
        }
    }
}

impl PanelQuadrature {
    pub fn new(order: usize, tol: f64, max_levels: usize) -> Self {
        Self {
            rule: GaussLegendre::new(order),
            tol,
            max_levels,
        }
    }

    fn at_level<F: Fn(f64, &mut [f64])>(&self, f: &F, dim: usize, breaks: &[f64], level: usize) -> Vec<f64> {
        let mut acc = vec![0.0; dim];
        let mut buf = vec![0.0; dim];
        let sub = 1usize << level;
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let step = (b - a) / sub as f64;
            for k in 0..sub {
                let pa = a + step * k as f64;
                let pb = if k + 1 == sub { b } else { pa + step };
                for (z, wt) in self.rule.mapped(pa, pb) {
                    f(z, &mut buf);
                    for (s, v) in acc.iter_mut().zip(&buf) {
                        *s += wt * v;
                    }
                }
            }
        }
        acc
    }

    /// `∫_lo^hi f(z) dz` component-wise. Errors when `max_levels` halvings
    /// never bring successive estimates within `tol` of each other.
    pub fn integrate_vec<F: Fn(f64, &mut [f64])>(
        &self,
        f: F,
        dim: usize,
        lo: f64,
        hi: f64,
        max_width: f64,
        extra: &[f64],
    ) -> Result<Vec<f64>> {
        let breaks = panel_breaks(lo, hi, max_width, extra);
        let mut prev = self.at_level(&f, dim, &breaks, 0);
        let mut diff = f64::INFINITY;
        for level in 1..=self.max_levels {
            let cur = self.at_level(&f, dim, &breaks, level);
            diff = prev
                .iter()
                .zip(&cur)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if diff <= self.tol {
                return Ok(cur);
            }
            prev = cur;
        }
        Err(Error::QuadratureNonConvergence {
            diff,
            levels: self.max_levels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials() {
        let gl = GaussLegendre::new(5);
        // degree 9 is the highest exact degree for 5 nodes
        let v = gl.integrate(|x| x.powi(9) + x.powi(8), -1.0, 1.0);
        assert!((v - 2.0 / 9.0).abs() < 1e-14);
        let w: f64 = gl.mapped(0.0, 3.0).map(|(_, w)| w).sum();
        assert!((w - 3.0).abs() < 1e-14);
    }

    #[test]
    fn breaks_include_extras_and_respect_width() {
        let b = panel_breaks(0.0, 1.0, 0.3, &[0.5, 2.0, -1.0]);
        assert_eq!(b.first(), Some(&0.0));
        assert_eq!(b.last(), Some(&1.0));
        assert!(b.contains(&0.5));
        assert!(b.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.3 + 1e-15));
    }

    #[test]
    fn step_function_exact_with_breakpoint() {
        let q = PanelQuadrature::default();
        let v = q
            .integrate_vec(|z, out| out[0] = if z >= 0.37 { 1.0 } else { 0.0 }, 1, 0.0, 1.0, 0.5, &[0.37])
            .unwrap();
        assert!((v[0] - 0.63).abs() < 1e-14);
    }

    #[test]
    fn flags_non_convergence() {
        let q = PanelQuadrature::new(2, 1e-14, 2);
        let r = q.integrate_vec(|z, out| out[0] = (200.0 * z).sin().abs(), 1, 0.0, 1.0, 1.0, &[]);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }
}
