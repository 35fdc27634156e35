//! Statistics functions over the state space and the two ways of fitting
//! them: ridge regression onto Monte Carlo quantiles, and descent on the
//! weak SHJB loss.

mod fit;
mod isotonic;
mod optimize;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::envlib::linspace;
use crate::error::{Error, Result};
use crate::hjbcore::{StatJet, StatisticsFunction};

pub use fit::{fit_quantiles_from_dists, fit_quantiles_mc, FitReport, DEFAULT_RIDGE};
pub use isotonic::{isotonic_blocks, isotonic_project};
pub use optimize::{mean_weak_loss, minimize_shjb, write_trace_csv, MinimizeOptions, TraceRow};

/// Default number of radial features.
pub const DEFAULT_FEATURES: usize = 25;

/// `s_k(x) = b_k + Σ_j W_kj exp(−‖x − c_j‖² / (2ℓ²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatFn {
    centers: Vec<Vec<f64>>,
    lengthscale: f64,
    weights: DMatrix<f64>,
    offsets: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct StatFnJson {
    centers: Vec<Vec<f64>>,
    lengthscale: f64,
    weights: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

impl StatFn {
    pub fn new(centers: Vec<Vec<f64>>, lengthscale: f64, weights: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidConfig("statistics function needs at least one feature".into()));
        }
        let d = centers[0].len();
        if d == 0 || centers.iter().any(|c| c.len() != d) {
            return Err(Error::InvalidConfig("feature centers must share a positive dimension".into()));
        }
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::InvalidConfig(format!("lengthscale must be positive, got {lengthscale}")));
        }
        if weights.ncols() != centers.len() {
            return Err(Error::DimensionMismatch {
                context: "weight columns",
                expected: centers.len(),
                got: weights.ncols(),
            });
        }
        if weights.nrows() != offsets.len() || offsets.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "offsets",
                expected: weights.nrows(),
                got: offsets.len(),
            });
        }
        Ok(Self {
            centers,
            lengthscale,
            weights,
            offsets,
        })
    }

    /// Zero-weight basis of about `features` Gaussian bumps on a uniform grid
    /// over the box, with lengthscale twice the grid spacing.
    pub fn rbf_grid(lo: &[f64], hi: &[f64], features: usize, n_stats: usize) -> Result<Self> {
        let d = lo.len();
        if d == 0 || hi.len() != d || features == 0 || n_stats == 0 {
            return Err(Error::InvalidConfig("rbf grid needs a box, features and statistics".into()));
        }
        let per_axis = ((features as f64).powf(1.0 / d as f64).round() as usize).max(2);
        let axes: Vec<Vec<f64>> = (0..d).map(|a| linspace(lo[a], hi[a], per_axis)).collect();
        let spacing = (0..d)
            .map(|a| (hi[a] - lo[a]) / (per_axis - 1) as f64)
            .fold(f64::INFINITY, f64::min);
        if !(spacing > 0.0) {
            return Err(Error::InvalidConfig("rbf grid needs a box of positive width".into()));
        }
        let mut centers = vec![vec![]];
        for axis in &axes {
            centers = centers
                .into_iter()
                .flat_map(|c: Vec<f64>| {
                    axis.iter().map(move |&v| {
                        let mut c = c.clone();
                        c.push(v);
                        c
                    })
                })
                .collect();
        }
        let j = centers.len();
        Self::new(centers, 2.0 * spacing, DMatrix::zeros(n_stats, j), DVector::zeros(n_stats))
    }

    pub fn n_features(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn with_coefficients(&self, weights: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self> {
        Self::new(self.centers.clone(), self.lengthscale, weights, offsets)
    }

    /// Feature values only.
    pub fn features(&self, x: &[f64]) -> DVector<f64> {
        let inv = 1.0 / (2.0 * self.lengthscale * self.lengthscale);
        DVector::from_iterator(
            self.centers.len(),
            self.centers.iter().map(|c| {
                let r2: f64 = c.iter().zip(x).map(|(a, b)| (b - a) * (b - a)).sum();
                (-r2 * inv).exp()
            }),
        )
    }

    /// Coefficients flattened as `[weights row-major…, offsets…]`.
    pub fn params(&self) -> Vec<f64> {
        let (n, j) = self.weights.shape();
        let mut p = Vec::with_capacity(n * j + n);
        for k in 0..n {
            for c in 0..j {
                p.push(self.weights[(k, c)]);
            }
        }
        p.extend(self.offsets.iter());
        p
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.offsets.len()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (n, j) = self.weights.shape();
        assert_eq!(p.len(), n * j + n, "parameter vector length");
        for k in 0..n {
            for c in 0..j {
                self.weights[(k, c)] = p[k * j + c];
            }
        }
        for k in 0..n {
            self.offsets[k] = p[n * j + k];
        }
    }

    /// JSON `{centers, lengthscale, weights, offsets}`; `weights` is a list
    /// of rows, one per statistic.
    pub fn to_json(&self) -> Result<String> {
        let w = (0..self.weights.nrows())
            .map(|k| self.weights.row(k).iter().copied().collect())
            .collect();
        Ok(serde_json::to_string(&StatFnJson {
            centers: self.centers.clone(),
            lengthscale: self.lengthscale,
            weights: w,
            offsets: self.offsets.iter().copied().collect(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: StatFnJson = serde_json::from_str(s)?;
        let n = j.weights.len();
        let cols = j.centers.len();
        if j.weights.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidConfig("weight rows must have one entry per center".into()));
        }
        let flat: Vec<f64> = j.weights.into_iter().flatten().collect();
        Self::new(
            j.centers,
            j.lengthscale,
            DMatrix::from_row_slice(n, cols, &flat),
            DVector::from_vec(j.offsets),
        )
    }
}

/// Values, Jacobian and per-statistic Hessians from the closed-form RBF
/// derivatives.
pub fn statfn_eval(sf: &StatFn, x: &[f64]) -> StatJet {
    let d = x.len();
    let n = sf.weights.nrows();
    let l2 = sf.lengthscale * sf.lengthscale;
    let mut values = sf.offsets.clone();
    let mut jac = DMatrix::zeros(n, d);
    let mut hess = vec![DMatrix::zeros(d, d); n];
    let mut diff = vec![0.0; d];
    for (j, c) in sf.centers.iter().enumerate() {
        let mut r2 = 0.0;
        for a in 0..d {
            diff[a] = x[a] - c[a];
            r2 += diff[a] * diff[a];
        }
        let phi = (-0.5 * r2 / l2).exp();
        for k in 0..n {
            let w = sf.weights[(k, j)];
            if w == 0.0 {
                continue;
            }
            let wphi = w * phi;
            values[k] += wphi;
            for a in 0..d {
                jac[(k, a)] -= wphi * diff[a] / l2;
                for b in 0..d {
                    let delta = if a == b { 1.0 / l2 } else { 0.0 };
                    hess[k][(a, b)] += wphi * (diff[a] * diff[b] / (l2 * l2) - delta);
                }
            }
        }
    }
    StatJet { values, jac, hess }
}

impl StatisticsFunction for StatFn {
    fn n_stats(&self) -> usize {
        self.weights.nrows()
    }
    fn dim(&self) -> usize {
        self.centers[0].len()
    }
    fn eval(&self, x: &[f64]) -> StatJet {
        statfn_eval(self, x)
    }
}

/// Evaluates the inner statistics function and projects the values onto
/// nondecreasing vectors. Pooled blocks take the block average of the
/// derivatives too, which is the derivative of the projection wherever the
/// block structure is locally constant.
#[derive(Debug, Clone, Copy)]
pub struct Monotone<'a, S: ?Sized>(pub &'a S);

impl<S: StatisticsFunction + ?Sized> StatisticsFunction for Monotone<'_, S> {
    fn n_stats(&self) -> usize {
        self.0.n_stats()
    }
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &[f64]) -> StatJet {
        let mut jet = self.0.eval(x);
        for (start, end, mean) in isotonic_blocks(jet.values.as_slice()) {
            if end - start == 1 {
                continue;
            }
            let len = (end - start) as f64;
            let jrow = jet.jac.rows(start, end - start).row_sum() / len;
            let h = jet.hess[start..end]
                .iter()
                .fold(DMatrix::zeros(jet.jac.ncols(), jet.jac.ncols()), |acc, m| acc + m)
                / len;
            for k in start..end {
                jet.values[k] = mean;
                jet.jac.set_row(k, &jrow);
                jet.hess[k] = h.clone();
            }
        }
        jet
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_statfn(seed: u64, n: usize) -> StatFn {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = StatFn::rbf_grid(&[-2.0], &[2.0], 25, n).unwrap();
        let w = DMatrix::from_fn(n, 25, |_, _| rng.random_range(-0.5..0.5));
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        base.with_coefficients(w, b).unwrap()
    }

    #[test]
    fn zero_weights_give_offsets() {
        let sf = StatFn::rbf_grid(&[-1.0], &[1.0], 25, 3)
            .unwrap()
            .with_coefficients(DMatrix::zeros(3, 25), DVector::from_vec(vec![0.1, 0.2, 0.3]))
            .unwrap();
        let jet = statfn_eval(&sf, &[0.4]);
        assert_eq!(jet.values.as_slice(), &[0.1, 0.2, 0.3]);
        assert!(jet.jac.iter().all(|&v| v == 0.0));
        assert!(jet.hess.iter().all(|h| h.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_feature_peak() {
        let sf = StatFn::new(vec![vec![0.3]], 1.0, DMatrix::from_element(1, 1, 1.0), DVector::zeros(1)).unwrap();
        let jet = statfn_eval(&sf, &[0.3]);
        assert_eq!(jet.values[0], 1.0);
        assert_eq!(jet.jac[(0, 0)], 0.0);
    }

    #[test]
    fn grid_basis_layout() {
        let sf = StatFn::rbf_grid(&[-2.0], &[2.0], 25, 1).unwrap();
        assert_eq!(sf.n_features(), 25);
        assert!((sf.lengthscale() - 2.0 * 4.0 / 24.0).abs() < 1e-15);
        let sf2 = StatFn::rbf_grid(&[0.0, 0.0], &[1.0, 2.0], 25, 2).unwrap();
        assert_eq!(sf2.n_features(), 25);
        assert_eq!(sf2.dim(), 2);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sf = random_statfn(1, 3);
        let step = 1e-6;
        for _ in 0..100 {
            let x = rng.random_range(-1.9..1.9);
            let jet = statfn_eval(&sf, &[x]);
            let p = statfn_eval(&sf, &[x + step]);
            let m = statfn_eval(&sf, &[x - step]);
            for k in 0..3 {
                let fj = (p.values[k] - m.values[k]) / (2.0 * step);
                let fh = (p.jac[(k, 0)] - m.jac[(k, 0)]) / (2.0 * step);
                let sj = jet.jac[(k, 0)].abs().max(1e-3);
                let sh = jet.hess[k][(0, 0)].abs().max(1e-3);
                assert!((fj - jet.jac[(k, 0)]).abs() <= 1e-6 * sj);
                assert!((fh - jet.hess[k][(0, 0)]).abs() <= 1e-6 * sh);
            }
        }
    }

    #[test]
    fn two_dimensional_hessian_is_symmetric_and_matches_fd() {
        let base = StatFn::rbf_grid(&[0.0, 0.0], &[1.0, 1.0], 9, 1).unwrap();
        let w = DMatrix::from_fn(1, 9, |_, c| (c as f64 * 0.7).sin());
        let sf = base.with_coefficients(w, DVector::zeros(1)).unwrap();
        let x = [0.37, 0.61];
        let jet = statfn_eval(&sf, &x);
        let h = &jet.hess[0];
        assert!((h[(0, 1)] - h[(1, 0)]).abs() < 1e-14);
        let step = 1e-6;
        for a in 0..2 {
            let mut xp = x;
            xp[a] += step;
            let mut xm = x;
            xm[a] -= step;
            let gp = statfn_eval(&sf, &xp).jac;
            let gm = statfn_eval(&sf, &xm).jac;
            for b in 0..2 {
                let fd = (gp[(0, b)] - gm[(0, b)]) / (2.0 * step);
                assert!((fd - h[(a, b)]).abs() < 1e-6 * h[(a, b)].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let sf = random_statfn(4, 2);
        let s = sf.to_json().unwrap();
        assert!(s.contains("\"centers\"") && s.contains("\"lengthscale\""));
        assert_eq!(StatFn::from_json(&s).unwrap(), sf);
    }

    #[test]
    fn params_round_trip() {
        let mut sf = random_statfn(2, 3);
        let p = sf.params();
        assert_eq!(p.len(), sf.n_params());
        let orig = sf.clone();
        sf.set_params(&vec![0.0; p.len()]);
        assert!(sf.weights().iter().all(|&v| v == 0.0));
        sf.set_params(&p);
        assert_eq!(sf, orig);
    }

    #[test]
    fn monotone_wrapper_pools_values_and_derivatives() {
        let w = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let sf = StatFn::new(vec![vec![0.0]], 1.0, w, DVector::zeros(2)).unwrap();
        let jet = Monotone(&sf).eval(&[0.5]);
        assert_eq!(jet.values[0], jet.values[1]);
        assert!(jet.values[0].abs() < 1e-15);
        assert!(jet.jac[(0, 0)].abs() < 1e-15);
    }
}
