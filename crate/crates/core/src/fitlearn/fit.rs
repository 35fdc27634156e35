use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{isotonic_project, StatFn, DEFAULT_FEATURES};
use crate::envlib::EnvSpec;
use crate::error::{Error, Result};
use crate::imputation::{kolmogorov_distance, QuantileCdf, StatVec};
use crate::sdesim::{mc_return_distribution, EmpiricalReturnDist, SimConfig};

pub const DEFAULT_RIDGE: f64 = 1e-6;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    /// Per anchor state, `max_i |ŝ_i(x) − target_i|` after projection.
    pub quantile_residuals: Vec<f64>,
    /// Largest Kolmogorov distance between the imputed and empirical CDFs.
    pub max_kolmogorov: f64,
    pub iterations: usize,
    pub condition_number: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_weak_loss: Option<f64>,
}

/// Simulates every anchor state, then fits `N` midpoint quantiles with the
/// default radial basis over the state box.
pub fn fit_quantiles_mc(
    env: &EnvSpec,
    states: &[Vec<f64>],
    n: usize,
    sim: &SimConfig,
    ridge: f64,
) -> Result<(StatFn, FitReport)> {
    let basis = StatFn::rbf_grid(env.state_lo(), env.state_hi(), DEFAULT_FEATURES, n.max(1))?;
    if states.len() < basis.n_features() {
        return Err(Error::InvalidConfig(format!(
            "{} anchor states cannot determine {} features",
            states.len(),
            basis.n_features()
        )));
    }
    let dists = states
        .iter()
        .map(|x| mc_return_distribution(env, x, sim))
        .collect::<Result<Vec<_>>>()?;
    fit_quantiles_from_dists(&basis, &dists, n, ridge)
}

/// Ridge fit of `basis` coefficients to the midpoint quantiles of each
/// empirical distribution (anchors are the distributions' origin states).
/// The offsets are unpenalised.
pub fn fit_quantiles_from_dists(
    basis: &StatFn,
    dists: &[EmpiricalReturnDist],
    n: usize,
    ridge: f64,
) -> Result<(StatFn, FitReport)> {
    if n == 0 {
        return Err(Error::InvalidConfig("number of quantiles must be positive".into()));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidConfig(format!("ridge must be nonnegative, got {ridge}")));
    }
    let a = dists.len();
    let j = basis.n_features();
    if a < j {
        return Err(Error::InvalidConfig(format!("{a} anchor states cannot determine {j} features")));
    }
    let targets: Vec<StatVec> = dists.iter().map(|d| d.empirical_quantiles(n)).collect::<Result<_>>()?;

    let phi = DMatrix::from_fn(a, j, |r, c| basis.features(dists[r].origin_state())[c]);
    let y = DMatrix::from_fn(a, n, |r, k| targets[r].values[k]);
    let phi_mean = phi.row_mean();
    let y_mean = y.row_mean();
    let mut phic = phi.clone();
    let mut yc = y.clone();
    for r in 0..a {
        let mut pr = phic.row_mut(r);
        pr -= &phi_mean;
        let mut yr = yc.row_mut(r);
        yr -= &y_mean;
    }
    let mut gram = phic.transpose() * &phic;
    for d in 0..j {
        gram[(d, d)] += ridge;
    }
    let eig = gram.clone().symmetric_eigen().eigenvalues;
    let (emin, emax) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let cond = if emin > 0.0 { emax / emin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let chol = gram.cholesky().ok_or(Error::IllConditioned(cond))?;
    let w = chol.solve(&(phic.transpose() * &yc)); // J × N
    let offsets = DVector::from_iterator(n, (0..n).map(|k| y_mean[k] - (&phi_mean * w.column(k))[0]));
    let sf = basis.with_coefficients(w.transpose(), offsets)?;

    let mut quantile_residuals = Vec::with_capacity(a);
    let mut max_kolmogorov: f64 = 0.0;
    for (d, t) in dists.iter().zip(&targets) {
        let pred = isotonic_project(&crate::hjbcore::StatisticsFunction::values(&sf, d.origin_state()));
        let r = pred
            .iter()
            .zip(&t.values)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        quantile_residuals.push(r);
        let imputed = QuantileCdf::new(&StatVec::quantile(pred))?;
        max_kolmogorov = max_kolmogorov.max(kolmogorov_distance(d, &imputed, &[]));
    }
    Ok((
        sf,
        FitReport {
            quantile_residuals,
            max_kolmogorov,
            iterations: 0,
            condition_number: cond,
            final_weak_loss: None,
        },
    ))
}
