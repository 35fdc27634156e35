//! HJB-type residuals.
//!
//! * [`hjb_residual`]: the classical value-function equation
//!   `⟨∇V, μ⟩ + ln γ · V + r + ½ Tr(σᵀ ∇²V σ)`.
//! * [`dhjb_residual_grid`]: the distributional operator
//!   `⟨∇ₓF, μ⟩ − (r + z ln γ) ∂_z F + ½ Tr(σᵀ ∇ₓ²F σ)` on a tabulated CDF.
//! * [`shjb_pointwise`] / [`shjb_weak`]: the same operator applied to the
//!   composite `(x, z) ↦ Φ(s(x), z)` and expanded by the chain rule, with the
//!   spatial Hessian split as `K_space + K_stat`.
//!
//! The weak form is what experiments minimise; the pointwise terms are kept
//! for diagnostics because quantile atoms only make sense under an integral.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::envlib::{EnvSpec, ValueJet};
use crate::error::{Error, Result};
use crate::imputation::{SmoothImputation, StatKind, StatVec, TestFunctionFamily};

/// `Tr(σᵀ M σ)` for `σ` of shape `d × m` and symmetric `M` of shape `d × d`.
pub fn trace_sigma(sigma: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let (d, cols) = sigma.shape();
    let mut tr = 0.0;
    for c in 0..cols {
        for a in 0..d {
            let sa = sigma[(a, c)];
            if sa == 0.0 {
                continue;
            }
            for b in 0..d {
                tr += sa * m[(a, b)] * sigma[(b, c)];
            }
        }
    }
    tr
}

/// Residual of the HJB equation for a candidate value function at `x`.
pub fn hjb_residual<V: Fn(&[f64]) -> ValueJet + ?Sized>(env: &EnvSpec, value: &V, x: &[f64]) -> f64 {
    let jet = value(x);
    let mu = env.drift(x);
    let sigma = env.diffusion(x);
    jet.grad.dot(&mu) + env.log_discount() * jet.value + env.reward(x) + 0.5 * trace_sigma(&sigma, &jet.hess)
}

/// A CDF tabulated on a uniform 1-D state grid and a uniform return grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCdf {
    x_grid: Vec<f64>,
    z_grid: Vec<f64>,
    /// `values[(i, j)] = F(x_i, z_j)`.
    values: DMatrix<f64>,
}

fn uniform_step(g: &[f64], name: &str) -> Result<f64> {
    if g.len() < 3 {
        return Err(Error::InvalidConfig(format!("{name} needs at least 3 points")));
    }
    let h = (g[g.len() - 1] - g[0]) / (g.len() - 1) as f64;
    if !(h > 0.0) || g.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1e-300)) {
        return Err(Error::InvalidConfig(format!("{name} must be increasing and uniformly spaced")));
    }
    Ok(h)
}

impl GridCdf {
    pub fn new(x_grid: Vec<f64>, z_grid: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        uniform_step(&x_grid, "x grid")?;
        uniform_step(&z_grid, "z grid")?;
        if values.shape() != (x_grid.len(), z_grid.len()) {
            return Err(Error::DimensionMismatch {
                context: "grid values",
                expected: x_grid.len() * z_grid.len(),
                got: values.len(),
            });
        }
        for i in 0..values.nrows() {
            for j in 0..values.ncols() {
                let v = values[(i, j)];
                if !(-1e-12..=1.0 + 1e-12).contains(&v) {
                    return Err(Error::InvalidConfig(format!("F({i},{j}) = {v} outside [0, 1]")));
                }
                if j > 0 && v < values[(i, j - 1)] - 1e-12 {
                    return Err(Error::InvalidConfig(format!("row {i} decreases in z at column {j}")));
                }
            }
        }
        Ok(Self {
            x_grid,
            z_grid,
            values,
        })
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(x_grid: Vec<f64>, z_grid: Vec<f64>, f: F) -> Result<Self> {
        let values = DMatrix::from_fn(x_grid.len(), z_grid.len(), |i, j| f(x_grid[i], z_grid[j]));
        Self::new(x_grid, z_grid, values)
    }

    pub fn x_grid(&self) -> &[f64] {
        &self.x_grid
    }

    pub fn z_grid(&self) -> &[f64] {
        &self.z_grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }
}

/// Distributional HJB residual at interior node `(i, j)` using second-order
/// central differences. Only 1-D states are supported.
pub fn dhjb_residual_grid(env: &EnvSpec, f: &GridCdf, i: usize, j: usize) -> Result<f64> {
    if env.dim() != 1 {
        return Err(Error::DimensionMismatch {
            context: "gridded CDF state dimension",
            expected: 1,
            got: env.dim(),
        });
    }
    let (nx, nz) = f.shape();
    if i == 0 || j == 0 || i + 1 >= nx || j + 1 >= nz {
        return Err(Error::BoundaryIndex { i, j, nx, nz });
    }
    let hx = (f.x_grid[nx - 1] - f.x_grid[0]) / (nx - 1) as f64;
    let hz = (f.z_grid[nz - 1] - f.z_grid[0]) / (nz - 1) as f64;
    let v = &f.values;
    let fx = (v[(i + 1, j)] - v[(i - 1, j)]) / (2.0 * hx);
    let fxx = (v[(i + 1, j)] - 2.0 * v[(i, j)] + v[(i - 1, j)]) / (hx * hx);
    let fz = (v[(i, j + 1)] - v[(i, j - 1)]) / (2.0 * hz);

    let x = [f.x_grid[i]];
    let z = f.z_grid[j];
    let mu = env.drift(&x)[0];
    let sigma = env.diffusion(&x);
    let hess = DMatrix::from_element(1, 1, fxx);
    Ok(mu * fx - (env.reward(&x) + z * env.log_discount()) * fz + 0.5 * trace_sigma(&sigma, &hess))
}

/// Statistics and their first two spatial derivatives at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct StatJet {
    pub values: DVector<f64>,
    /// `N × d` Jacobian.
    pub jac: DMatrix<f64>,
    /// One `d × d` Hessian per statistic.
    pub hess: Vec<DMatrix<f64>>,
}

/// A twice-differentiable map from states to `N` statistics.
pub trait StatisticsFunction: Send + Sync {
    fn n_stats(&self) -> usize;
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> StatJet;

    fn values(&self, x: &[f64]) -> Vec<f64> {
        self.eval(x).values.as_slice().to_vec()
    }
}

/// Statistics that do not depend on the state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantStats {
    pub values: Vec<f64>,
    pub dim: usize,
}

impl StatisticsFunction for ConstantStats {
    fn n_stats(&self) -> usize {
        self.values.len()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _x: &[f64]) -> StatJet {
        let n = self.values.len();
        StatJet {
            values: DVector::from_column_slice(&self.values),
            jac: DMatrix::zeros(n, self.dim),
            hess: vec![DMatrix::zeros(self.dim, self.dim); n],
        }
    }
}

/// The chain-rule pieces of the SHJB residual at one `(x, z)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ShjbTerms {
    /// `∇_s Φᵀ J_x s μ`.
    pub drift_term: f64,
    /// `−(r + z ln γ) ∂_z Φ`.
    pub advection_term: f64,
    /// `½ Tr(σᵀ (K_space + K_stat) σ)`.
    pub diffusion_term: f64,
    pub residual: f64,
    pub loss: f64,
}

/// Everything about a state that the residual needs, evaluated once and
/// reused across `z`.
pub struct ShjbPoint {
    jet: StatJet,
    jmu: DVector<f64>,
    sigma: DMatrix<f64>,
    /// `σᵀ ∇²s_k σ` traces, one per statistic.
    space_traces: Vec<f64>,
    reward: f64,
    log_gamma: f64,
}

impl ShjbPoint {
    pub fn new<S: StatisticsFunction + ?Sized>(
        env: &EnvSpec,
        sf: &S,
        imp: &dyn SmoothImputation,
        x: &[f64],
    ) -> Result<Self> {
        check_dims(env, sf, imp, x)?;
        let jet = sf.eval(x);
        let mu = env.drift(x);
        let sigma = env.diffusion(x);
        let jmu = &jet.jac * &mu;
        let space_traces = jet.hess.iter().map(|h| trace_sigma(&sigma, h)).collect();
        Ok(Self {
            jet,
            jmu,
            sigma,
            space_traces,
            reward: env.reward(x),
            log_gamma: env.log_discount(),
        })
    }

    pub fn stats(&self) -> &[f64] {
        self.jet.values.as_slice()
    }

    pub fn jet(&self) -> &StatJet {
        &self.jet
    }

    pub fn terms(&self, imp: &dyn SmoothImputation, z: f64) -> ShjbTerms {
        let g = imp.grads(self.jet.values.as_slice(), z);
        let drift_term: f64 = g.ds.iter().zip(self.jmu.iter()).map(|(a, b)| a * b).sum();
        let advection_term = -(self.reward + z * self.log_gamma) * g.dz;
        // Tr(σᵀ K_space σ) = Σ_k ∂Φ/∂s_k Tr(σᵀ ∇²s_k σ)
        let space: f64 = g.ds.iter().zip(&self.space_traces).map(|(a, b)| a * b).sum();
        let k_stat = g.hess.sandwich(&self.jet.jac);
        let stat = trace_sigma(&self.sigma, &k_stat);
        let diffusion_term = 0.5 * (space + stat);
        let residual = drift_term + advection_term + diffusion_term;
        ShjbTerms {
            drift_term,
            advection_term,
            diffusion_term,
            residual,
            loss: residual * residual,
        }
    }
}

fn check_dims<S: StatisticsFunction + ?Sized>(
    env: &EnvSpec,
    sf: &S,
    imp: &dyn SmoothImputation,
    x: &[f64],
) -> Result<()> {
    if sf.dim() != env.dim() {
        return Err(Error::DimensionMismatch {
            context: "statistics function state dimension",
            expected: env.dim(),
            got: sf.dim(),
        });
    }
    if x.len() != env.dim() {
        return Err(Error::DimensionMismatch {
            context: "state",
            expected: env.dim(),
            got: x.len(),
        });
    }
    if let Some(n) = imp.n_stats() {
        if n != sf.n_stats() {
            return Err(Error::DimensionMismatch {
                context: "imputation statistic count",
                expected: n,
                got: sf.n_stats(),
            });
        }
    }
    Ok(())
}

/// SHJB residual terms at `(x, z)` assembled from analytic derivatives.
pub fn shjb_pointwise<S: StatisticsFunction + ?Sized>(
    env: &EnvSpec,
    sf: &S,
    imp: &dyn SmoothImputation,
    x: &[f64],
    z: f64,
) -> Result<ShjbTerms> {
    Ok(ShjbPoint::new(env, sf, imp, x)?.terms(imp, z))
}

/// `∫_R residual(x, z) φ_j(z) dz` for each family member.
pub fn shjb_weak_pairings<S: StatisticsFunction + ?Sized>(
    env: &EnvSpec,
    sf: &S,
    imp: &dyn SmoothImputation,
    x: &[f64],
    fam: &TestFunctionFamily,
) -> Result<Vec<f64>> {
    let point = ShjbPoint::new(env, sf, imp, x)?;
    let s = point.stats();
    let res = imp.resolution(s);
    let width = if res > 0.0 { 0.5 * res } else { f64::INFINITY };
    fam.pair(|z| point.terms(imp, z).residual, &imp.breakpoints(s), width)
}

/// Weak SHJB loss `max_j (∫_R residual · φ_j)²`.
pub fn shjb_weak<S: StatisticsFunction + ?Sized>(
    env: &EnvSpec,
    sf: &S,
    imp: &dyn SmoothImputation,
    x: &[f64],
    fam: &TestFunctionFamily,
) -> Result<f64> {
    Ok(shjb_weak_pairings(env, sf, imp, x, fam)?
        .into_iter()
        .map(|v| v * v)
        .fold(0.0, f64::max))
}

/// Mean of the quantile-imputed measure: the average atom.
pub fn mean_of_imputation(s: &StatVec) -> Result<f64> {
    if s.kind != StatKind::Quantile || s.is_empty() {
        return Err(Error::InvalidStats("mean_of_imputation needs nonempty quantile statistics".into()));
    }
    Ok(s.values.iter().sum::<f64>() / s.len() as f64)
}

/// One row of a residual dump.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub x: Vec<f64>,
    pub z: f64,
    pub terms: ShjbTerms,
}

pub fn residual_rows<S: StatisticsFunction + ?Sized>(
    env: &EnvSpec,
    sf: &S,
    imp: &dyn SmoothImputation,
    states: &[Vec<f64>],
    zs: &[f64],
) -> Result<Vec<ResidualRow>> {
    let mut rows = Vec::with_capacity(states.len() * zs.len());
    for x in states {
        let p = ShjbPoint::new(env, sf, imp, x)?;
        for &z in zs {
            rows.push(ResidualRow {
                x: x.clone(),
                z,
                terms: p.terms(imp, z),
            });
        }
    }
    Ok(rows)
}

/// CSV with columns `x, z, drift_term, advection_term, diffusion_term, residual`
/// (`x0, x1, …` for multi-dimensional states).
pub fn write_residual_csv<W: Write>(mut w: W, rows: &[ResidualRow]) -> Result<()> {
    let d = rows.first().map_or(1, |r| r.x.len());
    let xcols = if d == 1 {
        "x".to_string()
    } else {
        (0..d).map(|k| format!("x{k}")).collect::<Vec<_>>().join(",")
    };
    writeln!(w, "{xcols},z,drift_term,advection_term,diffusion_term,residual")?;
    for r in rows {
        let xs = r.x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        writeln!(
            w,
            "{xs},{},{},{},{},{}",
            r.z, r.terms.drift_term, r.terms.advection_term, r.terms.diffusion_term, r.terms.residual
        )?;
    }
    Ok(())
}
