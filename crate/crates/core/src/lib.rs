//! Continuous-time distributional policy evaluation.
//!
//! The crate is organised the way the problem decomposes:
//!
//! | module | contents |
//! |--------|----------|
//! | [`envlib`] | fixed-policy diffusion environments and their closed-form baselines |
//! | [`sdesim`] | Euler–Maruyama simulation of discounted returns, empirical CDFs and quantiles |
//! | [`imputation`] | statistics-to-distribution maps, mollified CDFs, Kolmogorov and weak distances |
//! | [`hjbcore`] | HJB residual, gridded distributional HJB residual, statistical HJB loss |
//! | [`fitlearn`] | radial-basis statistics functions, Monte Carlo quantile fitting, loss descent |
//! | [`experiments`] | the convergence experiments driven by the `ctdrl` binary |
//!
//! Returns are `∫₀^∞ γ^t r(X_t) dt` with `dX = μ(X)dt + σ(X)dB`. A return
//! distribution is represented by `N` statistics `s(x)` and an imputation
//! strategy turning those statistics back into a CDF `Φ(s, z)`.

pub mod envlib;
pub mod error;
pub mod experiments;
pub mod fitlearn;
pub mod hjbcore;
pub mod imputation;
pub mod normal;
pub mod quadrature;
pub mod sdesim;

pub use envlib::{return_bounds, AnalyticBaseline, EnvConfig, EnvSpec, ReturnInterval, ValueJet};
pub use error::{Error, Result};
pub use fitlearn::{fit_quantiles_mc, isotonic_project, minimize_shjb, FitReport, StatFn};
pub use hjbcore::{
    dhjb_residual_grid, hjb_residual, mean_of_imputation, shjb_pointwise, shjb_weak, GridCdf,
    ShjbTerms, StatJet, StatisticsFunction,
};
pub use imputation::{
    kolmogorov_distance, mollified_cdf, mollified_grads, quantile_cdf_exact, weak_distance, Cdf,
    MollifiedQuantile, SmoothImputation, StatKind, StatVec, TestFunctionFamily,
};
pub use sdesim::{mc_return_distribution, sample_return, EmpiricalReturnDist, SimConfig};
