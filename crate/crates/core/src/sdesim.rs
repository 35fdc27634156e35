//! Euler–Maruyama simulation of discounted returns.
//!
//! Every path owns a ChaCha stream keyed by `(seed, path index)`, so a run is
//! bit-reproducible regardless of how rayon schedules the paths. Calling
//! [`mc_return_distribution`] with the same [`SimConfig`] from two start
//! states drives both with the same noise (common random numbers).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::envlib::{return_bounds, EnvSpec};
use crate::error::{Error, Result};
use crate::imputation::{Cdf, StatKind, StatVec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, n_paths: usize, seed: u64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
        }
        if !(horizon >= dt && horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!("horizon {horizon} must be at least dt = {dt}")));
        }
        if n_paths == 0 {
            return Err(Error::InvalidConfig("n_paths must be positive".into()));
        }
        Ok(Self {
            dt,
            horizon,
            n_paths,
            seed,
        })
    }

    /// Picks the shortest horizon whose discounted tail is at most
    /// [`default_tail_tol`] and validates it.
    pub fn for_env(env: &EnvSpec, dt: f64, n_paths: usize, seed: u64) -> Result<Self> {
        let tol = default_tail_tol(env)?;
        let rabs = reward_abs_max(env);
        let beta = -env.log_discount();
        let horizon = if rabs == 0.0 {
            dt
        } else {
            // r γ^T / β ≤ tol  ⇔  T ≥ ln(r / (β tol)) / β
            ((rabs / (beta * tol)).ln() / beta).max(dt)
        };
        let cfg = Self::new(dt, horizon, n_paths, seed)?;
        cfg.check_tail(env, tol)?;
        Ok(cfg)
    }

    /// Largest return mass discarded by truncating at the horizon.
    pub fn tail_bound(&self, env: &EnvSpec) -> f64 {
        let beta = -env.log_discount();
        reward_abs_max(env) * env.discount().powf(self.horizon) / beta
    }

    pub fn check_tail(&self, env: &EnvSpec, tail_tol: f64) -> Result<()> {
        let tail = self.tail_bound(env);
        if tail <= tail_tol * (1.0 + 1e-12) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "horizon {} leaves a discounted tail of {tail:e} > {tail_tol:e}",
                self.horizon
            )))
        }
    }

    /// Number of left-Riemann nodes `k` with `k·dt < horizon`.
    pub fn n_steps(&self) -> usize {
        let mut k = (self.horizon / self.dt).ceil() as usize;
        while k > 1 && (k - 1) as f64 * self.dt >= self.horizon {
            k -= 1;
        }
        k.max(1)
    }
}

/// `1e-4` of the (working) return-interval width.
pub fn default_tail_tol(env: &EnvSpec) -> Result<f64> {
    Ok(1e-4 * return_bounds(env)?.working().width())
}

fn reward_abs_max(env: &EnvSpec) -> f64 {
    let (lo, hi) = env.reward_range();
    lo.abs().max(hi.abs())
}

/// `x' = x + μ(x)dt + σ(x)·noise·√dt`, clamped to the state box.
///
/// Returns `None` when the update is not finite.
pub fn euler_maruyama_step(env: &EnvSpec, x: &[f64], dt: f64, noise: &[f64]) -> Option<Vec<f64>> {
    let mut ws = Workspace::new(env);
    let mut out = x.to_vec();
    ws.step(env, &mut out, dt, noise).then_some(out)
}

struct Workspace {
    drift: Vec<f64>,
    diff: Vec<f64>,
    noise: Vec<f64>,
}

impl Workspace {
    fn new(env: &EnvSpec) -> Self {
        Self {
            drift: vec![0.0; env.dim()],
            diff: vec![0.0; env.dim() * env.noise_dim()],
            noise: vec![0.0; env.noise_dim()],
        }
    }

    fn step(&mut self, env: &EnvSpec, x: &mut [f64], dt: f64, noise: &[f64]) -> bool {
        let dynamics = env.dynamics();
        let m = env.noise_dim();
        dynamics.drift(x, &mut self.drift);
        dynamics.diffusion(x, &mut self.diff);
        let sq = dt.sqrt();
        for (a, xa) in x.iter_mut().enumerate() {
            let mut shock = 0.0;
            for (b, nb) in noise.iter().enumerate() {
                shock += self.diff[a * m + b] * nb;
            }
            *xa += self.drift[a] * dt + shock * sq;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        env.clamp_to_box(x);
        true
    }
}

/// A path whose state left the finite numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathAbort {
    pub step: usize,
}

/// The per-path generator for `(seed, path)`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Left-Riemann estimate of `∫₀^T γ^t r(X_t) dt` along one Euler–Maruyama path.
pub fn sample_return<R: Rng + ?Sized>(
    env: &EnvSpec,
    x0: &[f64],
    cfg: &SimConfig,
    rng: &mut R,
) -> std::result::Result<f64, PathAbort> {
    let mut ws = Workspace::new(env);
    let mut x = x0.to_vec();
    let steps = cfg.n_steps();
    let step_discount = env.discount().powf(cfg.dt);
    let mut disc = 1.0;
    let mut acc = 0.0;
    for k in 0..steps {
        acc += disc * env.reward(&x) * cfg.dt;
        if k + 1 == steps {
            break;
        }
        disc *= step_discount;
        for n in ws.noise.iter_mut() {
            *n = rng.sample(StandardNormal);
        }
        let noise = std::mem::take(&mut ws.noise);
        let ok = ws.step(env, &mut x, cfg.dt, &noise);
        ws.noise = noise;
        if !ok {
            return Err(PathAbort { step: k + 1 });
        }
    }
    if acc.is_finite() {
        Ok(acc)
    } else {
        Err(PathAbort { step: steps })
    }
}

/// Sorted Monte Carlo sample of the return from one start state.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalReturnDist {
    samples: Vec<f64>,
    origin_state: Vec<f64>,
}

impl EmpiricalReturnDist {
    pub fn from_samples(mut samples: Vec<f64>, origin_state: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("return samples must be finite".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self {
            samples,
            origin_state,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn origin_state(&self) -> &[f64] {
        &self.origin_state
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Unbiased sample standard deviation.
    pub fn std(&self) -> f64 {
        let n = self.samples.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.samples.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    pub fn empirical_cdf(&self, z: f64) -> f64 {
        empirical_cdf(self, z)
    }

    pub fn empirical_quantiles(&self, n: usize) -> Result<StatVec> {
        empirical_quantiles(self, n)
    }
}

impl Cdf for EmpiricalReturnDist {
    fn cdf(&self, z: f64) -> f64 {
        empirical_cdf(self, z)
    }

    fn cdf_left(&self, z: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.partition_point(|&s| s < z) as f64 / self.samples.len() as f64
    }

    fn jumps(&self) -> Vec<f64> {
        let mut j = self.samples.clone();
        j.dedup();
        j
    }
}

/// `n_paths` independent returns from `x0`, sorted. Any aborted path fails
/// the whole run.
pub fn mc_return_distribution(env: &EnvSpec, x0: &[f64], cfg: &SimConfig) -> Result<EmpiricalReturnDist> {
    if x0.len() != env.dim() {
        return Err(Error::DimensionMismatch {
            context: "start state",
            expected: env.dim(),
            got: x0.len(),
        });
    }
    let draws: Vec<std::result::Result<f64, PathAbort>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| sample_return(env, x0, cfg, &mut path_rng(cfg.seed, p)))
        .collect();
    let mut samples = Vec::with_capacity(draws.len());
    let mut aborted = 0;
    let mut first = None;
    for (p, d) in draws.into_iter().enumerate() {
        match d {
            Ok(v) => samples.push(v),
            Err(a) => {
                aborted += 1;
                first.get_or_insert((p as u64, a.step));
            }
        }
    }
    if let Some((first_path, first_step)) = first {
        return Err(Error::PathsAborted {
            aborted,
            total: cfg.n_paths,
            first_path,
            first_step,
        });
    }
    EmpiricalReturnDist::from_samples(samples, x0.to_vec())
}

/// Fraction of samples `≤ z`.
pub fn empirical_cdf(d: &EmpiricalReturnDist, z: f64) -> f64 {
    if d.samples.is_empty() {
        return 0.0;
    }
    d.samples.partition_point(|&s| s <= z) as f64 / d.samples.len() as f64
}

/// Midpoint-level quantiles `inf{z : ECDF(z) ≥ (2i−1)/(2N)}`, `i = 1..N`.
pub fn empirical_quantiles(d: &EmpiricalReturnDist, n: usize) -> Result<StatVec> {
    let m = d.samples.len();
    if m == 0 {
        return Err(Error::InvalidStats("cannot take quantiles of an empty sample".into()));
    }
    if n == 0 {
        return Err(Error::InvalidStats("number of quantiles must be positive".into()));
    }
    // smallest k with k / m ≥ (2i−1)/(2n), in integers
    let values = (1..=n)
        .map(|i| {
            let num = (2 * i - 1) as u128 * m as u128;
            let den = 2 * n as u128;
            let k = num.div_ceil(den).max(1) as usize;
            d.samples[k - 1]
        })
        .collect();
    Ok(StatVec {
        kind: StatKind::Quantile,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envlib::{make_const_env, make_ou_env, make_ou_env_on};

    fn e_inv() -> f64 {
        (-1.0f64).exp()
    }

    #[test]
    fn step_examples() {
        let (env, _) = make_const_env(1.0, 0.5).unwrap();
        assert_eq!(euler_maruyama_step(&env, &[0.3], 0.1, &[1.7]).unwrap(), vec![0.3]);

        let (env, _) = make_ou_env(1.0, 0.0, 0.5).unwrap();
        let x = euler_maruyama_step(&env, &[1.0], 0.1, &[0.4]).unwrap();
        assert!((x[0] - 0.9).abs() < 1e-15);

        let (env, _) = make_ou_env(1.0, 1.0, 0.5).unwrap();
        let x = euler_maruyama_step(&env, &[0.0], 0.01, &[1.0]).unwrap();
        assert!((x[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn step_clamps_and_flags_blow_up() {
        let (env, _) = make_ou_env_on(1.0, 1.0, 0.5, -1.0, 1.0).unwrap();
        let x = euler_maruyama_step(&env, &[0.9], 0.01, &[50.0]).unwrap();
        assert_eq!(x, vec![1.0]);
        assert!(euler_maruyama_step(&env, &[0.0], 0.01, &[f64::INFINITY]).is_none());
    }

    #[test]
    fn const_return_matches_riemann_sum() {
        let g = e_inv();
        let (env, _) = make_const_env(1.0, g).unwrap();
        let cfg = SimConfig::new(1e-3, 20.0, 1, 0).unwrap();
        let v = sample_return(&env, &[0.0], &cfg, &mut path_rng(0, 0)).unwrap();
        let k = cfg.n_steps() as f64;
        let closed = cfg.dt * (1.0 - g.powf(k * cfg.dt)) / (1.0 - g.powf(cfg.dt));
        assert!((v - closed).abs() < 1e-10);
        assert!((v - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_reward_is_exactly_zero() {
        let (env, _) = make_const_env(0.0, 0.9).unwrap();
        let cfg = SimConfig::new(0.01, 5.0, 4, 1).unwrap();
        let d = mc_return_distribution(&env, &[0.0], &cfg).unwrap();
        assert!(d.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_ou_matches_ode_quadrature() {
        // x(t) = e^{-t}; ∫ e^{-t} e^{-t} dt = 1/2, checked by fine quadrature
        let ode: f64 = {
            let h = 1e-5;
            (0..3_000_000).map(|k| {
                let t = (k as f64 + 0.5) * h;
                (-2.0 * t).exp() * h
            }).sum()
        };
        assert!((ode - 0.5).abs() < 1e-8);
        let (env, _) = make_ou_env(1.0, 0.0, e_inv()).unwrap();
        let cfg = SimConfig::for_env(&env, 1e-3, 1, 3).unwrap();
        let v = sample_return(&env, &[1.0], &cfg, &mut path_rng(3, 0)).unwrap();
        assert!((v - ode).abs() < 2e-3, "{v}");
    }

    #[test]
    fn horizon_meets_tail_tolerance() {
        let (env, _) = make_ou_env(1.0, 0.5, e_inv()).unwrap();
        let cfg = SimConfig::for_env(&env, 1e-2, 10, 0).unwrap();
        let tol = default_tail_tol(&env).unwrap();
        assert!(cfg.tail_bound(&env) <= tol * (1.0 + 1e-9));
        let short = SimConfig::new(1e-2, 1.0, 10, 0).unwrap();
        assert!(short.check_tail(&env, tol).is_err());
        assert!(SimConfig::new(1.0, 0.5, 1, 0).is_err());
        assert!(SimConfig::new(0.1, 1.0, 0, 0).is_err());
    }

    #[test]
    fn doubling_horizon_changes_deterministic_return_within_tail() {
        let (env, _) = make_ou_env(1.0, 0.0, 0.8).unwrap();
        let x0 = [1.2];
        for t in [2.0, 5.0, 9.0] {
            let a = SimConfig::new(0.01, t, 1, 0).unwrap();
            let b = SimConfig::new(0.01, 2.0 * t, 1, 0).unwrap();
            let va = sample_return(&env, &x0, &a, &mut path_rng(0, 0)).unwrap();
            let vb = sample_return(&env, &x0, &b, &mut path_rng(0, 0)).unwrap();
            assert!((vb - va).abs() <= a.tail_bound(&env), "T={t}");
        }
    }

    #[test]
    fn riemann_error_is_first_order() {
        let (env, _) = make_const_env(1.0, 0.7).unwrap();
        let exact = 1.0 / (-0.7f64.ln());
        let err = |dt: f64| {
            let cfg = SimConfig::new(dt, 80.0, 1, 0).unwrap();
            let v = sample_return(&env, &[0.0], &cfg, &mut path_rng(0, 0)).unwrap();
            (v - exact).abs() / dt
        };
        let c: Vec<f64> = [0.02, 0.01, 0.005, 0.0025].iter().map(|&dt| err(dt)).collect();
        for w in c.windows(2) {
            assert!((w[1] / w[0] - 1.0).abs() < 0.02, "{c:?}");
        }
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let (env, _) = make_ou_env(1.0, 0.5, 0.5).unwrap();
        let cfg = SimConfig::for_env(&env, 0.01, 200, 42).unwrap();
        let a = mc_return_distribution(&env, &[0.3], &cfg).unwrap();
        let b = mc_return_distribution(&env, &[0.3], &cfg).unwrap();
        assert_eq!(a, b);
        let c = mc_return_distribution(&env, &[0.3], &SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn deterministic_env_has_no_spread() {
        let (env, _) = make_ou_env(2.0, 0.0, 0.9).unwrap();
        let cfg = SimConfig::for_env(&env, 0.01, 50, 1).unwrap();
        let d = mc_return_distribution(&env, &[0.8], &cfg).unwrap();
        let s = d.samples();
        assert!(s[s.len() - 1] - s[0] < 1e-9);
    }

    #[test]
    fn samples_stay_within_bounds() {
        let (env, _) = make_ou_env(1.0, 0.8, 0.6).unwrap();
        let cfg = SimConfig::for_env(&env, 0.01, 10_000, 7).unwrap();
        let b = return_bounds(&env).unwrap();
        let slack = env.reward_range().1.abs() * cfg.dt;
        for x0 in [env.state_lo()[0], 0.0, env.state_hi()[0]] {
            let d = mc_return_distribution(&env, &[x0], &cfg).unwrap();
            assert!(d.samples()[0] >= b.v_min - slack);
            assert!(*d.samples().last().unwrap() <= b.v_max + slack);
        }
    }

    #[test]
    fn ecdf_and_quantile_examples() {
        let d = EmpiricalReturnDist::from_samples(vec![4.0, 2.0, 1.0, 3.0], vec![0.0]).unwrap();
        assert_eq!(empirical_cdf(&d, 2.5), 0.5);
        assert_eq!(empirical_cdf(&d, 0.0), 0.0);
        assert_eq!(empirical_cdf(&d, 4.0), 1.0);
        assert_eq!(empirical_cdf(&d, 2.0), 0.5);
        assert_eq!(d.cdf_left(2.0), 0.25);
        assert_eq!(empirical_quantiles(&d, 2).unwrap().values, vec![1.0, 3.0]);
        assert_eq!(empirical_quantiles(&d, 1).unwrap().values, vec![2.0]);

        let c = EmpiricalReturnDist::from_samples(vec![0.7; 9], vec![0.0]).unwrap();
        assert_eq!(empirical_quantiles(&c, 5).unwrap().values, vec![0.7; 5]);

        let e = EmpiricalReturnDist::from_samples(vec![], vec![0.0]).unwrap();
        assert!(empirical_quantiles(&e, 3).is_err());
    }

    proptest::proptest! {
        #[test]
        fn quantiles_are_nondecreasing_and_satisfy_inf_definition(
            raw in proptest::collection::vec(-5.0f64..5.0, 1..60),
            n in 1usize..40,
        ) {
            let d = EmpiricalReturnDist::from_samples(raw, vec![0.0]).unwrap();
            let q = empirical_quantiles(&d, n).unwrap().values;
            proptest::prop_assert!(q.windows(2).all(|w| w[0] <= w[1]));
            for (i, &v) in q.iter().enumerate() {
                let tau = (2 * i + 1) as f64 / (2 * n) as f64;
                proptest::prop_assert!(d.cdf(v) >= tau - 1e-12);
                proptest::prop_assert!(d.cdf_left(v) < tau + 1e-12);
            }
        }
    }
}
