use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envlib::{AnalyticBaseline, EnvConfig, EnvSpec, ReturnInterval};
use crate::error::{Error, Result};
use crate::fitlearn::DEFAULT_RIDGE;
use crate::imputation::{Cdf, QuantileCdf, StatVec, TruncatedNormalCdf, UniformCdf};
use crate::sdesim::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    QuantileBound,
    WeakNorm,
    ShjbDecay,
    HjbConsistency,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::QuantileBound => "quantile-bound",
            Self::WeakNorm => "weak-norm",
            Self::ShjbDecay => "shjb-decay",
            Self::HjbConsistency => "hjb-consistency",
        }
    }
}

/// The reference distribution for the imputation experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fixture {
    Uniform {
        #[serde(default)]
        lo: Option<f64>,
        #[serde(default)]
        hi: Option<f64>,
    },
    TruncatedNormal {
        mean: f64,
        std: f64,
        lo: f64,
        hi: f64,
    },
    /// A point mass; every imputation reproduces it exactly.
    PointMass { at: f64 },
    /// The analytic return CDF of `env` at state `x`.
    Env { x: Vec<f64> },
}

/// A fixture resolved to a CDF and the interval carrying its mass.
pub struct ResolvedFixture {
    pub cdf: Box<dyn Cdf + Send + Sync>,
    pub support: ReturnInterval,
}

impl Fixture {
    pub fn resolve(&self, env: Option<&(EnvSpec, AnalyticBaseline)>) -> Result<ResolvedFixture> {
        Ok(match self {
            Fixture::Uniform { lo, hi } => {
                let (lo, hi) = (lo.unwrap_or(0.0), hi.unwrap_or(1.0));
                if !(hi > lo) {
                    return Err(Error::InvalidConfig(format!("uniform fixture needs lo < hi, got [{lo}, {hi}]")));
                }
                ResolvedFixture {
                    cdf: Box::new(UniformCdf { lo, hi }),
                    support: ReturnInterval::new(lo, hi)?,
                }
            }
            &Fixture::TruncatedNormal { mean, std, lo, hi } => {
                if !(std > 0.0 && hi > lo) {
                    return Err(Error::InvalidConfig("truncated normal needs std > 0 and lo < hi".into()));
                }
                ResolvedFixture {
                    cdf: Box::new(TruncatedNormalCdf { mean, std, lo, hi }),
                    support: ReturnInterval::new(lo, hi)?,
                }
            }
            &Fixture::PointMass { at } => ResolvedFixture {
                cdf: Box::new(QuantileCdf::new(&StatVec::quantile(vec![at]))?),
                support: ReturnInterval::new(at, at)?,
            },
            Fixture::Env { x } => {
                let (spec, base) =
                    env.ok_or_else(|| Error::InvalidConfig("an env fixture needs an `env` section".into()))?;
                let f = base
                    .return_cdf
                    .clone()
                    .ok_or_else(|| Error::MissingOracle("environment has no analytic return CDF".into()))?;
                if x.len() != spec.dim() {
                    return Err(Error::DimensionMismatch {
                        context: "fixture state",
                        expected: spec.dim(),
                        got: x.len(),
                    });
                }
                let x = x.clone();
                ResolvedFixture {
                    cdf: Box::new(move |z: f64| f(&x, z)),
                    support: crate::envlib::return_bounds(spec)?,
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Chosen from the discounted-tail rule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Falls back to the experiment seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_paths() -> usize {
    10_000
}

fn default_anchors() -> usize {
    25
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

fn default_imputation() -> String {
    "quantile".into()
}

fn default_grid() -> usize {
    10_001
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            horizon: None,
            n_paths: default_paths(),
            seed: None,
        }
    }
}

impl SimSettings {
    pub fn build(&self, env: &EnvSpec, seed: u64) -> Result<SimConfig> {
        let seed = self.seed.unwrap_or(seed);
        match self.horizon {
            Some(h) => SimConfig::new(self.dt, h, self.n_paths, seed),
            None => SimConfig::for_env(env, self.dt, self.n_paths, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<Fixture>,
    #[serde(alias = "N_list")]
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Equally spaced anchor states for Monte Carlo fitting.
    #[serde(default = "default_anchors")]
    pub anchors: usize,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_imputation")]
    pub imputation: String,
    /// Points in the sup-grid of the Kolmogorov sweep.
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, n_list: Vec<usize>) -> Self {
        Self {
            experiment,
            env: None,
            fixture: None,
            n_list,
            sim: SimSettings::default(),
            seed: 0,
            out_dir: None,
            anchors: default_anchors(),
            ridge: default_ridge(),
            imputation: default_imputation(),
            grid_points: default_grid(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::InvalidConfig("N_list must be nonempty".into()));
        }
        if self.n_list[0] == 0 || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("N_list must be positive and strictly increasing".into()));
        }
        if self.imputation != "quantile" {
            return Err(Error::InvalidConfig(format!(
                "unsupported imputation `{}` (only `quantile`)",
                self.imputation
            )));
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidConfig("grid_points must be at least 2".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidConfig("ridge must be nonnegative".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialisation, hex encoded. The output
    /// directory does not affect results and is left out.
    pub fn hash(&self) -> Result<String> {
        let canon = serde_json::to_string(&Self {
            out_dir: None,
            ..self.clone()
        })?;
        Ok(hex::encode(Sha256::digest(canon.as_bytes())))
    }
}
