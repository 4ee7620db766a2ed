//! Experiment configuration and its TOML form.
//!
//! ```toml
//! setup_id = "1"
//! M = 3
//! d = 3
//! T = 2000
//! # t_prime_override = 600
//! theta_star = [[0.0, 0.0, 0.5], [-0.0769, -0.0769, -0.0769], [-0.0769, -0.0769, -0.0769]]
//! c_reward = [0.8, 0.1, 0.1]
//! R = 0.001
//! S = 0.5
//! K = 2.0
//! nu = 0.1
//! delta_prime = 0.01
//! seeds = [1, 2, 3]
//! # privacy_vectors = [[1.0, 0.25, 0.5], [0.25, 1.0, 0.5]]
//!
//! [privacy]
//! epsilon = 2.0
//! delta = 0.9
//! sensitivity = 1.0
//! alpha = [1.0, 0.25, 0.5]      # or epsilon_m = [2.0, 8.0, 4.0]
//!
//! [safe_set]
//! c = [1.0, 0.25, 0.5]          # or a = [[...]] and b = [...]
//! ```
//!
//! The runs sweep `privacy_vectors` when it is given and the vector of the
//! `[privacy]` block otherwise.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::ConfidenceParams;
use crate::geometry::io::PolytopeFile;
use crate::geometry::{build_simplex, Polytope, SimplexSpec};
use crate::privacy::{alpha_levels, sigma_for, PrivacyScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyBlock {
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default = "one")]
    pub sensitivity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

impl PrivacyBlock {
    /// Privacy levels of the block.
    pub fn levels(&self) -> Result<Vec<f64>> {
        match (&self.epsilon_m, &self.alpha) {
            (Some(e), None) => alpha_levels(self.epsilon, e),
            (None, Some(a)) => Ok(a.clone()),
            _ => Err(Error::Config(
                "privacy block needs exactly one of `epsilon_m` and `alpha`".into(),
            )),
        }
    }

    pub fn sigma(&self) -> Result<f64> {
        sigma_for(self.epsilon, self.delta, self.sensitivity)
    }

    pub fn scheme(&self, alpha: &[f64]) -> Result<PrivacyScheme> {
        PrivacyScheme::from_alphas(self.epsilon, self.delta, self.sensitivity, alpha.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_setup")]
    setup_id: String,
    #[serde(rename = "M")]
    m: usize,
    d: usize,
    #[serde(rename = "T")]
    horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_prime_override: Option<usize>,
    theta_star: Vec<Vec<f64>>,
    c_reward: Vec<f64>,
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "S")]
    s: f64,
    #[serde(rename = "K")]
    k: f64,
    nu: f64,
    delta_prime: f64,
    seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    privacy_vectors: Vec<Vec<f64>>,
    privacy: PrivacyBlock,
    safe_set: PolytopeFile,
}

fn default_setup() -> String {
    "custom".into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub setup_id: String,
    pub m: usize,
    pub d: usize,
    pub horizon: usize,
    pub t_prime_override: Option<usize>,
    /// Row `m` is `θ_{*,m}`.
    pub theta_star: DMatrix<f64>,
    pub c_reward: Vec<f64>,
    pub safe_set: Polytope,
    pub privacy: PrivacyBlock,
    pub privacy_vectors: Vec<Vec<f64>>,
    pub r: f64,
    pub s: f64,
    pub k: f64,
    pub nu: f64,
    pub delta_prime: f64,
    pub seeds: Vec<u64>,
}

/// Scales of the simplex used by the reproduction.
pub const EXPERIMENT_C: [f64; 3] = [1.0, 0.25, 0.5];

/// Privacy levels permuted across agents in the reproduction.
pub const EXPERIMENT_LEVELS: [f64; 3] = [0.25, 0.5, 1.0];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_raw(raw)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        let safe_set = match self.safe_set.simplex_tag() {
            Some(tag) if tag.beta.iter().all(|&b| b == 1.0) => PolytopeFile {
                c: Some(tag.c.clone()),
                ..Default::default()
            },
            _ => PolytopeFile::from_polytope(&self.safe_set),
        };
        let raw = RawConfig {
            setup_id: self.setup_id.clone(),
            m: self.m,
            d: self.d,
            horizon: self.horizon,
            t_prime_override: self.t_prime_override,
            theta_star: (0..self.m)
                .map(|i| self.theta_star.row(i).iter().copied().collect())
                .collect(),
            c_reward: self.c_reward.clone(),
            r: self.r,
            s: self.s,
            k: self.k,
            nu: self.nu,
            delta_prime: self.delta_prime,
            seeds: self.seeds.clone(),
            privacy_vectors: self.privacy_vectors.clone(),
            privacy: self.privacy.clone(),
            safe_set,
        };
        toml::to_string(&raw).map_err(|e| Error::Parse(e.to_string()))
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        if raw.theta_star.len() != raw.m {
            return Err(Error::DimensionMismatch {
                expected: raw.m,
                got: raw.theta_star.len(),
            });
        }
        if let Some(row) = raw.theta_star.iter().find(|r| r.len() != raw.d) {
            return Err(Error::DimensionMismatch {
                expected: raw.d,
                got: row.len(),
            });
        }
        let theta_star = DMatrix::from_fn(raw.m, raw.d, |i, j| raw.theta_star[i][j]);
        let cfg = Self {
            setup_id: raw.setup_id,
            m: raw.m,
            d: raw.d,
            horizon: raw.horizon,
            t_prime_override: raw.t_prime_override,
            theta_star,
            c_reward: raw.c_reward,
            safe_set: raw.safe_set.build()?,
            privacy: raw.privacy,
            privacy_vectors: raw.privacy_vectors,
            r: raw.r,
            s: raw.s,
            k: raw.k,
            nu: raw.nu,
            delta_prime: raw.delta_prime,
            seeds: raw.seeds,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.confidence_params()?.validate()?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.theta_star.nrows() != self.m || self.theta_star.ncols() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.m * self.d,
                got: self.theta_star.len(),
            });
        }
        if self.safe_set.dim() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: self.safe_set.dim(),
            });
        }
        if self.c_reward.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: self.c_reward.len(),
            });
        }
        if let Some(c) = self.c_reward.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
            return Err(Error::Config(format!("reward weight {c} must be nonnegative")));
        }
        for m in 0..self.m {
            let n = self.theta_star.row(m).norm();
            if n > self.s * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "|theta_star[{m}]| = {n} exceeds S = {}",
                    self.s
                )));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        for a in self.sweep()? {
            if a.len() != self.m {
                return Err(Error::DimensionMismatch {
                    expected: self.m,
                    got: a.len(),
                });
            }
            self.privacy.scheme(&a)?;
        }
        Ok(())
    }

    /// Privacy vectors the runs iterate over.
    pub fn sweep(&self) -> Result<Vec<Vec<f64>>> {
        if self.privacy_vectors.is_empty() {
            Ok(vec![self.privacy.levels()?])
        } else {
            self.privacy.levels()?;
            Ok(self.privacy_vectors.clone())
        }
    }

    pub fn sigma(&self) -> Result<f64> {
        self.privacy.sigma()
    }

    pub fn confidence_params(&self) -> Result<ConfidenceParams> {
        Ok(ConfidenceParams {
            r: self.r,
            s: self.s,
            k: self.k,
            nu: self.nu,
            delta_prime: self.delta_prime,
            m: self.m,
            d: self.d,
            sigma: self.sigma()?,
        })
    }

    /// `L = ‖c‖₂`, exact for the linear reward.
    pub fn lipschitz(&self) -> f64 {
        self.c_reward.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// One of the three reproduction setups (`setup` in `1..=3`): the agent
    /// `setup − 1` has parameter `[0, 0, 1/2]` and reward weight 0.8, the
    /// others `−(1/13)·1` and 0.1.
    pub fn experiment(setup: usize, horizon: usize, seeds: Vec<u64>) -> Result<Self> {
        if !(1..=3).contains(&setup) {
            return Err(Error::Config(format!("setup {setup} is not one of 1, 2, 3")));
        }
        let hot = setup - 1;
        let theta_star = DMatrix::from_fn(3, 3, |i, j| {
            if i == hot {
                if j == 2 {
                    0.5
                } else {
                    0.0
                }
            } else {
                -1.0 / 13.0
            }
        });
        let c_reward = (0..3).map(|i| if i == hot { 0.8 } else { 0.1 }).collect();
        let cfg = Self {
            setup_id: setup.to_string(),
            m: 3,
            d: 3,
            horizon,
            t_prime_override: None,
            theta_star,
            c_reward,
            safe_set: build_simplex(&SimplexSpec::new(EXPERIMENT_C.to_vec())?),
            privacy: PrivacyBlock {
                epsilon: 2.0,
                delta: 0.9,
                sensitivity: 1.0,
                epsilon_m: None,
                alpha: Some(EXPERIMENT_C.to_vec()),
            },
            privacy_vectors: experiment_privacy_vectors(),
            r: 0.001,
            s: 0.5,
            k: 2.0,
            nu: 0.1,
            delta_prime: 0.01,
            seeds,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// All orderings of [`EXPERIMENT_LEVELS`] in lexicographic order.
pub fn experiment_privacy_vectors() -> Vec<Vec<f64>> {
    let l = EXPERIMENT_LEVELS;
    let mut out = Vec::with_capacity(6);
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                if i != j && j != k && i != k {
                    out.push(vec![l[i], l[j], l[k]]);
                }
            }
        }
    }
    out
}

/// Identifier such as `1-0.25-0.5`.
pub fn vector_id(alpha: &[f64]) -> String {
    alpha
        .iter()
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join("-")
}
