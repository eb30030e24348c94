//! Experiment configuration, stored as JSON with a schema version.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use lgkdr_core::crossval::CvGrid;
use lgkdr_core::gkdr::TargetDim;
use lgkdr_core::linalg::KernelParams;
use lgkdr_core::samplers::SmcConfig;
use lgkdr_core::simulators::{GaussianToy, Mg1Model, Model, RickerModel};

use crate::error::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Mg1(Mg1Model),
    Ricker(RickerModel),
    GaussianToy(GaussianToy),
}

impl ModelConfig {
    pub fn build(&self) -> Box<dyn Model> {
        match self {
            ModelConfig::Mg1(m) => Box::new(m.clone()),
            ModelConfig::Ricker(m) => Box::new(m.clone()),
            ModelConfig::GaussianToy(m) => Box::new(m.clone()),
        }
    }

    pub fn validate(&self) -> lgkdr_core::Result<()> {
        match self {
            ModelConfig::Mg1(m) => m.validate(),
            ModelConfig::Ricker(m) => m.validate(),
            ModelConfig::GaussianToy(m) => m.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub grid: CvGrid,
    pub n_pseudo_obs: usize,
    /// Use only the first rows of the training set for the search.
    pub training_n: Option<usize>,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings {
            grid: CvGrid::default(),
            n_pseudo_obs: 10,
            training_n: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LgkdrStrategy {
    pub target_dim: TargetDim,
    pub weight_quantile: f64,
    /// Separated construction for this parameter index only.
    pub focus: Option<usize>,
    /// Fixed kernel parameters; cross-validation is skipped when set.
    pub kernel: Option<KernelParams>,
    pub cv: CvSettings,
    /// Prior draws in the pilot run; when set, each observation's training
    /// set is the `training_n` pilot draws nearest to it.
    pub pilot_n: Option<usize>,
}

impl Default for LgkdrStrategy {
    fn default() -> Self {
        LgkdrStrategy {
            target_dim: TargetDim::Auto,
            weight_quantile: 0.10,
            focus: None,
            kernel: None,
            cv: CvSettings::default(),
            pilot_n: None,
        }
    }
}

fn default_quantile() -> f64 {
    0.10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyConfig {
    Identity,
    Linear {
        #[serde(default)]
        local: bool,
        #[serde(default = "default_quantile")]
        weight_quantile: f64,
    },
    Lgkdr(LgkdrStrategy),
}

impl StrategyConfig {
    /// Short row label, e.g. `lgkdr(focus 1)` with a 1-based index.
    pub fn label(&self) -> String {
        match self {
            StrategyConfig::Identity => "identity".into(),
            StrategyConfig::Linear { local: false, .. } => "linear".into(),
            StrategyConfig::Linear { local: true, .. } => "local-linear".into(),
            StrategyConfig::Lgkdr(l) => {
                let mut label = "lgkdr".to_string();
                let mut notes = Vec::new();
                if let Some(j) = l.focus {
                    notes.push(format!("focus {}", j + 1));
                }
                if let TargetDim::Fixed(d) = l.target_dim {
                    notes.push(format!("d={d}"));
                }
                if !notes.is_empty() {
                    label.push_str(&format!("({})", notes.join(", ")));
                }
                label
            }
        }
    }

    /// Default acceptance fraction for rejection sampling.
    pub fn default_acceptance_rate(&self) -> f64 {
        match self {
            StrategyConfig::Lgkdr(_) => 0.01,
            _ => 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerConfig {
    Rejection {
        pool_size: usize,
        /// Accepted draws per observation; defaults to the strategy's rate.
        #[serde(default)]
        n_acc: Option<usize>,
    },
    Smc(SmcConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sizes {
    pub n_obs: usize,
    pub training_n: usize,
    pub test_n: usize,
}

impl Default for Sizes {
    fn default() -> Self {
        Sizes {
            n_obs: 10,
            training_n: 2000,
            test_n: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub model: ModelConfig,
    pub strategy: StrategyConfig,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub sizes: Sizes,
    /// Row label in comparison tables; derived from the strategy when absent.
    #[serde(default)]
    pub label: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("cannot parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.strategy.label())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex_digest(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn n_acc(&self) -> Option<usize> {
        match &self.sampler {
            SamplerConfig::Rejection { pool_size, n_acc } => Some(n_acc.unwrap_or_else(|| {
                ((*pool_size as f64 * self.strategy.default_acceptance_rate()).round() as usize).max(1)
            })),
            SamplerConfig::Smc(_) => None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.model.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let p = self.model.build().param_dim();
        if self.sizes.n_obs == 0 || self.sizes.training_n < 2 {
            return bad("n_obs must be positive and training_n at least 2".into());
        }
        match &self.strategy {
            StrategyConfig::Identity => {}
            StrategyConfig::Linear { weight_quantile, .. } => {
                if !(*weight_quantile > 0.0 && *weight_quantile <= 1.0) {
                    return bad("linear weight_quantile must lie in (0, 1]".into());
                }
            }
            StrategyConfig::Lgkdr(l) => {
                if !(l.weight_quantile > 0.0 && l.weight_quantile <= 1.0) {
                    return bad("lgkdr weight_quantile must lie in (0, 1]".into());
                }
                if l.target_dim == TargetDim::Fixed(0) {
                    return bad("target_dim must be at least 1".into());
                }
                if let Some(j) = l.focus {
                    if j >= p {
                        return bad(format!("focus index {j} out of range for {p} parameters"));
                    }
                }
                if l.pilot_n.is_some_and(|n| n < self.sizes.training_n) {
                    return bad("pilot_n must be at least training_n".into());
                }
                if let Some(k) = &l.kernel {
                    k.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
                } else {
                    l.cv.grid.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
                    if l.cv.n_pseudo_obs == 0 || self.sizes.test_n < 5 {
                        return bad("cross-validation needs pseudo-observations and at least 5 test rows".into());
                    }
                    if l.cv.training_n.is_some_and(|n| n < 2 || n > self.sizes.training_n) {
                        return bad("cv.training_n must lie in 2..=training_n".into());
                    }
                }
            }
        }
        match &self.sampler {
            SamplerConfig::Rejection { pool_size, .. } => {
                let n_acc = self.n_acc().unwrap_or(0);
                if *pool_size == 0 || n_acc == 0 || n_acc > *pool_size {
                    return bad(format!("need 0 < n_acc <= pool_size (n_acc {n_acc}, pool {pool_size})"));
                }
            }
            SamplerConfig::Smc(s) => s.validate().map_err(|e| HarnessError::Config(e.to_string()))?,
        }
        Ok(())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            name: "toy".into(),
            seed: 3,
            model: ModelConfig::GaussianToy(GaussianToy::new(1.0, 4)),
            strategy: StrategyConfig::Identity,
            sampler: SamplerConfig::Rejection {
                pool_size: 1000,
                n_acc: None,
            },
            sizes: Sizes::default(),
            label: None,
        }
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = toy();
        cfg.strategy = StrategyConfig::Lgkdr(LgkdrStrategy {
            focus: Some(0),
            target_dim: TargetDim::Fixed(1),
            ..Default::default()
        });
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.label(), "lgkdr(focus 1, d=1)");
    }

    #[test]
    fn minimal_json_fills_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"schema_version": 1, "name": "m", "seed": 1,
                "model": {"kind": "mg1"},
                "strategy": {"kind": "lgkdr", "focus": 0},
                "sampler": {"kind": "rejection", "pool_size": 100000}}"#,
        )
        .unwrap();
        assert_eq!(cfg.n_acc(), Some(1000));
        let ModelConfig::Mg1(m) = &cfg.model else { panic!() };
        assert_eq!(m.n_customers, 50);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = toy();
        cfg.schema_version = 7;
        assert!(cfg.validate().is_err());
        let mut cfg = toy();
        cfg.sampler = SamplerConfig::Rejection {
            pool_size: 10,
            n_acc: Some(11),
        };
        assert!(cfg.validate().is_err());
        let mut cfg = toy();
        cfg.strategy = StrategyConfig::Lgkdr(LgkdrStrategy {
            focus: Some(3),
            ..Default::default()
        });
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_json("{").is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version":1,"name":"x","seed":1,"model":{"kind":"toy"}}"#).is_err());
    }
}
