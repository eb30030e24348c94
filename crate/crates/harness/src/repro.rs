//! Canned desk-scale experiments for `lgkdr repro <name>`.

use lgkdr_core::gkdr::TargetDim;
use lgkdr_core::samplers::SmcConfig;
use lgkdr_core::simulators::{FeatureSet, GaussianToy, Mg1Model, RickerModel};

use lgkdr_core::crossval::CvGrid;

use crate::config::{CvSettings, ExperimentConfig, LgkdrStrategy, ModelConfig, SamplerConfig, Sizes, StrategyConfig, SCHEMA_VERSION};
use crate::error::{HarnessError, Result};

pub const NAMES: [&str; 4] = ["toy", "mg1", "ricker", "ricker-smc"];

pub const POOL_SIZE: usize = 100_000;

fn base(name: &str, seed: u64, model: ModelConfig, strategy: StrategyConfig, sampler: SamplerConfig) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        name: name.into(),
        seed,
        model,
        strategy,
        sampler,
        sizes: Sizes::default(),
        label: None,
    }
}

/// A six-candidate grid searched on half the training set.
pub fn desk_cv() -> CvSettings {
    CvSettings {
        grid: CvGrid {
            sigma_s_factors: vec![0.5, 1.0, 2.0],
            sigma_theta_factors: vec![1.0],
            eps_n_values: vec![1e-3, 1e-5],
        },
        n_pseudo_obs: 10,
        training_n: Some(1000),
    }
}

fn lgkdr(target_dim: TargetDim, focus: Option<usize>) -> StrategyConfig {
    StrategyConfig::Lgkdr(LgkdrStrategy {
        target_dim,
        focus,
        cv: desk_cv(),
        ..Default::default()
    })
}

fn rejection() -> SamplerConfig {
    SamplerConfig::Rejection {
        pool_size: POOL_SIZE,
        n_acc: None,
    }
}

fn ricker(features: FeatureSet) -> ModelConfig {
    ModelConfig::Ricker(RickerModel {
        features,
        ..Default::default()
    })
}

pub fn ricker_smc() -> SmcConfig {
    let mut smc = SmcConfig::new(1000, 0.0);
    smc.max_simulations = Some(POOL_SIZE);
    smc
}

/// Configurations making up the named experiment, sharing one seed.
pub fn configs(name: &str, seed: u64) -> Result<Vec<ExperimentConfig>> {
    let mg1 = || ModelConfig::Mg1(Mg1Model::default());
    let mut out = match name {
        "toy" => {
            let toy = || ModelConfig::GaussianToy(GaussianToy::default());
            // A finite target keeps the population diverse; its ABC bias is
            // negligible next to the posterior spread.
            let mut smc = SmcConfig::new(1000, 0.05);
            smc.moves_per_round = 3;
            smc.max_rounds = 200;
            smc.max_simulations = Some(10 * POOL_SIZE);
            vec![
                base("toy", seed, toy(), StrategyConfig::Identity, rejection()),
                base("toy", seed, toy(), StrategyConfig::Identity, SamplerConfig::Smc(smc)),
            ]
        }
        "mg1" => vec![
            base("mg1", seed, mg1(), StrategyConfig::Identity, rejection()),
            base(
                "mg1",
                seed,
                mg1(),
                StrategyConfig::Linear {
                    local: false,
                    weight_quantile: 0.1,
                },
                rejection(),
            ),
            base("mg1", seed, mg1(), lgkdr(TargetDim::Fixed(4), None), rejection()),
            base("mg1", seed, mg1(), lgkdr(TargetDim::Fixed(4), Some(0)), rejection()),
        ],
        "ricker" => vec![
            base("ricker", seed, ricker(FeatureSet::E0), StrategyConfig::Identity, rejection()),
            base("ricker", seed, ricker(FeatureSet::E1), lgkdr(TargetDim::Fixed(5), None), rejection()),
        ],
        "ricker-smc" => {
            let smc = || SamplerConfig::Smc(ricker_smc());
            let mut runs = vec![base("ricker-smc", seed, ricker(FeatureSet::E0), StrategyConfig::Identity, smc())];
            for d in [3, 6, 9] {
                runs.push(base("ricker-smc", seed, ricker(FeatureSet::E1), lgkdr(TargetDim::Fixed(d), None), smc()));
            }
            runs
        }
        other => {
            return Err(HarnessError::Config(format!(
                "unknown experiment '{other}' (available: {})",
                NAMES.join(", ")
            )))
        }
    };
    // Ricker runs use five observations per seed.
    if name.starts_with("ricker") {
        for cfg in &mut out {
            cfg.sizes.n_obs = 5;
        }
    }
    Ok(out)
}
