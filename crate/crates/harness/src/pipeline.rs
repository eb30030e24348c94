//! Experiment stages: observations, frozen pool, training data,
//! cross-validation, summary construction, sampling and scoring.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use lgkdr_core::crossval::{cv_select, CvReport, Labelled};
use lgkdr_core::format::fmt_f64;
use lgkdr_core::gkdr::{GkdrConfig, TargetDim};
use lgkdr_core::linalg::{KernelParams, Standardizer};
use lgkdr_core::samplers::{rejection_on_projected, smc_abc, SmcConfig, SmcContext};
use lgkdr_core::seed::{derive_seed, rng_from_seed, tags};
use lgkdr_core::simulators::{simulate_batch, Model, SimulatedSet};
use lgkdr_core::summary::{fit_identity, fit_linear_posterior_mean, LgkdrFitter, LinearOptions, SummaryConstructor};

use crate::config::{hex_digest, ExperimentConfig, LgkdrStrategy, SamplerConfig, StrategyConfig};
use crate::error::{HarnessError, Result};
use crate::io::{atomic_write, posterior_to_csv, write_json, PoolSource, PoolStore, PosteriorRow};
use crate::metrics::{amse, mse};

pub const SOFTWARE_VERSION: &str = concat!("lgkdr ", env!("CARGO_PKG_VERSION"));

/// An observed dataset with its generating parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub index: usize,
    pub seed: u64,
    pub theta: Vec<f64>,
    pub summary: Vec<f64>,
}

/// Observation `j` is generated from `derive_seed(seed, [OBSERVATION, j])`:
/// the truth and then the dataset are drawn from that one stream.
pub fn observations(model: &dyn Model, seed: u64, n: usize) -> Result<Vec<Observation>> {
    (0..n)
        .into_par_iter()
        .map(|j| {
            let obs_seed = derive_seed(seed, &[tags::OBSERVATION, j as u64]);
            let mut rng = rng_from_seed(obs_seed);
            let theta = model.sample_truth(&mut rng);
            let raw = model.simulate(&theta, &mut rng).map_err(HarnessError::stage("observations"))?;
            let summary = model.summaries(&raw).map_err(HarnessError::stage("observations"))?;
            Ok(Observation {
                index: j,
                seed: obs_seed,
                theta,
                summary,
            })
        })
        .collect()
}

pub fn observations_to_csv(obs: &[Observation], parameter_names: &[String]) -> String {
    let m = obs.first().map_or(0, |o| o.summary.len());
    let mut header = vec!["index".to_string(), "seed".to_string()];
    header.extend(parameter_names.iter().cloned());
    header.extend((0..m).map(|k| format!("s{k}")));
    let mut out = header.join(",");
    out.push('\n');
    for o in obs {
        let values: Vec<String> = o.theta.iter().chain(&o.summary).map(|v| fmt_f64(*v)).collect();
        out.push_str(&format!("{},{},{}\n", o.index, o.seed, values.join(",")));
    }
    out
}

pub fn pool_hash(cfg: &ExperimentConfig, pool_size: usize) -> String {
    let model = serde_json::to_string(&cfg.model).expect("model serializes");
    hex_digest(format!("pool-v1|{model}|{}|{pool_size}", cfg.seed).as_bytes())
}

/// The frozen rejection pool for `cfg`, from `store` when already built.
pub fn frozen_pool(
    cfg: &ExperimentConfig,
    model: &dyn Model,
    pool_size: usize,
    store: &PoolStore,
) -> Result<(Arc<SimulatedSet>, String, PoolSource)> {
    let hash = pool_hash(cfg, pool_size);
    let names = model.spec().parameter_names;
    let (pool, source) = store.get_or_create(&hash, &names, || {
        simulate_batch(model, cfg.seed, tags::POOL, pool_size, false).map_err(HarnessError::stage("pool"))
    })?;
    Ok((pool, hash, source))
}

pub fn training_set(cfg: &ExperimentConfig, model: &dyn Model) -> Result<SimulatedSet> {
    simulate_batch(model, cfg.seed, tags::TRAINING, cfg.sizes.training_n, false).map_err(HarnessError::stage("training"))
}

fn template(l: &LgkdrStrategy) -> GkdrConfig {
    let mut cfg = GkdrConfig::new(
        KernelParams::new(1.0, 1.0, 1e-3).expect("valid placeholder kernel"),
        l.target_dim,
    );
    cfg.weight_quantile = l.weight_quantile;
    cfg.response_index = l.focus;
    cfg
}

/// Grid search for the LGKDR kernel on independent test and pseudo-observed sets.
pub fn cross_validate(
    cfg: &ExperimentConfig,
    l: &LgkdrStrategy,
    model: &dyn Model,
    training: &SimulatedSet,
) -> Result<CvReport> {
    let stage = HarnessError::stage;
    let test = simulate_batch(model, cfg.seed, tags::TEST, cfg.sizes.test_n, false).map_err(stage("cv"))?;
    let pseudo = simulate_batch(model, cfg.seed, tags::PSEUDO_OBS, l.cv.n_pseudo_obs, false).map_err(stage("cv"))?;
    let n = l.cv.training_n.unwrap_or(training.len()).min(training.len());
    let s = training.summaries.rows(0, n).into_owned();
    let t = training.thetas.rows(0, n).into_owned();
    cv_select(
        Labelled {
            summaries: &s,
            parameters: &t,
        },
        Labelled {
            summaries: &test.summaries,
            parameters: &test.thetas,
        },
        Labelled {
            summaries: &pseudo.summaries,
            parameters: &pseudo.thetas,
        },
        &l.cv.grid,
        &template(l),
        derive_seed(cfg.seed, &[tags::SUBSAMPLE]),
    )
    .map_err(stage("cv"))
}

/// A summary constructor, either shared by all observations or fitted
/// around each one.
pub enum Prepared {
    Global(SummaryConstructor),
    LocalLinear {
        summaries: DMatrix<f64>,
        parameters: DMatrix<f64>,
        options: LinearOptions,
    },
    Lgkdr {
        fitter: LgkdrFitter,
        target_dim: TargetDim,
        weight_quantile: f64,
    },
    /// LGKDR trained on the pilot draws nearest to each observation.
    PilotLgkdr {
        pilot: SimulatedSet,
        standardizer: Standardizer,
        standardized: DMatrix<f64>,
        keep: usize,
        kernel: KernelParams,
        strategy: LgkdrStrategy,
    },
}

impl Prepared {
    /// `pilot` (with the number of draws to keep) switches LGKDR to
    /// per-observation training sets.
    pub fn new(
        strategy: &StrategyConfig,
        training: &SimulatedSet,
        kernel: Option<&KernelParams>,
        pilot: Option<(SimulatedSet, usize)>,
    ) -> Result<Self> {
        let stage = HarnessError::stage("fit-summary");
        Ok(match strategy {
            StrategyConfig::Identity => Prepared::Global(fit_identity(&training.summaries).map_err(stage)?),
            StrategyConfig::Linear {
                local: false,
                weight_quantile,
            } => Prepared::Global(
                fit_linear_posterior_mean(
                    &training.summaries,
                    &training.thetas,
                    None,
                    LinearOptions {
                        local: false,
                        weight_quantile: *weight_quantile,
                    },
                )
                .map_err(stage)?,
            ),
            StrategyConfig::Linear {
                local: true,
                weight_quantile,
            } => Prepared::LocalLinear {
                summaries: training.summaries.clone(),
                parameters: training.thetas.clone(),
                options: LinearOptions {
                    local: true,
                    weight_quantile: *weight_quantile,
                },
            },
            StrategyConfig::Lgkdr(l) => {
                let kernel = kernel
                    .or(l.kernel.as_ref())
                    .ok_or_else(|| HarnessError::Config("LGKDR strategy needs a kernel or cross-validation".into()))?;
                if let Some((pilot, keep)) = pilot {
                    let standardizer = Standardizer::fit(&pilot.summaries).map_err(stage)?;
                    let standardized = standardizer.apply_rows(&pilot.summaries).map_err(HarnessError::stage("fit-summary"))?;
                    return Ok(Prepared::PilotLgkdr {
                        pilot,
                        standardizer,
                        standardized,
                        keep,
                        kernel: *kernel,
                        strategy: l.clone(),
                    });
                }
                Prepared::Lgkdr {
                    fitter: LgkdrFitter::new(&training.summaries, &training.thetas, kernel, l.focus).map_err(stage)?,
                    target_dim: l.target_dim,
                    weight_quantile: l.weight_quantile,
                }
            }
        })
    }

    pub fn is_global(&self) -> bool {
        matches!(self, Prepared::Global(_))
    }

    /// The constructor used for an observation with initial summary `x_obs`.
    pub fn constructor(&self, x_obs: &[f64]) -> Result<SummaryConstructor> {
        let stage = HarnessError::stage("fit-summary");
        match self {
            Prepared::Global(c) => Ok(c.clone()),
            Prepared::LocalLinear {
                summaries,
                parameters,
                options,
            } => fit_linear_posterior_mean(summaries, parameters, Some(x_obs), *options).map_err(stage),
            Prepared::Lgkdr {
                fitter,
                target_dim,
                weight_quantile,
            } => fitter
                .fit(x_obs, *target_dim, *weight_quantile)
                .map(SummaryConstructor::Lgkdr)
                .map_err(stage),
            Prepared::PilotLgkdr {
                pilot,
                standardizer,
                standardized,
                keep,
                kernel,
                strategy,
            } => {
                let z_obs = standardizer.apply(x_obs).map_err(HarnessError::stage("fit-summary"))?;
                let near = rejection_on_projected(standardized, &pilot.thetas, &z_obs, *keep)
                    .map_err(HarnessError::stage("fit-summary"))?;
                let rows: Vec<usize> = near.accepted.iter().map(|a| a.index).collect();
                let s = pilot.summaries.select_rows(&rows);
                let t = pilot.thetas.select_rows(&rows);
                LgkdrFitter::new(&s, &t, kernel, strategy.focus)
                    .and_then(|f| f.fit(x_obs, strategy.target_dim, strategy.weight_quantile))
                    .map(SummaryConstructor::Lgkdr)
                    .map_err(stage)
            }
        }
    }
}

/// Kernel selection and constructor preparation for `cfg`.
pub fn prepare(cfg: &ExperimentConfig, model: &dyn Model) -> Result<(Prepared, Option<CvReport>, Option<KernelParams>)> {
    let training = training_set(cfg, model)?;
    let (cv, kernel) = match &cfg.strategy {
        StrategyConfig::Lgkdr(l) => match l.kernel {
            Some(k) => (None, Some(k)),
            None => {
                let report = cross_validate(cfg, l, model, &training)?;
                let k = report.selected;
                (Some(report), Some(k))
            }
        },
        _ => (None, None),
    };
    let pilot = match &cfg.strategy {
        StrategyConfig::Lgkdr(LgkdrStrategy { pilot_n: Some(n), .. }) => Some((
            simulate_batch(model, cfg.seed, tags::PILOT, *n, false).map_err(HarnessError::stage("pilot"))?,
            cfg.sizes.training_n,
        )),
        _ => None,
    };
    let prepared = Prepared::new(&cfg.strategy, &training, kernel.as_ref(), pilot)?;
    Ok((prepared, cv, kernel))
}

/// One row of `trace.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub observation: usize,
    pub round: usize,
    pub epsilon: f64,
    pub ess: f64,
    pub acceptance_rate: f64,
    pub simulations: usize,
}

pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("observation,round,epsilon,ess,acceptance_rate,simulations\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.observation,
            r.round,
            fmt_f64(r.epsilon),
            fmt_f64(r.ess),
            fmt_f64(r.acceptance_rate),
            r.simulations
        ));
    }
    out
}

/// Posterior sample and diagnostics for one observation.
#[derive(Debug, Clone)]
pub struct ObservationResult {
    pub constructor: SummaryConstructor,
    pub posterior: Vec<PosteriorRow>,
    pub trace: Vec<TraceRow>,
    pub epsilon: f64,
    pub simulations: usize,
    pub mse: Vec<f64>,
}

fn score(posterior: &[PosteriorRow], truth: &[f64]) -> Result<Vec<f64>> {
    let draws: Vec<Vec<f64>> = posterior.iter().map(|r| r.theta.clone()).collect();
    let weights: Vec<f64> = posterior.iter().map(|r| r.weight).collect();
    mse(&draws, Some(&weights), truth).map_err(HarnessError::stage("evaluate"))
}

fn reject_one(
    obs: &Observation,
    constructor: SummaryConstructor,
    pool: &SimulatedSet,
    projected: Option<&DMatrix<f64>>,
    n_acc: usize,
) -> Result<ObservationResult> {
    let z_obs = constructor.transform(&obs.summary).map_err(HarnessError::stage("reject"))?;
    let local;
    let projected = match projected {
        Some(p) => p,
        None => {
            local = constructor.transform_rows(&pool.summaries).map_err(HarnessError::stage("reject"))?;
            &local
        }
    };
    let result = rejection_on_projected(projected, &pool.thetas, &z_obs, n_acc).map_err(HarnessError::stage("reject"))?;
    let w = 1.0 / n_acc as f64;
    let posterior: Vec<PosteriorRow> = result
        .accepted
        .iter()
        .map(|a| PosteriorRow {
            theta: a.theta.clone(),
            weight: w,
            distance: a.distance,
            index: a.index,
        })
        .collect();
    let trace = vec![TraceRow {
        observation: obs.index,
        round: 0,
        epsilon: result.epsilon_effective,
        ess: n_acc as f64,
        acceptance_rate: n_acc as f64 / pool.len() as f64,
        simulations: result.total_simulated,
    }];
    Ok(ObservationResult {
        mse: score(&posterior, &obs.theta)?,
        constructor,
        posterior,
        trace,
        epsilon: result.epsilon_effective,
        simulations: result.total_simulated,
    })
}

fn smc_one(
    obs: &Observation,
    constructor: SummaryConstructor,
    model: &dyn Model,
    smc: &SmcConfig,
    seed: u64,
) -> Result<ObservationResult> {
    let z_obs = constructor.transform(&obs.summary).map_err(HarnessError::stage("smc"))?;
    let ctx = SmcContext {
        model,
        constructor: &constructor,
        z_obs: &z_obs,
    };
    let state = smc_abc(&ctx, smc, derive_seed(seed, &[tags::SMC, obs.index as u64])).map_err(HarnessError::stage("smc"))?;
    let posterior: Vec<PosteriorRow> = state
        .particles
        .iter()
        .enumerate()
        .map(|(i, p)| PosteriorRow {
            theta: p.theta.clone(),
            weight: p.weight,
            distance: p.distance,
            index: i,
        })
        .collect();
    let trace = state
        .trace
        .iter()
        .map(|t| TraceRow {
            observation: obs.index,
            round: t.round,
            epsilon: t.epsilon,
            ess: t.ess,
            acceptance_rate: t.acceptance_rate,
            simulations: t.simulations,
        })
        .collect();
    Ok(ObservationResult {
        mse: score(&posterior, &obs.theta)?,
        constructor,
        posterior,
        trace,
        epsilon: state.epsilon,
        simulations: state.simulations,
    })
}

/// Outcome of one experiment, written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub label: String,
    pub config_hash: String,
    pub model: String,
    pub sampler: String,
    pub parameter_names: Vec<String>,
    pub observation_seeds: Vec<u64>,
    pub true_thetas: Vec<Vec<f64>>,
    /// Per-observation, per-parameter MSE.
    pub mse: Vec<Vec<f64>>,
    pub amse: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub simulations: Vec<usize>,
    pub summary_dims: Vec<usize>,
    pub kernel: Option<KernelParams>,
    pub pool_hash: Option<String>,
    pub software_version: String,
    /// Kept out of `metrics.json` so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_seconds: f64,
    pub pool_source: Option<String>,
}

pub struct RunOutput {
    pub record: RunRecord,
    pub observations: Vec<Observation>,
    pub results: Vec<ObservationResult>,
    pub cv: Option<CvReport>,
    pub pool_source: Option<PoolSource>,
}

/// Run every stage of `cfg`; observations are processed concurrently and
/// collected in index order.
pub fn run_experiment(cfg: &ExperimentConfig, store: &PoolStore) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let model = cfg.model.build();
    let model: &dyn Model = model.as_ref();
    let spec = model.spec();
    let obs = observations(model, cfg.seed, cfg.sizes.n_obs)?;
    let (prepared, cv, kernel) = prepare(cfg, model)?;

    let (results, pool_hash, pool_source, sampler) = match &cfg.sampler {
        SamplerConfig::Rejection { pool_size, .. } => {
            let (pool, hash, source) = frozen_pool(cfg, model, *pool_size, store)?;
            let n_acc = cfg.n_acc().expect("rejection sampler has n_acc");
            let shared = match &prepared {
                Prepared::Global(c) => Some(c.transform_rows(&pool.summaries).map_err(HarnessError::stage("reject"))?),
                _ => None,
            };
            let results = obs
                .par_iter()
                .map(|o| reject_one(o, prepared.constructor(&o.summary)?, &pool, shared.as_ref(), n_acc))
                .collect::<Result<Vec<_>>>()?;
            (results, Some(hash), Some(source), "rejection")
        }
        SamplerConfig::Smc(smc) => {
            let results = obs
                .par_iter()
                .map(|o| smc_one(o, prepared.constructor(&o.summary)?, model, smc, cfg.seed))
                .collect::<Result<Vec<_>>>()?;
            (results, None, None, "smc")
        }
    };

    let mses: Vec<Vec<f64>> = results.iter().map(|r| r.mse.clone()).collect();
    let record = RunRecord {
        name: cfg.name.clone(),
        label: cfg.label(),
        config_hash: cfg.hash(),
        model: spec.name.clone(),
        sampler: sampler.into(),
        parameter_names: spec.parameter_names.clone(),
        observation_seeds: obs.iter().map(|o| o.seed).collect(),
        true_thetas: obs.iter().map(|o| o.theta.clone()).collect(),
        amse: amse(&mses).map_err(HarnessError::stage("evaluate"))?,
        mse: mses,
        epsilons: results.iter().map(|r| r.epsilon).collect(),
        simulations: results.iter().map(|r| r.simulations).collect(),
        summary_dims: results.iter().map(|r| r.constructor.output_dim()).collect(),
        kernel,
        pool_hash,
        software_version: SOFTWARE_VERSION.into(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        record,
        observations: obs,
        results,
        cv,
        pool_source,
    })
}

fn source_name(s: PoolSource) -> String {
    match s {
        PoolSource::Generated => "generated",
        PoolSource::Memory => "memory",
        PoolSource::Disk => "disk",
    }
    .into()
}

/// Write the run directory. The pool is written in full unless `store`
/// keeps it on disk, in which case `pool.ref` points at the cached copy.
pub fn write_outputs(out: &Path, cfg: &ExperimentConfig, run: &RunOutput, store: &PoolStore) -> Result<()> {
    let names = &run.record.parameter_names;
    atomic_write(&out.join("config.json"), cfg.to_json().as_bytes())?;
    atomic_write(
        &out.join("observations.csv"),
        observations_to_csv(&run.observations, names).as_bytes(),
    )?;
    if let (Some(hash), SamplerConfig::Rejection { pool_size, .. }) = (&run.record.pool_hash, &cfg.sampler) {
        match store.path_for(hash) {
            Some(path) => {
                let text = format!("{hash}\n{}\n", path.display());
                atomic_write(&out.join("pool.ref"), text.as_bytes())?;
            }
            None => {
                let model = cfg.model.build();
                let (pool, _, _) = frozen_pool(cfg, model.as_ref(), *pool_size, store)?;
                atomic_write(
                    &out.join("pool.csv"),
                    crate::io::pool_to_csv(&pool, hash, names).as_bytes(),
                )?;
            }
        }
    }
    if let Some(cv) = &run.cv {
        write_json(&out.join("cv.json"), cv)?;
    }
    let mut trace = Vec::new();
    for (o, r) in run.observations.iter().zip(&run.results) {
        atomic_write(
            &out.join(format!("posterior_{}.csv", o.index)),
            posterior_to_csv(&r.posterior, names).as_bytes(),
        )?;
        atomic_write(
            &out.join(format!("summary_{}.txt", o.index)),
            r.constructor.to_text().as_bytes(),
        )?;
        trace.extend(r.trace.iter().cloned());
    }
    atomic_write(&out.join("trace.csv"), trace_to_csv(&trace).as_bytes())?;
    write_json(&out.join("metrics.json"), &run.record)?;
    write_json(
        &out.join("timing.json"),
        &Timing {
            wall_clock_seconds: run.record.wall_clock_seconds,
            pool_source: run.pool_source.map(source_name),
        },
    )
}
