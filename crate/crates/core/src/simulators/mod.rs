//! Generative models and their initial summary statistics.
//!
//! Every model is a pure function of `(θ, seed)`: a dataset is regenerated
//! from its seed by drawing the parameter from the prior and then simulating,
//! both from the same stream.

mod mg1;
pub mod poisson;
mod ricker;
mod toy;

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, Rng};

pub use mg1::{interpolated_quantile, mg1_recursion, mg1_simulate, mg1_summaries, Mg1Model, Mg1Params, Mg1Prior, MG1_QUANTILES};
pub use ricker::{
    ricker_features, ricker_simulate, ricker_trajectory, FeatureSet, RickerModel, RickerParams, RickerPrior,
    RICKER_OBSERVATIONS,
};
pub use toy::{gaussian_toy_posterior, gaussian_toy_simulate, GaussianToy};

/// A one-dimensional prior component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    Uniform { low: f64, high: f64 },
    /// Uniform on the log scale between `ln(low)` and `ln(high)`.
    LogUniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
    Fixed { value: f64 },
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            Prior::LogUniform { low, high } => low > 0.0 && high.is_finite() && low < high,
            Prior::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Prior::Fixed { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("malformed prior {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            Prior::Uniform { low, high } => low + (high - low) * rng.gen::<f64>(),
            Prior::LogUniform { low, high } => {
                let (a, b) = (low.ln(), high.ln());
                (a + (b - a) * rng.gen::<f64>()).exp()
            }
            Prior::Normal { mean, sd } => {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                mean + sd * z
            }
            Prior::Fixed { value } => value,
        }
    }

    /// Log density up to a constant; `None` outside the support. A fixed
    /// component is treated as a point mass.
    pub fn log_density(&self, x: f64) -> Option<f64> {
        match *self {
            Prior::Uniform { low, high } => (x >= low && x <= high).then_some(0.0),
            Prior::LogUniform { low, high } => (x >= low && x <= high).then(|| -x.ln()),
            Prior::Normal { mean, sd } => x.is_finite().then(|| -0.5 * ((x - mean) / sd).powi(2)),
            Prior::Fixed { value } => (x == value).then_some(0.0),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Prior::Fixed { .. })
    }

    /// Same family restricted to the central `fraction` of its range.
    pub fn central(&self, fraction: f64) -> Prior {
        let shrink = |a: f64, b: f64| {
            let pad = 0.5 * (1.0 - fraction) * (b - a);
            (a + pad, b - pad)
        };
        match *self {
            Prior::Uniform { low, high } => {
                let (low, high) = shrink(low, high);
                Prior::Uniform { low, high }
            }
            Prior::LogUniform { low, high } => {
                let (a, b) = shrink(low.ln(), high.ln());
                Prior::LogUniform {
                    low: a.exp(),
                    high: b.exp(),
                }
            }
            Prior::Normal { mean, sd } => Prior::Normal {
                mean,
                sd: sd * fraction,
            },
            fixed => fixed,
        }
    }
}

/// Static description of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub parameter_names: Vec<String>,
    pub raw_len: usize,
    pub summary_dim: usize,
    pub extractor: String,
}

impl ModelSpec {
    pub fn param_dim(&self) -> usize {
        self.parameter_names.len()
    }
}

/// A simulator with a prior and an initial-summary extractor.
pub trait Model: Send + Sync {
    fn spec(&self) -> ModelSpec;

    fn param_dim(&self) -> usize {
        self.spec().param_dim()
    }

    fn prior_sample(&self, rng: &mut Rng) -> Vec<f64>;

    /// Log prior density up to a constant, `None` outside the support.
    fn prior_log_density(&self, theta: &[f64]) -> Option<f64>;

    /// Parameters used to generate observed datasets. Defaults to the prior.
    fn sample_truth(&self, rng: &mut Rng) -> Vec<f64> {
        self.prior_sample(rng)
    }

    /// Raw simulator output for parameter `theta`.
    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;

    /// Initial summary statistics of a raw dataset.
    fn summaries(&self, raw: &[f64]) -> Result<Vec<f64>>;
}

/// Draw `θ` from the prior.
pub fn prior_sample(model: &dyn Model, rng: &mut Rng) -> Vec<f64> {
    model.prior_sample(rng)
}

/// Regenerate the `(θ, raw)` pair stored under `seed`.
pub fn regenerate(model: &dyn Model, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rng = rng_from_seed(seed);
    let theta = model.prior_sample(&mut rng);
    let raw = model.simulate(&theta, &mut rng)?;
    Ok((theta, raw))
}

/// A batch of simulated datasets.
#[derive(Debug, Clone)]
pub struct SimulatedSet {
    pub seeds: Vec<u64>,
    /// `n × p`.
    pub thetas: DMatrix<f64>,
    /// `n × m` initial summaries.
    pub summaries: DMatrix<f64>,
    /// Raw outputs, kept only when requested.
    pub raw: Option<Vec<Vec<f64>>>,
}

impl SimulatedSet {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn theta(&self, i: usize) -> Vec<f64> {
        self.thetas.row(i).iter().copied().collect()
    }

    pub fn summary(&self, i: usize) -> Vec<f64> {
        self.summaries.row(i).iter().copied().collect()
    }

    pub fn from_rows(seeds: Vec<u64>, thetas: Vec<Vec<f64>>, summaries: Vec<Vec<f64>>, raw: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let n = seeds.len();
        if thetas.len() != n || summaries.len() != n || raw.as_ref().is_some_and(|r| r.len() != n) {
            return Err(Error::invalid("simulated set columns differ in length"));
        }
        let p = thetas.first().map_or(0, Vec::len);
        let m = summaries.first().map_or(0, Vec::len);
        if thetas.iter().any(|t| t.len() != p) || summaries.iter().any(|s| s.len() != m) {
            return Err(Error::invalid("ragged rows in simulated set"));
        }
        Ok(SimulatedSet {
            seeds,
            thetas: DMatrix::from_fn(n, p, |i, j| thetas[i][j]),
            summaries: DMatrix::from_fn(n, m, |i, j| summaries[i][j]),
            raw,
        })
    }
}

/// Simulate `count` datasets, dataset `k` seeded by `derive_seed(master, [tag, k])`.
pub fn simulate_batch(model: &dyn Model, master: u64, tag: u64, count: usize, keep_raw: bool) -> Result<SimulatedSet> {
    let rows: Vec<(u64, Vec<f64>, Vec<f64>, Vec<f64>)> = (0..count)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(master, &[tag, k as u64]);
            let (theta, raw) = regenerate(model, seed)?;
            let s = model.summaries(&raw)?;
            Ok((seed, theta, s, raw))
        })
        .collect::<Result<_>>()?;
    let mut seeds = Vec::with_capacity(count);
    let mut thetas = Vec::with_capacity(count);
    let mut summaries = Vec::with_capacity(count);
    let mut raws = keep_raw.then(|| Vec::with_capacity(count));
    for (seed, theta, s, raw) in rows {
        seeds.push(seed);
        thetas.push(theta);
        summaries.push(s);
        if let Some(r) = raws.as_mut() {
            r.push(raw);
        }
    }
    SimulatedSet::from_rows(seeds, thetas, summaries, raws)
}
