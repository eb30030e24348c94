//! Conjugate Gaussian model with an analytic posterior, used to verify the
//! samplers end to end.

use serde::{Deserialize, Serialize};

use super::{Model, ModelSpec, Prior};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// `θ ~ N(0, prior_var)`, `y_i | θ ~ N(θ, 1)`; summary is the sample mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianToy {
    pub prior_var: f64,
    pub n_obs: usize,
}

impl Default for GaussianToy {
    fn default() -> Self {
        GaussianToy::new(1.0, 4)
    }
}

impl GaussianToy {
    pub fn new(prior_var: f64, n_obs: usize) -> Self {
        GaussianToy { prior_var, n_obs }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior_var > 0.0 && self.prior_var.is_finite()) || self.n_obs == 0 {
            return Err(Error::invalid("Gaussian toy needs positive prior variance and observation count"));
        }
        Ok(())
    }

    fn prior(&self) -> Prior {
        Prior::Normal {
            mean: 0.0,
            sd: self.prior_var.sqrt(),
        }
    }
}

pub fn gaussian_toy_simulate(theta: f64, n_obs: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n_obs)
        .map(|_| {
            let z: f64 = rand::Rng::sample(rng, rand_distr::StandardNormal);
            theta + z
        })
        .collect()
}

/// Posterior mean and variance of `θ` given `n` observations with mean `ybar`.
pub fn gaussian_toy_posterior(prior_var: f64, ybar: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let denom = 1.0 + nf * prior_var;
    (prior_var * nf * ybar / denom, prior_var / denom)
}

impl Model for GaussianToy {
    fn spec(&self) -> ModelSpec {
        ModelSpec {
            name: "gaussian_toy".into(),
            parameter_names: vec!["theta".into()],
            raw_len: self.n_obs,
            summary_dim: 1,
            extractor: "sample-mean".into(),
        }
    }

    fn prior_sample(&self, rng: &mut Rng) -> Vec<f64> {
        vec![self.prior().sample(rng)]
    }

    fn prior_log_density(&self, theta: &[f64]) -> Option<f64> {
        match theta {
            [t] => self.prior().log_density(*t),
            _ => None,
        }
    }

    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        match theta {
            [t] => Ok(gaussian_toy_simulate(*t, self.n_obs, rng)),
            _ => Err(Error::invalid("Gaussian toy has one parameter")),
        }
    }

    fn summaries(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.is_empty() {
            return Err(Error::invalid("empty Gaussian toy dataset"));
        }
        Ok(vec![raw.iter().sum::<f64>() / raw.len() as f64])
    }
}
