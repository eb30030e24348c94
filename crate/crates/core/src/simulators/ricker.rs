//! Ricker map with Poisson observations, and the E0/E1/E2 summary sets.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::poisson::sample_poisson;
use super::{Model, ModelSpec, Prior};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Observations `y_51 … y_100`.
pub const RICKER_OBSERVATIONS: usize = 50;
const BURN_IN: usize = 50;
const LOG_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RickerParams {
    pub log_r: f64,
    /// Standard deviation of the log-scale process noise.
    pub sigma_e: f64,
    /// Observation scaling.
    pub phi: f64,
}

impl RickerParams {
    pub fn validate(&self) -> Result<()> {
        if !self.log_r.is_finite() || !(self.sigma_e >= 0.0) || !(self.phi >= 0.0) || !self.phi.is_finite() {
            return Err(Error::invalid(format!("invalid Ricker parameters {self:?}")));
        }
        Ok(())
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        match theta {
            &[log_r, sigma_e, phi] => Ok(RickerParams { log_r, sigma_e, phi }),
            _ => Err(Error::invalid(format!("Ricker expects 3 parameters, got {}", theta.len()))),
        }
    }
}

/// Latent path `N_1 … N_100` and observations `y_51 … y_100`. Step `t` draws
/// its noise, then (once past burn-in) its observation.
pub fn ricker_trajectory(p: &RickerParams, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    p.validate()?;
    let r = p.log_r.exp();
    let mut n = 1.0f64;
    let mut latent = Vec::with_capacity(BURN_IN + RICKER_OBSERVATIONS);
    let mut obs = Vec::with_capacity(RICKER_OBSERVATIONS);
    for t in 1..=(BURN_IN + RICKER_OBSERVATIONS) {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        n = r * n * (-n + p.sigma_e * z).exp();
        if !n.is_finite() {
            return Err(Error::Numerical {
                message: format!("Ricker population overflowed at step {t}"),
                pivot: None,
            });
        }
        latent.push(n);
        if t > BURN_IN {
            obs.push(sample_poisson(p.phi * n, rng) as f64);
        }
    }
    Ok((latent, obs))
}

pub fn ricker_simulate(p: &RickerParams, rng: &mut Rng) -> Result<Vec<f64>> {
    Ok(ricker_trajectory(p, rng)?.1)
}

/// Nested summary sets: E0 (13 statistics) ⊂ E1 (28) ⊂ E2 (426).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSet {
    E0,
    E1,
    E2,
}

impl FeatureSet {
    pub fn dim(self) -> usize {
        match self {
            FeatureSet::E0 => 13,
            FeatureSet::E1 => 28,
            FeatureSet::E2 => 426,
        }
    }
}

/// Minimum-norm least squares via SVD with a relative rank cutoff.
fn least_squares(design: &DMatrix<f64>, response: &DVector<f64>) -> DVector<f64> {
    let cols = design.ncols();
    if design.iter().all(|v| *v == 0.0) {
        return DVector::zeros(cols);
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(response, smax * 1e-10)
        .unwrap_or_else(|_| DVector::zeros(cols))
}

fn mean(y: &[f64]) -> f64 {
    y.iter().sum::<f64>() / y.len() as f64
}

/// Biased autocovariance `(1/n) Σ (y_t - ȳ)(y_{t+k} - ȳ)`.
fn autocovariance(y: &[f64], lag: usize) -> f64 {
    let m = mean(y);
    let n = y.len();
    (0..n - lag).map(|t| (y[t] - m) * (y[t + lag] - m)).sum::<f64>() / n as f64
}

/// Cubic fit to the ascending first differences against a standardized rank index.
fn ordered_difference_cubic(y: &[f64]) -> [f64; 4] {
    let mut diffs: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    diffs.sort_by(f64::total_cmp);
    let k = diffs.len();
    let idx_mean = (k - 1) as f64 / 2.0;
    let idx_sd = ((0..k).map(|i| (i as f64 - idx_mean).powi(2)).sum::<f64>() / k as f64).sqrt();
    let design = DMatrix::from_fn(k, 4, |i, j| ((i as f64 - idx_mean) / idx_sd).powi(j as i32));
    let coef = least_squares(&design, &DVector::from_vec(diffs));
    [coef[0], coef[1], coef[2], coef[3]]
}

/// `y_{t+1}^0.3 = β1 y_t^0.3 + β2 y_t^0.6`, no intercept.
fn power_autoregression(y: &[f64]) -> [f64; 2] {
    let k = y.len() - 1;
    let design = DMatrix::from_fn(k, 2, |i, j| if j == 0 { y[i].powf(0.3) } else { y[i].powf(0.6) });
    let response = DVector::from_fn(k, |i, _| y[i + 1].powf(0.3));
    let coef = least_squares(&design, &response);
    [coef[0], coef[1]]
}

/// Summary statistics of a 50-point Ricker observation series.
pub fn ricker_features(y: &[f64], set: FeatureSet) -> Result<Vec<f64>> {
    if y.len() != RICKER_OBSERVATIONS {
        return Err(Error::invalid(format!(
            "Ricker features need {RICKER_OBSERVATIONS} observations, got {}",
            y.len()
        )));
    }
    let n = y.len() as f64;
    let mut out = Vec::with_capacity(set.dim());

    out.push(mean(y));
    for lag in 1..=5 {
        out.push(autocovariance(y, lag));
    }
    out.extend(ordered_difference_cubic(y));
    out.extend(power_autoregression(y));
    out.push(y.iter().filter(|v| **v == 0.0).count() as f64);
    if set == FeatureSet::E0 {
        return Ok(out);
    }

    for j in 1..=4 {
        out.push(y.iter().filter(|v| **v == j as f64).count() as f64);
    }
    let m = mean(y);
    let sample_var = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    out.push((sample_var + LOG_GUARD).ln());
    for j in 2..=6 {
        out.push((y.iter().map(|v| v.powi(j)).sum::<f64>() + LOG_GUARD).ln());
    }
    let acov0 = autocovariance(y, 0);
    for lag in 1..=5 {
        out.push(if acov0 > 0.0 { autocovariance(y, lag) / acov0 } else { 0.0 });
    }
    if set == FeatureSet::E1 {
        return Ok(out);
    }

    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    out.extend_from_slice(y);
    out.extend_from_slice(&sorted);
    out.extend(y.iter().map(|v| v * v));
    out.extend(sorted.iter().map(|v| v * v));
    out.extend(y.iter().map(|v| v.ln_1p()));
    out.extend(sorted.iter().map(|v| v.ln_1p()));
    out.extend(y.windows(2).map(|w| w[1] - w[0]));
    out.extend(sorted.windows(2).map(|w| w[1] - w[0]));
    Ok(out)
}

/// Independent priors on `(log r, σ_e, φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RickerPrior {
    pub log_r: Prior,
    pub sigma_e: Prior,
    pub phi: Prior,
}

impl Default for RickerPrior {
    fn default() -> Self {
        RickerPrior {
            log_r: Prior::Uniform { low: 3.0, high: 5.0 },
            sigma_e: Prior::LogUniform { low: 0.1, high: 1.0 },
            phi: Prior::Uniform { low: 4.0, high: 20.0 },
        }
    }
}

impl RickerPrior {
    /// Only `σ_e` varies; `log r` and `φ` are held at the given values.
    pub fn fixed_nuisance(log_r: f64, phi: f64) -> Self {
        RickerPrior {
            log_r: Prior::Fixed { value: log_r },
            phi: Prior::Fixed { value: phi },
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RickerModel {
    pub features: FeatureSet,
    pub prior: RickerPrior,
    /// Value of `log r` used for observed datasets.
    pub truth_log_r: f64,
    /// Value of `φ` used for observed datasets.
    pub truth_phi: f64,
}

impl Default for RickerModel {
    fn default() -> Self {
        RickerModel {
            features: FeatureSet::E0,
            prior: RickerPrior::default(),
            truth_log_r: 3.8,
            truth_phi: 10.0,
        }
    }
}

impl RickerModel {
    pub fn with_features(features: FeatureSet) -> Self {
        RickerModel {
            features,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.log_r.validate()?;
        self.prior.sigma_e.validate()?;
        self.prior.phi.validate()?;
        RickerParams {
            log_r: self.truth_log_r,
            sigma_e: 0.0,
            phi: self.truth_phi,
        }
        .validate()
    }
}

impl Model for RickerModel {
    fn spec(&self) -> ModelSpec {
        ModelSpec {
            name: "ricker".into(),
            parameter_names: vec!["log_r".into(), "sigma_e".into(), "phi".into()],
            raw_len: RICKER_OBSERVATIONS,
            summary_dim: self.features.dim(),
            extractor: format!("ricker-{:?}", self.features),
        }
    }

    fn prior_sample(&self, rng: &mut Rng) -> Vec<f64> {
        vec![
            self.prior.log_r.sample(rng),
            self.prior.sigma_e.sample(rng),
            self.prior.phi.sample(rng),
        ]
    }

    fn sample_truth(&self, rng: &mut Rng) -> Vec<f64> {
        vec![self.truth_log_r, self.prior.sigma_e.sample(rng), self.truth_phi]
    }

    fn prior_log_density(&self, theta: &[f64]) -> Option<f64> {
        let [log_r, sigma_e, phi] = theta else { return None };
        Some(
            self.prior.log_r.log_density(*log_r)?
                + self.prior.sigma_e.log_density(*sigma_e)?
                + self.prior.phi.log_density(*phi)?,
        )
    }

    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        ricker_simulate(&RickerParams::from_slice(theta)?, rng)
    }

    fn summaries(&self, raw: &[f64]) -> Result<Vec<f64>> {
        ricker_features(raw, self.features)
    }
}
