//! M/G/1 queue observed through inter-departure times.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Model, ModelSpec, Prior};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Number of evenly spaced quantiles used as initial summaries.
pub const MG1_QUANTILES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mg1Params {
    /// Lower bound of the uniform service time.
    pub theta1: f64,
    /// Upper bound of the uniform service time.
    pub theta2: f64,
    /// Arrival rate.
    pub theta3: f64,
}

impl Mg1Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta1 > 0.0 && self.theta1 <= self.theta2 && self.theta2.is_finite()) {
            return Err(Error::invalid(format!(
                "service bounds must satisfy 0 < theta1 <= theta2, got [{}, {}]",
                self.theta1, self.theta2
            )));
        }
        if !(self.theta3 > 0.0 && self.theta3.is_finite()) {
            return Err(Error::invalid(format!("arrival rate must be positive, got {}", self.theta3)));
        }
        Ok(())
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        match theta {
            &[theta1, theta2, theta3] => Ok(Mg1Params { theta1, theta2, theta3 }),
            _ => Err(Error::invalid(format!("M/G/1 expects 3 parameters, got {}", theta.len()))),
        }
    }
}

/// Inter-departure times from service times `u` and inter-arrival times `w`:
/// `Y_n = U_n + max(0, ΣW_{1..n} - ΣY_{1..n-1})`.
pub fn mg1_recursion(u: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if u.len() != w.len() {
        return Err(Error::invalid("service and inter-arrival sequences differ in length"));
    }
    let mut arrivals = 0.0;
    let mut departures = 0.0;
    let mut y = Vec::with_capacity(u.len());
    for (&un, &wn) in u.iter().zip(w) {
        arrivals += wn;
        let yn = if arrivals <= departures {
            un
        } else {
            un + arrivals - departures
        };
        departures += yn;
        y.push(yn);
    }
    Ok(y)
}

/// Simulate `n_customers` inter-departure times. Each customer draws its
/// service time, then its inter-arrival time.
pub fn mg1_simulate(p: &Mg1Params, n_customers: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    p.validate()?;
    if n_customers == 0 {
        return Err(Error::invalid("need at least one customer"));
    }
    let mut u = Vec::with_capacity(n_customers);
    let mut w = Vec::with_capacity(n_customers);
    for _ in 0..n_customers {
        u.push(p.theta1 + (p.theta2 - p.theta1) * rng.gen::<f64>());
        // Inversion on (0, 1] keeps the log finite.
        let v = 1.0 - rng.gen::<f64>();
        w.push(-v.ln() / p.theta3);
    }
    mg1_recursion(&u, &w)
}

/// Evenly spaced quantiles `0, 1/19, …, 1` of the sorted series, linearly
/// interpolated between order statistics.
pub fn mg1_summaries(y: &[f64]) -> Result<Vec<f64>> {
    if y.len() < MG1_QUANTILES {
        return Err(Error::invalid(format!(
            "need at least {MG1_QUANTILES} inter-departure times, got {}",
            y.len()
        )));
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((0..MG1_QUANTILES)
        .map(|k| interpolated_quantile(&sorted, k as f64 / (MG1_QUANTILES - 1) as f64))
        .collect())
}

/// Quantile `q` of an ascending, non-empty slice with linear interpolation
/// between order statistics.
pub fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Prior on `(θ1, θ2 − θ1, θ3)`, independent components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mg1Prior {
    pub theta1: Prior,
    pub increment: Prior,
    pub theta3: Prior,
}

impl Default for Mg1Prior {
    fn default() -> Self {
        Mg1Prior {
            theta1: Prior::Uniform { low: 1.0, high: 10.0 },
            increment: Prior::Uniform { low: 1.0, high: 10.0 },
            theta3: Prior::Uniform {
                low: 0.0,
                high: 1.0 / 3.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Mg1Model {
    pub n_customers: usize,
    pub prior: Mg1Prior,
    /// Observed datasets are generated from the central fraction of each
    /// prior range, away from the boundaries.
    pub truth_fraction: f64,
}

impl Default for Mg1Model {
    fn default() -> Self {
        Mg1Model {
            n_customers: 50,
            prior: Mg1Prior::default(),
            truth_fraction: 0.8,
        }
    }
}

impl Mg1Model {
    pub fn validate(&self) -> Result<()> {
        if self.n_customers < MG1_QUANTILES {
            return Err(Error::invalid(format!("M/G/1 needs at least {MG1_QUANTILES} customers")));
        }
        self.prior.theta1.validate()?;
        self.prior.increment.validate()?;
        self.prior.theta3.validate()?;
        if !(self.truth_fraction > 0.0 && self.truth_fraction <= 1.0) {
            return Err(Error::invalid("truth_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    fn draw(&self, prior: &Mg1Prior, rng: &mut Rng) -> Vec<f64> {
        let theta1 = prior.theta1.sample(rng);
        let theta2 = theta1 + prior.increment.sample(rng);
        let mut theta3 = prior.theta3.sample(rng);
        // A zero arrival rate has probability zero but would stall the queue.
        if theta3 <= 0.0 {
            theta3 = f64::MIN_POSITIVE;
        }
        vec![theta1, theta2, theta3]
    }
}

impl Model for Mg1Model {
    fn spec(&self) -> ModelSpec {
        ModelSpec {
            name: "mg1".into(),
            parameter_names: vec!["theta1".into(), "theta2".into(), "theta3".into()],
            raw_len: self.n_customers,
            summary_dim: MG1_QUANTILES,
            extractor: "interdeparture-quantiles-20".into(),
        }
    }

    fn prior_sample(&self, rng: &mut Rng) -> Vec<f64> {
        self.draw(&self.prior, rng)
    }

    fn sample_truth(&self, rng: &mut Rng) -> Vec<f64> {
        let f = self.truth_fraction;
        let central = Mg1Prior {
            theta1: self.prior.theta1.central(f),
            increment: self.prior.increment.central(f),
            theta3: self.prior.theta3.central(f),
        };
        self.draw(&central, rng)
    }

    fn prior_log_density(&self, theta: &[f64]) -> Option<f64> {
        let [t1, t2, t3] = theta else { return None };
        if !(*t3 > 0.0) {
            return None;
        }
        Some(
            self.prior.theta1.log_density(*t1)?
                + self.prior.increment.log_density(t2 - t1)?
                + self.prior.theta3.log_density(*t3)?,
        )
    }

    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        mg1_simulate(&Mg1Params::from_slice(theta)?, self.n_customers, rng)
    }

    fn summaries(&self, raw: &[f64]) -> Result<Vec<f64>> {
        mg1_summaries(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream;

    #[test]
    fn scripted_trace() {
        let y = mg1_recursion(&[1.0, 1.0, 1.0], &[5.0, 0.1, 0.1]).unwrap();
        assert_eq!(y, vec![6.0, 1.0, 1.0]);
    }

    #[test]
    fn no_arrival_gaps_gives_service_times() {
        let u = [2.0, 3.5, 1.25, 4.0];
        assert_eq!(mg1_recursion(&u, &[0.0; 4]).unwrap(), u.to_vec());
    }

    #[test]
    fn first_customer_waits_for_arrival() {
        let y = mg1_recursion(&[1.5], &[2.25]).unwrap();
        assert_eq!(y, vec![3.75]);
    }

    #[test]
    fn departures_bounded_below_by_service_minimum() {
        let p = Mg1Params {
            theta1: 2.0,
            theta2: 5.0,
            theta3: 0.2,
        };
        let mut rng = stream(4, &[]);
        let y = mg1_simulate(&p, 5000, &mut rng).unwrap();
        assert!(y.iter().all(|v| *v >= 2.0));
    }

    #[test]
    fn service_time_mean() {
        let p = Mg1Params {
            theta1: 1.0,
            theta2: 4.0,
            theta3: 1e6,
        };
        // With near-instant arrivals the server is always busy, so Y_n = U_n.
        let mut rng = stream(5, &[]);
        let n = 100_000;
        let y = mg1_simulate(&p, n, &mut rng).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        let se = (9.0f64 / 12.0 / n as f64).sqrt();
        assert!((mean - 2.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn invalid_params_rejected() {
        let mut rng = stream(1, &[]);
        let bad = Mg1Params {
            theta1: 3.0,
            theta2: 2.0,
            theta3: 0.1,
        };
        assert!(mg1_simulate(&bad, 10, &mut rng).is_err());
        let bad = Mg1Params {
            theta1: 1.0,
            theta2: 2.0,
            theta3: 0.0,
        };
        assert!(mg1_simulate(&bad, 10, &mut rng).is_err());
    }

    #[test]
    fn quantile_examples() {
        let q = mg1_summaries(&[4.5; 30]).unwrap();
        assert!(q.iter().all(|v| *v == 4.5));
        let y: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        let q = mg1_summaries(&y).unwrap();
        assert_eq!(q[0], 1.0);
        assert_eq!(q[19], 100.0);
        let sorted: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(interpolated_quantile(&sorted, 0.5), 50.5);
        assert!(mg1_summaries(&[1.0; 5]).is_err());
    }

    #[test]
    fn prior_defaults() {
        let model = Mg1Model::default();
        let mut rng = stream(6, &[]);
        for _ in 0..2000 {
            let t = model.prior_sample(&mut rng);
            assert!((1.0..=10.0).contains(&t[0]));
            assert!((1.0..=10.0).contains(&(t[1] - t[0])));
            assert!(t[2] > 0.0 && t[2] <= 1.0 / 3.0);
            assert!(model.prior_log_density(&t).is_some());
            let truth = model.sample_truth(&mut rng);
            assert!((1.45..=9.55).contains(&truth[0]));
        }
        assert!(model.prior_log_density(&[0.5, 2.0, 0.1]).is_none());
        assert!(model.prior_log_density(&[2.0, 2.5, 0.1]).is_none());
    }
}
