//! Rejection ABC on a frozen pool and adaptive SMC-ABC with a uniform
//! acceptance kernel.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, tags, Rng};
use crate::simulators::{Model, SimulatedSet};
use crate::summary::SummaryConstructor;

/// Euclidean distance between constructed summaries.
pub fn distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("distance between vectors of length {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accepted {
    /// Row of the pool this draw came from.
    pub index: usize,
    pub theta: Vec<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionResult {
    /// Sorted by distance, then pool index.
    pub accepted: Vec<Accepted>,
    /// Largest accepted distance.
    pub epsilon_effective: f64,
    pub total_simulated: usize,
}

impl RejectionResult {
    pub fn thetas(&self) -> Vec<Vec<f64>> {
        self.accepted.iter().map(|a| a.theta.clone()).collect()
    }
}

/// The `n_acc` pool rows whose constructed summaries lie closest to `z_obs`.
pub fn rejection_abc(
    constructor: &SummaryConstructor,
    z_obs: &[f64],
    pool: &SimulatedSet,
    n_acc: usize,
) -> Result<RejectionResult> {
    let projected = constructor.transform_rows(&pool.summaries)?;
    rejection_on_projected(&projected, &pool.thetas, z_obs, n_acc)
}

/// Rejection step on a pool whose summaries are already constructed.
pub fn rejection_on_projected(
    projected: &DMatrix<f64>,
    thetas: &DMatrix<f64>,
    z_obs: &[f64],
    n_acc: usize,
) -> Result<RejectionResult> {
    let n = projected.nrows();
    if n_acc == 0 {
        return Err(Error::invalid("n_acc must be positive"));
    }
    if n < n_acc {
        return Err(Error::invalid(format!("pool of {n} cannot supply {n_acc} acceptances")));
    }
    if thetas.nrows() != n {
        return Err(Error::invalid("pool summaries and parameters differ in length"));
    }
    if projected.ncols() != z_obs.len() {
        return Err(Error::invalid(format!(
            "observed summary has dimension {}, pool has {}",
            z_obs.len(),
            projected.ncols()
        )));
    }
    let distances: Vec<f64> = (0..n)
        .map(|i| {
            let d2: f64 = projected.row(i).iter().zip(z_obs).map(|(a, b)| (a - b) * (a - b)).sum();
            // Failed simulations carry non-finite summaries and rank last.
            if d2.is_nan() {
                f64::INFINITY
            } else {
                d2.sqrt()
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let by_distance = |a: &usize, b: &usize| distances[*a].total_cmp(&distances[*b]).then(a.cmp(b));
    if n_acc < n {
        order.select_nth_unstable_by(n_acc - 1, by_distance);
        order.truncate(n_acc);
    }
    order.sort_unstable_by(by_distance);
    let accepted: Vec<Accepted> = order
        .into_iter()
        .map(|i| Accepted {
            index: i,
            theta: thetas.row(i).iter().copied().collect(),
            distance: distances[i],
        })
        .collect();
    Ok(RejectionResult {
        epsilon_effective: accepted.last().map_or(0.0, |a| a.distance),
        accepted,
        total_simulated: n,
    })
}

/// Effective sample size `(ΣW)² / ΣW²`.
pub fn ess(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(Error::invalid("all weights are zero"));
    }
    let first = weights.iter().copied().find(|w| *w > 0.0).unwrap_or(0.0);
    let positive = weights.iter().filter(|w| **w > 0.0).count();
    // Equal positive weights give the alive count exactly, without rounding.
    if weights.iter().all(|w| *w == 0.0 || *w == first) {
        return Ok(positive as f64);
    }
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    Ok(sum * sum / sq)
}

/// Systematic resampling with stratum offset `u ∈ [0, 1)`: returns the
/// parent index of each of the `n` offspring.
pub fn systematic_indices(weights: &[f64], n: usize, u: f64) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("resampling needs nonnegative weights with positive sum"));
    }
    if !(0.0..1.0).contains(&u) {
        return Err(Error::invalid(format!("resampling offset {u} outside [0, 1)")));
    }
    let last_alive = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    let mut cumulative = weights[0] / total;
    for k in 0..n {
        let position = (k as f64 + u) / n as f64;
        while position >= cumulative && i < last_alive {
            i += 1;
            cumulative += weights[i] / total;
        }
        out.push(i);
    }
    Ok(out)
}

/// Systematic resampling with a single uniform offset drawn from `rng`.
pub fn systematic_resample(weights: &[f64], rng: &mut Rng) -> Result<Vec<usize>> {
    let u: f64 = rng.gen();
    systematic_indices(weights, weights.len(), u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub theta: Vec<f64>,
    pub summary: Vec<f64>,
    /// Regenerates the dataset as `model.simulate(theta, rng_from_seed(raw_seed))`.
    pub raw_seed: u64,
    pub weight: f64,
    pub distance: f64,
}

/// How the next tolerance is chosen from the alive distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonSchedule {
    /// Quantile `alpha` of the alive particles' distances.
    Quantile { alpha: f64 },
    /// `ε ← factor · ε`.
    Geometric { factor: f64 },
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule::Quantile { alpha: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmcConfig {
    pub n_particles: usize,
    pub eps_target: f64,
    pub ess_fraction: f64,
    pub max_rounds: usize,
    pub moves_per_round: usize,
    /// Stop once this many datasets have been simulated.
    pub max_simulations: Option<usize>,
    pub schedule: EpsilonSchedule,
    /// Stop when `ε` would shrink by less than this relative amount.
    pub stall_tolerance: f64,
}

impl Default for SmcConfig {
    fn default() -> Self {
        SmcConfig::new(1000, 0.0)
    }
}

impl SmcConfig {
    pub fn new(n_particles: usize, eps_target: f64) -> Self {
        SmcConfig {
            n_particles,
            eps_target,
            ess_fraction: 0.5,
            max_rounds: 100,
            moves_per_round: 1,
            max_simulations: None,
            schedule: EpsilonSchedule::default(),
            stall_tolerance: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::invalid("SMC needs at least two particles"));
        }
        if !(self.eps_target >= 0.0) {
            return Err(Error::invalid("eps_target must be nonnegative"));
        }
        if !(self.ess_fraction > 0.0 && self.ess_fraction <= 1.0) {
            return Err(Error::invalid("ess_fraction must lie in (0, 1]"));
        }
        if self.moves_per_round == 0 {
            return Err(Error::invalid("moves_per_round must be positive"));
        }
        match self.schedule {
            EpsilonSchedule::Quantile { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                Err(Error::invalid("quantile schedule needs alpha in (0, 1)"))
            }
            EpsilonSchedule::Geometric { factor } if !(factor > 0.0 && factor < 1.0) => {
                Err(Error::invalid("geometric schedule needs factor in (0, 1)"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TargetReached,
    MaxRounds,
    Stalled,
    SimulationBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub epsilon: f64,
    /// ESS right after reweighting, before any resampling.
    pub ess: f64,
    pub resampled: bool,
    pub acceptance_rate: f64,
    /// Datasets simulated so far, including the initial population.
    pub simulations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcState {
    pub particles: Vec<Particle>,
    pub epsilon: f64,
    pub initial_epsilon: f64,
    pub ess: f64,
    pub iteration: usize,
    pub simulations: usize,
    pub trace: Vec<RoundTrace>,
    pub termination: Termination,
}

impl SmcState {
    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    /// Weighted posterior mean of each parameter.
    pub fn posterior_mean(&self) -> Vec<f64> {
        let p = self.particles[0].theta.len();
        let total: f64 = self.particles.iter().map(|q| q.weight).sum();
        (0..p)
            .map(|j| self.particles.iter().map(|q| q.weight * q.theta[j]).sum::<f64>() / total)
            .collect()
    }
}

/// Everything a particle move needs besides the population.
pub struct SmcContext<'a> {
    pub model: &'a dyn Model,
    pub constructor: &'a SummaryConstructor,
    pub z_obs: &'a [f64],
}

impl SmcContext<'_> {
    /// Simulate and measure; simulator failures count as infinitely far.
    fn measure(&self, theta: &[f64], raw_seed: u64) -> (Vec<f64>, f64) {
        let mut rng = rng_from_seed(raw_seed);
        let z = self
            .model
            .simulate(theta, &mut rng)
            .and_then(|raw| self.model.summaries(&raw))
            .and_then(|s| self.constructor.transform(&s));
        match z {
            Ok(z) => {
                let d = distance(&z, self.z_obs).unwrap_or(f64::INFINITY);
                let d = if d.is_nan() { f64::INFINITY } else { d };
                (z, d)
            }
            Err(_) => (vec![f64::NAN; self.z_obs.len()], f64::INFINITY),
        }
    }
}

const DRAW_THETA: u64 = 0;
const DRAW_DATA: u64 = 1;
const DRAW_MOVE: u64 = 2;
const DRAW_RESAMPLE: u64 = 3;

fn particle_seed(master: u64, round: usize, index: usize, purpose: u64) -> u64 {
    derive_seed(master, &[tags::SMC, round as u64, index as u64, purpose])
}

fn normalize(particles: &mut [Particle]) -> Result<()> {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    if !(total > 0.0) {
        return Err(Error::Degeneracy("all particle weights are zero".into()));
    }
    for p in particles.iter_mut() {
        p.weight /= total;
    }
    Ok(())
}

/// Weighted per-coordinate standard deviation. `None` marks a coordinate on
/// which the whole population agrees exactly.
pub fn proposal_scales(particles: &[Particle]) -> Vec<Option<f64>> {
    let p = particles[0].theta.len();
    let total: f64 = particles.iter().map(|q| q.weight).sum();
    (0..p)
        .map(|j| {
            let alive = particles.iter().filter(|q| q.weight > 0.0);
            let first = particles.iter().find(|q| q.weight > 0.0).map(|q| q.theta[j]);
            if alive.clone().all(|q| Some(q.theta[j]) == first) {
                return None;
            }
            let mean = alive.clone().map(|q| q.weight * q.theta[j]).sum::<f64>() / total;
            let var = alive.map(|q| q.weight * (q.theta[j] - mean).powi(2)).sum::<f64>() / total;
            Some(var.sqrt().max(1e-8))
        })
        .collect()
}

/// One round of Metropolis-Hastings moves for every alive particle at
/// tolerance `epsilon`. Returns the updated particles, the number of
/// accepted and attempted moves, and the datasets simulated.
pub fn move_particles(
    particles: &[Particle],
    ctx: &SmcContext<'_>,
    epsilon: f64,
    moves: usize,
    master: u64,
    round: usize,
) -> (Vec<Particle>, usize, usize, usize) {
    let scales = proposal_scales(particles);
    let results: Vec<(Particle, usize, usize, usize)> = particles
        .par_iter()
        .enumerate()
        .map(|(i, particle)| {
            let mut current = particle.clone();
            if current.weight <= 0.0 {
                return (current, 0, 0, 0);
            }
            let mut rng = rng_from_seed(particle_seed(master, round, i, DRAW_MOVE));
            let (mut accepted, mut attempted, mut simulated) = (0, 0, 0);
            for _ in 0..moves {
                attempted += 1;
                let proposal: Vec<f64> = current
                    .theta
                    .iter()
                    .zip(&scales)
                    .map(|(t, s)| match s {
                        Some(s) => {
                            let z: f64 = rng.sample(StandardNormal);
                            t + s * z
                        }
                        None => *t,
                    })
                    .collect();
                let raw_seed: u64 = rng.gen();
                let u: f64 = rng.gen();
                let Some(lp_new) = ctx.model.prior_log_density(&proposal) else {
                    continue;
                };
                let lp_old = ctx.model.prior_log_density(&current.theta).unwrap_or(f64::NEG_INFINITY);
                let (z, d) = ctx.measure(&proposal, raw_seed);
                simulated += 1;
                if d <= epsilon && u.ln() < lp_new - lp_old {
                    current.theta = proposal;
                    current.summary = z;
                    current.raw_seed = raw_seed;
                    current.distance = d;
                    accepted += 1;
                }
            }
            (current, accepted, attempted, simulated)
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let (mut acc, mut att, mut sim) = (0, 0, 0);
    for (p, a, t, s) in results {
        out.push(p);
        acc += a;
        att += t;
        sim += s;
    }
    (out, acc, att, sim)
}

/// Quantile `alpha` of the alive distances, using the lower order statistic.
fn quantile_of_alive(particles: &[Particle], alpha: f64) -> f64 {
    let mut d: Vec<f64> = particles.iter().filter(|p| p.weight > 0.0).map(|p| p.distance).collect();
    d.sort_by(f64::total_cmp);
    let k = ((alpha * d.len() as f64).ceil() as usize).clamp(1, d.len()) - 1;
    d[k]
}

/// Adaptive SMC-ABC. All randomness derives from `master`, so results do
/// not depend on the thread count.
pub fn smc_abc(ctx: &SmcContext<'_>, cfg: &SmcConfig, master: u64) -> Result<SmcState> {
    cfg.validate()?;
    if ctx.constructor.output_dim() != ctx.z_obs.len() {
        return Err(Error::invalid("observed summary dimension does not match the constructor"));
    }
    let n = cfg.n_particles;
    let mut particles: Vec<Particle> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(particle_seed(master, 0, i, DRAW_THETA));
            let theta = ctx.model.prior_sample(&mut rng);
            let raw_seed = particle_seed(master, 0, i, DRAW_DATA);
            let (summary, distance) = ctx.measure(&theta, raw_seed);
            Particle {
                theta,
                summary,
                raw_seed,
                weight: 1.0 / n as f64,
                distance,
            }
        })
        .collect();
    let mut simulations = n;
    let finite_max = particles
        .iter()
        .map(|p| p.distance)
        .filter(|d| d.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if finite_max == f64::NEG_INFINITY {
        return Err(Error::Degeneracy("every initial simulation failed".into()));
    }
    let alive = particles.iter().filter(|p| p.distance.is_finite()).count();
    for p in particles.iter_mut() {
        p.weight = if p.distance.is_finite() { 1.0 / alive as f64 } else { 0.0 };
    }
    let mut epsilon = finite_max;
    let mut state_ess = ess(&particles.iter().map(|p| p.weight).collect::<Vec<_>>())?;
    let mut trace = Vec::new();
    let mut round = 0;
    let termination = loop {
        if epsilon <= cfg.eps_target {
            break Termination::TargetReached;
        }
        if round >= cfg.max_rounds {
            break Termination::MaxRounds;
        }
        if cfg.max_simulations.is_some_and(|m| simulations >= m) {
            break Termination::SimulationBudget;
        }
        let proposed = match cfg.schedule {
            EpsilonSchedule::Quantile { alpha } => quantile_of_alive(&particles, alpha),
            EpsilonSchedule::Geometric { factor } => epsilon * factor,
        }
        .max(cfg.eps_target);
        if proposed >= epsilon * (1.0 - cfg.stall_tolerance) {
            break Termination::Stalled;
        }
        round += 1;
        let mut next_eps = proposed;
        let mut survivors = cut(&particles, next_eps);
        if survivors.iter().all(|p| p.weight == 0.0) {
            next_eps = epsilon - 0.5 * (epsilon - next_eps);
            survivors = cut(&particles, next_eps);
        }
        if survivors.iter().all(|p| p.weight == 0.0) {
            return Err(Error::Degeneracy(format!(
                "no particle within epsilon {next_eps} in round {round} (previous epsilon {epsilon}, halved cut retried)"
            )));
        }
        particles = survivors;
        normalize(&mut particles)?;
        epsilon = next_eps;
        let round_ess = ess(&particles.iter().map(|p| p.weight).collect::<Vec<_>>())?;
        state_ess = round_ess;
        let resampled = round_ess < cfg.ess_fraction * n as f64;
        if resampled {
            let mut rng = rng_from_seed(particle_seed(master, round, 0, DRAW_RESAMPLE));
            let parents = systematic_resample(&particles.iter().map(|p| p.weight).collect::<Vec<_>>(), &mut rng)?;
            particles = parents
                .into_iter()
                .map(|i| Particle {
                    weight: 1.0 / n as f64,
                    ..particles[i].clone()
                })
                .collect();
            state_ess = n as f64;
        }
        let (moved, accepted, attempted, simulated) =
            move_particles(&particles, ctx, epsilon, cfg.moves_per_round, master, round);
        particles = moved;
        simulations += simulated;
        trace.push(RoundTrace {
            round,
            epsilon,
            ess: round_ess,
            resampled,
            acceptance_rate: if attempted == 0 { 0.0 } else { accepted as f64 / attempted as f64 },
            simulations,
        });
    };
    Ok(SmcState {
        particles,
        epsilon,
        initial_epsilon: finite_max,
        ess: state_ess,
        iteration: round,
        simulations,
        trace,
        termination,
    })
}

fn cut(particles: &[Particle], epsilon: f64) -> Vec<Particle> {
    particles
        .iter()
        .map(|p| Particle {
            weight: if p.distance <= epsilon { p.weight } else { 0.0 },
            ..p.clone()
        })
        .collect()
}
