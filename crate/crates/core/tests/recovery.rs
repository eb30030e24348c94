//! Synthetic models with a known sufficient direction.

use lgkdr_core::crossval::{cv_select, median_heuristic, CvGrid, Labelled};
use lgkdr_core::gkdr::{estimate_projection, estimate_projection_separated, GkdrConfig, TargetDim, WeightedTrainingSet};
use lgkdr_core::linalg::{KernelParams, Standardizer};
use lgkdr_core::summary::{fit_lgkdr, fit_separated};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
}

fn angle_to_axis(b: &DMatrix<f64>, axis: usize) -> f64 {
    b[(axis, 0)].abs().min(1.0).acos()
}

fn median_kernel(s: &DMatrix<f64>, t: &DMatrix<f64>) -> KernelParams {
    let z = Standardizer::fit(s).unwrap().apply_rows(s).unwrap();
    let zt = Standardizer::fit(t).unwrap().apply_rows(t).unwrap();
    KernelParams::new(
        median_heuristic(&z, 0).unwrap().value,
        median_heuristic(&zt, 0).unwrap().value,
        1e-3,
    )
    .unwrap()
}

#[test]
fn single_relevant_coordinate_is_recovered() {
    let mut hits = 0;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = normal(500, 10, &mut rng);
        let theta = DMatrix::from_fn(500, 1, |i, _| s[(i, 0)]);
        let cfg = GkdrConfig::new(median_kernel(&s, &theta), TargetDim::Fixed(1));
        let ts = WeightedTrainingSet::uniform(s, theta).unwrap();
        let est = estimate_projection(&ts, &cfg).unwrap();
        if angle_to_axis(est.projection.matrix(), 0) < 0.15 {
            hits += 1;
        }
    }
    assert!(hits >= 4, "{hits}/5 seeds recovered e1");
}

#[test]
fn separated_children_find_their_own_axes() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let s = normal(400, 5, &mut rng);
    let theta = DMatrix::from_fn(400, 2, |i, j| s[(i, j)] + 0.05 * rng.sample::<f64, _>(StandardNormal));
    let kernel = median_kernel(&s, &theta);
    let cfg = GkdrConfig::new(kernel, TargetDim::Fixed(1));
    let ts = WeightedTrainingSet::uniform(s.clone(), theta.clone()).unwrap();
    let b1 = estimate_projection_separated(&ts, &cfg, 0).unwrap();
    let b2 = estimate_projection_separated(&ts, &cfg, 1).unwrap();
    assert!(angle_to_axis(b1.projection.matrix(), 0) < 0.2);
    assert!(angle_to_axis(b2.projection.matrix(), 1) < 0.2);

    let mut local = cfg.clone();
    local.weight_quantile = 0.5;
    let composite = fit_separated(&s, &theta, &[0.0; 5], &local, &[0, 1]).unwrap();
    let c1 = composite.focus(0).unwrap();
    let c2 = composite.focus(1).unwrap();
    let axis = |c: &lgkdr_core::summary::SummaryConstructor| match c {
        lgkdr_core::summary::SummaryConstructor::Lgkdr(l) => l.projection.matrix().column(0).iamax(),
        _ => unreachable!(),
    };
    assert_eq!((axis(&c1), axis(&c2)), (0, 1));
}

#[test]
fn duplicate_response_columns_give_identical_focus() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = normal(150, 4, &mut rng);
    let theta = DMatrix::from_fn(150, 2, |i, _| s[(i, 2)].sin());
    let cfg = GkdrConfig::new(median_kernel(&s, &theta), TargetDim::Fixed(2));
    let ts = WeightedTrainingSet::uniform(s, theta).unwrap();
    let a = estimate_projection_separated(&ts, &cfg, 0).unwrap();
    let b = estimate_projection_separated(&ts, &cfg, 1).unwrap();
    assert_eq!(a.projection.matrix(), b.projection.matrix());
}

#[test]
fn lgkdr_summary_tracks_relevant_coordinate() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s = normal(600, 6, &mut rng);
    let theta = DMatrix::from_fn(600, 1, |i, _| s[(i, 0)] + 0.1 * rng.sample::<f64, _>(StandardNormal));
    let mut cfg = GkdrConfig::new(median_kernel(&s, &theta), TargetDim::Fixed(1));
    cfg.weight_quantile = 0.3;
    let c = fit_lgkdr(&s, &theta, &[0.5, 0.0, 0.0, 0.0, 0.0, 0.0], &cfg).unwrap();
    let z = c.transform_rows(&s).unwrap();
    let x: Vec<f64> = s.column(0).iter().copied().collect();
    let y: Vec<f64> = z.column(0).iter().copied().collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(&x), mean(&y));
    let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    assert!((cov / (vx * vy).sqrt()).abs() > 0.9);
}

#[test]
fn absurd_summary_bandwidth_loses_cross_validation() {
    let mut wins = 0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut draw = |n: usize| {
            let s = normal(n, 5, &mut rng);
            let noise = normal(n, 1, &mut rng);
            // An even response: a flat kernel sees no linear trend to follow.
            let t = DMatrix::from_fn(n, 1, |i, _| s[(i, 0)].powi(2) + 0.1 * noise[(i, 0)]);
            (s, t)
        };
        let (s, t) = draw(300);
        let (ts, tt) = draw(300);
        let (ps, pt) = draw(10);
        let mut cfg = GkdrConfig::new(KernelParams::new(1.0, 1.0, 1e-3).unwrap(), TargetDim::Fixed(1));
        cfg.weight_quantile = 0.2;
        let grid = CvGrid {
            sigma_s_factors: vec![1.0, 1e6],
            sigma_theta_factors: vec![1.0],
            eps_n_values: vec![1e-3],
        };
        let report = cv_select(
            Labelled { summaries: &s, parameters: &t },
            Labelled { summaries: &ts, parameters: &tt },
            Labelled { summaries: &ps, parameters: &pt },
            &grid,
            &cfg,
            seed,
        )
        .unwrap();
        let centred = report.candidates[0].score.unwrap_or(f64::INFINITY);
        let absurd = report.candidates[1].score.unwrap_or(f64::INFINITY);
        if centred < absurd {
            wins += 1;
        }
    }
    assert!(wins >= 8, "median-centred bandwidth won {wins}/10");
}
