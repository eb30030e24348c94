//! Kernel hyper-parameter selection by grid search, scored with nearest
//! neighbour regression on a projected test set.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gkdr::{response_rows, GkdrConfig};
use crate::linalg::{KernelParams, Standardizer};
use crate::seed::{rng_from_seed, derive_seed, tags};
use crate::summary::LgkdrFitter;

/// Largest number of points used for the pairwise-distance median.
pub const MEDIAN_SUBSAMPLE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    pub value: f64,
    /// All sampled points coincided and the fallback of 1.0 was used.
    pub fallback: bool,
}

/// Median pairwise Euclidean distance between rows, over a seeded subsample
/// of at most 1000 rows.
pub fn median_heuristic(points: &DMatrix<f64>, seed: u64) -> Result<Bandwidth> {
    let n = points.nrows();
    if n < 2 {
        return Err(Error::invalid("median heuristic needs at least two points"));
    }
    let rows: Vec<usize> = if n > MEDIAN_SUBSAMPLE {
        let mut rng = rng_from_seed(derive_seed(seed, &[tags::SUBSAMPLE]));
        let mut picked = sample(&mut rng, n, MEDIAN_SUBSAMPLE).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..n).collect()
    };
    let mut d = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            let sq: f64 = points.row(i).iter().zip(points.row(j).iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            d.push(sq.sqrt());
        }
    }
    let mid = d.len() / 2;
    let (_, upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let median = if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if median > 0.0 && median.is_finite() {
        Ok(Bandwidth {
            value: median,
            fallback: false,
        })
    } else {
        Ok(Bandwidth {
            value: 1.0,
            fallback: true,
        })
    }
}

/// Mean parameter of the `k` training rows nearest to `query`; distance
/// ties go to the lower index.
pub fn knn_regress(train_z: &DMatrix<f64>, train_theta: &DMatrix<f64>, query: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = train_z.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={n}")));
    }
    if train_theta.nrows() != n || train_z.ncols() != query.len() {
        return Err(Error::invalid("kNN training set and query dimensions disagree"));
    }
    let d: Vec<f64> = (0..n)
        .map(|i| train_z.row(i).iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let cmp = |a: &usize, b: &usize| d[*a].total_cmp(&d[*b]).then(a.cmp(b));
    if k < n {
        order.select_nth_unstable_by(k - 1, cmp);
    }
    let p = train_theta.ncols();
    let mut mean = vec![0.0; p];
    for &i in &order[..k] {
        for (j, m) in mean.iter_mut().enumerate() {
            *m += train_theta[(i, j)];
        }
    }
    Ok(mean.into_iter().map(|m| m / k as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub sigma_s_factors: Vec<f64>,
    pub sigma_theta_factors: Vec<f64>,
    pub eps_n_values: Vec<f64>,
}

impl Default for CvGrid {
    fn default() -> Self {
        let factors = vec![0.25, 0.5, 1.0, 2.0, 4.0];
        CvGrid {
            sigma_s_factors: factors.clone(),
            sigma_theta_factors: factors,
            eps_n_values: vec![1e-2, 1e-3, 1e-4, 1e-5],
        }
    }
}

impl CvGrid {
    pub fn validate(&self) -> Result<()> {
        for (name, values) in [
            ("sigma_s_factors", &self.sigma_s_factors),
            ("sigma_theta_factors", &self.sigma_theta_factors),
            ("eps_n_values", &self.eps_n_values),
        ] {
            if values.is_empty() {
                return Err(Error::invalid(format!("{name} is empty")));
            }
            if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::invalid(format!("{name} must hold positive finite values")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sigma_s_factors.len() * self.sigma_theta_factors.len() * self.eps_n_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Candidates in grid order: σ_S outermost, then σ_Θ, then ε_n.
    pub fn candidates(&self, sigma_s_center: f64, sigma_theta_center: f64) -> Result<Vec<KernelParams>> {
        let mut out = Vec::with_capacity(self.len());
        for fs in &self.sigma_s_factors {
            for ft in &self.sigma_theta_factors {
                for &eps in &self.eps_n_values {
                    out.push(KernelParams::new(fs * sigma_s_center, ft * sigma_theta_center, eps)?);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCandidate {
    pub kernel: KernelParams,
    /// Mean squared kNN error; absent when the fit failed.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub candidates: Vec<CvCandidate>,
    pub selected: KernelParams,
    pub selected_index: usize,
    pub n_pseudo_obs: usize,
    pub sigma_s_center: f64,
    pub sigma_theta_center: f64,
}

/// Rows of initial summaries with their parameters.
#[derive(Debug, Clone, Copy)]
pub struct Labelled<'a> {
    pub summaries: &'a DMatrix<f64>,
    pub parameters: &'a DMatrix<f64>,
}

/// Neighbours used by the kNN score.
pub const CV_NEIGHBOURS: usize = 5;

/// Score every grid candidate and pick the smallest mean squared error.
///
/// For each candidate and pseudo-observation `(θ*, s*)` an LGKDR projection
/// is fitted on `training` around `s*`, the test set is projected, and `θ*`
/// is estimated as the mean of its 5 nearest projected neighbours. Errors
/// are measured on parameters standardized by the training spread, and only
/// on the response coordinate when `template.response_index` is set.
pub fn cv_select(
    training: Labelled<'_>,
    test: Labelled<'_>,
    pseudo: Labelled<'_>,
    grid: &CvGrid,
    template: &GkdrConfig,
    seed: u64,
) -> Result<CvReport> {
    grid.validate()?;
    if pseudo.summaries.nrows() == 0 {
        return Err(Error::invalid("cross-validation needs at least one pseudo-observation"));
    }
    if test.summaries.nrows() < CV_NEIGHBOURS {
        return Err(Error::invalid(format!("test set needs at least {CV_NEIGHBOURS} rows")));
    }
    let standardizer = Standardizer::fit(training.summaries)?;
    let standardized = standardizer.apply_rows(training.summaries)?;
    let sigma_s_center = median_heuristic(&standardized, seed)?.value;
    let responses = response_rows(training.parameters, template.response_index)?;
    let sigma_theta_center = median_heuristic(&responses, derive_seed(seed, &[1]))?.value;
    let theta_scale = Standardizer::fit(training.parameters)?;
    let coords: Vec<usize> = match template.response_index {
        Some(j) => vec![j],
        None => (0..training.parameters.ncols()).collect(),
    };

    let kernels = grid.candidates(sigma_s_center, sigma_theta_center)?;
    let mut candidates = Vec::with_capacity(kernels.len());
    for kernel in kernels {
        let scored = score_candidate(
            &standardizer,
            &standardized,
            training.parameters,
            test,
            pseudo,
            template,
            &kernel,
            &theta_scale,
            &coords,
        );
        candidates.push(match scored {
            Ok(score) => CvCandidate {
                kernel,
                score: Some(score),
                error: None,
            },
            Err(e) => CvCandidate {
                kernel,
                score: None,
                error: Some(e.to_string()),
            },
        });
    }

    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        let Some(score) = c.score else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let bc = &candidates[b];
                let bs = bc.score.unwrap_or(f64::INFINITY);
                score < bs
                    || (score == bs
                        && (c.kernel.sigma_s < bc.kernel.sigma_s
                            || (c.kernel.sigma_s == bc.kernel.sigma_s && c.kernel.eps_n < bc.kernel.eps_n)))
            }
        };
        if better {
            best = Some(i);
        }
    }
    let Some(selected_index) = best else {
        let first = candidates.iter().find_map(|c| c.error.clone()).unwrap_or_default();
        return Err(Error::numerical(format!("every cross-validation candidate failed; first error: {first}")));
    };
    Ok(CvReport {
        selected: candidates[selected_index].kernel,
        selected_index,
        candidates,
        n_pseudo_obs: pseudo.summaries.nrows(),
        sigma_s_center,
        sigma_theta_center,
    })
}

#[allow(clippy::too_many_arguments)]
fn score_candidate(
    standardizer: &Standardizer,
    standardized: &DMatrix<f64>,
    parameters: &DMatrix<f64>,
    test: Labelled<'_>,
    pseudo: Labelled<'_>,
    template: &GkdrConfig,
    kernel: &KernelParams,
    theta_scale: &Standardizer,
    coords: &[usize],
) -> Result<f64> {
    let fitter = LgkdrFitter::from_standardized(
        standardizer.clone(),
        standardized.clone(),
        parameters,
        kernel,
        template.response_index,
    )?;
    let mut total = 0.0;
    for r in 0..pseudo.summaries.nrows() {
        let s_star: Vec<f64> = pseudo.summaries.row(r).iter().copied().collect();
        let fit = fitter.fit(&s_star, template.target_dim, template.weight_quantile)?;
        let z_test = fit.standardizer.apply_rows(test.summaries)? * fit.projection.matrix();
        let z_star = fit.projection.project(&fit.standardizer.apply(&s_star)?)?;
        let estimate = knn_regress(&z_test, test.parameters, &z_star, CV_NEIGHBOURS)?;
        total += coords
            .iter()
            .map(|&j| ((estimate[j] - pseudo.parameters[(r, j)]) / theta_scale.scales[j]).powi(2))
            .sum::<f64>();
    }
    let score = total / pseudo.summaries.nrows() as f64;
    if score.is_finite() {
        Ok(score)
    } else {
        Err(Error::numerical("non-finite cross-validation score"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gkdr::TargetDim;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn median_examples() {
        let two = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        assert_eq!(median_heuristic(&two, 0).unwrap().value, 2.0);
        let three = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        assert_eq!(median_heuristic(&three, 0).unwrap().value, 1.0);
        let same = DMatrix::from_element(4, 2, 3.5);
        let b = median_heuristic(&same, 0).unwrap();
        assert!(b.fallback && b.value == 1.0);
        let four = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 3.0, 7.0]);
        // Distances 1, 3, 7, 2, 6, 4: median (3 + 4) / 2.
        assert_eq!(median_heuristic(&four, 0).unwrap().value, 3.5);
    }

    #[test]
    fn median_subsample_is_seeded() {
        let mut rng = rng_from_seed(4);
        let pts = DMatrix::from_fn(1500, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = median_heuristic(&pts, 9).unwrap().value;
        assert_eq!(a, median_heuristic(&pts, 9).unwrap().value);
        assert!((a - 2.0f64.sqrt() * 1.1774).abs() < 0.1);
    }

    #[test]
    fn knn_examples() {
        let z = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let t = z.clone();
        assert_eq!(knn_regress(&z, &t, &[1.6], 2).unwrap(), vec![1.5]);
        assert_eq!(knn_regress(&z, &t, &[10.0], 4).unwrap(), vec![1.5]);
        assert_eq!(knn_regress(&z, &t, &[2.2], 1).unwrap(), vec![2.0]);
        // 0.5 is equidistant from rows 0 and 1; the lower index wins.
        assert_eq!(knn_regress(&z, &t, &[0.5], 1).unwrap(), vec![0.0]);
        assert!(knn_regress(&z, &t, &[0.0], 5).is_err());
        let dup = DMatrix::from_row_slice(4, 1, &[5.0, 5.0, 5.0, 0.0]);
        let th = DMatrix::from_row_slice(4, 1, &[7.0, 7.0, 7.0, 1.0]);
        assert_eq!(knn_regress(&dup, &th, &[5.0], 3).unwrap(), vec![7.0]);
    }

    fn linear_sets(seed: u64, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = rng_from_seed(seed);
        let s = DMatrix::from_fn(n, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let theta = DMatrix::from_fn(n, 1, |i, _| s[(i, 0)] + 0.05 * rng.sample::<f64, _>(StandardNormal));
        (s, theta)
    }

    fn template() -> GkdrConfig {
        let mut cfg = GkdrConfig::new(KernelParams::new(1.0, 1.0, 1e-3).unwrap(), TargetDim::Fixed(1));
        cfg.weight_quantile = 0.3;
        cfg
    }

    #[test]
    fn single_and_duplicate_candidates() {
        let (s, t) = linear_sets(1, 120);
        let (ts, tt) = linear_sets(2, 80);
        let (ps, pt) = linear_sets(3, 3);
        let sets = (
            Labelled { summaries: &s, parameters: &t },
            Labelled { summaries: &ts, parameters: &tt },
            Labelled { summaries: &ps, parameters: &pt },
        );
        let one = CvGrid {
            sigma_s_factors: vec![1.0],
            sigma_theta_factors: vec![1.0],
            eps_n_values: vec![1e-3],
        };
        let r = cv_select(sets.0, sets.1, sets.2, &one, &template(), 5).unwrap();
        assert_eq!(r.selected_index, 0);
        assert_eq!(r.candidates.len(), 1);
        let dup = CvGrid {
            sigma_s_factors: vec![1.0, 1.0],
            ..one
        };
        let r2 = cv_select(sets.0, sets.1, sets.2, &dup, &template(), 5).unwrap();
        assert_eq!(r2.selected_index, 0);
        assert_eq!(r2.candidates[0].score, r2.candidates[1].score);
        assert_eq!(r2, cv_select(sets.0, sets.1, sets.2, &dup, &template(), 5).unwrap());
        let best = r2.candidates[r2.selected_index].score.unwrap();
        assert!(r2.candidates.iter().all(|c| c.score.map_or(true, |s| best <= s)));
    }

    #[test]
    fn failures_are_recorded_until_all_fail() {
        let (s, t) = linear_sets(1, 40);
        let (ts, tt) = linear_sets(2, 30);
        let (ps, pt) = linear_sets(3, 2);
        let mut cfg = template();
        // 10% of 40 leaves 4 weighted points, below the floor of 10.
        cfg.weight_quantile = 0.1;
        let err = cv_select(
            Labelled { summaries: &s, parameters: &t },
            Labelled { summaries: &ts, parameters: &tt },
            Labelled { summaries: &ps, parameters: &pt },
            &CvGrid::default(),
            &cfg,
            1,
        );
        assert!(err.is_err());
    }
}
