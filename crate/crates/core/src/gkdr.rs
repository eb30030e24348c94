//! Gradient-based kernel dimension reduction and its locally weighted
//! variant.
//!
//! For a training set `(s_i, θ_i)` the kernel estimate of the gradient
//! covariance at anchor `s_i` is
//!
//! ```text
//! M(s_i) = ∇k(s_i)ᵀ (G_S + nεI)⁻¹ G_Θ (G_S + nεI)⁻¹ ∇k(s_i)
//! ```
//!
//! and the local estimator averages `w_i M(s_i)` over anchors with positive
//! triweight weight around the observation. The projection is spanned by the
//! leading eigenvectors of that average.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{fmt_f64, parse_f64};
use crate::linalg::{gram_dense, sym_eig, KernelParams, RegularizedCholesky, Standardizer, SymmetricMatrix};

/// Column-orthonormal `m × d` matrix mapping initial summaries to `z = Bᵀs`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    b: DMatrix<f64>,
    kernel: Option<KernelParams>,
}

const PROJECTION_HEADER: &str = "lgkdr-projection v1";

impl ProjectionMatrix {
    /// Wrap `b`, checking `BᵀB = I` to 1e-10.
    pub fn new(b: DMatrix<f64>, kernel: Option<KernelParams>) -> Result<Self> {
        let (m, d) = b.shape();
        if d == 0 || d > m {
            return Err(Error::invalid(format!("projection shape {m}x{d} needs 1 <= d <= m")));
        }
        let gram = b.tr_mul(&b);
        let err = (gram - DMatrix::<f64>::identity(d, d)).amax();
        if err > 1e-10 {
            return Err(Error::invalid(format!("projection columns are not orthonormal (error {err:e})")));
        }
        Ok(ProjectionMatrix { b, kernel })
    }

    /// The first `d` columns of the `m × m` identity.
    pub fn coordinate_selection(m: usize, d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(m, d), None)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn kernel(&self) -> Option<&KernelParams> {
        self.kernel.as_ref()
    }

    pub fn source_dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn target_dim(&self) -> usize {
        self.b.ncols()
    }

    /// `z = Bᵀs`.
    pub fn project(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.source_dim() {
            return Err(Error::invalid(format!(
                "projection expects dimension {}, got {}",
                self.source_dim(),
                s.len()
            )));
        }
        Ok(self
            .b
            .column_iter()
            .map(|col| col.iter().zip(s).map(|(b, x)| b * x).sum())
            .collect())
    }

    /// Plain-text form: versioned header, shape, kernel parameters, then the
    /// matrix row by row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(PROJECTION_HEADER);
        out.push('\n');
        out.push_str(&format!("source_dim {}\n", self.source_dim()));
        out.push_str(&format!("target_dim {}\n", self.target_dim()));
        match &self.kernel {
            Some(k) => out.push_str(&format!(
                "kernel {} {} {}\n",
                fmt_f64(k.sigma_s),
                fmt_f64(k.sigma_theta),
                fmt_f64(k.eps_n)
            )),
            None => out.push_str("kernel none\n"),
        }
        for row in self.b.row_iter() {
            let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::invalid(format!("projection file truncated before {what}")))
        };
        if next("header")?.trim() != PROJECTION_HEADER {
            return Err(Error::invalid("unrecognized projection file header"));
        }
        let field = |line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| Error::invalid(format!("expected `{key}` line, got `{line}`")))
        };
        let m: usize = field(next("source_dim")?, "source_dim")?
            .parse()
            .map_err(|e| Error::invalid(format!("bad source_dim: {e}")))?;
        let d: usize = field(next("target_dim")?, "target_dim")?
            .parse()
            .map_err(|e| Error::invalid(format!("bad target_dim: {e}")))?;
        let kernel_line = field(next("kernel")?, "kernel")?;
        let kernel = if kernel_line == "none" {
            None
        } else {
            let v: Vec<f64> = kernel_line.split_whitespace().map(parse_f64).collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(Error::invalid("kernel line needs three values"));
            }
            Some(KernelParams::new(v[0], v[1], v[2])?)
        };
        let mut b = DMatrix::<f64>::zeros(m, d);
        for i in 0..m {
            let vals: Vec<f64> = next("matrix row")?.split_whitespace().map(parse_f64).collect::<Result<_>>()?;
            if vals.len() != d {
                return Err(Error::invalid(format!("row {i} has {} values, expected {d}", vals.len())));
            }
            for (j, v) in vals.into_iter().enumerate() {
                b[(i, j)] = v;
            }
        }
        ProjectionMatrix::new(b, kernel)
    }
}

/// Requested dimension of the reduced summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetDim {
    Fixed(usize),
    /// Smallest `d` keeping 70% of the eigenvalue mass.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GkdrConfig {
    pub kernel: KernelParams,
    pub target_dim: TargetDim,
    /// Fraction of training points that receive a nonzero triweight weight.
    pub weight_quantile: f64,
    /// Parameter column used as the sole response; `None` uses the full vector.
    pub response_index: Option<usize>,
}

impl GkdrConfig {
    pub fn new(kernel: KernelParams, target_dim: TargetDim) -> Self {
        GkdrConfig {
            kernel,
            target_dim,
            weight_quantile: 0.10,
            response_index: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.weight_quantile > 0.0 && self.weight_quantile <= 1.0) {
            return Err(Error::invalid(format!(
                "weight_quantile must lie in (0, 1], got {}",
                self.weight_quantile
            )));
        }
        if self.target_dim == TargetDim::Fixed(0) {
            return Err(Error::invalid("target_dim must be at least 1"));
        }
        Ok(())
    }
}

/// Standardized summaries, raw parameters and per-point weights.
#[derive(Debug, Clone)]
pub struct WeightedTrainingSet {
    pub summaries: DMatrix<f64>,
    pub parameters: DMatrix<f64>,
    pub weights: Vec<f64>,
}

impl WeightedTrainingSet {
    pub fn new(summaries: DMatrix<f64>, parameters: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = summaries.nrows();
        if parameters.nrows() != n || weights.len() != n {
            return Err(Error::invalid(format!(
                "row counts disagree: {n} summaries, {} parameters, {} weights",
                parameters.nrows(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        Ok(WeightedTrainingSet {
            summaries,
            parameters,
            weights,
        })
    }

    /// Unit weights: plain (global) GKDR.
    pub fn uniform(summaries: DMatrix<f64>, parameters: DMatrix<f64>) -> Result<Self> {
        let n = summaries.nrows();
        Self::new(summaries, parameters, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.summaries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Triweight `(1 - u²)³ 1{u < 1}` with `u = ‖x - x_obs‖² / ‖x_th - x_obs‖²`,
/// unnormalized.
pub fn triweight(x: &[f64], x_obs: &[f64], x_th: &[f64]) -> Result<f64> {
    if x.len() != x_obs.len() || x_th.len() != x_obs.len() {
        return Err(Error::invalid("triweight arguments differ in dimension"));
    }
    let sq = |a: &[f64]| -> f64 { a.iter().zip(x_obs).map(|(p, q)| (p - q) * (p - q)).sum() };
    let denom = sq(x_th);
    if !(denom > 0.0) {
        return Err(Error::invalid("triweight threshold coincides with the observation"));
    }
    Ok(triweight_of_ratio(sq(x) / denom))
}

#[inline]
fn triweight_of_ratio(u: f64) -> f64 {
    if u < 1.0 {
        let t = 1.0 - u * u;
        t * t * t
    } else {
        0.0
    }
}

/// Triweight weights around `x_obs` with the threshold at the
/// `⌈quantile·n⌉`-th order statistic of the distances, so that about that
/// many points receive a positive weight.
pub fn compute_weights(summaries: &DMatrix<f64>, x_obs: &[f64], weight_quantile: f64) -> Result<Vec<f64>> {
    let (n, m) = summaries.shape();
    if n == 0 {
        return Err(Error::invalid("no points to weight"));
    }
    if x_obs.len() != m {
        return Err(Error::invalid(format!("observation has dimension {}, expected {m}", x_obs.len())));
    }
    if !(weight_quantile > 0.0 && weight_quantile <= 1.0) {
        return Err(Error::invalid(format!("weight quantile must lie in (0, 1], got {weight_quantile}")));
    }
    let sq: Vec<f64> = summaries
        .row_iter()
        .map(|r| r.iter().zip(x_obs).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    let mut sorted = sq.clone();
    sorted.sort_by(f64::total_cmp);
    let k = ((weight_quantile * n as f64).ceil() as usize).min(n - 1);
    let threshold = sorted[k..].iter().copied().find(|d| *d > 0.0);
    Ok(match threshold {
        Some(th) => sq.iter().map(|d| triweight_of_ratio(d / th)).collect(),
        // Every point coincides with the observation.
        None => vec![1.0; n],
    })
}

/// Smallest `d` whose leading eigenvalues carry at least 70% of the total mass.
pub fn choose_dimension(eigenvalues: &[f64]) -> Result<usize> {
    let clamped: Vec<f64> = eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("eigenvalue spectrum has no positive mass"));
    }
    let target = 0.7 * total;
    let mut acc = 0.0;
    for (k, v) in clamped.iter().enumerate() {
        acc += v;
        if acc >= target * (1.0 - 1e-12) {
            return Ok(k + 1);
        }
    }
    Ok(clamped.len())
}

/// `(G_S + nεI)⁻¹ G_Θ (G_S + nεI)⁻¹` for one training set and kernel, with
/// per-anchor gradient covariances computed on demand.
pub struct GradientOperator {
    points: DMatrix<f64>,
    sigma_s: f64,
    core: DMatrix<f64>,
    cache: Option<Vec<OnceLock<DMatrix<f64>>>>,
}

/// Per-anchor matrices are memoized when they are this small.
const CACHE_MAX_DIM: usize = 64;

impl GradientOperator {
    /// `summaries` are the (standardized) anchors, `responses` the rows fed
    /// to the parameter kernel.
    pub fn new(summaries: &DMatrix<f64>, responses: &DMatrix<f64>, kernel: &KernelParams) -> Result<Self> {
        kernel.validate()?;
        let n = summaries.nrows();
        if n == 0 {
            return Err(Error::invalid("empty training set"));
        }
        if responses.nrows() != n {
            return Err(Error::invalid("summaries and responses differ in row count"));
        }
        let gs = gram_dense(summaries, kernel.sigma_s)?;
        let gt = gram_dense(responses, kernel.sigma_theta)?;
        let ridge = n as f64 * kernel.eps_n;
        let a = RegularizedCholesky::factor(&gs, ridge)?.inverse();
        let ag = &a * &gt;
        let mut core = &ag * &a;
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (core[(i, j)] + core[(j, i)]);
                core[(i, j)] = v;
                core[(j, i)] = v;
            }
        }
        let cache = (summaries.ncols() <= CACHE_MAX_DIM).then(|| (0..n).map(|_| OnceLock::new()).collect());
        Ok(GradientOperator {
            points: summaries.clone(),
            sigma_s: kernel.sigma_s,
            core,
            cache,
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    fn compute_local(&self, i: usize) -> DMatrix<f64> {
        let (n, m) = self.points.shape();
        let s2 = self.sigma_s * self.sigma_s;
        let mut grad = DMatrix::<f64>::zeros(n, m);
        for j in 0..n {
            let mut d2 = 0.0;
            for c in 0..m {
                let d = self.points[(j, c)] - self.points[(i, c)];
                d2 += d * d;
            }
            let scale = 2.0 / s2 * (-d2 / s2).exp();
            for c in 0..m {
                grad[(j, c)] = scale * (self.points[(j, c)] - self.points[(i, c)]);
            }
        }
        let y = &self.core * &grad;
        let local = grad.tr_mul(&y);
        (&local + local.transpose()) * 0.5
    }

    fn local_dense(&self, i: usize) -> DMatrix<f64> {
        match &self.cache {
            Some(cache) => cache[i].get_or_init(|| self.compute_local(i)).clone(),
            None => self.compute_local(i),
        }
    }

    /// Gradient covariance estimate at anchor `i`.
    pub fn local_gradient_matrix(&self, i: usize) -> Result<SymmetricMatrix> {
        if i >= self.len() {
            return Err(Error::invalid(format!("anchor {i} out of range for {} points", self.len())));
        }
        SymmetricMatrix::from_dense_symmetrized(&self.local_dense(i))
    }

    /// Weighted average of the anchor matrices over positive weights,
    /// divided by the number of contributing anchors and accumulated in
    /// index order.
    pub fn weighted_average(&self, weights: &[f64]) -> Result<DMatrix<f64>> {
        if weights.len() != self.len() {
            return Err(Error::invalid("weight vector length differs from training set size"));
        }
        let anchors: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
        if anchors.is_empty() {
            return Err(Error::invalid("no training point inside weighting bandwidth"));
        }
        let locals: Vec<DMatrix<f64>> = anchors.par_iter().map(|&i| self.local_dense(i)).collect();
        let m = self.dim();
        let mut acc = DMatrix::<f64>::zeros(m, m);
        for (&i, local) in anchors.iter().zip(&locals) {
            acc += local * weights[i];
        }
        acc /= anchors.len() as f64;
        Ok((&acc + acc.transpose()) * 0.5)
    }

    /// Eigendecompose the weighted average and keep the leading directions.
    pub fn estimate(&self, weights: &[f64], target_dim: TargetDim) -> Result<EstimatedProjection> {
        let averaged = self.weighted_average(weights)?;
        let (eigenvalues, vectors) = sym_eig(&averaged)?;
        let m = self.dim();
        let d = match target_dim {
            TargetDim::Fixed(d) => d,
            TargetDim::Auto => choose_dimension(&eigenvalues)?,
        };
        if d == 0 || d > m {
            return Err(Error::invalid(format!("target dimension {d} outside 1..={m}")));
        }
        let b = vectors.columns(0, d).clone_owned();
        Ok(EstimatedProjection {
            projection: ProjectionMatrix::new(b, None)?,
            eigenvalues,
        })
    }
}

#[derive(Debug, Clone)]
pub struct EstimatedProjection {
    pub projection: ProjectionMatrix,
    /// Full spectrum of the averaged matrix, descending.
    pub eigenvalues: Vec<f64>,
}

/// Rows fed to the parameter kernel: the selected column(s), standardized.
pub fn response_rows(parameters: &DMatrix<f64>, response_index: Option<usize>) -> Result<DMatrix<f64>> {
    let p = parameters.ncols();
    let selected = match response_index {
        None => parameters.clone(),
        Some(j) if j < p => DMatrix::from_column_slice(parameters.nrows(), 1, parameters.column(j).as_slice()),
        Some(j) => {
            return Err(Error::invalid(format!("parameter index {j} out of range for {p} parameters")));
        }
    };
    if selected.nrows() < 2 {
        return Ok(selected);
    }
    Standardizer::fit(&selected)?.apply_rows(&selected)
}

/// Build the operator for a training set under `cfg`.
pub fn build_operator(ts: &WeightedTrainingSet, cfg: &GkdrConfig) -> Result<GradientOperator> {
    cfg.validate()?;
    let responses = response_rows(&ts.parameters, cfg.response_index)?;
    GradientOperator::new(&ts.summaries, &responses, &cfg.kernel)
}

/// Local GKDR projection for a weighted training set.
pub fn estimate_projection(ts: &WeightedTrainingSet, cfg: &GkdrConfig) -> Result<EstimatedProjection> {
    if ts.weights.iter().all(|w| *w <= 0.0) {
        return Err(Error::invalid("no training point inside weighting bandwidth"));
    }
    let op = build_operator(ts, cfg)?;
    let mut est = op.estimate(&ts.weights, cfg.target_dim)?;
    est.projection.kernel = Some(cfg.kernel);
    Ok(est)
}

/// Projection estimated with parameter `param_index` as the only response.
pub fn estimate_projection_separated(
    ts: &WeightedTrainingSet,
    cfg: &GkdrConfig,
    param_index: usize,
) -> Result<EstimatedProjection> {
    if param_index >= ts.parameters.ncols() {
        return Err(Error::invalid(format!(
            "parameter index {param_index} out of range for {} parameters",
            ts.parameters.ncols()
        )));
    }
    let cfg = GkdrConfig {
        response_index: Some(param_index),
        ..cfg.clone()
    };
    estimate_projection(ts, &cfg)
}

impl ProjectionMatrix {
    pub(crate) fn with_kernel(mut self, kernel: KernelParams) -> Self {
        self.kernel = Some(kernel);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn kp(s: f64, t: f64, e: f64) -> KernelParams {
        KernelParams::new(s, t, e).unwrap()
    }

    #[test]
    fn triweight_examples() {
        assert_eq!(triweight(&[1.0, 2.0], &[1.0, 2.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(triweight(&[3.0], &[1.0], &[-1.0]).unwrap(), 0.0);
        // u = 0.5
        assert_relative_eq!(triweight(&[0.5f64.sqrt()], &[0.0], &[1.0]).unwrap(), 0.421875, epsilon = 1e-15);
        assert!(triweight(&[1.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn triweight_strictly_decreasing() {
        let mut prev = 1.0;
        for k in 1..100 {
            let w = triweight_of_ratio(k as f64 / 100.0);
            assert!(w < prev);
            prev = w;
        }
    }

    #[test]
    fn compute_weights_examples() {
        let pts = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let w = compute_weights(&pts, &[0.0], 0.5).unwrap();
        let positive: Vec<usize> = (0..10).filter(|&i| w[i] > 0.0).collect();
        assert_eq!(positive, vec![0, 1, 2, 3, 4]);
        assert_eq!(w[0], 1.0);

        let w = compute_weights(&pts, &[0.0], 1.0).unwrap();
        assert_eq!(w.iter().filter(|v| **v > 0.0).count(), 9);
        assert_eq!(w[9], 0.0);

        let w = compute_weights(&pts, &[3.0], 0.3).unwrap();
        assert_eq!(w[3], 1.0);
    }

    #[test]
    fn choose_dimension_examples() {
        assert_eq!(choose_dimension(&[1.0, 0.0, 0.0]).unwrap(), 1);
        assert_eq!(choose_dimension(&[0.5, 0.3, 0.2]).unwrap(), 2);
        assert_eq!(choose_dimension(&[0.7, 0.3]).unwrap(), 1);
        assert_eq!(choose_dimension(&[0.6, 0.3, -1e-18]).unwrap(), 2);
        assert!(choose_dimension(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn project_examples() {
        let b = ProjectionMatrix::coordinate_selection(4, 2).unwrap();
        assert_eq!(b.project(&[3.0, -1.0, 7.0, 8.0]).unwrap(), vec![3.0, -1.0]);
        assert_eq!(b.project(&[0.0; 4]).unwrap(), vec![0.0, 0.0]);
        assert!(b.project(&[1.0]).is_err());
    }

    #[test]
    fn projection_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = DMatrix::<f64>::from_fn(6, 3, |_, _| StandardNormal.sample(&mut rng));
        let q = raw.qr().q();
        let p = ProjectionMatrix::new(q, Some(kp(0.3, 1.7, 1e-4))).unwrap();
        let back = ProjectionMatrix::from_text(&p.to_text()).unwrap();
        assert_eq!(back, p);
        assert!(ProjectionMatrix::from_text("garbage").is_err());
    }

    #[test]
    fn single_point_gives_zero_matrix() {
        let s = DMatrix::from_element(1, 2, 0.4);
        let t = DMatrix::from_element(1, 1, 1.0);
        let op = GradientOperator::new(&s, &t, &kp(1.0, 1.0, 0.1)).unwrap();
        let m = op.local_gradient_matrix(0).unwrap();
        assert_eq!(m.to_dense(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn identity_response_gram_matches_two_solves() {
        // With a parameter bandwidth tiny enough that G_Θ = I, the core is A².
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 12;
        let s = DMatrix::<f64>::from_fn(n, 3, |_, _| StandardNormal.sample(&mut rng));
        let t = DMatrix::<f64>::from_fn(n, 1, |i, _| i as f64 * 10.0);
        let k = kp(1.5, 1e-3, 0.05);
        let op = GradientOperator::new(&s, &t, &k).unwrap();
        let gs = gram_dense(&s, k.sigma_s).unwrap();
        let ch = RegularizedCholesky::factor(&gs, n as f64 * k.eps_n).unwrap();
        for i in [0, 5, 11] {
            let grad = crate::linalg::kernel_gradient(&s, i, k.sigma_s).unwrap();
            let once = ch.solve(&grad).unwrap();
            let expected = once.tr_mul(&once);
            let got = op.local_gradient_matrix(i).unwrap().to_dense();
            assert!((got - &expected).amax() <= 1e-10 * expected.amax().max(1.0));
        }
    }

    #[test]
    fn uniform_weight_scaling_preserves_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 80;
        let s = DMatrix::<f64>::from_fn(n, 4, |_, _| StandardNormal.sample(&mut rng));
        let theta = DMatrix::from_fn(n, 1, |i, _| s[(i, 1)] + 0.1 * s[(i, 2)]);
        let cfg = GkdrConfig::new(kp(2.0, 1.0, 1e-3), TargetDim::Fixed(2));
        let a = WeightedTrainingSet::uniform(s.clone(), theta.clone()).unwrap();
        let b = WeightedTrainingSet::new(s, theta, vec![0.5; n]).unwrap();
        let pa = estimate_projection(&a, &cfg).unwrap();
        let pb = estimate_projection(&b, &cfg).unwrap();
        assert!((pa.projection.matrix() - pb.projection.matrix()).amax() < 1e-12);
    }

    #[test]
    fn minimal_two_point_set() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, -1.0]);
        let t = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let ts = WeightedTrainingSet::uniform(s, t).unwrap();
        let est = estimate_projection(&ts, &GkdrConfig::new(kp(1.0, 1.0, 0.01), TargetDim::Fixed(1))).unwrap();
        let b = est.projection.matrix();
        assert_relative_eq!(b.column(0).norm(), 1.0, epsilon = 1e-12);
        assert_eq!(est.eigenvalues.len(), 2);
    }

    #[test]
    fn all_zero_weights_rejected() {
        let s = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let t = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let ts = WeightedTrainingSet::new(s, t, vec![0.0, 0.0]).unwrap();
        let err = estimate_projection(&ts, &GkdrConfig::new(kp(1.0, 1.0, 0.01), TargetDim::Fixed(1))).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(msg) if msg.contains("bandwidth")));
    }

    #[test]
    fn separated_index_checked() {
        let s = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let t = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 0.5]);
        let ts = WeightedTrainingSet::uniform(s, t).unwrap();
        let cfg = GkdrConfig::new(kp(1.0, 1.0, 0.01), TargetDim::Fixed(1));
        assert!(estimate_projection_separated(&ts, &cfg, 1).is_err());
    }
}
