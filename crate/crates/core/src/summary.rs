//! Summary-statistic constructors behind one interface: standardized
//! passthrough, linear posterior-mean regression, LGKDR projection, and a
//! composite of per-parameter LGKDR projections.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{fmt_f64, parse_f64};
use crate::gkdr::{compute_weights, response_rows, GkdrConfig, GradientOperator, ProjectionMatrix, TargetDim};
use crate::linalg::{KernelParams, Standardizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstructorKind {
    Identity,
    LinearPosteriorMean,
    Lgkdr,
    SeparatedComposite,
}

/// Least-squares fit of each parameter on `[1, standardized s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    /// `(m + 1) × p`; row 0 is the intercept.
    pub coefficients: DMatrix<f64>,
    /// Design columns (0 = intercept) found to be linearly dependent. When
    /// nonempty the fit was solved with a 1e-8 relative ridge.
    pub deficient_columns: Vec<usize>,
}

impl RegressionFit {
    /// Coefficients expressed on the raw (unstandardized) summary scale.
    pub fn raw_coefficients(&self, standardizer: &Standardizer) -> DMatrix<f64> {
        let mut raw = self.coefficients.clone();
        for j in 0..raw.ncols() {
            let mut intercept = self.coefficients[(0, j)];
            for k in 0..standardizer.dim() {
                let slope = self.coefficients[(k + 1, j)] / standardizer.scales[k];
                raw[(k + 1, j)] = slope;
                intercept -= slope * standardizer.means[k];
            }
            raw[(0, j)] = intercept;
        }
        raw
    }
}

/// A fitted LGKDR projection with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LgkdrSummary {
    pub standardizer: Standardizer,
    pub projection: ProjectionMatrix,
    /// Spectrum of the averaged gradient covariance, descending.
    pub eigenvalues: Vec<f64>,
    /// Training points that received a positive weight.
    pub positive_weights: usize,
}

impl LgkdrSummary {
    pub fn chosen_dim(&self) -> usize {
        self.projection.target_dim()
    }

    fn transform(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.projection.project(&self.standardizer.apply(s)?)
    }

    fn transform_rows(&self, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.standardizer.apply_rows(rows)? * self.projection.matrix())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSummary {
    pub standardizer: Standardizer,
    pub fit: RegressionFit,
    /// Scaling of the fitted means so each output coordinate has unit spread
    /// over the (weighted) training rows.
    pub output: Standardizer,
}

impl LinearSummary {
    /// Fitted posterior mean for a raw summary vector.
    pub fn posterior_mean(&self, s: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardizer.apply(s)?;
        let c = &self.fit.coefficients;
        Ok((0..c.ncols())
            .map(|j| c[(0, j)] + z.iter().enumerate().map(|(k, v)| c[(k + 1, j)] * v).sum::<f64>())
            .collect())
    }

    fn posterior_mean_rows(&self, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let z = self.standardizer.apply_rows(rows)?;
        let c = &self.fit.coefficients;
        let slopes = c.rows(1, c.nrows() - 1);
        let mut out = z * slopes;
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(c[(0, j)]);
        }
        Ok(out)
    }
}

/// A fitted map from initial summaries to the vector used for distances.
#[derive(Debug, Clone, PartialEq)]
pub enum SummaryConstructor {
    Identity { standardizer: Standardizer },
    LinearPosteriorMean(LinearSummary),
    Lgkdr(LgkdrSummary),
    /// One LGKDR child per listed parameter index; the transform concatenates
    /// the children in order.
    SeparatedComposite { children: Vec<(usize, LgkdrSummary)> },
}

impl SummaryConstructor {
    pub fn kind(&self) -> ConstructorKind {
        match self {
            SummaryConstructor::Identity { .. } => ConstructorKind::Identity,
            SummaryConstructor::LinearPosteriorMean(_) => ConstructorKind::LinearPosteriorMean,
            SummaryConstructor::Lgkdr(_) => ConstructorKind::Lgkdr,
            SummaryConstructor::SeparatedComposite { .. } => ConstructorKind::SeparatedComposite,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            SummaryConstructor::Identity { standardizer } => standardizer.dim(),
            SummaryConstructor::LinearPosteriorMean(l) => l.standardizer.dim(),
            SummaryConstructor::Lgkdr(l) => l.standardizer.dim(),
            SummaryConstructor::SeparatedComposite { children } => children[0].1.standardizer.dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            SummaryConstructor::Identity { standardizer } => standardizer.dim(),
            SummaryConstructor::LinearPosteriorMean(l) => l.fit.coefficients.ncols(),
            SummaryConstructor::Lgkdr(l) => l.chosen_dim(),
            SummaryConstructor::SeparatedComposite { children } => children.iter().map(|(_, c)| c.chosen_dim()).sum(),
        }
    }

    pub fn transform(&self, s: &[f64]) -> Result<Vec<f64>> {
        match self {
            SummaryConstructor::Identity { standardizer } => standardizer.apply(s),
            SummaryConstructor::LinearPosteriorMean(l) => l.output.apply(&l.posterior_mean(s)?),
            SummaryConstructor::Lgkdr(l) => l.transform(s),
            SummaryConstructor::SeparatedComposite { children } => {
                let mut out = Vec::with_capacity(self.output_dim());
                for (_, child) in children {
                    out.extend(child.transform(s)?);
                }
                Ok(out)
            }
        }
    }

    /// Transform every row of `rows`; agrees with `transform` row by row up
    /// to floating-point summation order.
    pub fn transform_rows(&self, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            SummaryConstructor::Identity { standardizer } => standardizer.apply_rows(rows),
            SummaryConstructor::LinearPosteriorMean(l) => l.output.apply_rows(&l.posterior_mean_rows(rows)?),
            SummaryConstructor::Lgkdr(l) => l.transform_rows(rows),
            SummaryConstructor::SeparatedComposite { children } => {
                let parts: Vec<DMatrix<f64>> =
                    children.iter().map(|(_, c)| c.transform_rows(rows)).collect::<Result<_>>()?;
                let total = parts.iter().map(|p| p.ncols()).sum();
                let mut out = DMatrix::zeros(rows.nrows(), total);
                let mut col = 0;
                for p in parts {
                    out.columns_mut(col, p.ncols()).copy_from(&p);
                    col += p.ncols();
                }
                Ok(out)
            }
        }
    }

    /// The child constructed for parameter `param_index`, if any.
    pub fn focus(&self, param_index: usize) -> Option<SummaryConstructor> {
        match self {
            SummaryConstructor::SeparatedComposite { children } => children
                .iter()
                .find(|(j, _)| *j == param_index)
                .map(|(_, c)| SummaryConstructor::Lgkdr(c.clone())),
            _ => None,
        }
    }
}

fn check_rows(summaries: &DMatrix<f64>, parameters: &DMatrix<f64>) -> Result<()> {
    if summaries.nrows() != parameters.nrows() {
        return Err(Error::invalid(format!(
            "{} summary rows but {} parameter rows",
            summaries.nrows(),
            parameters.nrows()
        )));
    }
    if summaries.iter().chain(parameters.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("training set contains non-finite values"));
    }
    Ok(())
}

/// Standardized passthrough.
pub fn fit_identity(summaries: &DMatrix<f64>) -> Result<SummaryConstructor> {
    Ok(SummaryConstructor::Identity {
        standardizer: Standardizer::fit(summaries)?,
    })
}

/// Settings for the linear posterior-mean constructor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOptions {
    /// Weighted least squares with triweight weights around the observation.
    pub local: bool,
    pub weight_quantile: f64,
}

impl Default for LinearOptions {
    fn default() -> Self {
        LinearOptions {
            local: false,
            weight_quantile: 0.10,
        }
    }
}

/// Weighted least squares `θ ≈ [1, z] β` with SVD; dependent design columns
/// trigger a 1e-8 relative ridge and are reported.
pub fn weighted_least_squares(z: &DMatrix<f64>, theta: &DMatrix<f64>, weights: &[f64]) -> Result<RegressionFit> {
    let rows: Vec<usize> = (0..z.nrows()).filter(|&i| weights[i] > 0.0).collect();
    let m = z.ncols();
    if rows.len() <= m + 1 {
        return Err(Error::invalid(format!(
            "linear regression needs more than {} weighted rows, got {}",
            m + 1,
            rows.len()
        )));
    }
    let k = rows.len();
    let design = DMatrix::from_fn(k, m + 1, |r, c| {
        let sw = weights[rows[r]].sqrt();
        if c == 0 {
            sw
        } else {
            sw * z[(rows[r], c - 1)]
        }
    });
    let response = DMatrix::from_fn(k, theta.ncols(), |r, c| weights[rows[r]].sqrt() * theta[(rows[r], c)]);
    let svd = design.svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::numerical("SVD did not produce U"))?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::numerical("SVD did not produce V"))?;
    let s = &svd.singular_values;
    let smax = s.max();
    let cutoff = smax * 1e-10;
    let mut deficient = Vec::new();
    for (idx, &sv) in s.iter().enumerate() {
        if sv <= cutoff {
            for (c, v) in v_t.row(idx).iter().enumerate() {
                if v.abs() > 0.1 && !deficient.contains(&c) {
                    deficient.push(c);
                }
            }
        }
    }
    deficient.sort_unstable();
    let ridge = if deficient.is_empty() { 0.0 } else { 1e-8 * smax * smax };
    let utb = u.tr_mul(&response);
    let mut scaled = utb;
    for (idx, &sv) in s.iter().enumerate() {
        let f = if sv * sv + ridge > 0.0 { sv / (sv * sv + ridge) } else { 0.0 };
        scaled.row_mut(idx).scale_mut(f);
    }
    let coefficients = v_t.tr_mul(&scaled);
    if coefficients.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("linear regression produced non-finite coefficients"));
    }
    Ok(RegressionFit {
        coefficients,
        deficient_columns: deficient,
    })
}

/// Linear posterior-mean constructor (semi-automatic ABC comparator).
pub fn fit_linear_posterior_mean(
    summaries: &DMatrix<f64>,
    parameters: &DMatrix<f64>,
    x_obs: Option<&[f64]>,
    options: LinearOptions,
) -> Result<SummaryConstructor> {
    check_rows(summaries, parameters)?;
    let (n, m) = summaries.shape();
    if n <= m + 1 {
        return Err(Error::invalid(format!("linear regression needs n > m + 1 (n = {n}, m = {m})")));
    }
    let standardizer = Standardizer::fit(summaries)?;
    let z = standardizer.apply_rows(summaries)?;
    let weights = if options.local {
        let obs = x_obs.ok_or_else(|| Error::invalid("local regression needs the observed summaries"))?;
        compute_weights(&z, &standardizer.apply(obs)?, options.weight_quantile)?
    } else {
        vec![1.0; n]
    };
    let fit = weighted_least_squares(&z, parameters, &weights)?;
    let mut linear = LinearSummary {
        standardizer,
        fit,
        output: Standardizer::identity(parameters.ncols()),
    };
    let fitted = linear.posterior_mean_rows(summaries)?;
    linear.output = weighted_standardizer(&fitted, &weights);
    Ok(SummaryConstructor::LinearPosteriorMean(linear))
}

fn weighted_standardizer(rows: &DMatrix<f64>, weights: &[f64]) -> Standardizer {
    let total: f64 = weights.iter().sum();
    let mut means = Vec::with_capacity(rows.ncols());
    let mut scales = Vec::with_capacity(rows.ncols());
    for col in rows.column_iter() {
        let mean = col.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
        let var = col.iter().zip(weights).map(|(v, w)| w * (v - mean).powi(2)).sum::<f64>() / total;
        let sd = var.sqrt();
        means.push(mean);
        scales.push(if sd > f64::EPSILON * mean.abs().max(1.0) && sd.is_finite() { sd } else { 1.0 });
    }
    Standardizer { means, scales }
}

/// Minimum number of positively weighted training points for a local fit.
pub fn required_positive_weights(n: usize) -> usize {
    10usize.max((0.01 * n as f64).ceil() as usize).min(n)
}

/// Standardized training set and gradient operator for one kernel and
/// response choice, reusable across observations.
pub struct LgkdrFitter {
    standardizer: Standardizer,
    standardized: DMatrix<f64>,
    operator: GradientOperator,
    kernel: KernelParams,
}

impl LgkdrFitter {
    pub fn new(
        summaries: &DMatrix<f64>,
        parameters: &DMatrix<f64>,
        kernel: &KernelParams,
        response_index: Option<usize>,
    ) -> Result<Self> {
        check_rows(summaries, parameters)?;
        let standardizer = Standardizer::fit(summaries)?;
        let standardized = standardizer.apply_rows(summaries)?;
        Self::from_standardized(standardizer, standardized, parameters, kernel, response_index)
    }

    pub fn from_standardized(
        standardizer: Standardizer,
        standardized: DMatrix<f64>,
        parameters: &DMatrix<f64>,
        kernel: &KernelParams,
        response_index: Option<usize>,
    ) -> Result<Self> {
        let responses = response_rows(parameters, response_index)?;
        let operator = GradientOperator::new(&standardized, &responses, kernel)?;
        Ok(LgkdrFitter {
            standardizer,
            standardized,
            operator,
            kernel: *kernel,
        })
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn standardized(&self) -> &DMatrix<f64> {
        &self.standardized
    }

    /// Local projection around the raw observed summary `x_obs`.
    pub fn fit(&self, x_obs: &[f64], target_dim: TargetDim, weight_quantile: f64) -> Result<LgkdrSummary> {
        let z_obs = self.standardizer.apply(x_obs)?;
        let weights = compute_weights(&self.standardized, &z_obs, weight_quantile)?;
        let positive = weights.iter().filter(|w| **w > 0.0).count();
        let required = required_positive_weights(weights.len());
        if positive < required {
            return Err(Error::invalid(format!(
                "only {positive} training points inside weighting bandwidth, need {required}"
            )));
        }
        self.fit_with_weights(&weights, target_dim)
    }

    /// Projection from explicit anchor weights.
    pub fn fit_with_weights(&self, weights: &[f64], target_dim: TargetDim) -> Result<LgkdrSummary> {
        let est = self.operator.estimate(weights, target_dim)?;
        Ok(LgkdrSummary {
            standardizer: self.standardizer.clone(),
            projection: est.projection.with_kernel(self.kernel),
            eigenvalues: est.eigenvalues,
            positive_weights: weights.iter().filter(|w| **w > 0.0).count(),
        })
    }
}

/// LGKDR constructor around one observation.
pub fn fit_lgkdr(
    summaries: &DMatrix<f64>,
    parameters: &DMatrix<f64>,
    x_obs: &[f64],
    cfg: &GkdrConfig,
) -> Result<SummaryConstructor> {
    cfg.validate()?;
    let fitter = LgkdrFitter::new(summaries, parameters, &cfg.kernel, cfg.response_index)?;
    Ok(SummaryConstructor::Lgkdr(fitter.fit(x_obs, cfg.target_dim, cfg.weight_quantile)?))
}

/// One LGKDR child per parameter in `which`, each using that parameter alone
/// as the response.
pub fn fit_separated(
    summaries: &DMatrix<f64>,
    parameters: &DMatrix<f64>,
    x_obs: &[f64],
    cfg: &GkdrConfig,
    which: &[usize],
) -> Result<SummaryConstructor> {
    cfg.validate()?;
    check_rows(summaries, parameters)?;
    if which.is_empty() {
        return Err(Error::invalid("separated construction needs at least one parameter index"));
    }
    let standardizer = Standardizer::fit(summaries)?;
    let standardized = standardizer.apply_rows(summaries)?;
    let mut children = Vec::with_capacity(which.len());
    for &j in which {
        if j >= parameters.ncols() {
            return Err(Error::invalid(format!(
                "parameter index {j} out of range for {} parameters",
                parameters.ncols()
            )));
        }
        let fitter =
            LgkdrFitter::from_standardized(standardizer.clone(), standardized.clone(), parameters, &cfg.kernel, Some(j))?;
        children.push((j, fitter.fit(x_obs, cfg.target_dim, cfg.weight_quantile)?));
    }
    Ok(SummaryConstructor::SeparatedComposite { children })
}

// Persistence.

const SUMMARY_HEADER: &str = "lgkdr-summary v1";

fn join(values: &[f64]) -> String {
    values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" ")
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.inner
            .next()
            .ok_or_else(|| Error::invalid(format!("summary file truncated before {what}")))
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next(key)?;
        line.strip_prefix(key)
            .map(str::trim)
            .ok_or_else(|| Error::invalid(format!("expected `{key}` line, got `{line}`")))
    }

    fn values(&mut self, key: &str) -> Result<Vec<f64>> {
        self.keyed(key)?.split_whitespace().map(parse_f64).collect()
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        self.keyed(key)?
            .parse()
            .map_err(|e| Error::invalid(format!("bad `{key}` count: {e}")))
    }
}

fn write_standardizer(out: &mut String, prefix: &str, s: &Standardizer) {
    out.push_str(&format!("{prefix}means {}\n", join(&s.means)));
    out.push_str(&format!("{prefix}scales {}\n", join(&s.scales)));
}

fn read_standardizer(lines: &mut Lines<'_>, prefix: &str) -> Result<Standardizer> {
    let means = lines.values(&format!("{prefix}means"))?;
    let scales = lines.values(&format!("{prefix}scales"))?;
    if means.len() != scales.len() {
        return Err(Error::invalid("standardizer means and scales differ in length"));
    }
    Ok(Standardizer { means, scales })
}

fn write_lgkdr(out: &mut String, l: &LgkdrSummary) {
    write_standardizer(out, "", &l.standardizer);
    out.push_str(&format!("eigenvalues {}\n", join(&l.eigenvalues)));
    out.push_str(&format!("positive_weights {}\n", l.positive_weights));
    let text = l.projection.to_text();
    out.push_str(&format!("projection_lines {}\n", text.lines().count()));
    out.push_str(&text);
}

fn read_lgkdr(lines: &mut Lines<'_>) -> Result<LgkdrSummary> {
    let standardizer = read_standardizer(lines, "")?;
    let eigenvalues = lines.values("eigenvalues")?;
    let positive_weights = lines.count("positive_weights")?;
    let count = lines.count("projection_lines")?;
    let mut text = String::new();
    for _ in 0..count {
        text.push_str(lines.next("projection")?);
        text.push('\n');
    }
    let projection = ProjectionMatrix::from_text(&text)?;
    if projection.source_dim() != standardizer.dim() {
        return Err(Error::invalid("projection and standardizer dimensions disagree"));
    }
    Ok(LgkdrSummary {
        standardizer,
        projection,
        eigenvalues,
        positive_weights,
    })
}

impl SummaryConstructor {
    /// Versioned plain-text form with round-trip exact numbers.
    pub fn to_text(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        match self {
            SummaryConstructor::Identity { standardizer } => {
                out.push_str("kind identity\n");
                write_standardizer(&mut out, "", standardizer);
            }
            SummaryConstructor::LinearPosteriorMean(l) => {
                out.push_str("kind linear-posterior-mean\n");
                write_standardizer(&mut out, "", &l.standardizer);
                write_standardizer(&mut out, "output_", &l.output);
                let c = &l.fit.coefficients;
                out.push_str(&format!("coefficients {} {}\n", c.nrows(), c.ncols()));
                for row in c.row_iter() {
                    out.push_str(&join(&row.iter().copied().collect::<Vec<_>>()));
                    out.push('\n');
                }
                let deficient: Vec<String> = l.fit.deficient_columns.iter().map(usize::to_string).collect();
                out.push_str(&format!("deficient {}\n", deficient.join(" ")));
            }
            SummaryConstructor::Lgkdr(l) => {
                out.push_str("kind lgkdr\n");
                write_lgkdr(&mut out, l);
            }
            SummaryConstructor::SeparatedComposite { children } => {
                out.push_str("kind separated-composite\n");
                out.push_str(&format!("children {}\n", children.len()));
                for (j, child) in children {
                    out.push_str(&format!("child {j}\n"));
                    write_lgkdr(&mut out, child);
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines { inner: text.lines() };
        if lines.next("header")?.trim() != SUMMARY_HEADER {
            return Err(Error::invalid("unrecognized summary file header"));
        }
        match lines.keyed("kind")? {
            "identity" => Ok(SummaryConstructor::Identity {
                standardizer: read_standardizer(&mut lines, "")?,
            }),
            "linear-posterior-mean" => {
                let standardizer = read_standardizer(&mut lines, "")?;
                let output = read_standardizer(&mut lines, "output_")?;
                let shape: Vec<usize> = lines
                    .keyed("coefficients")?
                    .split_whitespace()
                    .map(|v| v.parse().map_err(|e| Error::invalid(format!("bad coefficient shape: {e}"))))
                    .collect::<Result<_>>()?;
                let [r, c] = shape[..] else {
                    return Err(Error::invalid("coefficient shape needs two numbers"));
                };
                let mut coefficients = DMatrix::zeros(r, c);
                for i in 0..r {
                    let vals: Vec<f64> = lines.next("coefficients")?.split_whitespace().map(parse_f64).collect::<Result<_>>()?;
                    if vals.len() != c {
                        return Err(Error::invalid("coefficient row has the wrong length"));
                    }
                    coefficients.set_row(i, &DVector::from_vec(vals).transpose());
                }
                let deficient_columns = lines
                    .keyed("deficient")?
                    .split_whitespace()
                    .map(|v| v.parse().map_err(|e| Error::invalid(format!("bad deficient column: {e}"))))
                    .collect::<Result<_>>()?;
                if r != standardizer.dim() + 1 || c != output.dim() {
                    return Err(Error::invalid("coefficient shape disagrees with standardizers"));
                }
                Ok(SummaryConstructor::LinearPosteriorMean(LinearSummary {
                    standardizer,
                    fit: RegressionFit {
                        coefficients,
                        deficient_columns,
                    },
                    output,
                }))
            }
            "lgkdr" => Ok(SummaryConstructor::Lgkdr(read_lgkdr(&mut lines)?)),
            "separated-composite" => {
                let count = lines.count("children")?;
                let mut children = Vec::with_capacity(count);
                for _ in 0..count {
                    let j = lines.count("child")?;
                    children.push((j, read_lgkdr(&mut lines)?));
                }
                if children.is_empty() {
                    return Err(Error::invalid("composite constructor without children"));
                }
                Ok(SummaryConstructor::SeparatedComposite { children })
            }
            other => Err(Error::invalid(format!("unknown constructor kind `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::KernelParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_rows(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn identity_examples() {
        let s = normal_rows(40, 3, 1) * 4.0;
        let c = fit_identity(&s).unwrap();
        let x = [0.3, -1.0, 2.0];
        assert_eq!(c.transform(&x).unwrap(), c.transform(&x).unwrap());
        assert_eq!(c.output_dim(), 3);
        let mean: Vec<f64> = s.column_iter().map(|col| col.mean()).collect();
        for v in c.transform(&mean).unwrap() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn linear_exact_recovery() {
        let s = normal_rows(60, 3, 2) * 3.0;
        let theta = DMatrix::from_fn(60, 1, |i, _| 2.0 * s[(i, 0)] + 1.0);
        let c = fit_linear_posterior_mean(&s, &theta, None, LinearOptions::default()).unwrap();
        let SummaryConstructor::LinearPosteriorMean(l) = &c else { panic!() };
        let raw = l.fit.raw_coefficients(&l.standardizer);
        assert!((raw[(0, 0)] - 1.0).abs() < 1e-8);
        assert!((raw[(1, 0)] - 2.0).abs() < 1e-8);
        assert!(raw[(2, 0)].abs() < 1e-8 && raw[(3, 0)].abs() < 1e-8);
        assert!(l.fit.deficient_columns.is_empty());
        for i in 0..60 {
            let row: Vec<f64> = s.row(i).iter().copied().collect();
            assert!((l.posterior_mean(&row).unwrap()[0] - theta[(i, 0)]).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_constant_response() {
        let s = normal_rows(30, 2, 3);
        let theta = DMatrix::from_element(30, 1, 4.25);
        let c = fit_linear_posterior_mean(&s, &theta, None, LinearOptions::default()).unwrap();
        let SummaryConstructor::LinearPosteriorMean(l) = &c else { panic!() };
        assert!((l.fit.coefficients[(0, 0)] - 4.25).abs() < 1e-10);
        assert!(l.fit.coefficients.rows(1, 2).amax() < 1e-10);
    }

    #[test]
    fn equal_weights_match_ordinary_least_squares() {
        let z = normal_rows(40, 2, 9);
        let theta = DMatrix::from_fn(40, 1, |i, _| 0.5 * z[(i, 0)] - z[(i, 1)] + 0.1 * (i % 3) as f64);
        let ols = weighted_least_squares(&z, &theta, &[1.0; 40]).unwrap();
        let scaled = weighted_least_squares(&z, &theta, &[0.37; 40]).unwrap();
        assert!((&ols.coefficients - &scaled.coefficients).amax() < 1e-12);
        // Zero-weight rows drop out entirely.
        let mut w = vec![1.0; 40];
        w[3] = 0.0;
        let dropped = weighted_least_squares(&z, &theta, &w).unwrap();
        let keep: Vec<usize> = (0..40).filter(|&i| i != 3).collect();
        let sub = weighted_least_squares(&z.select_rows(&keep), &theta.select_rows(&keep), &[1.0; 39]).unwrap();
        assert!((&dropped.coefficients - &sub.coefficients).amax() < 1e-12);
    }

    #[test]
    fn linear_reports_dependent_columns() {
        let base = normal_rows(25, 1, 4);
        let s = DMatrix::from_fn(25, 2, |i, _| base[(i, 0)]);
        let theta = DMatrix::from_fn(25, 1, |i, _| base[(i, 0)]);
        let c = fit_linear_posterior_mean(&s, &theta, None, LinearOptions::default()).unwrap();
        let SummaryConstructor::LinearPosteriorMean(l) = &c else { panic!() };
        assert_eq!(l.fit.deficient_columns, vec![1, 2]);
        assert!(l.fit.coefficients.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn lgkdr_full_rank_is_rotation() {
        let s = normal_rows(200, 3, 5);
        let theta = DMatrix::from_fn(200, 1, |i, _| s[(i, 0)].powi(3));
        let mut cfg = GkdrConfig::new(KernelParams::new(2.0, 1.0, 1e-3).unwrap(), TargetDim::Fixed(3));
        cfg.weight_quantile = 0.5;
        let obs = [0.1, 0.0, -0.2];
        let c = fit_lgkdr(&s, &theta, &obs, &cfg).unwrap();
        let SummaryConstructor::Lgkdr(l) = &c else { panic!() };
        for i in 0..20 {
            let row: Vec<f64> = s.row(i).iter().copied().collect();
            let z = l.standardizer.apply(&row).unwrap();
            let out = c.transform(&row).unwrap();
            let nz: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let no: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((nz - no).abs() < 1e-8);
        }
    }

    #[test]
    fn lgkdr_rejects_too_few_weighted_points() {
        let s = normal_rows(50, 2, 6);
        let theta = DMatrix::from_fn(50, 1, |i, _| s[(i, 0)]);
        let cfg = GkdrConfig::new(KernelParams::new(1.0, 1.0, 1e-3).unwrap(), TargetDim::Fixed(1));
        // 10% of 50 is 5 positive weights, below the floor of 10.
        assert!(fit_lgkdr(&s, &theta, &[0.0, 0.0], &cfg).is_err());
    }

    #[test]
    fn transform_rows_agrees_with_transform() {
        let s = normal_rows(120, 4, 7);
        let theta = DMatrix::from_fn(120, 2, |i, j| s[(i, j)] + 0.1 * s[(i, 3)]);
        let mut cfg = GkdrConfig::new(KernelParams::new(2.0, 1.0, 1e-3).unwrap(), TargetDim::Fixed(2));
        cfg.weight_quantile = 0.3;
        let obs: Vec<f64> = s.row(0).iter().copied().collect();
        let constructors = vec![
            fit_identity(&s).unwrap(),
            fit_linear_posterior_mean(&s, &theta, Some(&obs), LinearOptions { local: true, weight_quantile: 0.5 }).unwrap(),
            fit_lgkdr(&s, &theta, &obs, &cfg).unwrap(),
            fit_separated(&s, &theta, &obs, &cfg, &[1, 0]).unwrap(),
        ];
        for c in constructors {
            let rows = c.transform_rows(&s).unwrap();
            assert_eq!(rows.ncols(), c.output_dim());
            for i in [0, 17, 119] {
                let row: Vec<f64> = s.row(i).iter().copied().collect();
                let single = c.transform(&row).unwrap();
                for (a, b) in single.iter().zip(rows.row(i).iter()) {
                    assert!((a - b).abs() < 1e-12, "{:?}", c.kind());
                }
            }
            let back = SummaryConstructor::from_text(&c.to_text()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn separated_single_parameter_equals_lgkdr() {
        let s = normal_rows(150, 3, 8);
        let theta = DMatrix::from_fn(150, 1, |i, _| s[(i, 1)]);
        let mut cfg = GkdrConfig::new(KernelParams::new(2.0, 1.0, 1e-3).unwrap(), TargetDim::Fixed(1));
        cfg.weight_quantile = 0.3;
        let obs = [0.0, 0.0, 0.0];
        let plain = fit_lgkdr(&s, &theta, &obs, &cfg).unwrap();
        let sep = fit_separated(&s, &theta, &obs, &cfg, &[0]).unwrap();
        assert_eq!(sep.focus(0).unwrap(), plain);
        assert!(sep.focus(1).is_none());
    }

    #[test]
    fn from_text_rejects_garbage() {
        assert!(SummaryConstructor::from_text("lgkdr-summary v1\nkind nope\n").is_err());
        assert!(SummaryConstructor::from_text("").is_err());
    }
}
