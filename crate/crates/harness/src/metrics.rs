use lgkdr_core::{Error, Result};

/// Per-parameter mean squared deviation of the draws from `truth`, weighted
/// by `weights` (normalized here) when given.
pub fn mse(draws: &[Vec<f64>], weights: Option<&[f64]>, truth: &[f64]) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::invalid("MSE of an empty sample"));
    }
    if draws.iter().any(|d| d.len() != truth.len()) {
        return Err(Error::invalid("draw and truth dimensions differ"));
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != draws.len() {
                return Err(Error::invalid("weight count differs from draw count"));
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) || w.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::invalid("weights must be nonnegative with positive sum"));
            }
            w.iter().map(|v| v / total).collect()
        }
        None => vec![1.0 / draws.len() as f64; draws.len()],
    };
    Ok((0..truth.len())
        .map(|j| draws.iter().zip(&w).map(|(d, wi)| wi * (d[j] - truth[j]).powi(2)).sum())
        .collect())
}

/// Mean of per-observation MSE vectors.
pub fn amse(per_observation: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = per_observation.first() else {
        return Err(Error::invalid("AMSE over zero observations"));
    };
    if per_observation.iter().any(|m| m.len() != first.len()) {
        return Err(Error::invalid("MSE vectors differ in length"));
    }
    let n = per_observation.len() as f64;
    Ok((0..first.len())
        .map(|j| per_observation.iter().map(|m| m[j]).sum::<f64>() / n)
        .collect())
}

/// Median of per-observation MSEs, per parameter.
pub fn median_mse(per_observation: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = per_observation.first() else {
        return Err(Error::invalid("median over zero observations"));
    };
    Ok((0..first.len())
        .map(|j| {
            let mut v: Vec<f64> = per_observation.iter().map(|m| m[j]).collect();
            v.sort_by(f64::total_cmp);
            let k = v.len() / 2;
            if v.len() % 2 == 1 {
                v[k]
            } else {
                0.5 * (v[k - 1] + v[k])
            }
        })
        .collect())
}
