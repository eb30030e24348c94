use crate::error::{HarnessError, Result};
use crate::metrics::median_mse;
use crate::pipeline::RunRecord;

/// AMSE table for runs over the same observed datasets, one row per run.
pub fn compare_report(records: &[RunRecord]) -> Result<String> {
    let Some(first) = records.first() else {
        return Err(HarnessError::Config("nothing to compare".into()));
    };
    for r in &records[1..] {
        if r.observation_seeds != first.observation_seeds {
            return Err(HarnessError::Config(format!(
                "runs '{}' and '{}' use different observation seeds",
                first.label, r.label
            )));
        }
        if r.parameter_names != first.parameter_names {
            return Err(HarnessError::Config(format!(
                "runs '{}' and '{}' estimate different parameters",
                first.label, r.label
            )));
        }
    }
    let width = records.iter().map(|r| r.label.len()).max().unwrap_or(0).max("strategy".len());
    let mut out = format!(
        "model {}, {} observations, AMSE (median MSE in brackets)\n",
        first.model,
        first.observation_seeds.len()
    );
    out.push_str(&format!("{:<width$}  {:<9}  {:<8}", "strategy", "sampler", "pool"));
    for name in &first.parameter_names {
        out.push_str(&format!("  {name:>22}"));
    }
    out.push('\n');
    for r in records {
        let pool = r.pool_hash.as_deref().map_or("-", |h| &h[..h.len().min(8)]);
        out.push_str(&format!("{:<width$}  {:<9}  {:<8}", r.label, r.sampler, pool));
        let median = median_mse(&r.mse).map_err(HarnessError::stage("compare"))?;
        for (a, m) in r.amse.iter().zip(&median) {
            out.push_str(&format!("  {:>22}", format!("{a:.4e} [{m:.4e}]")));
        }
        out.push('\n');
    }
    Ok(out)
}
