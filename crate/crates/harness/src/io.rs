//! File persistence: atomic writes, the frozen-pool cache and CSV tables.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use lgkdr_core::format::{fmt_f64, parse_f64};
use lgkdr_core::simulators::SimulatedSet;

use crate::error::{HarnessError, Result};

/// Write through a temporary sibling and rename, so readers never see a
/// partially written file.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(HarnessError::io(parent))?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, contents).map_err(HarnessError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(HarnessError::io(path))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(HarnessError::io(path))
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt_f64).collect::<Vec<_>>().join(",")
}

const POOL_MAGIC: &str = "# lgkdr-pool";

/// Pool CSV: a `# lgkdr-pool <hash>` line, a header, then one row per
/// dataset with its index, seed, parameters and initial summaries.
pub fn pool_to_csv(pool: &SimulatedSet, hash: &str, parameter_names: &[String]) -> String {
    let mut out = String::with_capacity(pool.len() * (pool.thetas.ncols() + pool.summaries.ncols()) * 20);
    out.push_str(&format!("{POOL_MAGIC} {hash}\n"));
    let mut header = vec!["index".to_string(), "seed".to_string()];
    header.extend(parameter_names.iter().cloned());
    header.extend((0..pool.summaries.ncols()).map(|k| format!("s{k}")));
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..pool.len() {
        out.push_str(&format!("{},{},", i, pool.seeds[i]));
        out.push_str(&join(pool.thetas.row(i).iter().copied()));
        out.push(',');
        out.push_str(&join(pool.summaries.row(i).iter().copied()));
        out.push('\n');
    }
    out
}

/// Parse a pool CSV, returning `None` when its hash line does not match.
pub fn pool_from_csv(text: &str, hash: &str, n_params: usize, path: &Path) -> Result<Option<SimulatedSet>> {
    let bad = |message: String| HarnessError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first == format!("{POOL_MAGIC} {hash}") => {}
        _ => return Ok(None),
    }
    let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
    let cols = header.split(',').count();
    if cols < 2 + n_params {
        return Err(bad("too few columns".into()));
    }
    let (mut seeds, mut thetas, mut summaries) = (Vec::new(), Vec::new(), Vec::new());
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(bad(format!("row {row} has {} fields, expected {cols}", fields.len())));
        }
        seeds.push(fields[1].parse::<u64>().map_err(|e| bad(format!("row {row}: {e}")))?);
        let values: Vec<f64> = fields[2..]
            .iter()
            .map(|f| parse_f64(f))
            .collect::<lgkdr_core::Result<_>>()
            .map_err(|e| bad(format!("row {row}: {e}")))?;
        thetas.push(values[..n_params].to_vec());
        summaries.push(values[n_params..].to_vec());
    }
    SimulatedSet::from_rows(seeds, thetas, summaries, None)
        .map(Some)
        .map_err(|e| bad(e.to_string()))
}

/// Frozen simulation pools keyed by content hash, held in memory and
/// optionally mirrored to `dir/pool-<hash>.csv`.
pub struct PoolStore {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Arc<SimulatedSet>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolSource {
    Generated,
    Memory,
    Disk,
}

impl PoolStore {
    pub fn in_memory() -> Self {
        PoolStore {
            dir: None,
            memory: Mutex::new(HashMap::new()),
        }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        PoolStore {
            dir: Some(dir.into()),
            memory: Mutex::new(HashMap::new()),
        }
    }

    pub fn path_for(&self, hash: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("pool-{hash}.csv")))
    }

    pub fn get_or_create(
        &self,
        hash: &str,
        parameter_names: &[String],
        make: impl FnOnce() -> Result<SimulatedSet>,
    ) -> Result<(Arc<SimulatedSet>, PoolSource)> {
        if let Some(pool) = self.memory.lock().expect("pool cache lock").get(hash) {
            return Ok((pool.clone(), PoolSource::Memory));
        }
        if let Some(path) = self.path_for(hash) {
            if path.exists() {
                let text = read_to_string(&path)?;
                if let Some(pool) = pool_from_csv(&text, hash, parameter_names.len(), &path)? {
                    let pool = Arc::new(pool);
                    self.memory.lock().expect("pool cache lock").insert(hash.to_string(), pool.clone());
                    return Ok((pool, PoolSource::Disk));
                }
            }
        }
        let pool = Arc::new(make()?);
        if let Some(path) = self.path_for(hash) {
            atomic_write(&path, pool_to_csv(&pool, hash, parameter_names).as_bytes())?;
        }
        self.memory.lock().expect("pool cache lock").insert(hash.to_string(), pool.clone());
        Ok((pool, PoolSource::Generated))
    }
}

/// One posterior draw as written to `posterior_<obs>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorRow {
    pub theta: Vec<f64>,
    pub weight: f64,
    pub distance: f64,
    /// Pool row (rejection) or particle slot (SMC).
    pub index: usize,
}

pub fn posterior_to_csv(rows: &[PosteriorRow], parameter_names: &[String]) -> String {
    let mut out = parameter_names.join(",");
    out.push_str(",weight,distance,index\n");
    for r in rows {
        out.push_str(&join(r.theta.iter().copied()));
        out.push_str(&format!(",{},{},{}\n", fmt_f64(r.weight), fmt_f64(r.distance), r.index));
    }
    out
}

pub fn posterior_from_csv(text: &str, path: &Path) -> Result<(Vec<String>, Vec<PosteriorRow>)> {
    let bad = |message: String| HarnessError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| bad("empty posterior file".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    if header.len() < 4 || header[header.len() - 3..] != ["weight", "distance", "index"] {
        return Err(bad("unexpected posterior header".into()));
    }
    let p = header.len() - 3;
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(bad(format!("row {k} has {} fields", f.len())));
        }
        let num = |s: &str| parse_f64(s).map_err(|e| bad(format!("row {k}: {e}")));
        rows.push(PosteriorRow {
            theta: f[..p].iter().map(|s| num(s)).collect::<Result<_>>()?,
            weight: num(f[p])?,
            distance: num(f[p + 1])?,
            index: f[p + 2].parse().map_err(|e| bad(format!("row {k}: {e}")))?,
        });
    }
    Ok((header[..p].to_vec(), rows))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| HarnessError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
