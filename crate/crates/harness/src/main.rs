use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lgkdr_core::simulators::Model;
use lgkdr_harness::config::{ExperimentConfig, SamplerConfig, StrategyConfig};
use lgkdr_harness::error::{HarnessError, Result};
use lgkdr_harness::io::{atomic_write, pool_to_csv, posterior_from_csv, read_json, read_to_string, write_json, PoolStore};
use lgkdr_harness::metrics::{amse, mse};
use lgkdr_harness::pipeline::{
    cross_validate, frozen_pool, observations, observations_to_csv, prepare, run_experiment, training_set,
    write_outputs, RunRecord,
};
use lgkdr_harness::{repro, report};

#[derive(Parser)]
#[command(name = "lgkdr", version, about = "ABC with local gradient kernel dimension reduction summaries")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory of cached frozen pools; runs then write `pool.ref` instead of `pool.csv`.
    #[arg(long, global = true)]
    pool_cache: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate observed datasets and the frozen pool (or training set).
    Simulate,
    /// Cross-validate the LGKDR kernel.
    Cv,
    /// Fit the summary constructor for every observation.
    FitSummary,
    /// Rejection ABC on the frozen pool.
    Reject,
    /// SMC-ABC.
    Smc,
    /// Recompute MSE and AMSE from a run directory's posterior files.
    Evaluate {
        /// Run directory; defaults to --out.
        run: Option<PathBuf>,
    },
    /// Tabulate AMSE across run directories.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Run a canned desk-scale experiment.
    Repro {
        #[arg(value_parser = repro::NAMES)]
        name: String,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| HarnessError::Config("--config is required for this command".into()))?;
    let mut cfg = ExperimentConfig::from_json(&read_to_string(path)?)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn store(cli: &Cli) -> PoolStore {
    match &cli.pool_cache {
        Some(dir) => PoolStore::on_disk(dir),
        None => PoolStore::in_memory(),
    }
}

fn simulate(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let model = cfg.model.build();
    let model: &dyn Model = model.as_ref();
    let names = model.spec().parameter_names;
    atomic_write(&cli.out.join("config.json"), cfg.to_json().as_bytes())?;
    let obs = observations(model, cfg.seed, cfg.sizes.n_obs)?;
    atomic_write(&cli.out.join("observations.csv"), observations_to_csv(&obs, &names).as_bytes())?;
    match cfg.sampler {
        SamplerConfig::Rejection { pool_size, .. } => {
            let store = store(cli);
            let (pool, hash, _) = frozen_pool(&cfg, model, pool_size, &store)?;
            if store.path_for(&hash).is_none() {
                atomic_write(&cli.out.join("pool.csv"), pool_to_csv(&pool, &hash, &names).as_bytes())?;
            }
            println!("pool {hash} ({} datasets)", pool.len());
        }
        SamplerConfig::Smc(_) => {
            let training = training_set(&cfg, model)?;
            let hash = format!("training-{}", &cfg.hash()[..16]);
            atomic_write(&cli.out.join("training.csv"), pool_to_csv(&training, &hash, &names).as_bytes())?;
            println!("training set of {} datasets", training.len());
        }
    }
    Ok(())
}

fn cv(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let StrategyConfig::Lgkdr(l) = &cfg.strategy else {
        return Err(HarnessError::Config("cross-validation applies to the lgkdr strategy only".into()));
    };
    let model = cfg.model.build();
    let training = training_set(&cfg, model.as_ref())?;
    let report = cross_validate(&cfg, l, model.as_ref(), &training)?;
    write_json(&cli.out.join("cv.json"), &report)?;
    let k = report.selected;
    println!("selected sigma_s={} sigma_theta={} eps_n={}", k.sigma_s, k.sigma_theta, k.eps_n);
    Ok(())
}

fn fit_summary(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let model = cfg.model.build();
    let obs = observations(model.as_ref(), cfg.seed, cfg.sizes.n_obs)?;
    let (prepared, cv, _) = prepare(&cfg, model.as_ref())?;
    if let Some(cv) = &cv {
        write_json(&cli.out.join("cv.json"), cv)?;
    }
    for o in &obs {
        let c = prepared.constructor(&o.summary)?;
        atomic_write(&cli.out.join(format!("summary_{}.txt", o.index)), c.to_text().as_bytes())?;
        println!("observation {}: {} summaries", o.index, c.output_dim());
    }
    Ok(())
}

fn run(cli: &Cli, want_smc: bool) -> Result<()> {
    let cfg = load_config(cli)?;
    if matches!(cfg.sampler, SamplerConfig::Smc(_)) != want_smc {
        return Err(HarnessError::Config(format!(
            "config sampler does not match the '{}' command",
            if want_smc { "smc" } else { "reject" }
        )));
    }
    let store = store(cli);
    let out = run_experiment(&cfg, &store)?;
    write_outputs(&cli.out, &cfg, &out, &store)?;
    print_amse(&out.record);
    Ok(())
}

fn print_amse(r: &RunRecord) {
    let cells: Vec<String> = r
        .parameter_names
        .iter()
        .zip(&r.amse)
        .map(|(n, a)| format!("{n}={a:.4e}"))
        .collect();
    println!("{}: AMSE {}", r.label, cells.join(" "));
}

fn evaluate(dir: &Path) -> Result<()> {
    let record: RunRecord = read_json(&dir.join("metrics.json"))?;
    let mut per_obs = Vec::new();
    for (j, truth) in record.true_thetas.iter().enumerate() {
        let path = dir.join(format!("posterior_{j}.csv"));
        let (_, rows) = posterior_from_csv(&read_to_string(&path)?, &path)?;
        let draws: Vec<Vec<f64>> = rows.iter().map(|r| r.theta.clone()).collect();
        let weights: Vec<f64> = rows.iter().map(|r| r.weight).collect();
        per_obs.push(mse(&draws, Some(&weights), truth).map_err(HarnessError::stage("evaluate"))?);
    }
    let amse = amse(&per_obs).map_err(HarnessError::stage("evaluate"))?;
    let evaluated = RunRecord {
        mse: per_obs,
        amse,
        ..record
    };
    write_json(&dir.join("evaluation.json"), &evaluated)?;
    print_amse(&evaluated);
    Ok(())
}

fn compare(cli: &Cli, runs: &[PathBuf]) -> Result<()> {
    let records = runs
        .iter()
        .map(|d| read_json(&d.join("metrics.json")))
        .collect::<Result<Vec<RunRecord>>>()?;
    let table = report::compare_report(&records)?;
    atomic_write(&cli.out.join("compare.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn run_repro(cli: &Cli, name: &str) -> Result<()> {
    let seed = cli.seed.unwrap_or(1);
    let store = PoolStore::on_disk(cli.pool_cache.clone().unwrap_or_else(|| cli.out.join("pool-cache")));
    let mut records = Vec::new();
    for (k, cfg) in repro::configs(name, seed)?.into_iter().enumerate() {
        let dir = cli.out.join(format!("{k}-{}", slug(&cfg.label())));
        let out = run_experiment(&cfg, &store)?;
        write_outputs(&dir, &cfg, &out, &store)?;
        print_amse(&out.record);
        records.push(out.record);
    }
    let table = report::compare_report(&records)?;
    atomic_write(&cli.out.join("compare.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn slug(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    s.split('-').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("-")
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate => simulate(cli),
        Command::Cv => cv(cli),
        Command::FitSummary => fit_summary(cli),
        Command::Reject => run(cli, false),
        Command::Smc => run(cli, true),
        Command::Evaluate { run } => evaluate(run.as_deref().unwrap_or(&cli.out)),
        Command::Compare { runs } => compare(cli, runs),
        Command::Repro { name } => run_repro(cli, name),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
