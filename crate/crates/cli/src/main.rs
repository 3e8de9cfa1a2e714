use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dualsourcing::bounds::lower_bound;
use dualsourcing::dp;
use dualsourcing::experiment::{
    benchmark_instance, generate_testbed, instance_rows, run_benchmark, run_longlead, run_sweep, ExperimentConfig,
};
use dualsourcing::report::{write_csv, write_json};
use dualsourcing::sim::simulate_with_trace;
use dualsourcing::{Error, Result};

/// Dual sourcing inventory experiments.
#[derive(Parser, Debug)]
#[command(name = "dualsource", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: config `out_dir`, else `results`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for instance-level parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Replace golden-section search by a grid of this many points.
    #[arg(long, global = true, value_name = "POINTS")]
    grid_fallback: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the configured policy on the configured instance.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Write this many periods to trace.csv.
        #[arg(long)]
        trace: Option<usize>,
    },
    /// Optimize each configured family on the configured instance.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Optimize every family on every test-bed instance.
    Benchmark {
        #[command(flatten)]
        common: Common,
    },
    /// Vary the lead time difference of the configured instance.
    Longlead {
        #[command(flatten)]
        common: Common,
    },
    /// Print the lower bound of the configured instance as JSON.
    Bounds {
        #[command(flatten)]
        common: Common,
    },
    /// Scale p and c_e and compare optimized costs with the lower bound.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the truncated MDP of a small instance exactly.
    DpSolve {
        #[command(flatten)]
        common: Common,
    },
    /// Write the test-bed instances.
    Testbed {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Evaluate { common, .. }
            | Command::Optimize { common }
            | Command::Benchmark { common }
            | Command::Longlead { common }
            | Command::Bounds { common }
            | Command::Sweep { common }
            | Command::DpSolve { common }
            | Command::Testbed { common } => common,
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text, &path.display().to_string())?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(points) = common.grid_fallback {
        cfg.optimizer.grid_points = Some(points);
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    cfg.simulation_config().validate()?;
    cfg.optimizer.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value).map_err(|e| Error::Config(e.to_string()))?);
    Ok(())
}

fn wrote(path: &Path) {
    log::info!("wrote {}", path.display());
}

fn run(command: &Command) -> Result<()> {
    let common = command.common();
    if let Some(n) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
    }
    let cfg = load_config(common)?;
    let hash = cfg.hash();
    let sim = cfg.simulation_config();
    let dir = out_dir(&cfg);

    match command {
        Command::Evaluate { trace, .. } => {
            let inst = cfg.instance()?;
            let policy = cfg
                .policy
                .ok_or_else(|| Error::Config("evaluate needs a `policy` section".into()))?;
            let rows = trace.unwrap_or(cfg.trace_periods);
            let (est, trace_rows) = simulate_with_trace(&policy, &inst, &sim, rows)?;
            #[derive(Serialize)]
            struct Out<'a> {
                policy: &'a dualsourcing::policy::PolicyParams,
                #[serde(flatten)]
                estimate: &'a dualsourcing::sim::CostEstimate,
                seed: u64,
                config_hash: &'a str,
            }
            let out = Out { policy: &policy, estimate: &est, seed: cfg.seed, config_hash: &hash };
            let path = dir.join("evaluate.json");
            write_json(&path, &out)?;
            wrote(&path);
            if rows > 0 {
                let path = dir.join("trace.csv");
                write_csv(&path, &trace_rows)?;
                wrote(&path);
            }
            print_json(&out)
        }
        Command::Optimize { .. } => {
            let spec = cfg
                .instance
                .clone()
                .ok_or_else(|| Error::Config("config has no `instance` section".into()))?;
            spec.build()?;
            let rows = benchmark_instance(0, &spec, None, &cfg.families, &sim, &cfg.optimizer, &hash);
            let path = dir.join("results.csv");
            write_csv(&path, &rows)?;
            wrote(&path);
            for r in &rows {
                print_json(r)?;
            }
            Ok(())
        }
        Command::Benchmark { .. } => {
            let testbed = generate_testbed(&cfg.testbed, cfg.seed)?;
            let path = dir.join("instances.csv");
            write_csv(&path, &instance_rows(&testbed, cfg.seed, &hash))?;
            wrote(&path);
            let report = run_benchmark(&testbed, &cfg.families, &sim, &cfg.optimizer, &hash);
            let path = dir.join("results.csv");
            write_csv(&path, &report.results)?;
            wrote(&path);
            let path = dir.join("aggregates.csv");
            write_csv(&path, &report.aggregates)?;
            wrote(&path);
            let failures = report.results.iter().filter(|r| !r.error.is_empty()).count();
            if failures > 0 {
                log::warn!("{failures} of {} rows failed; see the error column", report.results.len());
            }
            Ok(())
        }
        Command::Longlead { .. } => {
            let inst = cfg.instance()?;
            let spec = cfg
                .longlead
                .as_ref()
                .ok_or_else(|| Error::Config("longlead needs a `longlead` section".into()))?;
            let rows = run_longlead(&inst, &spec.l_values, &cfg.families, &sim, &cfg.optimizer, &hash)?;
            let path = dir.join("results.csv");
            write_csv(&path, &rows)?;
            wrote(&path);
            Ok(())
        }
        Command::Bounds { .. } => {
            let inst = cfg.instance()?;
            #[derive(Serialize)]
            struct Out<'a> {
                lower_bound: f64,
                seed: u64,
                config_hash: &'a str,
            }
            print_json(&Out { lower_bound: lower_bound(&inst)?, seed: cfg.seed, config_hash: &hash })
        }
        Command::Sweep { .. } => {
            let inst = cfg.instance()?;
            let spec = cfg
                .sweep
                .as_ref()
                .ok_or_else(|| Error::Config("sweep needs a `sweep` section".into()))?;
            let rows = run_sweep(&inst, &spec.scales, &cfg.families, &sim, &cfg.optimizer, &hash)?;
            let path = dir.join("sweep.csv");
            write_csv(&path, &rows)?;
            wrote(&path);
            Ok(())
        }
        Command::DpSolve { .. } => {
            let inst = cfg.instance()?;
            let mut sol = dp::solve(&inst, &cfg.dp)?;
            sol.policy.clear();
            let path = dir.join("dp.json");
            write_json(&path, &sol)?;
            wrote(&path);
            print_json(&sol)
        }
        Command::Testbed { .. } => {
            let testbed = generate_testbed(&cfg.testbed, cfg.seed)?;
            let path = dir.join("instances.csv");
            write_csv(&path, &instance_rows(&testbed, cfg.seed, &hash))?;
            wrote(&path);
            println!("{}", testbed.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
