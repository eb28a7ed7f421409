use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use aptomo::io::{load_measurements, load_volume};
use aptomo::metrics::serialize_db;
use aptomo::verify::{adjoint_suite, prox_suite};
use aptomo_cli::runner::score;
use aptomo_cli::{run_experiment, simulate, ExperimentConfig, Simulation};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aptomo", version, about = "Joint ptychography-tomography experiments")]
struct Cli {
    /// Worker threads (default: APTOMO_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate data and run the configured reconstructions.
    Run(ConfigArgs),
    /// Only simulate: write the config echo, measurements and truth slices.
    Simulate(ConfigArgs),
    /// Print the resolved configuration.
    Config(ConfigArgs),
    /// Score a saved volume against the configured ground truth.
    Metrics {
        #[command(flatten)]
        config: ConfigArgs,
        /// Volume written by `run`.
        #[arg(long)]
        volume: PathBuf,
        /// Measurement archive; re-simulated from the config when absent.
        #[arg(long)]
        measurements: Option<PathBuf>,
    },
    /// Randomized adjoint and proximal-map checks.
    Selfcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of `section.key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Start from the 32³ smoke configuration instead of the full grid.
    #[arg(long)]
    smoke: bool,
    /// Override one key, e.g. `--set noise.eta=0.1`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (same as `--set output.directory=...`).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = if self.smoke {
            ExperimentConfig::smoke()
        } else {
            ExperimentConfig::default()
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_text(&text).with_context(|| path.display().to_string())?;
        }
        for s in &self.sets {
            let Some((k, v)) = s.split_once('=') else {
                bail!("--set expects KEY=VALUE, got '{s}'");
            };
            cfg.set(k, v)?;
        }
        if let Some(dir) = &self.out {
            cfg.directory = dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match std::env::var("APTOMO_THREADS") {
            Ok(v) => Some(v.parse().with_context(|| format!("APTOMO_THREADS = '{v}'"))?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    Ok(())
}

fn selfcheck(trials: usize) -> Result<bool> {
    let mut ok = true;
    for (c, tol) in adjoint_suite(trials, 32, 1)
        .into_iter()
        .map(|c| {
            let tol = if c.name == "F unitarity" { 1e-12 } else { 1e-10 };
            (c, tol)
        })
        .chain(prox_suite(trials * 100, 2).into_iter().map(|c| {
            let tol = if c.name == "fixed point" { 1e-12 } else { 1e-8 };
            (c, tol)
        }))
    {
        let pass = c.worst <= tol;
        ok &= pass;
        println!(
            "{} {:<16} worst {:.3e} (tolerance {:.0e}, {} trials)",
            if pass { "PASS" } else { "FAIL" },
            c.name,
            c.worst,
            tol,
            c.trials
        );
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    // configuration problems exit with 2, failures while running with 1
    let config = |args: &ConfigArgs| args.resolve().map_err(|e| (2u8, e));
    let result: std::result::Result<bool, (u8, anyhow::Error)> = (|| match &cli.command {
        Command::Config(args) => {
            print!("{}", config(args)?.to_text());
            Ok(true)
        }
        Command::Simulate(args) => {
            let cfg = config(args)?;
            simulate(&cfg, &cfg.directory).map_err(|e| (1, e))?;
            Ok(true)
        }
        Command::Run(args) => {
            let cfg = config(args)?;
            let summary = run_experiment(&cfg, &cfg.directory).map_err(|e| (1, e))?;
            print!("{}", summary.metrics_csv());
            Ok(true)
        }
        Command::Metrics {
            config: args,
            volume,
            measurements,
        } => {
            let cfg = config(args)?;
            let run = || -> Result<()> {
                let mut sim = Simulation::new(&cfg)?;
                if let Some(path) = measurements {
                    sim.data = load_measurements(path)?;
                }
                let u = load_volume(volume)?;
                let s = score(&u, &sim, cfg.snr_window)?;
                let (db, flag) = serialize_db(s.snr.db);
                println!("metric,value,flags");
                println!("snr_db,{db:e},{flag}");
                println!("r_factor,{:e},", s.r_factor);
                Ok(())
            };
            run().map_err(|e| (1, e))?;
            Ok(true)
        }
        Command::Selfcheck { trials } => selfcheck(*trials).map_err(|e| (1, e)),
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err((code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
