//! Experiment runner CLI: configure scenarios, train and evaluate policies,
//! and write reproducible CSV artifacts.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use livemap_core::config::RunConfig;
use livemap_core::control::AlgoKind;
use livemap_core::experiment::{self, SweepParam};

#[derive(Parser)]
#[command(
    name = "livemap",
    about = "Deterministic simulator of crowdsourced dynamic-map construction over automotive edge computing",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write tasks.csv, coverage.csv, summary.csv.
    Run {
        /// Scenario configuration file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Algorithm: livemap | livemap-dist | livemap-lite | eo | lp | ro | rm.
        #[arg(long)]
        algo: String,
        /// Master seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory for the CSV artifacts.
        #[arg(long)]
        out: PathBuf,
        /// Trained policy checkpoint (the livemap algorithms act on a fresh
        /// untrained policy without one).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train the shared Q-policy inside the simulator.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Training mode: central | distributed.
        #[arg(long, default_value = "central")]
        mode: String,
        /// Training steps to add.
        #[arg(long, default_value_t = 5000)]
        steps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Where to write the checkpoint (a .schema.txt sidecar documents
        /// the state layout).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Resume from an existing checkpoint, continuing the step counter.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Sweep a scenario parameter across values for one or more algorithms.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Parameter to sweep: vehicles | bandwidth | servers.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 25,50,100.
        #[arg(long)]
        values: String,
        /// Comma-separated algorithms.
        #[arg(long, default_value = "eo")]
        algo: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Parse and validate a configuration file.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            algo,
            seed,
            out,
            checkpoint,
        } => {
            let cfg = RunConfig::from_path(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let algo = AlgoKind::parse(&algo)?;
            let metrics = experiment::run(&cfg, algo, seed, Some(&out), checkpoint.as_deref())?;
            println!(
                "{}: {} tasks, mean latency {:.6} s, p95 {:.6} s, coverage mean {:.4}, fulfillment {:.4}",
                metrics.algorithm,
                metrics.tasks.len(),
                metrics.mean_latency_s(),
                metrics.latency_quantile(0.95),
                metrics.coverage_mean(),
                metrics.fulfillment_rate(),
            );
            println!("artifacts written to {}", out.display());
        }
        Command::Train {
            config,
            mode,
            steps,
            seed,
            checkpoint,
            resume,
        } => {
            let cfg = RunConfig::from_path(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let mode = match mode.as_str() {
                "central" => AlgoKind::Livemap,
                "distributed" => AlgoKind::LivemapDist,
                other => bail!("unknown training mode `{other}` (central|distributed)"),
            };
            let report =
                experiment::train(&cfg, mode, steps, seed, &checkpoint, resume.as_deref())?;
            println!(
                "trained {} steps over {:.1} simulated seconds (epsilon {:.4}, last loss {:.6})",
                report.completed_steps, report.sim_seconds, report.final_epsilon, report.final_loss
            );
            println!("checkpoint written to {}", report.checkpoint.display());
        }
        Command::Sweep {
            config,
            param,
            values,
            algo,
            seed,
            out,
            checkpoint,
        } => {
            let cfg = RunConfig::from_path(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let param = SweepParam::parse(&param)?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| v.trim().parse::<f64>().context("parsing sweep value"))
                .collect::<Result<_>>()?;
            let algos: Vec<AlgoKind> = algo
                .split(',')
                .map(|a| AlgoKind::parse(a.trim()).map_err(Into::into))
                .collect::<Result<_>>()?;
            let rows = experiment::sweep(
                &cfg,
                param,
                &values,
                &algos,
                seed,
                checkpoint.as_deref(),
                Some(&out),
            )?;
            println!("parameter,value,algorithm,mean_latency_s,p95_latency_s,fulfillment_rate");
            for r in rows {
                println!(
                    "{},{:.6},{},{:.6},{:.6},{:.6}",
                    r.parameter,
                    r.value,
                    r.algorithm,
                    r.mean_latency_s,
                    r.p95_latency_s,
                    r.fulfillment_rate
                );
            }
            println!("table written to {}", out.join("sweep.csv").display());
        }
        Command::ValidateConfig { config } => {
            let cfg = RunConfig::from_path(&config)
                .with_context(|| format!("validating {}", config.display()))?;
            println!(
                "ok: schema_version {}, {} vehicles, {} servers, beta {}",
                cfg.schema_version, cfg.world.vehicle_count, cfg.world.server_count, cfg.world.beta
            );
        }
    }
    Ok(())
}
