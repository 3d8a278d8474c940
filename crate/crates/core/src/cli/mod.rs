//! Command-line runner: config parsing, the evaluate matrix, reports and the
//! sign-distortion demo.

pub mod config;
pub mod demo;
pub mod report;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "aimeval", version, about = "Saliency faithfulness evaluation with adversarial, zeroing and in-distribution masking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the task model and save weights, data splits and a manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the methods × operators × domains matrix.
    Evaluate {
        #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
        config: Option<PathBuf>,
        /// Replay the resolved config recorded in a run manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a finished evaluate run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show how rectifying a 10 Hz saliency trace moves its spectral peak.
    DemoSignDistortion {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        resolution: usize,
        #[arg(long, default_value_t = 1000.0)]
        sampling_rate: f64,
        #[arg(long, default_value_t = 10.0)]
        frequency: f64,
    },
}

fn resolve(mut cfg: RunConfig, seed: Option<u64>, out: Option<PathBuf>) -> RunConfig {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if out.is_some() {
        cfg.out = out;
    }
    cfg
}

/// Runs one parsed command, printing a short summary to stdout.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let cfg = resolve(RunConfig::load(&config)?, seed, out);
            let s = run::cmd_train(&cfg)?;
            println!("task {}: train accuracy {:.4}, test accuracy {:.4}", s.task, s.train_accuracy, s.test_accuracy);
        }
        Command::Evaluate { config, manifest, seed, out } => {
            let cfg = match (config, manifest) {
                (Some(c), _) => RunConfig::load(&c)?,
                (None, Some(m)) => run::RunManifest::load(&m)?.config,
                (None, None) => return Err(Error::Config("evaluate needs --config or --manifest".into())),
            };
            let r = run::cmd_evaluate(&resolve(cfg, seed, out))?;
            if let Some(e) = r.metrics.epsilon {
                println!("epsilon {e}");
            }
            for c in &r.metrics.curves {
                match c.metrics {
                    Some(m) => println!("{:<8} {:<9} {:<7} AOC {:.4} ABC {:.4} AUC {:.4}", c.operator, c.domain.name(), c.method, m.aoc, m.abc, m.auc),
                    None => println!("{:<8} {:<9} {:<7} {}", c.operator, c.domain.name(), c.method, c.error.as_deref().unwrap_or("")),
                }
            }
            println!("wrote {}", r.dir.display());
        }
        Command::Report { run, out } => {
            let (s, dir) = report::cmd_report(&run, out.as_deref())?;
            print!("{}", report::summary_text(&s));
            println!("wrote {}", dir.display());
        }
        Command::DemoSignDistortion { out, resolution, sampling_rate, frequency } => {
            let d = demo::cmd_demo(&demo::DemoConfig { resolution, sampling_rate, frequency }, &out)?;
            println!("signed peak {} Hz, absolute peak {} Hz", d.peak_signed, d.peak_absolute);
        }
    }
    Ok(())
}
