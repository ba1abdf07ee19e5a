use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eenas::model::Genome;
use eenas::report::{run_eval, run_report, run_search, run_train_one, RunConfig, RunPaths};

#[derive(Parser)]
#[command(
    name = "eenas",
    version,
    about = "Constrained architecture search for early-exit CNNs"
)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; falls back to the config, then $EENAS_OUT, then ./eenas-out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Archive to resume a search from.
    #[arg(long, global = true)]
    resume: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the full surrogate-assisted search.
    Search,
    /// Trains and evaluates one genome, e.g. `1-3-16,2-5-24,1-3-16,3-5-32/1010`.
    TrainOne {
        #[arg(long)]
        genome: String,
    },
    /// Re-evaluates a checkpoint under explicit thresholds or the configured constraints.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    /// Regenerates tables and plots from an archive.
    Report {
        #[arg(long)]
        archive: Option<PathBuf>,
        #[arg(long)]
        entry: Option<usize>,
    },
}

fn run(cli: Cli) -> eenas::Result<()> {
    let config = cli
        .config
        .ok_or_else(|| eenas::Error::Contract("--config is required".into()))?;
    let mut cfg = RunConfig::load(&config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let paths = RunPaths::new(cfg.out_dir(cli.out.as_deref()));
    if cli.resume.is_some() && !matches!(cli.command, Command::Search) {
        log::warn!("--resume only applies to search");
    }
    match cli.command {
        Command::Search => {
            let outcome = run_search(&cfg, &paths, cli.resume.as_deref())?;
            println!(
                "{} candidates in {}",
                outcome.archive.len(),
                paths.archive().display()
            );
            for p in &outcome.selection {
                let e = &outcome.archive.entries()[p.id];
                println!(
                    "selected {} {}  F_A {:.4}  F_M {:.0}  admissible {}",
                    e.id, e.genome, e.accuracy, e.macs, p.admissible
                );
            }
        }
        Command::TrainOne { genome } => {
            let ev = run_train_one(&cfg, &paths, &Genome::parse(&genome)?)?;
            println!(
                "B={} thresholds={:?} F_A={:.4} F_M={:.0} U={:?}",
                ev.gamma.len(),
                ev.thresholds,
                ev.accuracy,
                ev.macs,
                ev.utilization
            );
        }
        Command::Eval {
            checkpoint,
            thresholds,
        } => {
            let r = run_eval(&cfg, &paths, &checkpoint, thresholds.as_deref())?;
            println!(
                "B={} thresholds={:?} F_A={:.4} F_M={:.0} U={:?}",
                r.exits, r.thresholds, r.accuracy, r.macs, r.utilization
            );
        }
        Command::Report { archive, entry } => {
            let files = run_report(&cfg, &paths, archive.as_deref(), entry)?;
            println!(
                "wrote {} and {}",
                files.results.display(),
                files.pareto.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("eenas: error: {e}");
            ExitCode::FAILURE
        }
    }
}
