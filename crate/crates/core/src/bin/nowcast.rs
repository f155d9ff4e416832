use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use nowcast_core::bench::{cmd_evaluate, cmd_fetch, cmd_report, cmd_run, RunConfig};
use nowcast_core::Result;

/// Pseudo-real-time GDP nowcasting benchmark.
///
/// The provider API key is read from FRED_API_KEY; without it `fetch`
/// works from the local cache only.
#[derive(Parser)]
#[command(name = "nowcast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Run on the generated offline dataset.
    #[arg(long, global = true)]
    synthetic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Download manifest series into the cache.
    Fetch,
    /// Fit, predict and append every missing cube cell.
    Run,
    /// Compute ratio, revision and aggregate tables as CSV.
    Evaluate,
    /// Write tables, a markdown report and nowcast charts.
    Report,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    cfg.synthetic |= cli.synthetic;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Fetch => {
            let report = cmd_fetch(&cfg)?;
            for e in &report.entries {
                match &e.outcome {
                    Ok((src, first, last)) => println!("{:<10} {:<16} {src:?} {first}..{last}", e.id, e.source_code),
                    Err(msg) => println!("{:<10} {:<16} FAILED {msg}", e.id, e.source_code),
                }
            }
            println!("{}", report.summary());
            Ok(true)
        }
        Command::Run => {
            let summary = cmd_run(&cfg)?;
            println!(
                "{} cells written, {} already present, {} failed",
                summary.written,
                summary.skipped,
                summary.failures.len()
            );
            for f in &summary.failures {
                let k = &f.key;
                eprintln!("failed: {} {} {} offset {}: {}", k.methodology, k.period, k.quarter, k.offset, f.cause);
            }
            Ok(summary.is_complete())
        }
        Command::Evaluate => {
            let (eval, files) = cmd_evaluate(&cfg.out_dir)?;
            if let Some(scores) = &eval.aggregate {
                for (i, id) in nowcast_core::evaluation::ranking(scores).iter().enumerate() {
                    println!("{:>2}. {:<14} {:.3}", i + 1, id.display_name(), scores[id]);
                }
            }
            println!("{} files written", files.len());
            Ok(true)
        }
        Command::Report => {
            let files = cmd_report(&cfg.out_dir)?;
            println!("{} files written to {}", files.len(), cfg.out_dir.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
