//! `vmfd`: generate synthetic scenes, pretrain, probe and compare runs.

mod commands;
mod error;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "vmfd",
    version,
    about = "Desk-scale image-to-point-cloud distillation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic scenes and a dataset manifest.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `scene.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Write an untrained checkpoint for a training config.
    Init {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Train on a dataset's training scenes.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Linear probe of a checkpoint on a dataset's probe scenes.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Config to check the checkpoint against; defaults to the
        /// `config.resolved` next to the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to `probe.json` next to the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate final metrics of several runs.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// One row per config, with mean and standard deviation over seeds.
        #[arg(long)]
        aggregate: bool,
    },
}

fn init_logging() -> CliResult<()> {
    let level = match std::env::var("VMFD_LOG_LEVEL") {
        Ok(v) => v.to_ascii_lowercase(),
        Err(_) => "info".into(),
    };
    let filter = match level.as_str() {
        "error" => log::LevelFilter::Error,
        "info" => log::LevelFilter::Info,
        "debug" => log::LevelFilter::Debug,
        other => {
            return Err(CliError::Usage(format!(
                "VMFD_LOG_LEVEL `{other}`: expected error, info or debug"
            )))
        }
    };
    env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .init();
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_logging()?;
    match cli.command {
        Command::Generate {
            config,
            out,
            seed,
            force,
        } => {
            let m = commands::generate(&config, &out, seed, force)?;
            println!("{} scenes -> {}", m.outputs.len(), out.display());
        }
        Command::Init {
            config,
            out,
            seed,
            force,
        } => {
            commands::init(&config, &out, seed, force)?;
            println!("checkpoint -> {}", out.display());
        }
        Command::Pretrain {
            config,
            data,
            out,
            seed,
            force,
        } => {
            let m = commands::pretrain(&config, &data, &out, seed, force)?;
            println!("run {} -> {}", &m.manifest_id[..12], out.display());
        }
        Command::Probe {
            checkpoint,
            data,
            config,
            out,
        } => {
            let p = commands::probe(&checkpoint, &data, config.as_deref(), out.as_deref())?;
            println!("accuracy {:.4}  mean_iou {:.4}", p.accuracy, p.mean_iou);
        }
        Command::Compare {
            runs,
            out,
            aggregate,
        } => {
            let rows = commands::compare(&runs, &out, aggregate)?;
            println!("{rows} rows -> {}", out.display());
        }
    }
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            std::process::exit(0);
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            std::process::exit(2);
        }
    };
    if let Err(e) = run(cli) {
        let msg = e.to_string().replace('\n', "; ");
        eprintln!("error[{}]: {msg}", e.kind());
        std::process::exit(e.exit_code());
    }
}
