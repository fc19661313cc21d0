//! Command-line surface over the import / train / sample / evaluate /
//! export pipeline. Exit codes: 0 success, 1 usage error, 2 data error,
//! 3 numerical failure.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "atomgen", version, about = "Unified molecule/crystal generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert XYZ / CIF / JSONL sources into canonical JSONL records.
    Import {
        /// Source files or directories (scanned non-recursively, sorted).
        #[arg(long, required = true, num_args = 1..)]
        src: Vec<PathBuf>,
        /// Input format: auto (by extension), xyz, cif, or jsonl.
        #[arg(long, default_value = "auto")]
        format: String,
        #[arg(long)]
        out: PathBuf,
        /// Cap on atoms per system.
        #[arg(long, default_value_t = 24)]
        n_max: usize,
        /// Strip explicit hydrogens from imported molecules.
        #[arg(long, default_value_t = false)]
        drop_hydrogens: bool,
    },
    /// Train the stage-1 autoencoder.
    TrainVae {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides like train.lr=0.001 (repeatable).
        #[arg(long = "set")]
        overrides: Vec<String>,
        /// Training corpus (overrides dataset.train_jsonl).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Resume from an existing checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train the stage-2 denoiser on frozen-VAE latents.
    TrainDit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Stage-1 checkpoint directory (required).
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Sample systems from trained checkpoints.
    Sample {
        #[arg(long)]
        dit: PathBuf,
        #[arg(long)]
        vae: PathBuf,
        /// Target class: molecule or crystal.
        #[arg(long)]
        class: String,
        /// Number of systems to sample.
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// Euler integration steps T.
        #[arg(long)]
        steps: Option<usize>,
        /// Guidance scale gamma.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pin every system to this atom count instead of drawing from the
        /// training histogram.
        #[arg(long)]
        n_atoms: Option<usize>,
        /// Corpus for the atom-count histogram (defaults to the training
        /// corpus recorded in the denoiser checkpoint).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Use raw (non-EMA) denoiser weights.
        #[arg(long, default_value_t = false)]
        raw_weights: bool,
        /// Also write per-sample XYZ (molecules) / CIF (crystals) files.
        #[arg(long, default_value_t = false)]
        export_structures: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a sample set (optionally against paired originals).
    Eval {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        originals: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export deterministic-mode latents as CSV, one row per real atom.
    ExportLatents {
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help/version requests are successes; everything else is usage.
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };

    let outcome = match cli.command {
        Command::Import {
            src,
            format,
            out,
            n_max,
            drop_hydrogens,
        } => commands::import::run(&src, &format, &out, n_max, drop_hydrogens),
        Command::TrainVae {
            config,
            overrides,
            data,
            out,
            resume,
        } => commands::train::run_vae(config.as_deref(), &overrides, data.as_deref(), &out, resume.as_deref()),
        Command::TrainDit {
            config,
            overrides,
            data,
            vae,
            out,
            resume,
        } => commands::train::run_dit(
            config.as_deref(),
            &overrides,
            data.as_deref(),
            &vae,
            &out,
            resume.as_deref(),
        ),
        Command::Sample {
            dit,
            vae,
            class,
            n,
            steps,
            gamma,
            seed,
            n_atoms,
            data,
            raw_weights,
            export_structures,
            out,
        } => commands::sample::run(commands::sample::Args {
            dit,
            vae,
            class,
            n,
            steps,
            gamma,
            seed,
            n_atoms,
            data,
            raw_weights,
            export_structures,
            out,
        }),
        Command::Eval {
            samples,
            originals,
            out,
        } => commands::eval::run(&samples, originals.as_deref(), &out),
        Command::ExportLatents { vae, data, out } => {
            commands::export::run(&vae, &data, &out)
        }
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code_for(&err))
        }
    }
}
