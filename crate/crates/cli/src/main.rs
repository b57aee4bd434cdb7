//! `msf`: synthesize data, train and evaluate MSF-CNN models, and audit
//! gradients.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage or config error,
//! 3 non-finite or degenerate values during a run. Stdout carries JSON only;
//! diagnostics go to stderr.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use msf_core::data::SbmSpec;

use msf_cli::commands::{self, CliError, EvalSplit, TextureArgs};
use msf_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "msf", version, about = "Multi-scale fusion CNN + GNN experiments")]
struct Cli {
    /// Flat `key = value` run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Textures,
    Sbm,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset to --out.
    Synth {
        kind: SynthKind,
        /// Images per class (textures).
        #[arg(long, default_value_t = 250)]
        n: usize,
        /// Image side length (textures); defaults to the config's image_size.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = 2)]
        blocks: usize,
        /// Nodes per block (sbm).
        #[arg(long, default_value_t = 50)]
        nodes: usize,
        #[arg(long, default_value_t = 0.3)]
        p_in: f64,
        #[arg(long, default_value_t = 0.02)]
        p_out: f64,
        #[arg(long, default_value_t = 4)]
        feature_dim: usize,
        #[arg(long, default_value_t = 0.5)]
        shift: f64,
    },
    /// Split, cross-validate, fit and write a checkpoint and log to --out.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Print a metrics report for a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// train, test or all.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        /// `all` or one check name.
        #[arg(default_value = "all")]
        scope: String,
        /// Add a dense layer with a deliberately wrong backward pass.
        #[arg(long)]
        inject_bug: bool,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

fn require_out(out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    out.ok_or_else(|| CliError::Usage("--out is required".into()))
}

fn print_json(value: &impl serde::Serialize) {
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    // a closed pipe (e.g. `| head`) is not an error of the command
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Synth {
            kind,
            n,
            size,
            blocks,
            nodes,
            p_in,
            p_out,
            feature_dim,
            shift,
        } => {
            let out = require_out(cli.out)?;
            let summary = match kind {
                SynthKind::Textures => {
                    let args = TextureArgs {
                        n_per_class: n,
                        size: size.unwrap_or(cfg.model.image_size),
                    };
                    commands::synth_textures(&out, &args, cfg.seed())?
                }
                SynthKind::Sbm => {
                    let spec = SbmSpec {
                        blocks,
                        nodes_per_block: nodes,
                        p_in,
                        p_out,
                        feature_dim,
                        feature_shift: shift,
                        seed: cfg.seed(),
                    };
                    commands::synth_sbm(&out, &spec)?
                }
            };
            print_json(&summary);
        }
        Command::Train { data } => {
            let out = require_out(cli.out)?;
            print_json(&commands::train(&data, &cfg, &out)?);
        }
        Command::Eval { checkpoint, data, split } => {
            let which = EvalSplit::parse(&split)
                .ok_or_else(|| CliError::Usage(format!("--split must be train, test or all, got {split:?}")))?;
            print_json(&commands::eval(&checkpoint, &data, which, &cfg)?);
        }
        Command::Gradcheck { scope, inject_bug } => {
            let (table, failed) = commands::gradcheck(&scope, inject_bug, cli.seed)?;
            print_json(&table);
            if !failed.is_empty() {
                return Err(CliError::Check(format!("gradient check failed: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("msf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
