//! `polarprobe`: dataset generation, probe training and analysis.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::{invalid, ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "polarprobe", version, about = "Polar probes for relational structure in activations")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample graphs and render descriptions into data/{split}.jsonl.
    Gen,
    /// Write planted or random activations for a generated dataset.
    EmbedSynthetic,
    /// Fit a probe on the train split.
    Train,
    /// Score the probe on the test split.
    Eval,
    /// Pairwise subspace alignment between probe checkpoints.
    Align,
    /// Export model-space steering vectors.
    SteerExport,
    /// Render QA items; correlate with logits when they are given.
    Qa,
    /// 2-D PCA of probe projections for one test graph.
    Pca,
    /// gen, embed-synthetic, train and eval over the sweep grid.
    Pipeline,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.validate()?;
    let seed = cli
        .seed
        .or(cfg.seed)
        .ok_or_else(|| invalid("no seed given; pass --seed or set `seed` in the config"))?;
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(invalid("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    cfg.seed = Some(seed);
    let ctx = Ctx::new(cfg, seed, &out);
    match cli.command {
        Command::Gen => commands::gen(&ctx),
        Command::EmbedSynthetic => commands::embed_synthetic(&ctx),
        Command::Train => commands::cmd_train(&ctx),
        Command::Eval => commands::cmd_eval(&ctx).map(|_| ()),
        Command::Align => commands::cmd_align(&ctx),
        Command::SteerExport => commands::cmd_steer_export(&ctx),
        Command::Qa => commands::cmd_qa(&ctx),
        Command::Pca => commands::cmd_pca(&ctx),
        Command::Pipeline => commands::cmd_pipeline(&ctx),
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<ConfigError>()
            || matches!(
                c.downcast_ref::<polarprobe::Error>(),
                Some(
                    polarprobe::Error::Config(_)
                        | polarprobe::Error::InvalidSchema(_)
                        | polarprobe::Error::UnsupportedDomain(_)
                )
            )
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
