//! `widepth` — simulate, preprocess, train, evaluate, and infer for the
//! CSI-to-depth pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use widepth::config::RunConfig;
use widepth::pipeline::{self, Diverged};

#[derive(Parser)]
#[command(
    name = "widepth",
    about = "Depth-image reconstruction from Wi-Fi channel state information",
    version
)]
struct Cli {
    /// Subcommand: simulate | preprocess | train-teacher | train-student |
    /// train-baseline | evaluate | infer | gradcheck
    subcommand: String,
    /// Line-oriented `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created; removed again on failure)
    #[arg(long)]
    out: PathBuf,
    /// Seed shortcut, equivalent to `--set seed=N`
    #[arg(long)]
    seed: Option<u64>,
    /// Per-key overrides, `--set key=value`, applied after the config file
    #[arg(long = "set")]
    sets: Vec<String>,
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    const SUBCOMMANDS: &[&str] = &[
        "simulate",
        "preprocess",
        "train-teacher",
        "train-student",
        "train-baseline",
        "evaluate",
        "infer",
        "gradcheck",
    ];
    let sub = cli.subcommand.as_str();
    if !SUBCOMMANDS.contains(&sub) {
        anyhow::bail!("unknown subcommand `{sub}` (expected one of {})", SUBCOMMANDS.join(", "));
    }
    let mut overrides = cli.sets.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = RunConfig::resolve(pipeline::keys_for(sub), cli.config.as_deref(), &overrides)?;
    std::fs::create_dir_all(&cli.out)?;
    match sub {
        "simulate" => pipeline::cmd_simulate(&cfg, &cli.out),
        "preprocess" => pipeline::cmd_preprocess(&cfg, &cli.out),
        "train-teacher" => pipeline::cmd_train_teacher(&cfg, &cli.out),
        "train-student" => pipeline::cmd_train_student(&cfg, &cli.out),
        "train-baseline" => pipeline::cmd_train_baseline(&cfg, &cli.out),
        "evaluate" => pipeline::cmd_evaluate(&cfg, &cli.out),
        "infer" => pipeline::cmd_infer(&cfg, &cli.out),
        "gradcheck" => pipeline::cmd_gradcheck(&cfg, &cli.out),
        _ => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let existed = cli.out.exists();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<Diverged>().is_some() => {
            // divergence keeps its outputs (last good checkpoint)
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            // single-line machine-parsable error; partial outputs removed
            eprintln!("error: {e:#}");
            if !existed {
                let _ = std::fs::remove_dir_all(&cli.out);
            }
            ExitCode::FAILURE
        }
    }
}
