#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "cal",
    version,
    about = "Clothes-adversarial re-id experiments on synthetic data"
)]
struct Cli {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for both data generation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path: the dataset file for `generate`, a directory otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after all other flags.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic clothes-changing dataset.
    Generate(GenerateArgs),
    /// Train one variant and write a checkpoint plus per-epoch losses.
    Train(TrainArgs),
    /// Rank query against gallery under the evaluation protocols.
    Eval(EvalArgs),
    /// Train and evaluate CAL over a grid of epsilon and/or 1/tau values.
    Sweep(SweepArgs),
    /// Clothes-classifier probability statistics on the training split.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    train_ids: Option<usize>,
    #[arg(long)]
    test_ids: Option<usize>,
    /// Fixed number of outfits per identity (overrides the 2..=5 range).
    #[arg(long)]
    clothes_per_identity: Option<usize>,
    #[arg(long)]
    samples_per_clothes: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Cosine classifier temperature.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    cal_start: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Protocols to run (general, cc, sc); repeatable or comma separated.
    #[arg(long = "protocol", value_delimiter = ',')]
    protocols: Vec<String>,
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Epsilon grid, comma separated.
    #[arg(long = "epsilons", value_delimiter = ',')]
    epsilons: Vec<f64>,
    /// Inverse-temperature grid, comma separated.
    #[arg(long = "inv-taus", value_delimiter = ',')]
    inv_taus: Vec<f64>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn apply_model_args(cfg: &mut RunConfig, m: &ModelArgs) -> anyhow::Result<()> {
    if let Some(d) = &m.data {
        cfg.data = d.clone();
    }
    let pairs = [
        ("variant", m.variant.clone()),
        ("epochs", m.epochs.map(|v| v.to_string())),
        ("temperature", m.tau.map(|v| v.to_string())),
        ("epsilon", m.epsilon.map(|v| v.to_string())),
        ("lr", m.lr.map(|v| v.to_string())),
        ("cal_start_epoch", m.cal_start.map(|v| v.to_string())),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    Ok(())
}

fn resolve(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    match &cli.command {
        Command::Generate(a) => {
            for (k, v) in [
                ("num_train_identities", a.train_ids),
                ("num_test_identities", a.test_ids),
                ("min_clothes", a.clothes_per_identity),
                ("max_clothes", a.clothes_per_identity),
                ("samples_per_clothes", a.samples_per_clothes),
            ] {
                if let Some(v) = v {
                    cfg.set(k, &v.to_string())?;
                }
            }
            if a.clothes_per_identity.is_some_and(|n| n < 2) {
                cfg.gen.require_clothes_changing = false;
            }
        }
        Command::Train(a) => apply_model_args(&mut cfg, &a.model)?,
        Command::Sweep(a) => apply_model_args(&mut cfg, &a.model)?,
        Command::Eval(a) => {
            if let Some(d) = &a.data {
                cfg.data = d.clone();
            }
            if let Some(c) = &a.checkpoint {
                cfg.checkpoint = c.clone();
            }
            if !a.protocols.is_empty() {
                cfg.set("protocols", &a.protocols.join(","))?;
            }
            if let Some(r) = &a.run_id {
                cfg.set("run_id", r)?;
            }
        }
        Command::Stats(a) => {
            if let Some(d) = &a.data {
                cfg.data = d.clone();
            }
            if let Some(c) = &a.checkpoint {
                cfg.checkpoint = c.clone();
            }
        }
    }
    cfg.apply_overrides(&cli.overrides)?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve(&cli)?;
    match &cli.command {
        Command::Generate(_) => commands::generate(cfg),
        Command::Train(_) => commands::train(cfg),
        Command::Eval(_) => commands::eval(cfg),
        Command::Sweep(a) => commands::sweep(cfg, &a.epsilons, &a.inv_taus),
        Command::Stats(_) => commands::stats(cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
