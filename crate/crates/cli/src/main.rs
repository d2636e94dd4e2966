use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use mxhoi::evaluation::{evaluate, write_metrics_csv, EvalReport};
use mxhoi::experiment::{
    config_diff, ladder, prepare, run, run_class_split, run_pseudo_cycles, run_ratio_sweep, write_cells_csv,
    Checkpoint, ExperimentConfig, Prepared, RATIO_LADDER,
};
use mxhoi::pseudo_label::PseudoMode;
use mxhoi::world::{write_jsonl, SplitFractions};

#[derive(Parser)]
#[command(
    name = "mxhoi",
    version,
    about = "Mixed-supervision HOI detection experiments on synthetic data"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file mirroring the experiment config (world, split, train, pseudo).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides both the world and the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a world and write its tagged training and test records.
    GenWorld,
    /// Train one configuration; writes a run log, metrics and a checkpoint.
    Train,
    /// Evaluate a checkpoint on the configured world's test images.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train every (ratio, seed) cell and aggregate the metrics.
    Sweep {
        /// Comma-separated WS/FS[/US] ratios; defaults to the full ladder.
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<SplitFractions>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
    /// Train separate and joint models on a 50/50 class split.
    ClassSplit,
    /// Alternate training and pseudo-labeling.
    PseudoCycle,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(create(dir, name)?, value)?;
    Ok(())
}

fn write_world(dir: &Path, prepared: &Prepared) -> Result<()> {
    write_jsonl(create(dir, "train.jsonl")?, &prepared.train_images)?;
    write_jsonl(create(dir, "test.jsonl")?, &prepared.world.test_images)?;
    write_json(dir, "catalog.json", &prepared.world.catalog)?;
    Ok(())
}

fn print_report(report: &EvalReport) {
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "map_full={:.4} map_rare={} map_nonrare={}",
        report.map_full,
        opt(report.map_rare),
        opt(report.map_nonrare)
    );
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = load_config(&cli.common)?;
    let out = &cli.common.out_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.toml"), toml::to_string(&cfg)?)?;

    match cli.command {
        Command::GenWorld => {
            let prepared = prepare(&cfg)?;
            write_world(out, &prepared)?;
            info!(
                "wrote {} training and {} test images, {} rare classes",
                prepared.train_images.len(),
                prepared.world.test_images.len(),
                prepared.rare_class_ids.len()
            );
        }
        Command::Train => {
            let result = run(&cfg).context("training run aborted")?;
            result.outcome.log.write_lines(create(out, "run.log")?)?;
            write_metrics_csv(create(out, "metrics.csv")?, std::slice::from_ref(&result.row))?;
            write_json(out, "report.json", &result.outcome.report)?;
            result
                .outcome
                .checkpoint(cfg.train)
                .save(&out.join("checkpoint.json"))?;
            print_report(&result.outcome.report);
        }
        Command::Eval { checkpoint } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let prepared = prepare(&cfg)?;
            let report = evaluate(
                &ckpt.params,
                &prepared.world.features,
                &prepared.world.test_images,
                &prepared.rare_class_ids,
                ckpt.config.batch.top_k,
            )?;
            write_json(out, "report.json", &report)?;
            write_metrics_csv(create(out, "metrics.csv")?, &[cfg.metrics_row(&report)])?;
            print_report(&report);
        }
        Command::Sweep { ratios, seeds } => {
            let ratios = if ratios.is_empty() {
                ladder(&RATIO_LADDER)?
            } else {
                ratios
            };
            let sweep = run_ratio_sweep(&cfg, &ratios, &seeds).context("sweep aborted")?;
            write_metrics_csv(create(out, "metrics.csv")?, &sweep.rows)?;
            write_cells_csv(create(out, "cells.csv")?, &sweep.cells)?;
            for c in &sweep.cells {
                println!(
                    "{:>10}  map_full {:.4} ± {:.4}  (n={})",
                    c.ws_fs_us, c.map_full_mean, c.map_full_std, c.n_seeds
                );
            }
        }
        Command::ClassSplit => {
            let report = run_class_split(&cfg).context("class-split run aborted")?;
            write_json(out, "class_split.json", &report)?;
            let f = |v: Option<f64>| v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"));
            println!(
                "separate: FS half {} / WS half {}",
                f(report.separate[0]),
                f(report.separate[1])
            );
            println!(
                "joint:    FS half {} / WS half {}",
                f(report.joint[0]),
                f(report.joint[1])
            );
        }
        Command::PseudoCycle => {
            if cfg.split.us == 0.0 && cfg.pseudo.mode == PseudoMode::Unlabeled {
                bail!("split {} has no unlabeled images to pseudo-label", cfg.split);
            }
            let (_, outcome) = run_pseudo_cycles(&cfg).context("pseudo-label run aborted")?;
            outcome.last_log.write_lines(create(out, "run.log")?)?;
            write_jsonl(create(out, "pseudo.jsonl")?, &outcome.pseudo_images)?;
            let rows: Vec<_> = outcome
                .cycles
                .iter()
                .map(|c| {
                    let mut row = cfg.metrics_row(&c.report);
                    row.run_id = format!("{}-cycle{}", cfg.run_id, c.cycle);
                    row
                })
                .collect();
            write_metrics_csv(create(out, "metrics.csv")?, &rows)?;
            write_json(out, "cycles.json", &outcome.cycles)?;
            for c in &outcome.cycles {
                println!(
                    "cycle {}: {} pseudo images, {} triplets, map_full {:.4}",
                    c.cycle, c.n_pseudo_images, c.n_pseudo_triplets, c.report.map_full
                );
            }
            if outcome.converged {
                println!("pseudo labels reached a fixed point");
            }
        }
    }
    let diff = config_diff(&ExperimentConfig::default(), &cfg)?;
    if !diff.is_empty() {
        info!("config differs from defaults in: {}", diff.join("; "));
    }
    Ok(())
}
