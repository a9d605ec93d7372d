use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use facepress::config::{split_list, Overrides, RunConfig};
use facepress::pipeline::{cmd_plot, cmd_prep, cmd_run, cmd_table, Selection};
use facepress_core::budget::CodecId;

#[derive(Parser)]
#[command(name = "facepress", version, about = "Byte-budget face image compression benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Align or crop source images and write the preprocessed manifest.
    Prep(Common),
    /// Compress, score, compare and analyze.
    Run(Common),
    /// Re-render stats and distance tables from stored scores.
    Table(Common),
    /// Re-render figures from stored scores.
    Plot(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated codec names.
    #[arg(long)]
    codecs: Option<String>,
    /// Comma-separated target sizes in bytes, strictly decreasing.
    #[arg(long)]
    ladder: Option<String>,
    /// Non-mated sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// `roi` or `portrait`.
    #[arg(long)]
    variant: Option<String>,
}

fn load(c: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let mut cfg = RunConfig::default();
            cfg.rebase(&std::env::current_dir()?);
            cfg
        }
    };
    let ladder = c
        .ladder
        .as_deref()
        .map(|l| {
            split_list(l)
                .iter()
                .map(|x| x.parse::<u64>().with_context(|| format!("bad ladder entry {x:?}")))
                .collect::<anyhow::Result<Vec<_>>>()
        })
        .transpose()?;
    cfg.apply(&Overrides {
        out_root: c.out.clone(),
        codecs: c.codecs.as_deref().map(split_list),
        ladder,
        seed: c.seed,
        jobs: c.jobs,
        variant: c.variant.clone(),
    });
    Ok(cfg)
}

fn selection(c: &Common) -> anyhow::Result<Selection> {
    let codecs = c
        .codecs
        .as_deref()
        .map(|s| split_list(s).iter().map(|x| x.parse::<CodecId>()).collect::<Result<Vec<_>, _>>())
        .transpose()?;
    Ok(Selection { codecs })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Cmd::Prep(c) => {
            let mut cfg = load(&c)?;
            let r = cfg.finalize()?;
            let rep = cmd_prep(&cfg, &r)?;
            println!(
                "prepared {} images ({} skipped) -> {}",
                rep.written,
                rep.failures.len(),
                rep.manifest_path.display()
            );
        }
        Cmd::Run(c) => {
            let mut cfg = load(&c)?;
            let r = cfg.finalize()?;
            let rep = cmd_run(&cfg, &r)?;
            println!(
                "run complete: {} files, {} recorded failures, reports in {}",
                rep.files.len(),
                rep.failures.len(),
                cfg.out_root.join("reports").display()
            );
        }
        Cmd::Table(c) => {
            let mut cfg = load(&c)?;
            let sel = selection(&c)?;
            let r = cfg.finalize()?;
            for p in cmd_table(&cfg, &r, &sel)? {
                println!("{}", p.display());
            }
        }
        Cmd::Plot(c) => {
            let mut cfg = load(&c)?;
            let sel = selection(&c)?;
            let r = cfg.finalize()?;
            for p in cmd_plot(&cfg, &r, &sel)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
