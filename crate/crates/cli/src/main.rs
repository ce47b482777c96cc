use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ipred_cli::commands;
use ipred_cli::RunConfig;

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    c: Option<f64>,
    #[arg(long = "grid-size", global = true)]
    grid_size: Option<usize>,
    #[arg(long, global = true)]
    padding: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Any configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate (or read) a series and write train/validation/test files.
    Generate,
    /// Choose (γ, c) on a validation set.
    Tune {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        validation: PathBuf,
    },
    /// Intervals for every row of a query file.
    Predict {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        query: PathBuf,
        /// Take γ and c from a tuning report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Test-set metrics against the quantile-regression band.
    Evaluate {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Empirical density of a point cloud on a regular grid.
    Pdf {
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Parser)]
#[command(name = "ipred", version, about = "Prediction intervals from dissimilarity-based conditional densities")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn build_config(common: &Common, report: Option<&PathBuf>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(r) = report {
        let (g, c) = commands::read_tuning_choice(r)?;
        cfg.gamma = Some(g);
        cfg.c = Some(c);
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(v) = common.tau {
        cfg.tau = v;
    }
    if let Some(v) = common.gamma {
        cfg.gamma = Some(v);
    }
    if let Some(v) = common.c {
        cfg.c = Some(v);
    }
    if let Some(v) = common.grid_size {
        cfg.grid_size = v;
    }
    if let Some(v) = common.padding {
        cfg.padding = v;
    }
    if let Some(v) = &common.out {
        cfg.out = v.clone();
    }
    Ok(cfg)
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Generate => {
            let cfg = build_config(&cli.common, None)?;
            let summary = commands::generate(&cfg)?;
            println!("{} pairs", summary.pairs);
            print_files(&summary.files);
        }
        Command::Tune { train, validation } => {
            let cfg = build_config(&cli.common, None)?;
            let (report, files) = commands::tune(&cfg, train, validation, |g, done, total| {
                eprintln!("gamma {g} ({done}/{total})")
            })?;
            println!("gamma* = {}, c* = {}", report.gamma_star, report.c_star);
            print_files(&files);
        }
        Command::Predict { train, query, report } => {
            let cfg = build_config(&cli.common, report.as_ref())?;
            print_files(&commands::predict(&cfg, train, query)?);
        }
        Command::Evaluate { train, test, report } => {
            let cfg = build_config(&cli.common, report.as_ref())?;
            let summary = commands::evaluate(&cfg, train, test)?;
            print!("{}", summary.table);
            print_files(&summary.files);
        }
        Command::Pdf { data } => {
            let cfg = build_config(&cli.common, None)?;
            print_files(&commands::pdf(&cfg, data)?);
        }
    }
    Ok(())
}
