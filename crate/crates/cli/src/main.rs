//! `fieldmol`: batch front end for voxelising, sampling, extracting and
//! evaluating molecules.

mod commands;
mod config;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fieldmol", version, about = "Molecules as voxelised RBF fields")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid dimensions, e.g. 32x32x32.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Voxel edge in Å.
    #[arg(long, global = true)]
    res: Option<f64>,
    /// Guidance weight.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Atom-count condition for sampling.
    #[arg(long, global = true)]
    atoms: Option<usize>,
    /// Comma-separated uniform noise levels.
    #[arg(long, global = true)]
    noise: Option<String>,
    #[arg(long, global = true)]
    no_gamma_opt: bool,
    /// Keep every n-th sampler state.
    #[arg(long, global = true)]
    snapshots: Option<usize>,
    /// Number of samples.
    #[arg(short = 'n', long, global = true)]
    count: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Voxelise an SDF file into FMGF fields.
    Voxelize {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Extract molecules from FMGF fields into SDF.
    Extract {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Sample fields with the oracle over a dataset or a trained toy model.
    Sample {
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        dataset: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output prefix for .fmgf, .sdf and .json files.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Voxelise, add noise, extract and report recovery per noise level.
    Roundtrip {
        input: PathBuf,
        /// Output CSV path.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compute set metrics of generated molecules.
    Evaluate {
        generated: PathBuf,
        reference: PathBuf,
        train: PathBuf,
        /// Sampling metadata enabling count fidelity.
        #[arg(long)]
        sample_meta: Option<PathBuf>,
        /// Output prefix for .json and .csv files.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Determinants of tetrahedral centres.
    Chiral {
        input: PathBuf,
        /// Output prefix for the CSV and JSON files.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train the toy denoiser on FMGF fields.
    Train {
        dataset: PathBuf,
        /// Model path; the loss trace goes next to it.
        #[arg(short, long)]
        output: PathBuf,
        /// Condition on atom counts recovered from each field.
        #[arg(long)]
        conditional: bool,
    },
}

fn effective_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut c = RunConfig::default();
    if let Some(path) = &g.config {
        c.apply_file(path)?;
    }
    if let Some(s) = g.seed {
        c.seed = s;
    }
    if let Some(grid) = &g.grid {
        c.grid = config::parse_grid(grid)?;
    }
    if let Some(r) = g.res {
        c.resolution = r;
    }
    if let Some(b) = g.beta {
        c.beta = b;
    }
    if let Some(n) = g.atoms {
        c.atoms = Some(n);
    }
    if let Some(noise) = &g.noise {
        c.noise = config::parse_list(noise)?;
    }
    if g.no_gamma_opt {
        c.extraction.gamma_optimization = false;
    }
    if let Some(s) = g.snapshots {
        c.snapshot_stride = s;
    }
    if let Some(n) = g.count {
        c.count = n;
    }
    Ok(c)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("FMG_THREADS") {
        let n: usize = v.parse().with_context(|| format!("FMG_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let cfg = effective_config(&cli.global)?;
    match cli.command {
        Command::Voxelize { input, output } => commands::voxelize(&cfg, &input, &output),
        Command::Extract { input, output } => commands::extract(&cfg, &input, &output),
        Command::Sample { dataset, model, output } => commands::sample(&cfg, dataset.as_deref(), model.as_deref(), &output),
        Command::Roundtrip { input, output } => commands::roundtrip(&cfg, &input, &output),
        Command::Evaluate {
            generated,
            reference,
            train,
            sample_meta,
            output,
        } => commands::evaluate(&cfg, &generated, &reference, &train, sample_meta.as_deref(), &output),
        Command::Chiral { input, output } => commands::chiral(&cfg, &input, &output),
        Command::Train {
            dataset,
            output,
            conditional,
        } => commands::train(&cfg, &dataset, &output, conditional),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
