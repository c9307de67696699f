use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use ldp_recon::alphabet::{BoundingBox, PlanarGrid};
use ldp_recon::experiment::{
    aggregate, emit_aggregate_csv, emit_csv, load_population, parse_csv, preset, preset_names, preset_text,
    run_validated, DataSpec, ExperimentConfig, Stat,
};
use ldp_recon::ingest::{bin_to_grid, cell_counts, one_per_user, parse_gowalla, write_cell_counts};

#[derive(Parser)]
#[command(name = "ldp-recon", version, about = "Frequency estimation experiments under mixed local privacy mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write one CSV row per (n, trial, estimator, post, metric)
    Run(RunArgs),
    /// Bundled configurations
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Collapse trials into one statistic per (n, estimator, post, metric)
    Aggregate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "median")]
        stat: String,
    },
    /// Bin a check-in file onto a grid and cache the per-cell counts
    Ingest(IngestArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file, or the name of a bundled preset
    #[arg(long)]
    config: String,
    #[arg(long)]
    out: PathBuf,
    /// Root seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per n (overrides the config)
    #[arg(long)]
    trials: Option<u32>,
    /// Worker threads; 0 or unset uses every core
    #[arg(long, env = "LDPRECON_THREADS")]
    threads: Option<usize>,
    /// Data file for check-in or cell-count sources (overrides the config)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Keep only each user's first check-in
    #[arg(long)]
    one_per_user: bool,
    /// Record wall-clock milliseconds per estimator
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    Show { name: String },
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 24)]
    cols: usize,
    #[arg(long, default_value_t = 16)]
    rows: usize,
    #[arg(long, default_value_t = 0.5)]
    cell_size: f64,
    #[arg(long)]
    one_per_user: bool,
}

/// Exit status 1 for bad configuration, 2 for everything that fails later.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn config_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn runtime_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Presets { action } => cmd_presets(action),
        Command::Aggregate { input, out, stat } => cmd_aggregate(&input, &out, &stat),
        Command::Ingest(args) => cmd_ingest(args).map_err(runtime_err),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(source: &str) -> anyhow::Result<ExperimentConfig> {
    let path = Path::new(source);
    if path.exists() {
        return ExperimentConfig::from_path(path).with_context(|| format!("loading {source}"));
    }
    if preset_names().any(|n| n == source) {
        return Ok(preset(source)?);
    }
    bail!("{source} is neither a config file nor a preset name")
}

fn apply_overrides(cfg: &mut ExperimentConfig, args: &RunArgs) -> anyhow::Result<()> {
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.run.trials = trials;
    }
    if args.timing {
        cfg.estimation.timing = true;
    }
    if let Some(data) = &args.data {
        match &mut cfg.data {
            DataSpec::Gowalla { path, .. } | DataSpec::CellCounts { path } => *path = data.clone(),
            DataSpec::Binomial { .. } => bail!("--data needs a check-in or cell-count data source"),
        }
    }
    if args.one_per_user {
        match &mut cfg.data {
            DataSpec::Gowalla { one_per_user, .. } => *one_per_user = true,
            _ => bail!("--one-per-user only applies to check-in data"),
        }
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.config).map_err(config_err)?;
    apply_overrides(&mut cfg, &args).map_err(config_err)?;
    let validated = cfg.validate().map_err(config_err)?;

    let threads = args.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(runtime_err)?;

    let population = load_population(&cfg, &validated.alphabet).map_err(runtime_err)?;
    log::info!(
        "running {} with {} mechanisms on {} threads",
        if cfg.name.is_empty() { &args.config } else { &cfg.name },
        validated.channels.len(),
        pool.current_num_threads()
    );
    let rows = pool.install(|| run_validated(&cfg, &validated, &population)).map_err(runtime_err)?;

    let file = File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(runtime_err)?;
    let mut w = BufWriter::new(file);
    emit_csv(&rows, &mut w).map_err(runtime_err)?;
    w.flush().map_err(runtime_err)?;
    log::info!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_presets(action: PresetAction) -> Result<(), Failure> {
    match action {
        PresetAction::List => {
            for name in preset_names() {
                let cfg = preset(name).map_err(runtime_err)?;
                println!("{name:<22} {}", cfg.description);
            }
        }
        PresetAction::Show { name } => print!("{}", preset_text(&name).map_err(config_err)?),
    }
    Ok(())
}

fn cmd_aggregate(input: &Path, out: &Path, stat: &str) -> Result<(), Failure> {
    let stat: Stat = stat.parse().map_err(config_err)?;
    let file = File::open(input)
        .with_context(|| format!("opening {}", input.display()))
        .map_err(runtime_err)?;
    let rows = parse_csv(BufReader::new(file)).map_err(runtime_err)?;
    let agg = aggregate(&rows, stat);
    let mut w = BufWriter::new(File::create(out).map_err(runtime_err)?);
    emit_aggregate_csv(&agg, stat, &mut w).map_err(runtime_err)?;
    w.flush().map_err(runtime_err)?;
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> anyhow::Result<()> {
    let grid = PlanarGrid::new(args.cols, args.rows, args.cell_size)?.with_bbox(BoundingBox::SAN_FRANCISCO)?;
    let parsed = parse_gowalla(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let checkins = if args.one_per_user { one_per_user(&parsed.checkins) } else { parsed.checkins };
    let binned = bin_to_grid(&checkins, &grid)?;
    let counts = cell_counts(&binned.samples, grid.size())?;
    if binned.samples.is_empty() {
        return Err(anyhow!("no check-ins fall inside the grid"));
    }
    write_cell_counts(&args.out, &counts)?;
    eprintln!(
        "{} check-ins binned, {} outside the box, {} malformed lines",
        binned.samples.len(),
        binned.dropped,
        parsed.malformed
    );
    Ok(())
}
