use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lattice_decomp::experiment::{
    report_table, run_calibration, run_experiment, summarize, CalibrationConfig, ExperimentConfig,
    ExperimentVariant, GeometrySource,
};
use lattice_decomp::geometry::{fluid_fraction, save_geometry, SiteKind};
use lattice_decomp::lbkernel::MeasureConfig;
use lattice_decomp::metrics::{read_metrics, write_metrics, CommModel};
use lattice_decomp::weights::{
    round_costs, write_observations, FittedCosts, WeightTable, BULK_WEIGHT,
};
use lattice_decomp::Exec;

/// Cost-weighted domain decomposition of sparse lattice geometries.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a geometry and write it in the binary geometry format.
    Gen {
        /// Generator spec, e.g. `cylinder:radius=8,length=64`.
        #[arg(long)]
        geometry: GeometrySource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the calibration cylinders and fit per-site-type costs.
    Calibrate(CalibrateArgs),
    /// Partition a geometry under each variant and part count.
    Decompose(DecomposeArgs),
    /// Print a comparison table for one or more metrics CSVs.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct CalibrateArgs {
    /// Directory for costs.txt, weights.txt and observations.csv.
    #[arg(long)]
    out: PathBuf,
    /// Timed steps per window.
    #[arg(long, default_value_t = MeasureConfig::default().steps)]
    steps: u64,
    #[arg(long, default_value_t = MeasureConfig::default().windows)]
    windows: usize,
    #[arg(long, default_value_t = MeasureConfig::default().warmup)]
    warmup: u64,
    /// Weight assigned to bulk sites in the rounded table.
    #[arg(long, default_value_t = BULK_WEIGHT)]
    base: u32,
    /// Full measurements per cylinder; the median runtime is fitted.
    #[arg(long, default_value_t = CalibrationConfig::default().repeats)]
    repeats: usize,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Generator spec or geometry file.
    #[arg(long)]
    geometry: GeometrySource,
    #[arg(long, value_delimiter = ',', default_value = "16")]
    nparts: Vec<usize>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "baseline,weights,sfc,weights+sfc"
    )]
    variants: Vec<ExperimentVariant>,
    /// Weight table file; defaults to the rounded `--costs`, else 4,8,16,16.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Fitted cost file used to measure load imbalance.
    #[arg(long)]
    costs: Option<PathBuf>,
    #[arg(long, default_value_t = 1.001)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-message latency in seconds.
    #[arg(long, default_value_t = CommModel::default().alpha)]
    alpha: f64,
    /// Per-byte transfer time in seconds.
    #[arg(long, default_value_t = CommModel::default().beta)]
    beta: f64,
    /// Output directory for metrics.csv.
    #[arg(long)]
    out: PathBuf,
    /// Also write one site_index,part CSV per row.
    #[arg(long)]
    dump_partitions: bool,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_threads()?;
    match cli.command {
        Command::Gen { geometry, out } => gen(&geometry, &out),
        Command::Calibrate(args) => calibrate(&args),
        Command::Decompose(args) => decompose(&args),
        Command::Report { csv } => report(&csv),
    }
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("LATTICE_DECOMP_THREADS") else {
        return Ok(());
    };
    let n: usize =
        value.parse().ok().filter(|&n| n > 0).with_context(|| {
            format!("LATTICE_DECOMP_THREADS={value:?} is not a positive integer")
        })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn gen(source: &GeometrySource, out: &Path) -> Result<()> {
    let g = source.load()?;
    save_geometry(&g, out).with_context(|| format!("writing {}", out.display()))?;
    let counts = g.kind_counts();
    println!(
        "{} sites, fluid fraction {:.4}, dims {:?}",
        g.len(),
        fluid_fraction(&g),
        g.dims()
    );
    for k in SiteKind::ALL {
        println!("  {:<14} {}", k.name(), counts[k]);
    }
    Ok(())
}

fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let cfg = CalibrationConfig {
        measure: MeasureConfig {
            steps: args.steps,
            windows: args.windows,
            warmup: args.warmup,
            ..Default::default()
        },
        base: args.base,
        repeats: args.repeats,
    };
    let cal = run_calibration(&cfg)?;
    fs::create_dir_all(&args.out)?;
    cal.costs.save(args.out.join("costs.txt"))?;
    cal.weights.save(args.out.join("weights.txt"))?;
    let f = File::create(args.out.join("observations.csv"))?;
    write_observations(&cal.observations, BufWriter::new(f))?;
    print!("fitted costs\n{}", cal.costs.to_text());
    println!(
        "relative rms residual {:.4}",
        cal.costs.relative_rms_residual
    );
    for k in &cal.costs.degenerate {
        println!(
            "warning: {} cost fitted non-positive and was clamped",
            k.name()
        );
    }
    print!("weights\n{}", cal.weights.to_text());
    Ok(())
}

fn decompose(args: &DecomposeArgs) -> Result<()> {
    let geometry = args.geometry.load()?;
    let mut cfg = ExperimentConfig {
        nparts: args.nparts.clone(),
        variants: args.variants.clone(),
        tolerance: args.tolerance,
        seed: args.seed,
        comm: CommModel {
            alpha: args.alpha,
            beta: args.beta,
            ..Default::default()
        },
        ..Default::default()
    };
    cfg.comm.validate()?;
    if let Some(p) = &args.costs {
        cfg.costs = FittedCosts::load(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.weights = round_costs(&cfg.costs, BULK_WEIGHT);
    }
    if let Some(p) = &args.weights {
        cfg.weights = WeightTable::load(p).with_context(|| format!("reading {}", p.display()))?;
    }
    let outcomes = run_experiment(&cfg, &geometry, Exec::default())?;
    fs::create_dir_all(&args.out)?;
    let mut rows = Vec::new();
    let mut failed = 0;
    for o in &outcomes {
        match &o.result {
            Ok((row, part)) => {
                rows.push(row.clone());
                if args.dump_partitions {
                    let name = format!("partition_{}_{}.csv", o.variant.name(), o.nparts);
                    let mut w = BufWriter::new(File::create(args.out.join(name))?);
                    part.write_csv(&mut w)?;
                    w.flush()?;
                }
            }
            Err(e) => {
                failed += 1;
                eprintln!("{} nparts={}: {e}", o.variant.name(), o.nparts);
            }
        }
    }
    let path = args.out.join("metrics.csv");
    write_metrics(&rows, BufWriter::new(File::create(&path)?))?;
    print!("{}", summarize(&rows));
    println!("wrote {} rows to {}", rows.len(), path.display());
    if failed == outcomes.len() {
        bail!("every row failed");
    }
    Ok(())
}

fn report(paths: &[PathBuf]) -> Result<()> {
    let mut rows = Vec::new();
    for p in paths {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        rows.extend(read_metrics(f).with_context(|| format!("reading {}", p.display()))?);
    }
    print!("{}", report_table(&rows));
    Ok(())
}
