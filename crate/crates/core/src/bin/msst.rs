//! `msst`: minimum-sum dipolar spanning trees and discrete 2-centers from
//! the command line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use msst_core::bench::{medians, run_bench, write_csv, BenchConfig};
use msst_core::exclusion_tree::{ExclusionTree, DEFAULT_SCAN_LIMIT};
use msst_core::geometry::{GeometryError, DEFAULT_EPS};
use msst_core::io::{
    generate, load_instance, oracle_to_string, result_to_string, save_instance, write_text, Format, IoError, Objective,
    PointDistribution,
};
use msst_core::solver::{
    brute_force_msst, brute_force_two_center, compute_matrix, msst_from_matrix, solve_two_center, MatrixConfig, Mode,
    SolveError,
};

#[derive(Parser)]
#[command(name = "msst", version, about = "Minimum-sum dipolar spanning trees and discrete 2-centers in R^3")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimum-sum dipolar spanning tree.
    Solve(SolveArgs),
    /// Discrete 2-center from the same farthest matrix.
    TwoCenter(SolveArgs),
    /// Both objectives by cubic-time brute force.
    Oracle(OracleArgs),
    /// Generate a point set.
    Gen(GenArgs),
    /// Time the matrix computation over a range of sizes.
    Bench(BenchArgs),
    /// Write one exclusion-tree node's polytope as an OFF file.
    ExportPolytope(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Tree,
    Bruteforce,
}

impl From<Algo> for Mode {
    fn from(a: Algo) -> Mode {
        match a {
            Algo::Tree => Mode::Tree,
            Algo::Bruteforce => Mode::Bruteforce,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FileFormat {
    Json,
    Csv,
}

impl From<FileFormat> for Format {
    fn from(f: FileFormat) -> Format {
        match f {
            FileFormat::Json => Format::Json,
            FileFormat::Csv => Format::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    Cube,
    Sphere,
    Clusters,
    Collinear,
}

impl From<Dist> for PointDistribution {
    fn from(d: Dist) -> PointDistribution {
        match d {
            Dist::Cube => PointDistribution::Cube,
            Dist::Sphere => PointDistribution::Sphere,
            Dist::Clusters => PointDistribution::Clusters,
            Dist::Collinear => PointDistribution::Collinear,
        }
    }
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FileFormat>,
    /// Relative tolerance for boundary comparisons.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Result file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tree")]
    algo: Algo,
    /// Concurrent per-pole passes; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Leave out the timing section.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value = "cube")]
    dist: Dist,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FileFormat>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated point counts.
    #[arg(long, value_delimiter = ',', default_values_t = [256, 512, 1024, 2048])]
    sizes: Vec<usize>,
    /// Seeds per size, numbered from 0.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, value_enum, default_value = "cube")]
    dist: Dist,
    #[arg(long, value_enum, default_value = "tree")]
    algo: Algo,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Leaf ranges this short are scanned instead of searched.
    #[arg(long, default_value_t = DEFAULT_SCAN_LIMIT)]
    scan_limit: usize,
    /// Per-run records; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-size medians and slopes; stderr when omitted.
    #[arg(long)]
    medians: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Index of the pole point.
    #[arg(long)]
    pole: usize,
    /// Path from the root as `L`/`R` steps; empty for the root.
    #[arg(long, default_value = "")]
    node: String,
    #[arg(long)]
    output: PathBuf,
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => write_text(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn solve(args: &SolveArgs, objective: Objective) -> Result<()> {
    let inst = load_instance(&args.input.input, args.input.format.map(Format::from), args.input.eps)?;
    let mode = Mode::from(args.algo);
    let start = Instant::now();
    let m = compute_matrix(&inst.points, args.input.eps, mode, args.workers)?;
    let r = match objective {
        Objective::Msst => msst_from_matrix(&inst.points, &m),
        Objective::TwoCenter => solve_two_center(&inst.points, &m),
    };
    let wall = (!args.no_timing).then(|| start.elapsed());
    emit(args.output.as_deref(), &result_to_string(&inst, &r, objective, mode.as_str(), args.input.eps, wall)?)
}

fn oracle(args: &OracleArgs) -> Result<()> {
    let eps = args.input.eps;
    let inst = load_instance(&args.input.input, args.input.format.map(Format::from), eps)?;
    let start = Instant::now();
    let a = brute_force_msst(&inst.points, eps)?;
    let b = brute_force_two_center(&inst.points, eps)?;
    let wall = (!args.no_timing).then(|| start.elapsed());
    emit(args.output.as_deref(), &oracle_to_string(&inst, &a, &b, eps, wall)?)
}

fn gen(args: &GenArgs) -> Result<()> {
    anyhow::ensure!(args.n >= 2, "need at least two points");
    let inst = generate(args.n, args.dist.into(), args.seed);
    save_instance(&inst, &args.output, args.format.map(Format::from))?;
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        sizes: args.sizes.clone(),
        seeds: args.seeds,
        dist: args.dist.into(),
        matrix: MatrixConfig {
            eps: args.eps,
            mode: args.algo.into(),
            workers: args.workers,
            scan_limit: args.scan_limit,
        },
    };
    let records = run_bench(&cfg, |r| eprintln!("n={} seed={} total_ms={:.1}", r.n, r.seed, r.total_ms))?;
    match &args.output {
        Some(p) => write_csv(BufWriter::new(File::create(p).with_context(|| p.display().to_string())?), &records)?,
        None => write_csv(io::stdout().lock(), &records)?,
    }
    let rows = medians(&records);
    match &args.medians {
        Some(p) => write_csv(BufWriter::new(File::create(p).with_context(|| p.display().to_string())?), &rows)?,
        None => write_csv(io::stderr().lock(), &rows)?,
    }
    Ok(())
}

fn export(args: &ExportArgs) -> Result<()> {
    let inst = load_instance(&args.input.input, args.input.format.map(Format::from), args.input.eps)?;
    let tree = ExclusionTree::build(&inst.points, args.pole, args.input.eps)?;
    tree.export_polytope_off(&args.node, &args.output)?;
    Ok(())
}

/// 2 for bad input, 1 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    let input_geometry = |g: &GeometryError| {
        matches!(
            g,
            GeometryError::DuplicatePoints { .. }
                | GeometryError::NonFinite { .. }
                | GeometryError::PoleOutOfRange { .. }
        )
    };
    if let Some(e) = e.downcast_ref::<IoError>() {
        return if e.is_input_error() { 2 } else { 1 };
    }
    if let Some(SolveError::Geometry(g)) = e.downcast_ref::<SolveError>() {
        return if input_geometry(g) { 2 } else { 1 };
    }
    if let Some(e) = e.downcast_ref::<msst_core::exclusion_tree::TreeError>() {
        use msst_core::exclusion_tree::TreeError;
        return match e {
            TreeError::Geometry(g) if input_geometry(g) => 2,
            TreeError::InvalidPath { .. } | TreeError::TooFewPoints(_) => 2,
            _ => 1,
        };
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Solve(a) => solve(a, Objective::Msst),
        Command::TwoCenter(a) => solve(a, Objective::TwoCenter),
        Command::Oracle(a) => oracle(a),
        Command::Gen(a) => gen(a),
        Command::Bench(a) => bench(a),
        Command::ExportPolytope(a) => export(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
