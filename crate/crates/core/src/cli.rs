//! `screenseg` command line: `segment`, `evaluate`, `synth`.
//!
//! Exit status: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::admm::{Decomposition, SolverParams};
use crate::error::Error;
use crate::eval::{evaluate_dataset, DatasetManifest, Method};
use crate::image_io::{load_gray, save_gray, save_mask, write_atomic};
use crate::segmentation::{reconstruct_layers, segment_image_detailed, SegmentationConfig};
use crate::synth::{write_dataset, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "screenseg",
    version,
    about = "Smooth/sparse segmentation of screen-content images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment one image into a foreground mask (and optional layers).
    Segment(SegmentArgs),
    /// Score a segmenter against a manifest of ground-truth masks.
    Evaluate(EvaluateArgs),
    /// Write synthetic blocks with ground truth and a manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 100.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 2.0)]
    lambda2: f64,
    /// rho1..rho4, comma separated
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [1.0, 1.0, 1.0, 1.0])]
    rho: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 64)]
    block: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    fg_threshold: f64,
}

impl SolverArgs {
    fn config(&self, record_residuals: bool) -> SegmentationConfig {
        SegmentationConfig {
            block_size: self.block,
            k_bases: self.k,
            solver: SolverParams {
                lambda1: self.lambda1,
                lambda2: self.lambda2,
                rho: [self.rho[0], self.rho[1], self.rho[2], self.rho[3]],
                max_iters: self.iters,
                record_residuals,
                tolerance: None,
            },
            fg_threshold: self.fg_threshold,
        }
    }
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mask_out: PathBuf,
    #[arg(long)]
    fg_out: Option<PathBuf>,
    #[arg(long)]
    bg_out: Option<PathBuf>,
    /// Print per-iteration residuals of every block to stderr.
    #[arg(long)]
    verbose: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "proposed", value_parser = ["proposed", "kmeans2"])]
    method: String,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 6)]
    k_true: usize,
    #[arg(long, default_value_t = 100.0)]
    alpha_min: f64,
    #[arg(long, default_value_t = 600.0)]
    alpha_max: f64,
    #[arg(long, default_value_t = 5)]
    strokes: usize,
    #[arg(long, default_value_t = 100.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.10)]
    max_fg_fraction: f64,
    #[arg(long)]
    diagonal: bool,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn log_residuals(out: &mut impl Write, decomps: &[Decomposition]) -> std::io::Result<()> {
    for (b, d) in decomps.iter().enumerate() {
        writeln!(out, "# block {b}")?;
        for r in &d.history {
            writeln!(
                out,
                "{}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}",
                r.iter, r.primal, r.alpha_beta, r.s_y, r.s_z
            )?;
        }
    }
    Ok(())
}

fn cmd_segment(args: &SegmentArgs) -> Result<(), Error> {
    let img = load_gray(&args.input)?;
    let cfg = args.solver.config(args.verbose);
    cfg.validate()?;
    let (mask, decomps) = segment_image_detailed(&img, &cfg)?;
    if args.verbose {
        let mut err = std::io::stderr().lock();
        let _ = log_residuals(&mut err, &decomps);
        let worst = decomps
            .iter()
            .map(|d| d.primal_residual)
            .fold(0.0, f64::max);
        let _ = writeln!(err, "# max primal residual {worst:.6e}");
    }
    if args.fg_out.is_some() || args.bg_out.is_some() {
        let layers = reconstruct_layers(&img, &cfg)?;
        if let Some(p) = &args.fg_out {
            save_gray(&layers.foreground, p)?;
        }
        if let Some(p) = &args.bg_out {
            save_gray(&layers.background, p)?;
        }
    }
    save_mask(&mask, &args.mask_out)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<bool, Error> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let method: Method = args.method.parse()?;
    let cfg = args.solver.config(false);
    let report = evaluate_dataset(&manifest, method, &cfg, args.seed)?;
    write_atomic(&args.report, report.to_json()?.as_bytes())?;
    for f in &report.failures {
        eprintln!("failed: {}: {}", f.path, f.error);
    }
    println!("precision\t{:.2}%", 100.0 * report.micro.precision);
    println!("recall\t{:.2}%", 100.0 * report.micro.recall);
    println!("f1\t{:.2}%", 100.0 * report.micro.f1);
    Ok(report.is_complete())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Error> {
    let spec = SynthSpec {
        n: args.n,
        k_true: args.k_true,
        alpha_range: (args.alpha_min, args.alpha_max),
        stroke_count: args.strokes,
        stroke_amplitude: args.amplitude,
        max_fg_fraction: args.max_fg_fraction,
        seed: args.seed,
        diagonal_strokes: args.diagonal,
    };
    let manifest = write_dataset(&args.out_dir, args.count, args.seed, &spec)?;
    println!("{}", manifest.display());
    Ok(())
}

/// Parse `args` (including the program name) and run; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Segment(a) => cmd_segment(a).map(|_| true),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a).map(|_| true),
    };
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_RUNTIME,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
