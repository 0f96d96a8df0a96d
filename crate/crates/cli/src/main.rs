use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use groundpose::ipm::warp_to_ipm;
use groundpose::FieldPlane;
use groundpose_cli::config::{Overrides, RunConfig};
use groundpose_cli::overlay::draw_overlay;
use groundpose_cli::run::{run_estimate, select_stage, Outcome, Sequence};
use groundpose_cli::scenario::{run_synth, SequenceScenario};
use groundpose_cli::slices::{heat_map, parse_axes, sample_slice, slice_csv, SliceRange};

#[derive(Parser)]
#[command(
    name = "groundpose",
    version,
    about = "Camera pitch, roll and planar motion from ground-facing image pairs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate every consecutive frame pair of a sequence.
    Estimate(EstimateArgs),
    /// Render a synthetic sequence with ground truth.
    Synth {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Sample the objective around a pair's estimate.
    Slices(SliceArgs),
    /// Draw a pair's displacement field, inliers and outliers in color.
    Overlay(OverlayArgs),
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use every n-th frame.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    refinements: Option<usize>,
    /// Camera height, mm.
    #[arg(long)]
    height: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(Overrides {
            input: self.input.clone(),
            output: self.output.clone(),
            mask: self.mask.clone(),
            seed: self.seed,
            frame_stride: self.stride,
            refinements: self.refinements,
            height: self.height,
        });
        Ok(cfg)
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct PairArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Pair index; pair i joins frames i and i+1.
    #[arg(long, default_value_t = 0)]
    pair: usize,
    /// `initial`, `refine-k` or `final`.
    #[arg(long, default_value = "final")]
    stage: String,
}

#[derive(Args)]
struct SliceArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// One or two parameter names, comma separated.
    #[arg(long)]
    axes: String,
    #[arg(long, default_value_t = 41)]
    steps: usize,
    /// Half range for angles, degrees.
    #[arg(long, default_value_t = 10.0)]
    angle_range: f64,
    /// Half range for lengths, mm.
    #[arg(long, default_value_t = 50.0)]
    length_range: f64,
}

#[derive(Args)]
struct OverlayArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Vector length multiplier.
    #[arg(long, default_value_t = 5.0)]
    scale: f64,
    /// Output PNG; defaults to the run's diag directory.
    #[arg(long)]
    image: Option<PathBuf>,
}

fn diag_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output()?.join("diag");
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn slices(args: &SliceArgs) -> Result<()> {
    let axes = parse_axes(&args.axes)?;
    let cfg = args.pair.config.load()?;
    let seq = Sequence::open(&cfg)?;
    let result = seq.estimate(args.pair.pair)?;
    let record = select_stage(&result, &args.pair.stage)?;
    let range = SliceRange {
        angle_deg: args.angle_range,
        length_mm: args.length_range,
        steps: args.steps,
    };
    let samples = sample_slice(
        &record.field,
        &record.params,
        &seq.intrinsics,
        &axes,
        &range,
    )?;
    let names: Vec<&str> = axes.iter().map(|&a| groundpose::PARAM_NAMES[a]).collect();
    let stem = format!(
        "slice_pair{}_{}_{}",
        args.pair.pair,
        record.stage,
        names.join("_")
    );
    let dir = diag_dir(&cfg)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    write(&csv_path, slice_csv(&axes, &samples).as_bytes())?;
    println!("{}", csv_path.display());
    if axes.len() == 2 {
        let png = dir.join(format!("{stem}.png"));
        heat_map(&samples, range.steps)
            .save(&png)
            .with_context(|| format!("cannot write {}", png.display()))?;
        println!("{}", png.display());
    }
    Ok(())
}

fn overlay(args: &OverlayArgs) -> Result<()> {
    let cfg = args.pair.config.load()?;
    let seq = Sequence::open(&cfg)?;
    let result = seq.estimate(args.pair.pair)?;
    let record = select_stage(&result, &args.pair.stage)?;
    let prev = seq.load(args.pair.pair)?;
    let background = match record.field.plane() {
        FieldPlane::Image => prev,
        FieldPlane::Ipm { prev: spec, .. } => warp_to_ipm(&prev, spec, &seq.intrinsics).image,
    };
    let img = draw_overlay(&background, &record.field, args.scale);
    let path = match &args.image {
        Some(p) => p.clone(),
        None => diag_dir(&cfg)?.join(format!(
            "overlay_pair{}_{}.png",
            args.pair.pair, record.stage
        )),
    };
    img.save(&path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Estimate(args) => {
            let cfg = args.config.load()?;
            let (rows, outcome) = run_estimate(&cfg)?;
            eprintln!(
                "{} rows written to {}",
                rows.len(),
                cfg.output()?.join("results.csv").display()
            );
            Ok(outcome)
        }
        Command::Synth { scenario, output } => {
            let s = SequenceScenario::load(&scenario)?;
            let frames = run_synth(&s, &output)?;
            eprintln!(
                "{} frames written to {}",
                frames.len(),
                output.join("frames").display()
            );
            Ok(Outcome::Success)
        }
        Command::Slices(args) => slices(&args).map(|_| Outcome::Success),
        Command::Overlay(args) => overlay(&args).map(|_| Outcome::Success),
    }
}

fn main() -> ExitCode {
    // usage errors are fatal errors too; exit code 2 is reserved for degraded runs
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
