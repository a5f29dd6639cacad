//! Flag definitions and value parsers.

use std::path::PathBuf;

use aroi_core::View;
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "aroi", version, about = "Adaptive-ROI nodule segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one nodule from a seed ROI and write the final mask.
    Segment(SegmentArgs),
    /// Print DSC/SEN/PPV of a predicted mask against a reference.
    Eval(EvalArgs),
    /// Render a synthetic phantom and its ground truth.
    Phantom(PhantomArgs),
    /// Extract a random-margin training set.
    Prep(PrepArgs),
    /// Run the pipeline for several R_T values and print CSV.
    SweepRt(SweepArgs),
    /// Serve a built-in backend over stdin/stdout (aroi-seg/1).
    Serve(ServeArgs),
}

/// Square seed ROI given as `X,Y,SIDE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRoi {
    pub x: usize,
    pub y: usize,
    pub side: usize,
}

fn usize_list(s: &str, n: usize, what: &str) -> Result<Vec<usize>, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != n {
        return Err(format!("expected {what}"));
    }
    parts
        .iter()
        .map(|p| p.parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

pub fn parse_seed_roi(s: &str) -> Result<SeedRoi, String> {
    let v = usize_list(s, 3, "X,Y,SIDE")?;
    if v[2] == 0 {
        return Err("SIDE must be positive".into());
    }
    Ok(SeedRoi {
        x: v[0],
        y: v[1],
        side: v[2],
    })
}

pub fn parse_size(s: &str) -> Result<[usize; 2], String> {
    let v = usize_list(s, 2, "W,H")?;
    if v.contains(&0) {
        return Err("sizes must be positive".into());
    }
    Ok([v[0], v[1]])
}

/// Comma-separated R_T values.
#[derive(Debug, Clone, PartialEq)]
pub struct RtList(pub Vec<f64>);

pub fn parse_rt_list(s: &str) -> Result<RtList, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if v.is_empty() {
        return Err("empty list".into());
    }
    Ok(RtList(v))
}

/// `threshold` or `proc:CMD ARGS...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendChoice {
    Threshold,
    Proc(Vec<String>),
}

impl std::fmt::Display for BackendChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendChoice::Threshold => f.write_str("threshold"),
            BackendChoice::Proc(cmd) => write!(f, "proc:{}", cmd.join(" ")),
        }
    }
}

pub fn parse_backend(s: &str) -> Result<BackendChoice, String> {
    if s == "threshold" {
        return Ok(BackendChoice::Threshold);
    }
    match s.strip_prefix("proc:") {
        Some(cmd) => {
            let argv: Vec<String> = cmd.split_whitespace().map(String::from).collect();
            if argv.is_empty() {
                Err("proc: needs a command".into())
            } else {
                Ok(BackendChoice::Proc(argv))
            }
        }
        None => Err("expected `threshold` or `proc:CMD`".into()),
    }
}

/// Flags shared by `segment` and `sweep-rt`.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long, value_parser = parse_seed_roi, value_name = "X,Y,SIDE")]
    pub seed_roi: SeedRoi,
    #[arg(long, value_name = "Z")]
    pub seed_slice: usize,
    #[arg(long, default_value_t = 0.5)]
    pub cr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub prob_threshold: f64,
    #[arg(long, default_value_t = -1000.0, allow_hyphen_values = true)]
    pub hu_lo: f64,
    #[arg(long, default_value_t = 400.0, allow_hyphen_values = true)]
    pub hu_hi: f64,
    #[arg(long, default_value_t = 64)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 0)]
    pub voi_padding: usize,
    #[arg(long, value_parser = parse_backend, default_value = "threshold", value_name = "threshold|proc:CMD")]
    pub backend: BackendChoice,
    /// Seconds to wait for an external backend's handshake.
    #[arg(long, default_value_t = 30.0)]
    pub handshake_timeout: f64,
    /// Reject out-of-range probabilities from external backends.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, default_value_t = 0.6)]
    pub rt: f64,
    /// Reference mask; adds per-view and final metrics to the report.
    #[arg(long = "ref", value_name = "PATH")]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long = "ref", value_name = "PATH")]
    pub reference: PathBuf,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out_vol: PathBuf,
    #[arg(long)]
    pub out_gt: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("truth").required(true).args(["gt", "annotators"])))]
pub struct PrepArgs {
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Annotator masks fused by consensus into the ground truth.
    #[arg(long, num_args = 1..)]
    pub annotators: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub cr: f64,
    #[arg(long, default_value_t = 0.6)]
    pub rt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub empty_per_side: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_parser = parse_rt_list, default_value = "0.3,0.45,0.6,0.75,0.9")]
    pub rt_list: RtList,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ServeKind {
    /// HU-threshold backend, largest component.
    Threshold,
    /// Always 0.
    Zero,
    /// Always 1.
    One,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_enum, default_value_t = ServeKind::Threshold)]
    pub kind: ServeKind,
    #[arg(long, value_parser = parse_size, value_name = "W,H")]
    pub axial_size: Option<[usize; 2]>,
    #[arg(long, value_parser = parse_size, value_name = "W,H")]
    pub coronal_size: Option<[usize; 2]>,
    #[arg(long, value_parser = parse_size, value_name = "W,H")]
    pub sagittal_size: Option<[usize; 2]>,
    /// Answer every request for this view with an error response.
    #[arg(long, value_parser = clap::value_parser!(View))]
    pub fail_on_view: Option<View>,
}
