use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "ANCHOR_EMO_SEED";

#[derive(Debug, Parser)]
#[command(name = "anchor-emo", version, about = "Anchor overlap analysis for face detectors")]
pub struct Cli {
    /// Worker threads (default: all cores). Never changes the output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize, PartialEq)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// EMO score table over scale x stride pairs
    Emo(EmoArgs),
    /// Dump every anchor of a layout
    Grid(GridArgs),
    /// Per-scale-bucket max IoU and recall over an annotation file
    Stats(StatsArgs),
    /// Per-face and per-anchor assignment
    Match(MatchArgs),
    /// Rank anchor designs from a search space
    Optimize(OptimizeArgs),
    /// Re-run the command recorded in a manifest
    #[serde(skip)]
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Emo(_) => "emo",
            Command::Grid(_) => "grid",
            Command::Stats(_) => "stats",
            Command::Match(_) => "match",
            Command::Optimize(_) => "optimize",
            Command::Replay(_) => "replay",
        }
    }

    /// Output settings of every subcommand except `replay`.
    pub fn output_mut(&mut self) -> Option<&mut OutputArgs> {
        match self {
            Command::Emo(a) => Some(&mut a.output),
            Command::Grid(a) => Some(&mut a.output),
            Command::Stats(a) => Some(&mut a.output),
            Command::Match(a) => Some(&mut a.output),
            Command::Optimize(a) => Some(&mut a.output),
            Command::Replay(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatArg {
    #[default]
    Csv,
    Json,
}

/// Where results go. Not part of the manifest, except the format.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize, PartialEq)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,

    /// Output file (default: stdout)
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,

    /// Manifest file (default: <out>.manifest.json, or stderr without --out)
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct EmoArgs {
    /// Face sides in pixels
    #[arg(long = "scales", alias = "scale", value_delimiter = ',', required = true)]
    pub scales: Vec<f64>,

    /// Anchor strides in pixels
    #[arg(long = "strides", alias = "stride", value_delimiter = ',', required = true)]
    pub strides: Vec<f64>,

    /// Monte Carlo against a same-size square lattice instead of quadrature
    #[arg(long)]
    pub mc: bool,

    #[arg(long, default_value_t = anchor_emo_core::emo::DEFAULT_MC_SAMPLES)]
    pub samples: usize,

    /// Quadrature cells per axis
    #[arg(long, default_value_t = anchor_emo_core::emo::DEFAULT_QUADRATURE_CELLS)]
    pub cells: usize,

    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub output: OutputArgs,
}

/// An anchor spec from a file, or inline flags.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize, PartialEq)]
pub struct SpecArgs {
    /// Anchor spec file (TOML or JSON)
    #[arg(long = "spec")]
    pub spec: Vec<PathBuf>,

    /// Inline anchor scales (default: 16,32,...,512)
    #[arg(long, value_delimiter = ',', conflicts_with = "spec")]
    pub scales: Vec<f64>,

    /// Inline aspect ratios h/w
    #[arg(long, value_delimiter = ',', conflicts_with = "spec")]
    pub ratios: Vec<f64>,

    #[arg(long, conflicts_with = "spec")]
    pub base_stride: Option<f64>,

    /// Stride divisor: 1, 2 or 4
    #[arg(long, conflicts_with = "spec")]
    pub divisor: Option<u32>,

    /// Shifted anchors per scale as SCALE:N with N in {0,1,3}
    #[arg(long, value_delimiter = ',', value_parser = parse_shift, conflicts_with = "spec")]
    pub shifts: Vec<(f64, u64)>,
}

fn parse_shift(s: &str) -> Result<(f64, u64), String> {
    let (scale, n) = s.split_once(':').ok_or_else(|| format!("expected SCALE:N, got {s:?}"))?;
    let scale: f64 = scale.trim().parse().map_err(|_| format!("bad scale in {s:?}"))?;
    let n: u64 = n.trim().parse().map_err(|_| format!("bad shift count in {s:?}"))?;
    if !matches!(n, 0 | 1 | 3) {
        return Err(format!("shift count must be 0, 1 or 3, got {n}"));
    }
    Ok((scale, n))
}

fn parse_plane(s: &str) -> Result<(f64, f64), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let dim = |v: &str| -> Result<f64, String> {
        let x: f64 = v.trim().parse().map_err(|_| format!("bad plane size {s:?}"))?;
        if x.is_finite() && x > 0.0 {
            Ok(x)
        } else {
            Err(format!("plane sides must be positive, got {s:?}"))
        }
    };
    Ok((dim(w)?, dim(h)?))
}

fn parse_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("must be in [0, 1], got {v}"))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct GridArgs {
    #[command(flatten)]
    pub spec: SpecArgs,

    /// Plane size, e.g. 640x480
    #[arg(long, value_parser = parse_plane, required = true)]
    pub plane: (f64, f64),

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct StatsArgs {
    /// Annotation listing: image path, face count, then `x y w h ...` rows
    #[arg(long, required = true)]
    pub annotations: PathBuf,

    /// Repeat --spec to compare layouts
    #[command(flatten)]
    pub spec: SpecArgs,

    /// Bucket edges in pixels of sqrt(area)
    #[arg(long, value_delimiter = ',', default_values_t = anchor_emo_core::dataset::DEFAULT_BUCKET_EDGES)]
    pub buckets: Vec<f64>,

    #[arg(long, value_parser = parse_unit, default_value_t = anchor_emo_core::dataset::DEFAULT_TAU)]
    pub tau: f64,

    /// Face shift jittering experiment over --trials random offsets
    #[arg(long)]
    pub jitter: bool,

    #[arg(long, default_value_t = 16, requires = "jitter")]
    pub trials: usize,

    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct MatchArgs {
    #[arg(long, required = true)]
    pub annotations: PathBuf,

    #[command(flatten)]
    pub spec: SpecArgs,

    /// Positive IoU threshold
    #[arg(long, value_parser = parse_unit, default_value_t = 0.5)]
    pub th: f64,

    /// Negative IoU threshold
    #[arg(long, value_parser = parse_unit, default_value_t = 0.3)]
    pub tl: f64,

    /// Hard face compensation: top-N anchors per hard face, 0 disables
    #[arg(long, default_value_t = 5)]
    pub hc: usize,

    /// Shift each image's faces by one random offset before matching
    #[arg(long)]
    pub jitter: bool,

    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,

    /// Also write the per-anchor labels (non-negative anchors) here
    #[arg(long)]
    #[serde(skip)]
    pub anchors_out: Option<PathBuf>,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct OptimizeArgs {
    #[arg(long, required = true)]
    pub annotations: PathBuf,

    /// Search space file (TOML or JSON)
    #[arg(long, required = true)]
    pub space: PathBuf,

    #[arg(long, value_parser = parse_unit, default_value_t = anchor_emo_core::dataset::DEFAULT_TAU)]
    pub tau: f64,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Default, Args, PartialEq)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run
    pub manifest_path: PathBuf,

    /// Compare the regenerated artifact with this file; exit 1 if it differs
    #[arg(long)]
    pub verify: Option<PathBuf>,

    /// Output file (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}
