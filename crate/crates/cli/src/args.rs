use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use osmosis::{GridShape, Scheme, DEFAULT_POSITIVITY_OFFSET};

#[derive(Debug, Parser)]
#[command(
    name = "osmosis",
    version,
    about = "Linear osmosis filtering with ADI splitting"
)]
pub struct Cli {
    /// Worker threads (channels, optional parallel bench cells). 1 keeps
    /// every run serial.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve an image towards the steady state of a reference image.
    Solve(SolveArgs),
    /// Measure rRMSE against the matrix exponential and fit loglog slopes.
    OrderStudy(OrderStudyArgs),
    /// Time split and unsplit solvers over a grid of step sizes.
    Bench(BenchArgs),
    /// Remove a shadow given its boundary mask.
    Shadow(ShadowArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    Fe,
    Be,
    /// Unsplit θ-method.
    Theta,
    Pr,
    Douglas,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Fe => Scheme::ForwardEuler,
            SchemeArg::Be => Scheme::BackwardEuler,
            SchemeArg::Theta => Scheme::ThetaFull,
            SchemeArg::Pr => Scheme::PeacemanRachford,
            SchemeArg::Douglas => Scheme::Douglas,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SchemeArgs {
    #[arg(long, value_enum, default_value_t = SchemeArg::Douglas)]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 10.0)]
    pub tau: f64,
    /// Final time; the run takes round(T/τ) steps.
    #[arg(long = "T", default_value_t = 5000.0)]
    pub t_final: f64,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Offset added to every input value to make it strictly positive.
    #[arg(long, default_value_t = DEFAULT_POSITIVITY_OFFSET)]
    pub eps: f64,
    /// Grid spacing.
    #[arg(long, default_value_t = 1.0)]
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SolveArgs {
    /// Initial image f (PGM/PPM).
    #[arg(long)]
    pub input: PathBuf,
    /// Image v whose canonical drift drives the evolution; defaults to the
    /// input.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write per-step mean and minimum to <out>.diagnostics.csv.
    #[arg(long)]
    pub diagnostics: bool,
    #[command(flatten)]
    pub scheme: SchemeArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(['x', 'X', '×'])
            .ok_or_else(|| format!("expected NXxNY, got {s:?}"))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| format!("bad grid size {t:?}"))
        };
        Ok(Grid {
            nx: parse(a)?,
            ny: parse(b)?,
        })
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.nx, self.ny)
    }
}

impl From<Grid> for GridShape {
    fn from(g: Grid) -> Self {
        GridShape::new(g.nx, g.ny)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OrderStudyArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.4,0.8")]
    pub taus: Vec<f64>,
    #[arg(long = "T", default_value_t = 10.0)]
    pub t_final: f64,
    /// Comma list of scheme[:theta], e.g. pr,douglas:0.5,douglas:1,be.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "pr,douglas:0.5,douglas:1,be"
    )]
    pub schemes: Vec<String>,
    /// Synthetic grid size.
    #[arg(long, default_value = "32x40")]
    pub grid: Grid,
    /// Draw v uniformly from [0.2, 0.8] with this seed instead of the
    /// smooth bump.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub h: f64,
    /// CSV destination; stdout if omitted.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// Also write whitespace-separated (tau, rrmse) blocks for plotting.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceArg {
    /// Matrix exponential when the grid is small enough, otherwise the
    /// steady state.
    Auto,
    Expm,
    Steady,
    None,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10,100")]
    pub taus: Vec<f64>,
    #[arg(long = "T", default_value_t = 5000.0)]
    pub t_final: f64,
    /// Comma list of method[:theta]: bicgstab-full, lu-full, douglas-adi,
    /// pr-adi. Defaults to the seven standard rows.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Synthetic grid size (bump v, constant f).
    #[arg(long, conflicts_with = "input", default_value = "32x40")]
    pub grid: Grid,
    /// Use the first channel of this image as v, with constant f.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_POSITIVITY_OFFSET)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub h: f64,
    /// Runs per cell; the fastest is reported.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeat: u64,
    #[arg(long, value_enum, default_value_t = ReferenceArg::Auto)]
    pub reference: ReferenceArg,
    /// Run cells concurrently (skews timings).
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ShadowArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// PGM marking the shadow boundary (values above 127/255).
    #[arg(long)]
    pub mask: PathBuf,
    /// Square dilation radius applied to the mask.
    #[arg(long, default_value_t = 1)]
    pub dilate: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub scheme: SchemeArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs into this directory (same file names) instead of the
    /// recorded paths.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
