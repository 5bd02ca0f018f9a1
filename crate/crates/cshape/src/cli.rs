//! Command-line definition and dispatch.

use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::commands::{self, Outcome};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::formats::write_json;

#[derive(Debug, Parser)]
#[command(name = "cshape", version, about = "Band structures and measurement analysis for C-shape optomechanical crystals")]
pub struct Cli {
    /// JSON run configuration; defaults reproduce the reference device.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for artifacts whose path is not given explicitly.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Seed for stochastic steps; overrides the config value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Upper bound on worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stiffness tensor operations.
    Material {
        #[command(subcommand)]
        action: MaterialCommand,
    },
    /// Tapered C-shape parameters along the defect.
    Taper(TaperArgs),
    /// Unit-cell rasterization.
    Geometry {
        #[command(subcommand)]
        action: GeometryCommand,
    },
    /// Band structure computation.
    Bands {
        #[command(subcommand)]
        action: BandsCommand,
    },
    /// Recompute parities and region fractions of a band table in place.
    Classify(ClassifyArgs),
    /// Band gaps of a classified band table.
    Gaps(GapsArgs),
    /// Closest approach of two bands along θ, with and without C16.
    Anticross(AnticrossArgs),
    /// Multi-Lorentzian fit of a PSD trace.
    FitPsd(FitPsdArgs),
    /// Half-wave voltage from carrier/sideband ratios.
    CalibratePm(CalibratePmArgs),
    /// Vacuum coupling rate from a PSD ratio.
    G0(G0Args),
    /// Phonon occupancy from sideband counts.
    Thermometry(ThermometryArgs),
}

#[derive(Debug, Subcommand)]
pub enum MaterialCommand {
    /// Rotated tensor at given angles and tracked components over a quarter turn.
    Rotate(RotateArgs),
}

#[derive(Debug, Subcommand)]
pub enum GeometryCommand {
    /// Greymap of the material grid plus a JSON sidecar.
    Raster(RasterArgs),
}

#[derive(Debug, Subcommand)]
pub enum BandsCommand {
    /// Solve on the configured (θ, k) grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct RotateArgs {
    /// Angle (rad) at which to emit the full rotated tensor; repeatable.
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Vec<f64>,
    /// Samples of the component table on [0, π/2].
    #[arg(long, default_value_t = 181)]
    pub count: usize,
    /// Component table (CSV).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TaperArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RasterArgs {
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    /// Greymap path; the sidecar gets the same stem with `.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Band table (CSV); the modes are stored next to it with `.modes`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Zero the rotated C16 and C26 before assembly.
    #[arg(long)]
    pub force_c16_zero: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub bands: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GapsArgs {
    #[arg(long)]
    pub bands: Option<PathBuf>,
    /// Mode filter such as `sy=+1` or `sy=+1,region=cshape`.
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnticrossArgs {
    /// Band table of the sweep with the true stiffness.
    #[arg(long)]
    pub bands: Option<PathBuf>,
    /// Band table of the same sweep with C16 forced to zero.
    #[arg(long)]
    pub forced: Option<PathBuf>,
    /// Band ordinals at the first θ, `a,b`; chosen from the forced sweep if absent.
    #[arg(long)]
    pub pair: Option<String>,
    #[arg(long)]
    pub k_index: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Convention {
    Angular,
    Literal,
}

#[derive(Debug, Args)]
pub struct FitPsdArgs {
    /// Trace CSV with an `# enbw_Hz=` line and `freq_Hz,psd_linear` columns.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub peaks: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, value_enum)]
    pub convention: Option<Convention>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibratePmArgs {
    /// CSV with `power_W` (or `power_dBm`) and `ratio` columns.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Modulator impedance, Ω.
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct G0Args {
    /// Peak mechanical PSD over phase-tone PSD.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Mechanical linewidth Γ, rad/s.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Mechanical frequency Ω, rad/s.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Modulation depth, rad.
    #[arg(long)]
    pub b: Option<f64>,
    /// Mode temperature, K.
    #[arg(long = "T")]
    pub temperature: Option<f64>,
    /// Effective noise bandwidth, Hz.
    #[arg(long)]
    pub enbw: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Axis {
    Blue,
    Red,
}

#[derive(Debug, Args)]
pub struct ThermometryArgs {
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub efficiency_ratio: Option<f64>,
    /// Calibration pulses behind the background estimates.
    #[arg(long)]
    pub background_pulses: Option<u64>,
    #[arg(long, value_enum)]
    pub axis: Option<Axis>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    /// Stem of the config and metadata files written for this verb.
    pub fn name(&self) -> &'static str {
        match self {
            Command::Material { .. } => "material_rotate",
            Command::Taper(_) => "taper",
            Command::Geometry { .. } => "geometry_raster",
            Command::Bands { .. } => "bands_sweep",
            Command::Classify(_) => "classify",
            Command::Gaps(_) => "gaps",
            Command::Anticross(_) => "anticross",
            Command::FitPsd(_) => "fit_psd",
            Command::CalibratePm(_) => "calibrate_pm",
            Command::G0(_) => "g0",
            Command::Thermometry(_) => "thermometry",
        }
    }
}

/// Everything a verb needs besides its own arguments.
pub struct Context {
    pub out_dir: PathBuf,
}

impl Context {
    pub fn path(&self, explicit: &Option<PathBuf>, default: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out_dir.join(default))
    }
}

#[derive(Serialize)]
struct RunMeta<'a> {
    verb: &'a str,
    version: &'a str,
    arguments: Vec<String>,
    started_unix_s: f64,
    elapsed_s: f64,
    threads: usize,
    outputs: &'a [PathBuf],
}

/// Runs one verb: resolves the config, executes, and writes the effective
/// config and run metadata next to the results.
pub fn run(cli: Cli, arguments: Vec<String>) -> Result<Outcome, CliError> {
    if cli.threads > 0 {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let mut cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let ctx = Context { out_dir: cli.out_dir.clone() };
    let name = cli.command.name();
    let mut outcome = match &cli.command {
        Command::Material { action: MaterialCommand::Rotate(a) } => commands::material_rotate(&mut cfg, a, &ctx),
        Command::Taper(a) => commands::taper(&mut cfg, a, &ctx),
        Command::Geometry { action: GeometryCommand::Raster(a) } => commands::geometry_raster(&mut cfg, a, &ctx),
        Command::Bands { action: BandsCommand::Sweep(a) } => commands::bands_sweep(&mut cfg, a, &ctx),
        Command::Classify(a) => commands::classify(&mut cfg, a, &ctx),
        Command::Gaps(a) => commands::gaps(&mut cfg, a, &ctx),
        Command::Anticross(a) => commands::anticross(&mut cfg, a, &ctx),
        Command::FitPsd(a) => commands::fit_psd(&mut cfg, a, &ctx),
        Command::CalibratePm(a) => commands::calibrate_pm(&mut cfg, a, &ctx),
        Command::G0(a) => commands::g0(&mut cfg, a, &ctx),
        Command::Thermometry(a) => commands::thermometry(&mut cfg, a, &ctx),
    }?;

    let config_path = cli.out_dir.join(format!("{name}_effective_config.json"));
    crate::formats::write_text(&config_path, &cfg.to_json())?;
    outcome.outputs.push(config_path);
    let meta_path = cli.out_dir.join(format!("{name}_run_meta.json"));
    let threads = if cli.threads == 0 { rayon::current_num_threads() } else { cli.threads };
    write_json(
        &meta_path,
        &RunMeta {
            verb: name,
            version: env!("CARGO_PKG_VERSION"),
            arguments,
            started_unix_s: started,
            elapsed_s: clock.elapsed().as_secs_f64(),
            threads,
            outputs: &outcome.outputs,
        },
    )?;
    outcome.outputs.push(meta_path);
    Ok(outcome)
}

/// Parses `args` (program name first) and runs.
pub fn run_from<I, S>(args: I) -> Result<Outcome, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&args).map_err(|e| CliError::config(e.to_string()))?;
    run(cli, args)
}
