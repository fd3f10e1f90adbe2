use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use multiscale_core::ghe::DEFAULT_TAU_MAX;
use multiscale_core::rolling::{DEFAULT_SHIFT_THRESHOLD, DEFAULT_WINDOW, DEFAULT_WINDOW_TAU_MAX};
use multiscale_core::synth::Harmonic;
use multiscale_core::PanelFormat;

#[derive(Debug, Parser)]
#[command(
    name = "multiscale",
    version,
    about = "Multi-scaling, seasonality and trend-persistence analysis of hourly price panels"
)]
pub struct Cli {
    /// Worker threads; defaults to every available core. Results do not
    /// depend on this value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Panel-averaged power spectrum with flagged peaks.
    Spectrum(SpectrumArgs),
    /// Generalized Hurst exponents of every series.
    Ghe(GheArgs),
    /// Exponents on moving windows and detected shifts.
    Rolling(RollingArgs),
    /// Trend forecasts and the error-vs-Hurst slopes c(p).
    Forecast(ForecastArgs),
    /// Spectrum, then c(p) on the raw and the filtered panel.
    Pipeline(PipelineArgs),
    /// Generate synthetic panels with known scaling.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Re-run a previous run from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for PanelFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => PanelFormat::Csv,
            FormatArg::Json => PanelFormat::Json,
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Panel file (CSV or JSON).
    #[arg(long, short)]
    pub input: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Directory for reports and the run manifest.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Remove the cyclical components before the analysis.
    #[arg(long)]
    pub filtered: bool,
    /// Periods (hours) removed by --filtered.
    #[arg(long, value_delimiter = ',', default_value = "24,12,8,6")]
    pub filter_periods: Vec<f64>,
    /// Extra bins zeroed on each side of every removed period.
    #[arg(long, default_value_t = 0)]
    pub filter_halfwidth: usize,
}

#[derive(Debug, Args)]
pub struct PeakArgs {
    /// Peak when power exceeds this multiple of the local median.
    #[arg(long, default_value_t = 10.0)]
    pub peaks_threshold: f64,
    /// Half-width, in bins, of the local-median neighbourhood.
    #[arg(long, default_value_t = 16)]
    pub peaks_half_window: usize,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub peaks: PeakArgs,
}

#[derive(Debug, Args)]
pub struct GheArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Moments q.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub q: Vec<f64>,
    /// Largest lag in samples (456 h = 19 days).
    #[arg(long, default_value_t = DEFAULT_TAU_MAX)]
    pub tau_max: usize,
    /// Smallest lag in samples.
    #[arg(long, default_value_t = 1)]
    pub nu: usize,
    /// Remove a local line from the integrated series in windows of this many samples.
    #[arg(long)]
    pub detrend: Option<usize>,
    /// Average the estimate over fits ending at each of these lags.
    #[arg(long, value_delimiter = ',')]
    pub tau_max_sweep: Option<Vec<usize>>,
    /// Treat the input as the integrated process (skip the cumulative sum).
    #[arg(long)]
    pub no_cumsum: bool,
    /// Also compare the spectral exponent with 1 + 2 H(2) for every node.
    #[arg(long)]
    pub spectral_check: bool,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct RollingArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Window length in samples.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub dh: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Largest lag inside each window.
    #[arg(long, default_value_t = DEFAULT_WINDOW_TAU_MAX)]
    pub tau_max: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub q: Vec<f64>,
    /// Write every node's estimates as well as the market envelope.
    #[arg(long)]
    pub per_node: bool,
    /// Jump of the market mean that counts as a shift.
    #[arg(long, default_value_t = DEFAULT_SHIFT_THRESHOLD)]
    pub shift_threshold: f64,
    /// Moment used for shift detection.
    #[arg(long, default_value_t = 1.0)]
    pub shift_q: f64,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct ForecastParams {
    /// Training window in samples.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub dh: usize,
    /// Forecast lags, e.g. `1..24`, `1,6,12` or `1..6,12`.
    #[arg(long, default_value = "1..24", value_parser = parse_lags)]
    pub lags: Lags,
    /// Largest lag for the training-window exponents.
    #[arg(long, default_value_t = DEFAULT_WINDOW_TAU_MAX)]
    pub tau_max: usize,
    /// Use squared instead of absolute forecast errors.
    #[arg(long)]
    pub squared_error: bool,
    /// Fit through per-bin medians over this many H bins instead of every record.
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub params: ForecastParams,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub params: ForecastParams,
    #[command(flatten)]
    pub peaks: PeakArgs,
    /// Periods (hours) removed for the filtered variant.
    #[arg(long, value_delimiter = ',', default_value = "24,12,8,6")]
    pub filter_periods: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub filter_halfwidth: usize,
}

#[derive(Debug, Args)]
pub struct SynthOutput {
    #[command(flatten)]
    pub output: OutputArgs,
    /// Panel file format.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// Number of series; node i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub nodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Fractional Gaussian noise, or fractional Brownian motion with --path.
    Fbm {
        #[arg(long = "H")]
        hurst: f64,
        /// Samples per series; a power of two, at least 64.
        #[arg(long = "T")]
        len: usize,
        /// Write the integrated path instead of the increments.
        #[arg(long)]
        path: bool,
        #[command(flatten)]
        out: SynthOutput,
    },
    /// Randomized binomial multiplicative cascade.
    Cascade {
        #[arg(long, default_value_t = 0.6)]
        m0: f64,
        /// 2^depth samples per series.
        #[arg(long, default_value_t = 14)]
        depth: u32,
        #[command(flatten)]
        out: SynthOutput,
    },
    /// Sum of harmonics plus fractional Gaussian noise.
    Seasonal {
        #[arg(long = "T", default_value_t = 1632)]
        len: usize,
        /// Harmonics as `period:amplitude[:phase]`.
        #[arg(long, value_delimiter = ',', default_value = "24:3,12:2,8:1", value_parser = parse_harmonic)]
        harmonics: Vec<Harmonic>,
        /// Exponent of the noise.
        #[arg(long = "H", default_value_t = 0.5)]
        hurst: f64,
        /// Leave out the noise.
        #[arg(long)]
        no_noise: bool,
        #[command(flatten)]
        out: SynthOutput,
    },
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest written by a previous run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; defaults to the one recorded in the manifest.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lags(pub Vec<usize>);

/// Parses `a..b`, `a..=b` (both inclusive) and comma-separated mixes of
/// ranges and single lags.
pub fn parse_lags(s: &str) -> Result<Lags, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let b = b.strip_prefix('=').unwrap_or(b);
            let lo: usize = a.trim().parse().map_err(|_| format!("bad lag range `{part}`"))?;
            let hi: usize = b.trim().parse().map_err(|_| format!("bad lag range `{part}`"))?;
            if lo > hi {
                return Err(format!("empty lag range `{part}`"));
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().map_err(|_| format!("bad lag `{part}`"))?);
        }
    }
    if out.is_empty() {
        return Err("no lags given".into());
    }
    Ok(Lags(out))
}

pub fn parse_harmonic(s: &str) -> Result<Harmonic, String> {
    let fields: Vec<&str> = s.split(':').collect();
    let num = |v: &str| -> Result<f64, String> {
        v.trim()
            .parse()
            .map_err(|_| format!("bad harmonic `{s}`, expected period:amplitude[:phase]"))
    };
    match fields.as_slice() {
        [p, a] => Ok(Harmonic::new(num(p)?, num(a)?)),
        [p, a, ph] => Ok(Harmonic {
            period_hours: num(p)?,
            amplitude: num(a)?,
            phase: num(ph)?,
        }),
        _ => Err(format!("bad harmonic `{s}`, expected period:amplitude[:phase]")),
    }
}
