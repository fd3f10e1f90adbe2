mod args;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use multiscale_core::forecast::FitMode;
use multiscale_core::{
    ErrorMetric, FbmOutput, FilterSpec, ForecastConfig, GheConfig, PanelFormat, PeakConfig,
    RollingConfig,
};

use args::{Cli, Command, FilterArgs, ForecastParams, InputArgs, PeakArgs, SynthCommand};
use run::{read_manifest, run_and_write, InputSpec, RunSpec, SynthSpec};

/// Bad arguments or input detected by the front end itself.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

const EXIT_RUNTIME: u8 = 1;
const EXIT_VALIDATION: u8 = 2;

fn is_validation(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        cause.is::<Invalid>()
            || cause
                .downcast_ref::<multiscale_core::Error>()
                .is_some_and(|e| e.is_validation())
    })
}

fn input_spec(args: &InputArgs) -> InputSpec {
    // Absolute paths keep manifests usable from any working directory.
    let path = std::fs::canonicalize(&args.input).unwrap_or_else(|_| args.input.clone());
    let format = args
        .format
        .map(PanelFormat::from)
        .unwrap_or_else(|| PanelFormat::from_path(&args.input));
    InputSpec { path, format }
}

fn filter_spec(args: &FilterArgs) -> Option<FilterSpec> {
    args.filtered.then(|| FilterSpec {
        periods_hours: args.filter_periods.clone(),
        bin_halfwidth: args.filter_halfwidth,
    })
}

fn peak_config(args: &PeakArgs) -> PeakConfig {
    PeakConfig {
        threshold: args.peaks_threshold,
        half_window: args.peaks_half_window,
        ..PeakConfig::default()
    }
}

fn forecast_config(p: &ForecastParams, filter: Option<FilterSpec>) -> (ForecastConfig, FitMode) {
    let config = ForecastConfig {
        window: p.dh,
        lags: p.lags.0.clone(),
        ghe: GheConfig::with_tau_max(p.tau_max),
        filter,
        error_metric: if p.squared_error {
            ErrorMetric::Squared
        } else {
            ErrorMetric::Absolute
        },
    };
    let fit = match p.bins {
        Some(bins) => FitMode::Binned { bins },
        None => FitMode::Pointwise,
    };
    (config, fit)
}

fn resolve(command: Command) -> anyhow::Result<(RunSpec, PathBuf)> {
    Ok(match command {
        Command::Spectrum(a) => (
            RunSpec::Spectrum {
                input: input_spec(&a.input),
                peaks: peak_config(&a.peaks),
            },
            a.output.output,
        ),
        Command::Ghe(a) => (
            RunSpec::Ghe {
                input: input_spec(&a.input),
                ghe: GheConfig {
                    q_grid: a.q,
                    tau_max: a.tau_max,
                    nu: a.nu,
                    detrend: a.detrend,
                    tau_max_sweep: a.tau_max_sweep,
                },
                cumsum: !a.no_cumsum,
                filter: filter_spec(&a.filter),
                spectral_check: a.spectral_check,
            },
            a.output.output,
        ),
        Command::Rolling(a) => (
            RunSpec::Rolling {
                input: input_spec(&a.input),
                rolling: RollingConfig {
                    window: a.dh,
                    stride: a.stride,
                    ghe: GheConfig {
                        q_grid: a.q,
                        ..GheConfig::with_tau_max(a.tau_max)
                    },
                    filter: filter_spec(&a.filter),
                    keep_per_node: a.per_node,
                },
                shift_threshold: a.shift_threshold,
                shift_q: a.shift_q,
            },
            a.output.output,
        ),
        Command::Forecast(a) => {
            let (forecast, fit) = forecast_config(&a.params, filter_spec(&a.filter));
            (
                RunSpec::Forecast {
                    input: input_spec(&a.input),
                    forecast,
                    fit,
                },
                a.output.output,
            )
        }
        Command::Pipeline(a) => {
            let filter = FilterSpec {
                periods_hours: a.filter_periods,
                bin_halfwidth: a.filter_halfwidth,
            };
            let (forecast, fit) = forecast_config(&a.params, Some(filter));
            (
                RunSpec::Pipeline {
                    input: input_spec(&a.input),
                    peaks: peak_config(&a.peaks),
                    forecast,
                    fit,
                },
                a.output.output,
            )
        }
        Command::Synth(s) => {
            let (spec, out) = match s {
                SynthCommand::Fbm {
                    hurst,
                    len,
                    path,
                    out,
                } => (
                    SynthSpec::Fbm {
                        hurst,
                        len,
                        output: if path {
                            FbmOutput::Path
                        } else {
                            FbmOutput::Increments
                        },
                    },
                    out,
                ),
                SynthCommand::Cascade { m0, depth, out } => (SynthSpec::Cascade { m0, depth }, out),
                SynthCommand::Seasonal {
                    len,
                    harmonics,
                    hurst,
                    no_noise,
                    out,
                } => (
                    SynthSpec::Seasonal {
                        len,
                        harmonics,
                        noise_hurst: (!no_noise).then_some(hurst),
                    },
                    out,
                ),
            };
            (
                RunSpec::Synth {
                    spec,
                    nodes: out.nodes,
                    seed: out.seed,
                    format: out.format.into(),
                },
                out.output.output,
            )
        }
        Command::Replay(a) => {
            let manifest = read_manifest(&a.manifest)?;
            (manifest.run, a.output.unwrap_or(manifest.output))
        }
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Invalid("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()?;
    }
    let (spec, output) = resolve(cli.command)?;
    run_and_write(spec, Path::new(&output))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_validation(&err) {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}
