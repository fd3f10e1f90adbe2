//! Resolved run specifications, their execution, and the manifest that makes
//! every run repeatable.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use multiscale_core::forecast::{curve_from_records, write_records_csv, FitMode, HurstOrder};
use multiscale_core::ghe::estimate_panel;
use multiscale_core::rolling::shift_regions;
use multiscale_core::spectral::filter_panel;
use multiscale_core::synth::{noise_len_for, synthetic_panel, Harmonic};
use multiscale_core::{
    detect_shifts, gen_cascade, gen_fbm, gen_seasonal, load_panel, market_average_spectrum,
    rolling_ghe, run_study, slope_vs_lag, spectral_exponent_check, CascadeSpec, FbmOutput,
    FbmSpec, FilterSpec, ForecastConfig, GheConfig, MultiScalingReport, Panel, PanelFormat,
    PeakConfig, RollingConfig, SeasonalSpec, SlopeCurve, SlopeCurves, SpectralBand,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::Invalid;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub path: PathBuf,
    pub format: PanelFormat,
}

impl InputSpec {
    fn load(&self) -> Result<Panel> {
        if !self.path.is_file() {
            return Err(Invalid(format!("input file {} not found", self.path.display())).into());
        }
        load_panel(&self.path, self.format)
            .with_context(|| format!("reading {}", self.path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "lowercase")]
pub enum SynthSpec {
    Fbm {
        hurst: f64,
        len: usize,
        output: FbmOutput,
    },
    Cascade {
        m0: f64,
        depth: u32,
    },
    Seasonal {
        len: usize,
        harmonics: Vec<Harmonic>,
        noise_hurst: Option<f64>,
    },
}

/// Fully resolved parameters of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunSpec {
    Spectrum {
        input: InputSpec,
        peaks: PeakConfig,
    },
    Ghe {
        input: InputSpec,
        ghe: GheConfig,
        cumsum: bool,
        filter: Option<FilterSpec>,
        spectral_check: bool,
    },
    Rolling {
        input: InputSpec,
        rolling: RollingConfig,
        shift_threshold: f64,
        shift_q: f64,
    },
    Forecast {
        input: InputSpec,
        forecast: ForecastConfig,
        fit: FitMode,
    },
    Pipeline {
        input: InputSpec,
        peaks: PeakConfig,
        forecast: ForecastConfig,
        fit: FitMode,
    },
    Synth {
        spec: SynthSpec,
        nodes: usize,
        seed: u64,
        format: PanelFormat,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub output: PathBuf,
    pub run: RunSpec,
    pub files: Vec<String>,
}

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn new(name: &str, bytes: Vec<u8>) -> Self {
        Self {
            name: name.to_string(),
            bytes,
        }
    }

    fn json<T: Serialize>(name: &str, value: &T) -> Result<Self> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        Ok(Self::new(name, bytes))
    }
}

fn csv_bytes<F>(write: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> multiscale_core::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

impl RunSpec {
    /// Parameter checks that need no data.
    pub fn validate(&self) -> Result<()> {
        match self {
            RunSpec::Spectrum { peaks, .. } => peaks.validate()?,
            RunSpec::Ghe { ghe, filter, .. } => {
                ghe.validate()?;
                if let Some(f) = filter {
                    f.validate()?;
                }
            }
            RunSpec::Rolling {
                rolling,
                shift_threshold,
                shift_q,
                ..
            } => {
                rolling.validate()?;
                if !(shift_threshold.is_finite() && *shift_threshold > 0.0) {
                    return Err(Invalid("shift threshold must be positive".into()).into());
                }
                if !rolling.ghe.q_grid.contains(shift_q) {
                    return Err(Invalid(format!("shift moment q = {shift_q} not in --q")).into());
                }
            }
            RunSpec::Forecast { forecast, fit, .. } | RunSpec::Pipeline { forecast, fit, .. } => {
                forecast.validate()?;
                if let FitMode::Binned { bins } = fit {
                    if *bins < 2 {
                        return Err(Invalid("--bins must be at least 2".into()).into());
                    }
                }
                if let RunSpec::Pipeline { peaks, .. } = self {
                    peaks.validate()?;
                }
            }
            RunSpec::Synth { nodes, .. } => {
                if *nodes == 0 {
                    return Err(Invalid("--nodes must be at least 1".into()).into());
                }
            }
        }
        Ok(())
    }

    /// Runs the analysis and returns the report files, without touching the
    /// output directory.
    pub fn execute(&self) -> Result<Vec<Artifact>> {
        self.validate()?;
        match self {
            RunSpec::Spectrum { input, peaks } => spectrum(&input.load()?, peaks),
            RunSpec::Ghe {
                input,
                ghe,
                cumsum,
                filter,
                spectral_check,
            } => ghe_run(&input.load()?, ghe, *cumsum, filter.as_ref(), *spectral_check),
            RunSpec::Rolling {
                input,
                rolling,
                shift_threshold,
                shift_q,
            } => rolling_run(&input.load()?, rolling, *shift_threshold, *shift_q),
            RunSpec::Forecast {
                input,
                forecast,
                fit,
            } => forecast_run(&input.load()?, forecast, *fit),
            RunSpec::Pipeline {
                input,
                peaks,
                forecast,
                fit,
            } => pipeline(&input.load()?, peaks, forecast, *fit),
            RunSpec::Synth {
                spec,
                nodes,
                seed,
                format,
            } => synth(spec, *nodes, *seed, *format),
        }
    }
}

/// Executes `run` and writes its reports plus the manifest into `output`.
/// Nothing is written unless the whole run succeeds.
pub fn run_and_write(run: RunSpec, output: &Path) -> Result<()> {
    let artifacts = run.execute()?;
    fs::create_dir_all(output)
        .with_context(|| format!("creating output directory {}", output.display()))?;
    for a in &artifacts {
        let path = output.join(&a.name);
        fs::write(&path, &a.bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        output: fs::canonicalize(output).unwrap_or_else(|_| output.to_path_buf()),
        files: artifacts.iter().map(|a| a.name.clone()).collect(),
        run,
    };
    let m = Artifact::json(MANIFEST_FILE, &manifest)?;
    fs::write(output.join(MANIFEST_FILE), m.bytes)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Invalid(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Invalid(format!("malformed manifest {}: {e}", path.display())).into())
}

fn spectrum(panel: &Panel, peaks: &PeakConfig) -> Result<Vec<Artifact>> {
    let report = market_average_spectrum(panel, peaks)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin", "period_hours", "ratio", "label"])?;
    for p in &report.peaks {
        w.write_record([
            p.bin.to_string(),
            p.period_hours.to_string(),
            p.ratio.to_string(),
            p.label.map(|l| format!("{l}h")).unwrap_or_default(),
        ])?;
    }
    let peaks_csv = w.into_inner()?;
    Ok(vec![
        Artifact::new("spectrum.csv", csv_bytes(|b| report.write_csv(b))?),
        Artifact::new("peaks.csv", peaks_csv),
        Artifact::json("spectrum.json", &report)?,
    ])
}

fn maybe_filter(panel: &Panel, filter: Option<&FilterSpec>) -> Result<Panel> {
    Ok(match filter {
        Some(spec) => filter_panel(panel, spec)?,
        None => panel.clone(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn ghe_run(
    panel: &Panel,
    config: &GheConfig,
    cumsum: bool,
    filter: Option<&FilterSpec>,
    spectral_check: bool,
) -> Result<Vec<Artifact>> {
    config.validate_for_len(panel.len())?;
    let panel = maybe_filter(panel, filter)?;
    let estimates = estimate_panel(&panel, config, cumsum);
    let report = MultiScalingReport::from_estimates(&config.q_grid, &estimates)?;
    let checks: Vec<Option<_>> = if spectral_check {
        panel
            .iter_series()
            .map(|s| spectral_exponent_check(s.values, config, cumsum, SpectralBand::default()).ok())
            .collect()
    } else {
        vec![None; panel.n_nodes()]
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["node".to_string()];
    for q in &config.q_grid {
        header.push(format!("H{q}"));
        header.push(format!("r2_{q}"));
    }
    if spectral_check {
        header.extend(["beta".into(), "beta_predicted".into()]);
    }
    header.push("status".into());
    w.write_record(&header)?;
    let mut nodes = Vec::new();
    for ((node, est), check) in panel.nodes().iter().zip(&estimates).zip(&checks) {
        let mut rec = vec![node.label()];
        match est {
            Ok(r) => {
                for m in &r.moments {
                    rec.push(m.hurst.to_string());
                    rec.push(m.fit_r2.to_string());
                }
            }
            Err(_) => rec.extend(std::iter::repeat_n(String::new(), 2 * config.q_grid.len())),
        }
        if spectral_check {
            rec.push(fmt_opt(check.map(|c| c.spectral)));
            rec.push(fmt_opt(check.map(|c| c.predicted)));
        }
        let status = match est {
            Ok(_) => "ok".to_string(),
            Err(e) => {
                eprintln!("warning: node {} skipped: {e}", node.label());
                format!("skipped: {e}")
            }
        };
        rec.push(status.clone());
        w.write_record(&rec)?;
        nodes.push(json!({
            "node": node.label(),
            "estimate": est.as_ref().ok(),
            "spectral_check": check,
            "status": status,
        }));
    }
    let nodes_csv = w.into_inner()?;
    Ok(vec![
        Artifact::new("ghe_nodes.csv", nodes_csv),
        Artifact::new("multiscaling.csv", csv_bytes(|b| report.write_csv(b))?),
        Artifact::json("ghe.json", &json!({ "report": report, "nodes": nodes }))?,
    ])
}

fn rolling_run(
    panel: &Panel,
    config: &RollingConfig,
    threshold: f64,
    shift_q: f64,
) -> Result<Vec<Artifact>> {
    let trace = rolling_ghe(panel, config)?;
    let shifts = detect_shifts(&trace, shift_q, threshold)?;
    let regions = shift_regions(&shifts, config.window);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "time", "jump"])?;
    for s in &shifts {
        w.write_record([s.index.to_string(), s.time.to_string(), s.jump.to_string()])?;
    }
    let shifts_csv = w.into_inner()?;
    let summary: Vec<_> = config
        .ghe
        .q_grid
        .iter()
        .map(|&q| json!({ "q": q, "time_mean": trace.time_mean(q), "temporal_std": trace.temporal_std(q) }))
        .collect();
    let mut out = vec![
        Artifact::new("rolling.csv", csv_bytes(|b| trace.write_csv(b))?),
        Artifact::new("shifts.csv", shifts_csv),
    ];
    if trace.per_node.is_some() {
        out.push(Artifact::new(
            "rolling_nodes.csv",
            csv_bytes(|b| trace.write_per_node_csv(b))?,
        ));
    }
    out.push(Artifact::json(
        "rolling.json",
        &json!({ "summary": summary, "shifts": shifts, "regions": regions, "trace": trace }),
    )?);
    Ok(out)
}

const ORDERS: [HurstOrder; 2] = [HurstOrder::One, HurstOrder::Two];

fn report_skipped(curves: &[SlopeCurves]) {
    for c in curves {
        let variants = [("unfiltered", Some(&c.unfiltered)), ("filtered", c.filtered.as_ref())];
        for (name, curve) in variants {
            for s in curve.map(|c| c.skipped.as_slice()).unwrap_or_default() {
                eprintln!("note: {name} fit skipped for q={} p={}: {}", c.q, s.p, s.reason);
            }
        }
    }
}

fn forecast_run(panel: &Panel, config: &ForecastConfig, fit: FitMode) -> Result<Vec<Artifact>> {
    let records = run_study(panel, config)?;
    let variant = |curve| {
        if config.filter.is_some() {
            (SlopeCurve::default(), Some(curve))
        } else {
            (curve, None)
        }
    };
    let curves: Vec<SlopeCurves> = ORDERS
        .iter()
        .map(|&order| {
            let (unfiltered, filtered) =
                variant(curve_from_records(&records, &config.lags, order, fit));
            SlopeCurves {
                q: order.q(),
                unfiltered,
                filtered,
            }
        })
        .collect();
    report_skipped(&curves);
    let degenerate = records.iter().filter(|r| r.is_degenerate()).count();
    let zero = records.iter().filter(|r| r.error == 0.0).count();
    Ok(vec![
        Artifact::new("records.csv", csv_bytes(|b| write_records_csv(&records, b))?),
        Artifact::new("slopes.csv", csv_bytes(|b| SlopeCurves::write_csv(&curves, b))?),
        Artifact::json(
            "forecast.json",
            &json!({
                "n_records": records.len(),
                "n_degenerate": degenerate,
                "n_zero_error": zero,
                "curves": curves,
            }),
        )?,
    ])
}

fn pipeline(
    panel: &Panel,
    peaks: &PeakConfig,
    config: &ForecastConfig,
    fit: FitMode,
) -> Result<Vec<Artifact>> {
    let mut out = spectrum(panel, peaks)?;
    let curves = slope_vs_lag(panel, config, &ORDERS, fit)?;
    report_skipped(&curves);
    out.push(Artifact::new(
        "slopes.csv",
        csv_bytes(|b| SlopeCurves::write_csv(&curves, b))?,
    ));
    out.push(Artifact::json("pipeline.json", &json!({ "curves": curves }))?);
    Ok(out)
}

fn synth(spec: &SynthSpec, nodes: usize, seed: u64, format: PanelFormat) -> Result<Vec<Artifact>> {
    let seeds = (0..nodes as u64).map(|i| seed.wrapping_add(i));
    let series: Vec<Vec<f64>> = match spec {
        SynthSpec::Fbm { hurst, len, output } => seeds
            .map(|s| gen_fbm(&FbmSpec::new(*hurst, *len, s, *output)))
            .collect::<multiscale_core::Result<_>>()?,
        SynthSpec::Cascade { m0, depth } => seeds
            .map(|s| {
                gen_cascade(&CascadeSpec {
                    m0: *m0,
                    depth: *depth,
                    seed: s,
                })
            })
            .collect::<multiscale_core::Result<_>>()?,
        SynthSpec::Seasonal {
            len,
            harmonics,
            noise_hurst,
        } => seeds
            .map(|s| {
                gen_seasonal(&SeasonalSpec {
                    len: *len,
                    harmonics: harmonics.clone(),
                    noise: noise_hurst.map(|h| {
                        FbmSpec::new(h, noise_len_for(*len), s, FbmOutput::Increments)
                    }),
                })
            })
            .collect::<multiscale_core::Result<_>>()?,
    };
    let panel = synthetic_panel("s", series)?;
    let mut buf = Vec::new();
    let name = match format {
        PanelFormat::Csv => {
            panel.write_csv(&mut buf)?;
            "panel.csv"
        }
        PanelFormat::Json => {
            panel.write_json(&mut buf)?;
            "panel.json"
        }
    };
    Ok(vec![Artifact::new(name, buf)])
}
