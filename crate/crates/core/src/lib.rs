//! Multi-scaling analysis of panels of hourly price series.
//!
//! - [`panel`]: ingestion and validation of node-by-hour price panels.
//! - [`ghe`]: generalized Hurst exponents from q-th order structure functions.
//! - [`spectral`]: power spectra, peak flagging and removal of daily cycles.
//! - [`rolling`]: exponents on moving windows with market envelopes.
//! - [`forecast`]: pinned-intercept trend forecasts and error-vs-Hurst fits.
//! - [`synth`]: generators with known scaling used as ground truth.

pub mod error;
pub mod forecast;
pub mod ghe;
pub mod panel;
pub mod rolling;
pub mod spectral;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use forecast::{
    fit_error_vs_hurst, fit_trend_slope, forecast, run_study, slope_vs_lag, ErrorMetric, FitMode,
    ForecastConfig, ForecastRecord, HurstOrder, LogLinearFit, SlopeCurve, SlopeCurves,
};
pub use ghe::{
    detrending_robustness, estimate_ghe, multiscaling_report, spectral_exponent_check,
    structure_function, GheConfig, GheResult, MultiScalingReport, SpectralBand, SpectralExponent,
};
pub use panel::{cumulative_sum, load_panel, ComponentRole, NodeId, Panel, PanelFormat, SeriesView};
pub use rolling::{detect_shifts, rolling_ghe, RollingConfig, RollingTrace, Shift};
pub use spectral::{
    market_average_spectrum, power_spectrum, remove_components, FilterSpec, PeakConfig,
    SpectrumReport,
};
pub use synth::{gen_cascade, gen_fbm, gen_seasonal, CascadeSpec, FbmOutput, FbmSpec, SeasonalSpec};
