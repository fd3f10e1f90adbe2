//! Trend extrapolation with the intercept pinned to the last observation,
//! forecast errors, and the regression of log error on the training-window
//! Hurst exponent (`E(H) ~ E0 * 10^(c H)`), including `c` as a function of
//! the forecast lag.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ghe::{estimate_ghe, GheConfig};
use crate::panel::Panel;
use crate::rolling::{DEFAULT_WINDOW, DEFAULT_WINDOW_TAU_MAX};
use crate::spectral::{filter_panel, FilterSpec};
use crate::stats::{median, ols};

/// Slope of the least-squares line through `window` whose value at the last
/// sample is fixed to that sample:
///
/// `b1 = sum_k k (S(t) - S(t - k)) / sum_k k^2`, `k = 0 .. len - 1`.
pub fn fit_trend_slope(window: &[f64]) -> Result<f64> {
    let n = window.len();
    if n < 2 {
        return Err(Error::WindowTooSmall {
            window: n,
            minimum: 2,
        });
    }
    let last = window[n - 1];
    let (mut num, mut den) = (0.0, 0.0);
    for k in 1..n {
        let kf = k as f64;
        num += kf * (last - window[n - 1 - k]);
        den += kf * kf;
    }
    Ok(num / den)
}

/// Predicts `S(t + p)` from the `window` samples ending at `t`.
pub fn forecast(series: &[f64], t: usize, p: usize, window: usize) -> Result<f64> {
    if window < 2 {
        return Err(Error::WindowTooSmall { window, minimum: 2 });
    }
    if p == 0 {
        return Err(Error::OutOfRange("lag must be at least 1".into()));
    }
    if t + 1 < window {
        return Err(Error::OutOfRange(format!(
            "origin {t} leaves fewer than {window} training samples"
        )));
    }
    if t + p >= series.len() {
        return Err(Error::OutOfRange(format!(
            "target {} beyond series of {}",
            t + p,
            series.len()
        )));
    }
    let slope = fit_trend_slope(&series[t + 1 - window..=t])?;
    Ok(series[t] + slope * p as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    /// `|predicted - actual|`
    #[default]
    Absolute,
    /// `(predicted - actual)^2`
    Squared,
}

impl ErrorMetric {
    fn apply(self, predicted: f64, actual: f64) -> f64 {
        let d = predicted - actual;
        match self {
            ErrorMetric::Absolute => d.abs(),
            ErrorMetric::Squared => d * d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    /// Training window in samples.
    pub window: usize,
    pub lags: Vec<usize>,
    /// Scaling parameters for the training-window exponents; the moment grid
    /// is ignored, `H(1)` and `H(2)` are always estimated.
    pub ghe: GheConfig,
    pub filter: Option<FilterSpec>,
    #[serde(default)]
    pub error_metric: ErrorMetric,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            lags: (1..=24).collect(),
            ghe: GheConfig::with_tau_max(DEFAULT_WINDOW_TAU_MAX),
            filter: None,
            error_metric: ErrorMetric::Absolute,
        }
    }
}

impl ForecastConfig {
    fn hurst_config(&self) -> GheConfig {
        GheConfig {
            q_grid: vec![1.0, 2.0],
            ..self.ghe.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 {
            return Err(Error::WindowTooSmall {
                window: self.window,
                minimum: 3,
            });
        }
        if self.lags.is_empty() {
            return Err(Error::InvalidConfig("no forecast lags given".into()));
        }
        if self.lags.contains(&0) {
            return Err(Error::InvalidConfig("forecast lags must be >= 1".into()));
        }
        let mut sorted = self.lags.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("forecast lags must be distinct".into()));
        }
        let top = self.ghe.largest_lag();
        if top > self.window / 2 {
            return Err(Error::InvalidConfig(format!(
                "tau_max {top} exceeds half the training window ({})",
                self.window / 2
            )));
        }
        // The exponent window spans window + 1 samples, [t - window, t].
        self.hurst_config()
            .validate_for_len(self.window + 1)
            .map_err(|e| match e {
                Error::SeriesTooShort { .. } => Error::InvalidConfig(format!(
                    "training window {} too short for tau_max {top}",
                    self.window
                )),
                other => other,
            })?;
        if let Some(f) = &self.filter {
            f.validate()?;
        }
        Ok(())
    }

    pub fn max_lag(&self) -> usize {
        self.lags.iter().copied().max().unwrap_or(0)
    }

    /// Exact number of records [`run_study`] produces for a panel.
    pub fn record_count(&self, n_nodes: usize, len: usize) -> usize {
        self.lags
            .iter()
            .map(|&p| len.saturating_sub(self.window + p))
            .sum::<usize>()
            * n_nodes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub node: String,
    /// Forecast origin (sample index).
    pub t: usize,
    pub p: usize,
    pub predicted: f64,
    pub actual: f64,
    pub error: f64,
    /// `None` when the training window was degenerate.
    pub h1: Option<f64>,
    pub h2: Option<f64>,
}

impl ForecastRecord {
    pub fn is_degenerate(&self) -> bool {
        self.h1.is_none() || self.h2.is_none()
    }

    pub fn hurst(&self, order: HurstOrder) -> Option<f64> {
        match order {
            HurstOrder::One => self.h1,
            HurstOrder::Two => self.h2,
        }
    }
}

/// Records stream as `node,t,p,predicted,actual,error,H1,H2`.
pub fn write_records_csv<W: Write>(records: &[ForecastRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["node", "t", "p", "predicted", "actual", "error", "H1", "H2"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.node.clone(),
            r.t.to_string(),
            r.p.to_string(),
            r.predicted.to_string(),
            r.actual.to_string(),
            r.error.to_string(),
            opt(r.h1),
            opt(r.h2),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Every forecast for every node, origin and lag, with the training-window
/// exponents. Origins run over `window ..= T - 1 - p`.
pub fn run_study(panel: &Panel, config: &ForecastConfig) -> Result<Vec<ForecastRecord>> {
    config.validate()?;
    let len = panel.len();
    let max_lag = config.max_lag();
    if len <= config.window + max_lag {
        return Err(Error::SeriesTooShort {
            needed: config.window + max_lag + 1,
            actual: len,
        });
    }
    let filtered;
    let source = match &config.filter {
        Some(spec) => {
            filtered = filter_panel(panel, spec)?;
            &filtered
        }
        None => panel,
    };
    let hurst_config = config.hurst_config();
    let mut lags = config.lags.clone();
    lags.sort_unstable();
    let min_lag = lags[0];

    let per_node: Vec<Vec<ForecastRecord>> = source
        .iter_series()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|view| {
            let s = view.values;
            let origins: Vec<usize> = (config.window..len - min_lag).collect();
            origins
                .par_iter()
                .map(|&t| {
                    let h = estimate_ghe(&s[t - config.window..=t], &hurst_config, true)
                        .ok()
                        .map(|r| (r.moments[0].hurst, r.moments[1].hurst));
                    let slope = fit_trend_slope(&s[t + 1 - config.window..=t])
                        .expect("window >= 3 was validated");
                    lags.iter()
                        .filter(|&&p| t + p < len)
                        .map(|&p| {
                            let predicted = s[t] + slope * p as f64;
                            let actual = s[t + p];
                            ForecastRecord {
                                node: view.node.name.clone(),
                                t,
                                p,
                                predicted,
                                actual,
                                error: config.error_metric.apply(predicted, actual),
                                h1: h.map(|v| v.0),
                                h2: h.map(|v| v.1),
                            }
                        })
                        .collect::<Vec<_>>()
                })
                .flatten()
                .collect()
        })
        .collect();
    Ok(per_node.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HurstOrder {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl HurstOrder {
    pub fn q(self) -> f64 {
        match self {
            HurstOrder::One => 1.0,
            HurstOrder::Two => 2.0,
        }
    }
}

impl TryFrom<f64> for HurstOrder {
    type Error = Error;

    fn try_from(q: f64) -> Result<Self> {
        if q == 1.0 {
            Ok(HurstOrder::One)
        } else if q == 2.0 {
            Ok(HurstOrder::Two)
        } else {
            Err(Error::InvalidConfig(format!(
                "forecast records carry H(1) and H(2) only, not q = {q}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum FitMode {
    /// OLS over every record.
    #[default]
    Pointwise,
    /// OLS through per-bin medians of `H` and `log10(error)`, bins of equal
    /// width in H.
    Binned { bins: usize },
}

/// `log10(error) = log10(E0) + c H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLinearFit {
    pub e0: f64,
    pub c: f64,
    pub r2: f64,
    /// Points in the regression (records, or bins for a binned fit).
    pub n_points: usize,
    pub n_zero_excluded: usize,
    pub n_degenerate_excluded: usize,
}

/// Regresses `log10(error)` on `H(q)` over pooled records.
pub fn fit_error_vs_hurst(
    records: &[ForecastRecord],
    order: HurstOrder,
    mode: FitMode,
) -> Result<LogLinearFit> {
    let mut n_zero = 0;
    let mut n_degenerate = 0;
    let mut hs = Vec::with_capacity(records.len());
    let mut logs = Vec::with_capacity(records.len());
    for r in records {
        let Some(h) = r.hurst(order) else {
            n_degenerate += 1;
            continue;
        };
        if r.error.is_nan() || r.error <= 0.0 {
            n_zero += 1;
            continue;
        }
        hs.push(h);
        logs.push(r.error.log10());
    }
    if hs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} records with positive error ({n_zero} zero, {n_degenerate} degenerate)",
            hs.len()
        )));
    }
    let (x, y) = match mode {
        FitMode::Pointwise => (hs, logs),
        FitMode::Binned { bins } => binned_medians(&hs, &logs, bins)?,
    };
    let fit = ols(&x, &y).ok_or_else(|| {
        Error::InsufficientData("all records share the same Hurst value".into())
    })?;
    Ok(LogLinearFit {
        e0: 10f64.powf(fit.intercept),
        c: fit.slope,
        r2: fit.r2,
        n_points: x.len(),
        n_zero_excluded: n_zero,
        n_degenerate_excluded: n_degenerate,
    })
}

fn binned_medians(h: &[f64], y: &[f64], bins: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if bins < 2 {
        return Err(Error::InvalidConfig("binned fit needs at least 2 bins".into()));
    }
    let lo = h.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    if width.is_nan() || width <= 0.0 {
        return Err(Error::InsufficientData("all records share the same Hurst value".into()));
    }
    let mut groups = vec![Vec::new(); bins];
    for (&hv, &yv) in h.iter().zip(y) {
        let b = (((hv - lo) / width) as usize).min(bins - 1);
        groups[b].push((hv, yv));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for g in &groups {
        if g.is_empty() {
            continue;
        }
        let (gh, gy): (Vec<f64>, Vec<f64>) = g.iter().copied().unzip();
        xs.extend(median(&gh));
        ys.extend(median(&gy));
    }
    Ok((xs, ys))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopePoint {
    pub p: usize,
    pub fit: LogLinearFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedLag {
    pub p: usize,
    pub reason: String,
}

/// `c(p)` for one variant of the data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SlopeCurve {
    pub points: Vec<SlopePoint>,
    pub skipped: Vec<SkippedLag>,
}

impl SlopeCurve {
    pub fn slope_at(&self, p: usize) -> Option<f64> {
        self.points.iter().find(|pt| pt.p == p).map(|pt| pt.fit.c)
    }
}

/// Fits one curve from already computed records.
pub fn curve_from_records(
    records: &[ForecastRecord],
    lags: &[usize],
    order: HurstOrder,
    mode: FitMode,
) -> SlopeCurve {
    let mut curve = SlopeCurve::default();
    for &p in lags {
        let at_lag: Vec<ForecastRecord> = records.iter().filter(|r| r.p == p).cloned().collect();
        match fit_error_vs_hurst(&at_lag, order, mode) {
            Ok(fit) => curve.points.push(SlopePoint { p, fit }),
            Err(e) => curve.skipped.push(SkippedLag {
                p,
                reason: e.to_string(),
            }),
        }
    }
    curve
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeCurves {
    pub q: f64,
    pub unfiltered: SlopeCurve,
    /// Present when the config requests filtering.
    pub filtered: Option<SlopeCurve>,
}

impl SlopeCurves {
    /// CSV rows `q,p,variant,c,E0,r2,n_points`.
    pub fn write_csv<W: Write>(curves: &[SlopeCurves], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["q", "p", "variant", "c", "E0", "r2", "n_points"])?;
        for set in curves {
            let variants = std::iter::once(("unfiltered", &set.unfiltered))
                .chain(set.filtered.as_ref().map(|c| ("filtered", c)));
            for (name, curve) in variants {
                for pt in &curve.points {
                    w.write_record([
                        set.q.to_string(),
                        pt.p.to_string(),
                        name.to_string(),
                        pt.fit.c.to_string(),
                        pt.fit.e0.to_string(),
                        pt.fit.r2.to_string(),
                        pt.fit.n_points.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `c(p)` over the configured lags on the raw panel and, when the config
/// carries a filter, on the filtered panel too.
pub fn slope_vs_lag(
    panel: &Panel,
    config: &ForecastConfig,
    orders: &[HurstOrder],
    mode: FitMode,
) -> Result<Vec<SlopeCurves>> {
    let raw_config = ForecastConfig {
        filter: None,
        ..config.clone()
    };
    let raw = run_study(panel, &raw_config)?;
    let filtered = match &config.filter {
        Some(_) => Some(run_study(panel, config)?),
        None => None,
    };
    Ok(orders
        .iter()
        .map(|&order| SlopeCurves {
            q: order.q(),
            unfiltered: curve_from_records(&raw, &config.lags, order, mode),
            filtered: filtered
                .as_ref()
                .map(|recs| curve_from_records(recs, &config.lags, order, mode)),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synthetic_panel;

    fn record(h: f64, error: f64) -> ForecastRecord {
        ForecastRecord {
            node: "a".into(),
            t: 0,
            p: 1,
            predicted: 0.0,
            actual: error,
            error,
            h1: Some(h),
            h2: Some(h),
        }
    }

    #[test]
    fn trend_slope_examples() {
        assert_eq!(fit_trend_slope(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 1.0);
        assert_eq!(fit_trend_slope(&[7.5; 6]).unwrap(), 0.0);
        assert_eq!(fit_trend_slope(&[0.0, 3.0]).unwrap(), 3.0);
        assert!(matches!(fit_trend_slope(&[1.0]), Err(Error::WindowTooSmall { .. })));
    }

    /// Golden-section search on the constrained squared error. Losses are
    /// compared through `sum (r_c - r_d)(r_c + r_d)` to avoid cancellation.
    fn golden_slope(w: &[f64]) -> f64 {
        let n = w.len();
        let last = w[n - 1];
        let resid = |b: f64, k: usize| w[n - 1 - k] - (last - b * k as f64);
        let lower = |c: f64, d: f64| -> bool {
            let diff: f64 = (0..n)
                .map(|k| (c - d) * k as f64 * (resid(c, k) + resid(d, k)))
                .sum();
            diff < 0.0
        };
        let (mut a, mut b) = (-1e3, 1e3);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        for _ in 0..200 {
            if lower(c, d) {
                b = d;
            } else {
                a = c;
            }
            c = b - g * (b - a);
            d = a + g * (b - a);
        }
        0.5 * (a + b)
    }

    #[test]
    fn trend_slope_matches_golden_section() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.random_range(2..60);
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let closed = fit_trend_slope(&w).unwrap();
            let brute = golden_slope(&w);
            assert!((closed - brute).abs() < 1e-9, "{closed} vs {brute}");
        }
    }

    #[test]
    fn forecast_examples() {
        let ramp: Vec<f64> = (0..40).map(|t| 2.0 * t as f64 + 1.0).collect();
        let pred = forecast(&ramp, 20, 2, 10).unwrap();
        assert_eq!(pred, ramp[22]);
        let flat = vec![4.0; 30];
        assert_eq!(forecast(&flat, 10, 7, 5).unwrap(), 4.0);
        let s = [1.0, 2.0, 3.0, 4.0, 5.0, 0.0, 0.0];
        assert_eq!(forecast(&s, 4, 2, 5).unwrap(), 7.0);
        assert!(matches!(forecast(&s, 3, 1, 5), Err(Error::OutOfRange(_))));
        assert!(matches!(forecast(&s, 4, 3, 5), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn forecast_is_equivariant() {
        let s: Vec<f64> = (0..60).map(|t| ((t * 13) % 7) as f64 + 0.3 * t as f64).collect();
        let base = forecast(&s, 40, 3, 20).unwrap();
        let shifted: Vec<f64> = s.iter().map(|v| v + 5.0).collect();
        let scaled: Vec<f64> = s.iter().map(|v| -2.5 * v).collect();
        assert!((forecast(&shifted, 40, 3, 20).unwrap() - (base + 5.0)).abs() < 1e-12);
        assert!((forecast(&scaled, 40, 3, 20).unwrap() - (-2.5 * base)).abs() < 1e-12);
    }

    #[test]
    fn exact_log_linear_points() {
        let recs: Vec<ForecastRecord> = [(0.5, -1.0), (0.6, -1.2), (0.7, -1.4)]
            .iter()
            .map(|&(h, l)| record(h, 10f64.powf(l)))
            .collect();
        let fit = fit_error_vs_hurst(&recs, HurstOrder::One, FitMode::Pointwise).unwrap();
        assert!((fit.c + 2.0).abs() < 1e-9);
        assert!((fit.e0 - 1.0).abs() < 1e-9);
        assert!((fit.r2 - 1.0).abs() < 1e-9);
        assert_eq!(fit.n_points, 3);
    }

    #[test]
    fn flat_errors_give_zero_slope() {
        let recs: Vec<ForecastRecord> = (0..5).map(|i| record(0.4 + 0.1 * i as f64, 0.3)).collect();
        let fit = fit_error_vs_hurst(&recs, HurstOrder::Two, FitMode::Pointwise).unwrap();
        assert!(fit.c.abs() < 1e-12);
    }

    #[test]
    fn zero_errors_and_degenerate_records_are_excluded() {
        let mut recs = vec![record(0.5, 0.0), record(0.6, 1.0), record(0.7, 0.1)];
        recs.push(ForecastRecord { h1: None, ..record(0.9, 5.0) });
        let fit = fit_error_vs_hurst(&recs, HurstOrder::One, FitMode::Pointwise).unwrap();
        assert_eq!((fit.n_points, fit.n_zero_excluded, fit.n_degenerate_excluded), (2, 1, 1));
        assert!(matches!(
            fit_error_vs_hurst(&recs[..1], HurstOrder::One, FitMode::Pointwise),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn binned_fit_recovers_exact_model() {
        let recs: Vec<ForecastRecord> = (0..100)
            .map(|i| {
                let h = 0.3 + 0.006 * i as f64;
                record(h, 0.5 * 10f64.powf(-1.5 * h))
            })
            .collect();
        let fit = fit_error_vs_hurst(&recs, HurstOrder::One, FitMode::Binned { bins: 10 }).unwrap();
        assert_eq!(fit.n_points, 10);
        assert!((fit.c + 1.5).abs() < 1e-9);
        assert!((fit.e0 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn hurst_order_conversion() {
        assert_eq!(HurstOrder::try_from(2.0).unwrap(), HurstOrder::Two);
        assert!(HurstOrder::try_from(3.0).is_err());
    }

    #[test]
    fn ramp_panel_has_zero_errors_and_no_fits() {
        let ramps = (0..3).map(|i| (0..200).map(|t| t as f64 * (i + 1) as f64).collect()).collect();
        let panel = synthetic_panel("r", ramps).unwrap();
        let cfg = ForecastConfig {
            lags: vec![1, 5],
            ..ForecastConfig::default()
        };
        let records = run_study(&panel, &cfg).unwrap();
        assert_eq!(records.len(), cfg.record_count(3, 200));
        assert!(records.iter().all(|r| r.error.abs() < 1e-9));
        let curves = slope_vs_lag(&panel, &cfg, &[HurstOrder::One], FitMode::Pointwise).unwrap();
        assert!(curves[0].unfiltered.points.is_empty());
        assert_eq!(curves[0].unfiltered.skipped.len(), 2);
    }

    #[test]
    fn config_validation() {
        let cfg = ForecastConfig {
            window: 2,
            ..ForecastConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::WindowTooSmall { .. })));
        let cfg = ForecastConfig {
            lags: vec![],
            ..ForecastConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ForecastConfig {
            ghe: GheConfig::with_tau_max(30),
            ..ForecastConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
