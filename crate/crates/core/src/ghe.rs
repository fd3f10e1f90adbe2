//! Generalized Hurst exponent from the scaling of q-th order structure
//! functions,
//!
//! ```text
//! K_q(tau) = <|X(t + tau) - X(t)|^q> / <|X(t)|^q>  ~  (tau / nu)^(q H(q))
//! ```
//!
//! `H(q)` is the OLS slope of `ln K_q(tau)` against `ln(tau / nu)` over every
//! integer lag from `nu` to `tau_max`, divided by `q`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{cumulative_sum, Panel};
use crate::spectral::{find_peaks, power_spectrum, PeakConfig};
use crate::stats::{mean, ols, std_pop};

/// 19 days of hourly samples.
pub const DEFAULT_TAU_MAX: usize = 456;

/// Detrended residuals below this fraction of the input RMS count as zero.
const DETREND_ANNIHILATION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GheConfig {
    pub q_grid: Vec<f64>,
    /// Largest lag in samples.
    pub tau_max: usize,
    /// Sampling interval in samples; the smallest lag.
    pub nu: usize,
    /// Per-window linear detrend of `X` with this window length.
    pub detrend: Option<usize>,
    /// When set, `H(q)` is averaged over fits ending at each of these lags.
    pub tau_max_sweep: Option<Vec<usize>>,
}

impl Default for GheConfig {
    fn default() -> Self {
        Self {
            q_grid: vec![1.0, 2.0],
            tau_max: DEFAULT_TAU_MAX,
            nu: 1,
            detrend: None,
            tau_max_sweep: None,
        }
    }
}

impl GheConfig {
    pub fn with_tau_max(tau_max: usize) -> Self {
        Self {
            tau_max,
            ..Self::default()
        }
    }

    /// Checks the parameters that do not depend on the series.
    pub fn validate(&self) -> Result<()> {
        if self.q_grid.is_empty() {
            return Err(Error::InvalidConfig("q grid is empty".into()));
        }
        if let Some(q) = self.q_grid.iter().find(|q| !(q.is_finite() && **q > 0.0)) {
            return Err(Error::InvalidConfig(format!("moment q = {q} must be > 0")));
        }
        if self.nu == 0 {
            return Err(Error::InvalidConfig("nu must be at least 1".into()));
        }
        for &tm in self.fit_ends() {
            if tm < 2 {
                return Err(Error::InvalidConfig(format!("tau_max {tm} must be >= 2")));
            }
            if tm <= self.nu {
                return Err(Error::InvalidConfig(format!(
                    "tau_max {tm} must exceed nu {}",
                    self.nu
                )));
            }
        }
        if let Some(w) = self.detrend {
            if w < 2 {
                return Err(Error::InvalidConfig(format!(
                    "detrend window {w} must be >= 2"
                )));
            }
        }
        Ok(())
    }

    /// Checks everything, including the constraints tied to a series length.
    pub fn validate_for_len(&self, len: usize) -> Result<()> {
        self.validate()?;
        let top = self.largest_lag();
        if len <= 2 * top {
            return Err(Error::SeriesTooShort {
                needed: 2 * top + 1,
                actual: len,
            });
        }
        if let Some(w) = self.detrend {
            if w > len {
                return Err(Error::InvalidConfig(format!(
                    "detrend window {w} longer than series ({len})"
                )));
            }
        }
        Ok(())
    }

    fn fit_ends(&self) -> &[usize] {
        match &self.tau_max_sweep {
            Some(sweep) if !sweep.is_empty() => sweep,
            _ => std::slice::from_ref(&self.tau_max),
        }
    }

    pub fn largest_lag(&self) -> usize {
        self.fit_ends()
            .iter()
            .copied()
            .chain(std::iter::once(self.tau_max))
            .max()
            .unwrap_or(self.tau_max)
    }
}

/// Scaling fit for one moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub q: f64,
    pub hurst: f64,
    pub fit_r2: f64,
    /// Spread of the estimate across a tau_max sweep; zero without a sweep.
    pub sweep_std: f64,
    /// `K_q(tau)` for `tau = nu ..= largest lag`.
    pub structure_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GheResult {
    pub nu: usize,
    pub moments: Vec<MomentEstimate>,
}

impl GheResult {
    pub fn hurst(&self, q: f64) -> Option<f64> {
        self.moments.iter().find(|m| m.q == q).map(|m| m.hurst)
    }

    pub fn lags(&self) -> impl Iterator<Item = usize> + '_ {
        let n = self.moments.first().map_or(0, |m| m.structure_values.len());
        (0..n).map(move |i| self.nu + i)
    }
}

/// Normalised q-th moment of lag-`tau` increments.
pub fn structure_function(x: &[f64], q: f64, tau: usize) -> Result<f64> {
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::InvalidConfig(format!("moment q = {q} must be > 0")));
    }
    if tau == 0 || tau >= x.len() {
        return Err(Error::OutOfRange(format!(
            "lag {tau} outside 1..{} for a series of {}",
            x.len(),
            x.len()
        )));
    }
    let denominator = absolute_moment(x, q);
    if denominator == 0.0 {
        return Err(Error::DegenerateSeries("all-zero series".into()));
    }
    Ok(increment_moment(x, q, tau) / denominator)
}

#[inline]
fn pow_abs(v: f64, q: f64) -> f64 {
    let a = v.abs();
    if q == 1.0 {
        a
    } else if q == 2.0 {
        a * a
    } else {
        a.powf(q)
    }
}

fn absolute_moment(x: &[f64], q: f64) -> f64 {
    x.iter().map(|&v| pow_abs(v, q)).sum::<f64>() / x.len() as f64
}

fn increment_moment(x: &[f64], q: f64, tau: usize) -> f64 {
    let n = x.len() - tau;
    x[tau..]
        .iter()
        .zip(&x[..n])
        .map(|(a, b)| pow_abs(a - b, q))
        .sum::<f64>()
        / n as f64
}

/// Subtracts an OLS line from each contiguous block of `window` samples.
/// A trailing block of one sample becomes zero.
pub fn detrend_windows(x: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for block in x.chunks(window) {
        let n = block.len();
        if n == 1 {
            out.push(0.0);
            continue;
        }
        let tm = (n as f64 - 1.0) / 2.0;
        let ym = mean(block);
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, &y) in block.iter().enumerate() {
            let dt = i as f64 - tm;
            sxy += dt * (y - ym);
            sxx += dt * dt;
        }
        let slope = sxy / sxx;
        out.extend(
            block
                .iter()
                .enumerate()
                .map(|(i, &y)| y - (ym + slope * (i as f64 - tm))),
        );
    }
    out
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Builds the analysed process from a series: optional cumulative sum, a
/// finiteness check, then the optional per-window detrend.
fn prepare(series: &[f64], config: &GheConfig, apply_cumsum: bool) -> Result<Vec<f64>> {
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let x = if apply_cumsum {
        cumulative_sum(series)
    } else {
        series.to_vec()
    };
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    match config.detrend {
        None => Ok(x),
        Some(window) => {
            let y = detrend_windows(&x, window);
            let before = rms(&x);
            if rms(&y) <= DETREND_ANNIHILATION * before {
                return Err(Error::DegenerateSeries(format!(
                    "detrending with window {window} leaves no signal"
                )));
            }
            Ok(y)
        }
    }
}

/// Estimates `H(q)` for each moment in the grid.
pub fn estimate_ghe(series: &[f64], config: &GheConfig, apply_cumsum: bool) -> Result<GheResult> {
    config.validate_for_len(series.len())?;
    let x = prepare(series, config, apply_cumsum)?;
    let top = config.largest_lag();
    let nu = config.nu;
    let log_lags: Vec<f64> = (nu..=top).map(|tau| (tau as f64 / nu as f64).ln()).collect();

    let mut moments = Vec::with_capacity(config.q_grid.len());
    for &q in &config.q_grid {
        let denominator = absolute_moment(&x, q);
        if denominator == 0.0 {
            return Err(Error::DegenerateSeries("all-zero series".into()));
        }
        let mut structure_values = Vec::with_capacity(log_lags.len());
        for tau in nu..=top {
            let k = increment_moment(&x, q, tau) / denominator;
            if k <= 0.0 {
                return Err(Error::DegenerateSeries(format!(
                    "K_{q}({tau}) is zero"
                )));
            }
            structure_values.push(k);
        }
        let log_k: Vec<f64> = structure_values.iter().map(|k| k.ln()).collect();

        let mut hs = Vec::new();
        let mut r2s = Vec::new();
        for &end in config.fit_ends() {
            let n = end - nu + 1;
            let fit = ols(&log_lags[..n], &log_k[..n]).ok_or_else(|| {
                Error::DegenerateSeries(format!("fit up to lag {end} has one point"))
            })?;
            hs.push(fit.slope / q);
            r2s.push(fit.r2);
        }
        moments.push(MomentEstimate {
            q,
            hurst: mean(&hs),
            fit_r2: mean(&r2s),
            sweep_std: std_pop(&hs),
            structure_values,
        });
    }
    Ok(GheResult { nu, moments })
}

/// Estimates every series of a panel in node order. Failures are kept per
/// node so callers can count and skip degenerate series.
pub fn estimate_panel(
    panel: &Panel,
    config: &GheConfig,
    apply_cumsum: bool,
) -> Vec<Result<GheResult>> {
    panel
        .rows()
        .par_iter()
        .map(|row| estimate_ghe(row, config, apply_cumsum))
        .collect()
}

/// Panel envelope of `q H(q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiScalingReport {
    pub q_grid: Vec<f64>,
    pub mean_qh: Vec<f64>,
    pub min_qh: Vec<f64>,
    pub max_qh: Vec<f64>,
    /// Panel mean of `H(1) - H(2)`; `None` unless both moments are in the grid.
    pub concavity_gap: Option<f64>,
    pub n_series: usize,
    pub n_skipped: usize,
}

impl MultiScalingReport {
    /// Aggregates per-node estimates; errors count as skipped series.
    pub fn from_estimates(q_grid: &[f64], estimates: &[Result<GheResult>]) -> Result<Self> {
        let ok: Vec<&GheResult> = estimates.iter().filter_map(|e| e.as_ref().ok()).collect();
        let skipped = estimates.len() - ok.len();
        if ok.is_empty() {
            return Err(Error::AllSeriesDegenerate(skipped));
        }
        let n = ok.len() as f64;
        let mut mean_qh = vec![0.0; q_grid.len()];
        let mut min_qh = vec![f64::INFINITY; q_grid.len()];
        let mut max_qh = vec![f64::NEG_INFINITY; q_grid.len()];
        for r in &ok {
            for (i, m) in r.moments.iter().enumerate() {
                let qh = m.q * m.hurst;
                mean_qh[i] += qh;
                min_qh[i] = min_qh[i].min(qh);
                max_qh[i] = max_qh[i].max(qh);
            }
        }
        mean_qh.iter_mut().for_each(|v| *v /= n);
        // Guard the envelope invariant against rounding in the mean.
        for i in 0..q_grid.len() {
            mean_qh[i] = mean_qh[i].clamp(min_qh[i], max_qh[i]);
        }
        let concavity_gap = match (
            q_grid.iter().position(|&q| q == 1.0),
            q_grid.iter().position(|&q| q == 2.0),
        ) {
            (Some(i1), Some(i2)) => Some(
                ok.iter()
                    .map(|r| r.moments[i1].hurst - r.moments[i2].hurst)
                    .sum::<f64>()
                    / n,
            ),
            _ => None,
        };
        Ok(Self {
            q_grid: q_grid.to_vec(),
            mean_qh,
            min_qh,
            max_qh,
            concavity_gap,
            n_series: estimates.len(),
            n_skipped: skipped,
        })
    }

    /// Plot-ready CSV: `q,mean_qH,min_qH,max_qH`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["q", "mean_qH", "min_qH", "max_qH"])?;
        for i in 0..self.q_grid.len() {
            w.write_record([
                self.q_grid[i].to_string(),
                self.mean_qh[i].to_string(),
                self.min_qh[i].to_string(),
                self.max_qh[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Aggregates `q H_i(q)` across the panel.
pub fn multiscaling_report(
    panel: &Panel,
    config: &GheConfig,
    apply_cumsum: bool,
) -> Result<MultiScalingReport> {
    config.validate_for_len(panel.len())?;
    let estimates = estimate_panel(panel, config, apply_cumsum);
    MultiScalingReport::from_estimates(&config.q_grid, &estimates)
}

/// Frequency band for the spectral-slope fit, as fractions of Nyquist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBand {
    pub low: f64,
    pub high: f64,
}

impl Default for SpectralBand {
    /// The second decade below Nyquist. Closer to Nyquist the sampled
    /// spectrum of a discrete path flattens and no longer follows the
    /// continuous power law.
    fn default() -> Self {
        Self {
            low: 0.01,
            high: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralExponent {
    /// Minus the log-log slope of the power spectrum of `X`.
    pub spectral: f64,
    /// `1 + 2 H(2)`.
    pub predicted: f64,
    pub h2: f64,
    pub n_bins: usize,
}

/// Compares the power-spectrum exponent of `X` with `1 + 2 H(2)`.
///
/// The line joining the first and last sample is removed before the
/// transform so the wrap-around jump does not add a `k^-2` leakage floor.
/// Peaks flagged by the default [`PeakConfig`] are left out of the fit.
pub fn spectral_exponent_check(
    series: &[f64],
    config: &GheConfig,
    apply_cumsum: bool,
    band: SpectralBand,
) -> Result<SpectralExponent> {
    if !(band.low > 0.0 && band.low < band.high && band.high <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "spectral band [{}, {}] must satisfy 0 < low < high <= 1",
            band.low, band.high
        )));
    }
    let h_config = GheConfig {
        q_grid: vec![2.0],
        ..config.clone()
    };
    let h2 = estimate_ghe(series, &h_config, apply_cumsum)?.moments[0].hurst;

    let x = if apply_cumsum {
        cumulative_sum(series)
    } else {
        series.to_vec()
    };
    let n = x.len();
    let (first, last) = (x[0], x[n - 1]);
    let span = (n - 1) as f64;
    let matched: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(t, &v)| v - (first + (last - first) * t as f64 / span))
        .collect();
    let power = power_spectrum(&matched)?;
    let peaks = find_peaks(&power, n, &PeakConfig::default());
    let nyquist = 0.5;
    let (mut lf, mut lp) = (Vec::new(), Vec::new());
    for (k, &p) in power.iter().enumerate().skip(1) {
        let f = k as f64 / n as f64;
        if f < band.low * nyquist || f > band.high * nyquist || p <= 0.0 {
            continue;
        }
        if peaks.iter().any(|pk| pk.bin == k) {
            continue;
        }
        lf.push(f.ln());
        lp.push(p.ln());
    }
    let fit = ols(&lf, &lp).ok_or_else(|| {
        Error::InsufficientData(format!(
            "{} usable bins in the spectral band",
            lf.len()
        ))
    })?;
    Ok(SpectralExponent {
        spectral: -fit.slope,
        predicted: 1.0 + 2.0 * h2,
        h2,
        n_bins: lf.len(),
    })
}

/// Largest relative change of `H(q)` caused by detrending with any of the
/// given windows. An empty window list gives zero.
pub fn detrending_robustness(
    series: &[f64],
    config: &GheConfig,
    apply_cumsum: bool,
    windows: &[usize],
) -> Result<f64> {
    if windows.is_empty() {
        return Ok(0.0);
    }
    let limit = series.len() / 4;
    if let Some(&w) = windows.iter().find(|&&w| w < 2 || w > limit) {
        return Err(Error::InvalidConfig(format!(
            "detrend window {w} outside [2, {limit}]"
        )));
    }
    let raw_config = GheConfig {
        detrend: None,
        ..config.clone()
    };
    let raw = estimate_ghe(series, &raw_config, apply_cumsum)?;
    let mut worst = 0.0f64;
    for &w in windows {
        let cfg = GheConfig {
            detrend: Some(w),
            ..config.clone()
        };
        let detrended = estimate_ghe(series, &cfg, apply_cumsum)?;
        for (a, b) in raw.moments.iter().zip(&detrended.moments) {
            let change = (b.hurst - a.hurst).abs() / a.hurst.abs();
            worst = worst.max(change);
        }
    }
    Ok(worst)
}
