//! Power spectra, panel-averaged spectra with peak flagging, and removal of
//! cyclical components by zeroing DFT bins.

use std::io::Write;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;
use crate::stats::median;

/// Daily harmonics removed by default, in hours.
pub const STANDARD_PERIODS: [f64; 4] = [24.0, 12.0, 8.0, 6.0];

pub(crate) fn fft_forward(values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

pub(crate) fn fft_in_place(buf: &mut [Complex64]) {
    FftPlanner::new().plan_fft_forward(buf.len()).process(buf);
}

/// Unnormalised inverse transform followed by the `1/n` factor.
pub(crate) fn ifft_normalized(buf: &mut [Complex64]) {
    let n = buf.len();
    FftPlanner::new().plan_fft_inverse(n).process(buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
}

/// One-sided `|FFT(s)|^2` for bins `0..=T/2`, no window and no normalisation.
pub fn power_spectrum(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 4 {
        return Err(Error::SeriesTooShort {
            needed: 4,
            actual: values.len(),
        });
    }
    let spec = fft_forward(values);
    Ok(spec[..values.len() / 2 + 1].iter().map(|c| c.norm_sqr()).collect())
}

/// Frequency of bin `k` in cycles per sample (cycles/hour for hourly data).
pub fn bin_frequency(bin: usize, len: usize) -> f64 {
    bin as f64 / len as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    /// A bin is a peak when its power exceeds `threshold` times the median of
    /// its neighbourhood.
    pub threshold: f64,
    /// Neighbourhood half-width in bins.
    pub half_window: usize,
    /// Candidate periods (hours) used to label peaks.
    pub standard_periods: Vec<f64>,
    /// A peak is labelled with a standard period when within this many bins.
    pub label_tolerance_bins: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            threshold: 10.0,
            half_window: 16,
            standard_periods: STANDARD_PERIODS.to_vec(),
            label_tolerance_bins: 1.0,
        }
    }
}

impl PeakConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::InvalidConfig("peak threshold must be positive".into()));
        }
        if self.half_window == 0 {
            return Err(Error::InvalidConfig("peak half-window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub bin: usize,
    pub period_hours: f64,
    /// Power over the neighbourhood median.
    pub ratio: f64,
    /// Nearest standard period when within tolerance.
    pub label: Option<f64>,
}

/// Flags local maxima of a one-sided spectrum that stand above the local
/// median. The DC bin is never a peak and is excluded from neighbourhoods.
pub fn find_peaks(power: &[f64], len: usize, config: &PeakConfig) -> Vec<Peak> {
    let last = power.len().saturating_sub(1);
    if last < 1 {
        return Vec::new();
    }
    // Bins at round-off level relative to the strongest bin are never peaks.
    let floor = power[1..].iter().cloned().fold(0.0, f64::max) * 1e-12;
    let mut peaks = Vec::new();
    for k in 1..=last {
        let lo = k.saturating_sub(config.half_window).max(1);
        let hi = (k + config.half_window).min(last);
        let Some(med) = median(&power[lo..=hi]) else {
            continue;
        };
        let p = power[k];
        if p <= floor {
            continue;
        }
        let ratio = if med > 0.0 {
            p / med
        } else if p > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio <= config.threshold {
            continue;
        }
        let left_ok = k == 1 || p >= power[k - 1];
        let right_ok = k == last || p > power[k + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        peaks.push(Peak {
            bin: k,
            period_hours: len as f64 / k as f64,
            ratio,
            label: label_for_bin(k, len, config),
        });
    }
    peaks
}

fn label_for_bin(bin: usize, len: usize, config: &PeakConfig) -> Option<f64> {
    config
        .standard_periods
        .iter()
        .map(|&p| (p, (bin as f64 - len as f64 / p).abs()))
        .filter(|&(_, d)| d <= config.label_tolerance_bins)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(p, _)| p)
}

/// Panel-averaged power spectrum with flagged peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub series_len: usize,
    pub n_series: usize,
    pub bin_freqs: Vec<f64>,
    pub mean_power: Vec<f64>,
    pub peaks: Vec<Peak>,
}

impl SpectrumReport {
    /// Plot-ready CSV: `bin,freq,power,is_peak,period_label`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin", "freq", "power", "is_peak", "period_label"])?;
        let mut peak_iter = self.peaks.iter().peekable();
        for (k, (f, p)) in self.bin_freqs.iter().zip(&self.mean_power).enumerate() {
            let peak = match peak_iter.peek() {
                Some(pk) if pk.bin == k => peak_iter.next(),
                _ => None,
            };
            let label = peak
                .and_then(|pk| pk.label)
                .map(|l| format!("{l}h"))
                .unwrap_or_default();
            w.write_record([
                k.to_string(),
                f.to_string(),
                p.to_string(),
                peak.is_some().to_string(),
                label,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn peak_periods(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.period_hours).collect()
    }
}

/// Averages `|FFT|^2` over every node, then flags peaks.
pub fn market_average_spectrum(panel: &Panel, config: &PeakConfig) -> Result<SpectrumReport> {
    config.validate()?;
    let len = panel.len();
    let spectra = panel
        .rows()
        .par_iter()
        .map(|row| power_spectrum(row))
        .collect::<Result<Vec<_>>>()?;
    let n = spectra.len() as f64;
    let mut mean_power = vec![0.0; len / 2 + 1];
    for s in &spectra {
        for (acc, v) in mean_power.iter_mut().zip(s) {
            *acc += v;
        }
    }
    mean_power.iter_mut().for_each(|v| *v /= n);
    let peaks = find_peaks(&mean_power, len, config);
    Ok(SpectrumReport {
        series_len: len,
        n_series: spectra.len(),
        bin_freqs: (0..mean_power.len()).map(|k| bin_frequency(k, len)).collect(),
        mean_power,
        peaks,
    })
}

/// Periods to notch out of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub periods_hours: Vec<f64>,
    /// Extra bins zeroed on each side of the target bin.
    pub bin_halfwidth: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            periods_hours: STANDARD_PERIODS.to_vec(),
            bin_halfwidth: 0,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        for &p in &self.periods_hours {
            if !(p.is_finite() && p >= 2.0) {
                return Err(Error::InvalidConfig(format!(
                    "filter period {p} h must be at least 2 h"
                )));
            }
        }
        Ok(())
    }

    /// Target bins for a series of `len` samples.
    pub fn bins(&self, len: usize) -> Result<Vec<usize>> {
        self.validate()?;
        let max_bin = len / 2;
        self.periods_hours
            .iter()
            .map(|&period| {
                let bin = (len as f64 / period).round() as i64;
                if bin < 1 || bin as usize > max_bin {
                    Err(Error::PeriodOutOfRange {
                        period,
                        bin,
                        max_bin,
                    })
                } else {
                    Ok(bin as usize)
                }
            })
            .collect()
    }
}

/// Zeroes the bins of each requested period (and their conjugate mirrors)
/// and transforms back. The DC bin is left untouched.
pub fn remove_components(values: &[f64], spec: &FilterSpec) -> Result<Vec<f64>> {
    let len = values.len();
    if len < 4 {
        return Err(Error::SeriesTooShort {
            needed: 4,
            actual: len,
        });
    }
    let bins = spec.bins(len)?;
    let mut buf = fft_forward(values);
    let max_bin = len / 2;
    for &b in &bins {
        let lo = b.saturating_sub(spec.bin_halfwidth).max(1);
        let hi = (b + spec.bin_halfwidth).min(max_bin);
        for k in lo..=hi {
            buf[k] = Complex64::new(0.0, 0.0);
            buf[len - k] = Complex64::new(0.0, 0.0);
        }
    }
    ifft_normalized(&mut buf);
    Ok(buf.into_iter().map(|c| c.re).collect())
}

/// Applies [`remove_components`] to every series of a panel.
pub fn filter_panel(panel: &Panel, spec: &FilterSpec) -> Result<Panel> {
    spec.bins(panel.len())?;
    let filtered = panel
        .rows()
        .par_iter()
        .map(|row| remove_components(row, spec))
        .collect::<Result<Vec<_>>>()?;
    Panel::new(panel.nodes().to_vec(), panel.start(), filtered)
}
