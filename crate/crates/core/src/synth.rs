//! Synthetic series with known scaling: exact fractional Gaussian noise,
//! randomized binomial cascades, and seasonal harmonics over fGn noise.
//!
//! Every generator is a pure function of its spec, seed included.

use chrono::NaiveDateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{cumulative_sum, parse_timestamp, Panel};
use crate::spectral::{fft_forward, fft_in_place};
use crate::stats::ols;

/// Start time used for generated panels.
pub const SYNTH_START: &str = "2014-01-01T00:00:00";

/// Maximum number of times the circulant embedding is doubled before giving up.
const MAX_EMBEDDING_DOUBLINGS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FbmOutput {
    /// Cumulative sum of the noise.
    Path,
    /// Fractional Gaussian noise.
    #[default]
    Increments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmSpec {
    pub hurst: f64,
    /// Number of samples; a power of two, at least 64.
    pub len: usize,
    pub seed: u64,
    #[serde(default)]
    pub output: FbmOutput,
}

impl FbmSpec {
    pub fn new(hurst: f64, len: usize, seed: u64, output: FbmOutput) -> Self {
        Self {
            hurst,
            len,
            seed,
            output,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "Hurst exponent {} outside (0, 1)",
                self.hurst
            )));
        }
        if self.len < 64 || !self.len.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "fBm length {} must be a power of two >= 64",
                self.len
            )));
        }
        Ok(())
    }
}

/// Autocovariance of unit-variance fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Eigenvalues of the circulant embedding of size `size` (even).
fn circulant_eigenvalues(hurst: f64, size: usize) -> Vec<f64> {
    let half = size / 2;
    let row: Vec<f64> = (0..size)
        .map(|k| {
            let lag = if k <= half { k } else { size - k };
            fgn_autocovariance(hurst, lag)
        })
        .collect();
    fft_forward(&row).into_iter().map(|c| c.re).collect()
}

/// Exact-covariance fractional Gaussian noise by circulant embedding.
fn fgn(hurst: f64, len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut size = 2 * len;
    let mut doublings = 0;
    let eigen = loop {
        let eigen = circulant_eigenvalues(hurst, size);
        let max = eigen.iter().cloned().fold(0.0, f64::max);
        let min = eigen.iter().cloned().fold(f64::INFINITY, f64::min);
        // Round-off can push zero eigenvalues slightly negative.
        if min >= -1e-10 * max {
            break eigen;
        }
        if doublings == MAX_EMBEDDING_DOUBLINGS {
            return Err(Error::EmbeddingFailure {
                size,
                eigenvalue: min,
            });
        }
        doublings += 1;
        size *= 2;
    };
    let scale = 1.0 / size as f64;
    let mut buf: Vec<Complex64> = eigen
        .iter()
        .map(|&lambda| {
            let amp = (lambda.max(0.0) * scale).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(amp * re, amp * im)
        })
        .collect();
    fft_in_place(&mut buf);
    Ok(buf[..len].iter().map(|c| c.re).collect())
}

/// Fractional Gaussian noise (or its path) with unit-variance increments.
pub fn gen_fbm(spec: &FbmSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = fgn(spec.hurst, spec.len, &mut rng)?;
    Ok(match spec.output {
        FbmOutput::Increments => noise,
        FbmOutput::Path => cumulative_sum(&noise),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSpec {
    /// Larger multiplier, in `[0.5, 1)`.
    pub m0: f64,
    /// Number of dyadic levels; the measure has `2^depth` cells.
    pub depth: u32,
    pub seed: u64,
}

impl CascadeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.m0 >= 0.5 && self.m0 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "cascade multiplier {} outside [0.5, 1)",
                self.m0
            )));
        }
        if !(6..=30).contains(&self.depth) {
            return Err(Error::InvalidConfig(format!(
                "cascade depth {} outside 6..=30",
                self.depth
            )));
        }
        Ok(())
    }

    /// Number of cells in the finest level.
    pub fn cells(&self) -> usize {
        1 << self.depth
    }
}

/// Randomized binomial cascade: each cell splits its mass into `m0` and
/// `1 - m0`, with the larger share sent left or right by a fair coin.
///
/// The smaller share is computed as `mass - large`, which is exact for
/// `m0 >= 0.5`, so sibling pairs always sum back to their parent.
pub fn gen_cascade(spec: &CascadeSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cells = vec![1.0f64];
    for _ in 0..spec.depth {
        let mut next = Vec::with_capacity(cells.len() * 2);
        for &mass in &cells {
            let large = mass * spec.m0;
            let small = mass - large;
            if rng.random::<bool>() {
                next.extend([large, small]);
            } else {
                next.extend([small, large]);
            }
        }
        cells = next;
    }
    Ok(cells)
}

/// Closed-form mass exponent of the binomial measure,
/// `tau(q) = -log2(m0^q + (1 - m0)^q)`.
pub fn cascade_mass_exponent(m0: f64, q: f64) -> f64 {
    -(m0.powf(q) + (1.0 - m0).powf(q)).log2()
}

/// Partition function `S_q(2^j) = sum over dyadic boxes of mu(box)^q` for
/// every box size `2^j`, `j = 0..=log2(len)`. Returns `(box_size, S_q)`.
pub fn partition_function(measure: &[f64], q: f64) -> Result<Vec<(usize, f64)>> {
    if measure.len() < 2 || !measure.len().is_power_of_two() {
        return Err(Error::InvalidConfig(
            "partition function needs a power-of-two measure".into(),
        ));
    }
    let mut boxes = measure.to_vec();
    let mut size = 1;
    let mut out = Vec::new();
    loop {
        out.push((size, boxes.iter().map(|m| m.powf(q)).sum()));
        if boxes.len() == 1 {
            break;
        }
        boxes = boxes.chunks_exact(2).map(|p| p[0] + p[1]).collect();
        size *= 2;
    }
    Ok(out)
}

/// Slope of `log2 S_q` against `log2(box / len)`: the empirical mass
/// exponent, comparable with [`cascade_mass_exponent`].
pub fn empirical_mass_exponent(measure: &[f64], q: f64) -> Result<f64> {
    let len = measure.len() as f64;
    let pf = partition_function(measure, q)?;
    let (x, y): (Vec<f64>, Vec<f64>) = pf
        .iter()
        .map(|&(size, s)| ((size as f64 / len).log2(), s.log2()))
        .unzip();
    ols(&x, &y)
        .map(|f| f.slope)
        .ok_or_else(|| Error::InsufficientData("partition function has one scale".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub period_hours: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Harmonic {
    pub fn new(period_hours: f64, amplitude: f64) -> Self {
        Self {
            period_hours,
            amplitude,
            phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalSpec {
    pub len: usize,
    pub harmonics: Vec<Harmonic>,
    /// Stochastic part. Its length must be at least `len`; the first `len`
    /// samples are used.
    pub noise: Option<FbmSpec>,
}

impl SeasonalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.len < 2 {
            return Err(Error::InvalidConfig("seasonal length must be >= 2".into()));
        }
        for h in &self.harmonics {
            if !(h.amplitude.is_finite() && h.amplitude >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "harmonic amplitude {} must be >= 0",
                    h.amplitude
                )));
            }
            if !(h.period_hours.is_finite() && h.period_hours > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "harmonic period {} must be > 0",
                    h.period_hours
                )));
            }
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
            if noise.len < self.len {
                return Err(Error::InvalidConfig(format!(
                    "noise length {} shorter than series length {}",
                    noise.len, self.len
                )));
            }
        }
        Ok(())
    }
}

/// Sum of `A cos(2 pi t / P + phase)` over the harmonics plus optional noise.
pub fn gen_seasonal(spec: &SeasonalSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut out = match &spec.noise {
        Some(noise) => {
            let mut v = gen_fbm(noise)?;
            v.truncate(spec.len);
            v
        }
        None => vec![0.0; spec.len],
    };
    for h in spec.harmonics.iter().filter(|h| h.amplitude != 0.0) {
        let w = 2.0 * std::f64::consts::PI / h.period_hours;
        for (t, v) in out.iter_mut().enumerate() {
            *v += h.amplitude * (w * t as f64 + h.phase).cos();
        }
    }
    Ok(out)
}

/// Smallest power of two that holds `len` samples (and at least 64).
pub fn noise_len_for(len: usize) -> usize {
    len.next_power_of_two().max(64)
}

/// Wraps generated series into a panel named `{prefix}{i}` starting at
/// [`SYNTH_START`].
pub fn synthetic_panel(prefix: &str, series: Vec<Vec<f64>>) -> Result<Panel> {
    let start: NaiveDateTime = parse_timestamp(SYNTH_START)?;
    let names: Vec<String> = (0..series.len()).map(|i| format!("{prefix}{i}")).collect();
    Panel::from_series(names, start, series)
}
