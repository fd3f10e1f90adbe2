#![allow(dead_code)]

use multiscale_core::synth::{noise_len_for, synthetic_panel, Harmonic};
use multiscale_core::{gen_fbm, gen_seasonal, FbmOutput, FbmSpec, Panel, SeasonalSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PANEL_LEN: usize = 1632;

pub fn fgn(hurst: f64, len: usize, seed: u64) -> Vec<f64> {
    gen_fbm(&FbmSpec::new(hurst, len, seed, FbmOutput::Increments)).unwrap()
}

pub fn fbm_path(hurst: f64, len: usize, seed: u64) -> Vec<f64> {
    gen_fbm(&FbmSpec::new(hurst, len, seed, FbmOutput::Path)).unwrap()
}

/// fGn of `len` samples cut from the next power-of-two draw.
pub fn fgn_cut(hurst: f64, len: usize, seed: u64) -> Vec<f64> {
    let mut v = fgn(hurst, noise_len_for(len), seed);
    v.truncate(len);
    v
}

pub fn node_seed(seed: u64, node: usize) -> u64 {
    seed * 1_000 + node as u64
}

/// Per-node exponents drawn uniformly from `[lo, hi]`.
pub fn node_hursts(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..n).map(|_| rng.random_range(lo..=hi)).collect()
}

/// fGn panel with one exponent per node.
pub fn fgn_panel(hursts: &[f64], len: usize, seed: u64) -> Panel {
    let series = hursts
        .iter()
        .enumerate()
        .map(|(i, &h)| fgn_cut(h, len, node_seed(seed, i)))
        .collect();
    synthetic_panel("n", series).unwrap()
}

/// Daily harmonics with random phases on top of fGn noise.
pub fn seasonal_panel(
    hursts: &[f64],
    amplitudes: &[(f64, f64)],
    len: usize,
    seed: u64,
) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfa5e);
    let series = hursts
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let harmonics = amplitudes
                .iter()
                .map(|&(period_hours, amplitude)| Harmonic {
                    period_hours,
                    amplitude,
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                })
                .collect();
            gen_seasonal(&SeasonalSpec {
                len,
                harmonics,
                noise: Some(FbmSpec::new(
                    h,
                    noise_len_for(len),
                    node_seed(seed, i),
                    FbmOutput::Increments,
                )),
            })
            .unwrap()
        })
        .collect();
    synthetic_panel("n", series).unwrap()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
