//! Generalized Hurst exponents on moving windows, panel mean/std envelopes
//! and detection of abrupt market-wide shifts.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ghe::{estimate_ghe, GheConfig};
use crate::panel::Panel;
use crate::spectral::{filter_panel, FilterSpec};

pub const DEFAULT_WINDOW: usize = 50;
/// Default largest lag inside a short window.
pub const DEFAULT_WINDOW_TAU_MAX: usize = 10;
const MIN_WINDOW: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingConfig {
    /// Window length in samples.
    pub window: usize,
    pub stride: usize,
    pub ghe: GheConfig,
    /// Notch these components from the full series before windowing.
    pub filter: Option<FilterSpec>,
    /// Keep every node's estimates, not only the envelopes.
    #[serde(default)]
    pub keep_per_node: bool,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            stride: 1,
            ghe: GheConfig::with_tau_max(DEFAULT_WINDOW_TAU_MAX),
            filter: None,
            keep_per_node: false,
        }
    }
}

impl RollingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < MIN_WINDOW {
            return Err(Error::WindowTooSmall {
                window: self.window,
                minimum: MIN_WINDOW,
            });
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        let top = self.ghe.largest_lag();
        if top > self.window / 2 {
            return Err(Error::InvalidConfig(format!(
                "tau_max {top} exceeds half the window ({})",
                self.window / 2
            )));
        }
        self.ghe.validate_for_len(self.window).map_err(|e| match e {
            Error::SeriesTooShort { .. } => Error::InvalidConfig(format!(
                "window {} too short for tau_max {top}",
                self.window
            )),
            other => other,
        })?;
        if let Some(f) = &self.filter {
            f.validate()?;
        }
        Ok(())
    }

    /// Number of trace points for a series of `len` samples.
    pub fn trace_len(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            (len - self.window) / self.stride + 1
        }
    }
}

/// Envelope of one moment over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTrace {
    pub q: f64,
    /// `None` where every node was degenerate.
    pub mean: Vec<Option<f64>>,
    pub std: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingTrace {
    pub window: usize,
    pub stride: usize,
    /// Window-end sample index of each trace point.
    pub times: Vec<usize>,
    pub moments: Vec<MomentTrace>,
    /// Nodes with a usable estimate at each trace point.
    pub counts: Vec<usize>,
    pub node_names: Vec<String>,
    /// `[node][trace point][moment]`, present when requested.
    pub per_node: Option<Vec<Vec<Option<Vec<f64>>>>>,
}

impl RollingTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn moment(&self, q: f64) -> Option<&MomentTrace> {
        self.moments.iter().find(|m| m.q == q)
    }

    /// Standard deviation over time of the panel-mean trace, gaps skipped.
    pub fn temporal_std(&self, q: f64) -> Option<f64> {
        let m = self.moment(q)?;
        let vals: Vec<f64> = m.mean.iter().flatten().copied().collect();
        if vals.is_empty() {
            return None;
        }
        Some(crate::stats::std_pop(&vals))
    }

    /// Time average of the panel-mean trace, gaps skipped.
    pub fn time_mean(&self, q: f64) -> Option<f64> {
        let m = self.moment(q)?;
        let vals: Vec<f64> = m.mean.iter().flatten().copied().collect();
        if vals.is_empty() {
            return None;
        }
        Some(crate::stats::mean(&vals))
    }

    /// CSV with `time` then `mean_H{q},std_H{q}` per moment. Gaps are blank.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_string()];
        for m in &self.moments {
            header.push(format!("mean_H{}", m.q));
            header.push(format!("std_H{}", m.q));
        }
        header.push("n_nodes".into());
        w.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            for m in &self.moments {
                rec.push(fmt_opt(m.mean[i]));
                rec.push(fmt_opt(m.std[i]));
            }
            rec.push(self.counts[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-node matrix: `time` then one `{node}_H{q}` column per node and moment.
    pub fn write_per_node_csv<W: Write>(&self, writer: W) -> Result<()> {
        let per_node = self.per_node.as_ref().ok_or_else(|| {
            Error::InvalidConfig("trace was built without per-node estimates".into())
        })?;
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_string()];
        for name in &self.node_names {
            for m in &self.moments {
                header.push(format!("{name}_H{}", m.q));
            }
        }
        w.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            for node in per_node {
                for qi in 0..self.moments.len() {
                    rec.push(fmt_opt(node[i].as_ref().map(|h| h[qi])));
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Estimates `H(q)` for every node on every window `[t - window + 1, t]`.
/// The cumulative sum is taken inside each window.
pub fn rolling_ghe(panel: &Panel, config: &RollingConfig) -> Result<RollingTrace> {
    config.validate()?;
    let len = panel.len();
    if len <= config.window {
        return Err(Error::SeriesTooShort {
            needed: config.window + 1,
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
    let n_points = config.trace_len(len);
    let times: Vec<usize> = (0..n_points)
        .map(|i| config.window - 1 + i * config.stride)
        .collect();

    let per_node: Vec<Vec<Option<Vec<f64>>>> = source
        .rows()
        .par_iter()
        .map(|row| {
            times
                .par_iter()
                .map(|&t| window_estimate(&row[t + 1 - config.window..=t], &config.ghe))
                .collect()
        })
        .collect();

    let nq = config.ghe.q_grid.len();
    let mut moments: Vec<MomentTrace> = config
        .ghe
        .q_grid
        .iter()
        .map(|&q| MomentTrace {
            q,
            mean: Vec::with_capacity(n_points),
            std: Vec::with_capacity(n_points),
        })
        .collect();
    let mut counts = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let present: Vec<&Vec<f64>> = per_node.iter().filter_map(|n| n[i].as_ref()).collect();
        counts.push(present.len());
        for qi in 0..nq {
            if present.is_empty() {
                moments[qi].mean.push(None);
                moments[qi].std.push(None);
                continue;
            }
            let vals: Vec<f64> = present.iter().map(|h| h[qi]).collect();
            moments[qi].mean.push(Some(crate::stats::mean(&vals)));
            moments[qi].std.push(Some(crate::stats::std_pop(&vals)));
        }
    }

    Ok(RollingTrace {
        window: config.window,
        stride: config.stride,
        times,
        moments,
        counts,
        node_names: panel.nodes().iter().map(|n| n.name.clone()).collect(),
        per_node: config.keep_per_node.then_some(per_node),
    })
}

fn window_estimate(slice: &[f64], ghe: &GheConfig) -> Option<Vec<f64>> {
    estimate_ghe(slice, ghe, true)
        .ok()
        .map(|r| r.moments.iter().map(|m| m.hurst).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    /// Trace point index.
    pub index: usize,
    /// Window-end sample index.
    pub time: usize,
    /// Signed change of the panel mean from the previous trace point.
    pub jump: f64,
}

/// Default jump threshold for [`detect_shifts`].
pub const DEFAULT_SHIFT_THRESHOLD: f64 = 0.1;

/// Flags trace points whose panel-mean `H(q)` moved by more than
/// `threshold` since the previous point. Gaps break the comparison.
pub fn detect_shifts(trace: &RollingTrace, q: f64, threshold: f64) -> Result<Vec<Shift>> {
    if trace.is_empty() {
        return Err(Error::InsufficientData("empty rolling trace".into()));
    }
    let m = trace
        .moment(q)
        .ok_or_else(|| Error::InvalidConfig(format!("moment q = {q} not in trace")))?;
    let mut out = Vec::new();
    for i in 1..m.mean.len() {
        if let (Some(prev), Some(cur)) = (m.mean[i - 1], m.mean[i]) {
            let jump = cur - prev;
            if jump.abs() > threshold {
                out.push(Shift {
                    index: i,
                    time: trace.times[i],
                    jump,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftRegion {
    pub start: usize,
    pub end: usize,
    /// Sum of the signed jumps in the region.
    pub net_jump: f64,
}

/// Merges shifts whose times are at most `max_gap` samples apart.
pub fn shift_regions(shifts: &[Shift], max_gap: usize) -> Vec<ShiftRegion> {
    let mut regions: Vec<ShiftRegion> = Vec::new();
    for s in shifts {
        match regions.last_mut() {
            Some(r) if s.time - r.end <= max_gap => {
                r.end = s.time;
                r.net_jump += s.jump;
            }
            _ => regions.push(ShiftRegion {
                start: s.time,
                end: s.time,
                net_jump: s.jump,
            }),
        }
    }
    regions
}
