//! Signal conditioning: gap-aware linear resampling to a uniform rate,
//! moving-average low-pass filtering, and local zero-normalization.
//!
//! The windowed means are computed as `anchor + mean(x - anchor)` over
//! prefix sums of deviations. Constant inputs therefore come out bit-exact
//! (the deviations are exactly zero), which the downstream peak detector
//! relies on: an idle noiseless trace conditions to literal zeros.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{aggregate, AggregationMethod, TimeSeries, Trace, TraceError};

/// Uniformly resampled amplitude stream.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSignal {
    /// Samples per second.
    pub rate_hz: f64,
    /// Trace timestamp of the first sample, microseconds.
    pub t0_us: u64,
    pub values: Vec<f64>,
}

/// Filtered and locally zero-normalized amplitude stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedSignal {
    pub rate_hz: f64,
    pub t0_us: u64,
    pub values: Vec<f64>,
}

impl UniformSignal {
    /// Time of sample `i` in milliseconds from signal start.
    pub fn index_to_ms(&self, i: usize) -> f64 {
        i as f64 * 1000.0 / self.rate_hz
    }
}

impl ConditionedSignal {
    pub fn index_to_ms(&self, i: usize) -> f64 {
        i as f64 * 1000.0 / self.rate_hz
    }

    pub fn duration_ms(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            (self.values.len() - 1) as f64 * 1000.0 / self.rate_hz
        }
    }
}

/// Conditioning parameters. Defaults follow the recognizer design:
/// 1000 samples/s, a rate/10-tap moving-average low-pass, and a 300 ms
/// normalization window.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ConditionConfig {
    pub rate_hz: f64,
    /// Gaps longer than this are not interpolated across; the caller
    /// splits the trace instead.
    pub max_gap_ms: f64,
    pub normalize_window_ms: f64,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        ConditionConfig {
            rate_hz: 1000.0,
            max_gap_ms: 500.0,
            normalize_window_ms: 300.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConditionError {
    #[error("need at least two points to resample")]
    TooFewPoints,
    #[error("gap of {len_us} us at {start_us} us exceeds the interpolation limit")]
    GapTooLarge { start_us: u64, len_us: u64 },
    #[error("signal too short: {len} samples, need more than {needed}")]
    SignalTooShort { len: usize, needed: usize },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Linearly interpolate a timestamped series onto a uniform grid at
/// `rate_hz`, starting at the first input timestamp and spanning to the
/// last. Gaps longer than `max_gap_ms` are an error rather than silently
/// bridged.
pub fn resample(
    series: &TimeSeries,
    rate_hz: f64,
    max_gap_ms: f64,
) -> Result<UniformSignal, ConditionError> {
    if series.len() < 2 {
        return Err(ConditionError::TooFewPoints);
    }
    let max_gap_us = (max_gap_ms * 1000.0).round() as u64;
    for i in 0..series.len() - 1 {
        let gap = series.t_us[i + 1] - series.t_us[i];
        if gap > max_gap_us {
            return Err(ConditionError::GapTooLarge {
                start_us: series.t_us[i],
                len_us: gap,
            });
        }
    }

    let t0 = series.t_us[0];
    let t_last = *series.t_us.last().unwrap();
    let step_us = 1e6 / rate_hz;
    let span_us = (t_last - t0) as f64;
    let n_out = (span_us / step_us + 1e-9).floor() as usize + 1;

    let mut values = Vec::with_capacity(n_out);
    let mut k = 0usize;
    for j in 0..n_out {
        let t = (t0 as f64 + j as f64 * step_us).min(t_last as f64);
        while k + 2 < series.len() && (series.t_us[k + 1] as f64) < t {
            k += 1;
        }
        let ta = series.t_us[k] as f64;
        let tb = series.t_us[k + 1] as f64;
        let value = if t <= ta {
            series.values[k]
        } else if t >= tb {
            series.values[k + 1]
        } else {
            let w = (t - ta) / (tb - ta);
            series.values[k] + (series.values[k + 1] - series.values[k]) * w
        };
        values.push(value);
    }

    Ok(UniformSignal {
        rate_hz,
        t0_us: t0,
        values,
    })
}

/// Split a series wherever consecutive timestamps are more than
/// `max_gap_ms` apart. Segments shorter than two points are dropped.
pub fn split_at_gaps(series: &TimeSeries, max_gap_ms: f64) -> Vec<TimeSeries> {
    let max_gap_us = (max_gap_ms * 1000.0).round() as u64;
    let mut segments = Vec::new();
    let mut start = 0usize;
    for i in 0..series.len().saturating_sub(1) {
        if series.t_us[i + 1] - series.t_us[i] > max_gap_us {
            if i + 1 - start >= 2 {
                segments.push(TimeSeries {
                    t_us: series.t_us[start..=i].to_vec(),
                    values: series.values[start..=i].to_vec(),
                });
            }
            start = i + 1;
        }
    }
    if series.len() - start >= 2 {
        segments.push(TimeSeries {
            t_us: series.t_us[start..].to_vec(),
            values: series.values[start..].to_vec(),
        });
    }
    segments
}

/// Windowed mean of `values[lo..=hi]` relative to an anchor value, using a
/// prefix-sum table of deviations. Exact when all samples equal the anchor.
struct AnchoredMeans {
    anchor: f64,
    prefix: Vec<f64>,
}

impl AnchoredMeans {
    fn new(values: &[f64]) -> Self {
        let anchor = values.first().copied().unwrap_or(0.0);
        let mut prefix = Vec::with_capacity(values.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for v in values {
            acc += v - anchor;
            prefix.push(acc);
        }
        AnchoredMeans { anchor, prefix }
    }

    fn mean(&self, lo: usize, hi: usize) -> f64 {
        let n = (hi - lo + 1) as f64;
        self.anchor + (self.prefix[hi + 1] - self.prefix[lo]) / n
    }
}

/// Number of low-pass taps for a given rate: one tenth of the samples per
/// second, every coefficient `1/taps`.
pub fn lowpass_taps(rate_hz: f64) -> usize {
    ((rate_hz / 10.0).round() as usize).max(1)
}

/// Equal-coefficient FIR low-pass: a `rate/10`-tap moving average (100 taps
/// at 1000 Hz), aligned to the input by splitting the window around each
/// sample. Edges shorten the window to the available samples, keeping unit
/// DC gain everywhere.
pub fn lowpass(sig: &UniformSignal) -> Result<UniformSignal, ConditionError> {
    let taps = lowpass_taps(sig.rate_hz);
    if sig.values.len() < taps {
        return Err(ConditionError::SignalTooShort {
            len: sig.values.len(),
            needed: taps,
        });
    }
    let h_lo = (taps - 1) / 2;
    let h_hi = taps - 1 - h_lo;
    let means = AnchoredMeans::new(&sig.values);
    let n = sig.values.len();
    let values = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(h_lo);
            let hi = (i + h_hi).min(n - 1);
            means.mean(lo, hi)
        })
        .collect();
    Ok(UniformSignal {
        rate_hz: sig.rate_hz,
        t0_us: sig.t0_us,
        values,
    })
}

/// Normalization window length in samples: rounded to the nearest odd count
/// so the window centers exactly on each sample and affine trends cancel.
pub fn normalize_window_samples(rate_hz: f64, window_ms: f64) -> usize {
    let w = (rate_hz * window_ms / 1000.0).round() as usize;
    let w = w.max(1);
    if w % 2 == 0 {
        w + 1
    } else {
        w
    }
}

/// Subtract a centered moving average over `window_ms` from every sample,
/// zeroing gesture-free stretches. Edges shorten the window.
pub fn normalize(sig: &UniformSignal, window_ms: f64) -> Result<ConditionedSignal, ConditionError> {
    let window = normalize_window_samples(sig.rate_hz, window_ms);
    if sig.values.len() <= window {
        return Err(ConditionError::SignalTooShort {
            len: sig.values.len(),
            needed: window,
        });
    }
    let half = window / 2;
    let means = AnchoredMeans::new(&sig.values);
    let n = sig.values.len();
    let values = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            sig.values[i] - means.mean(lo, hi)
        })
        .collect();
    Ok(ConditionedSignal {
        rate_hz: sig.rate_hz,
        t0_us: sig.t0_us,
        values,
    })
}

/// Full conditioning of a trace: aggregate, resample, low-pass, normalize.
pub fn condition(
    trace: &Trace,
    method: AggregationMethod,
) -> Result<ConditionedSignal, ConditionError> {
    condition_with(trace, method, &ConditionConfig::default())
}

/// [`condition`] with explicit parameters.
pub fn condition_with(
    trace: &Trace,
    method: AggregationMethod,
    cfg: &ConditionConfig,
) -> Result<ConditionedSignal, ConditionError> {
    let series = aggregate(trace, method).map_err(|e| match e {
        TraceError::EmptyTrace => ConditionError::TooFewPoints,
        other => ConditionError::Trace(other),
    })?;
    condition_series(&series, cfg)
}

/// Conditioning from an already aggregated series.
pub fn condition_series(
    series: &TimeSeries,
    cfg: &ConditionConfig,
) -> Result<ConditionedSignal, ConditionError> {
    let uniform = resample(series, cfg.rate_hz, cfg.max_gap_ms)?;
    let filtered = lowpass(&uniform)?;
    normalize(&filtered, cfg.normalize_window_ms)
}
