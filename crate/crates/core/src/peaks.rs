//! Interference-fringe peak detection and gesture-candidate grouping.
//!
//! Crests and troughs both carry the same motion information, so peaks are
//! local maxima of the conditioned signal's magnitude. The detection
//! threshold is 1.5 times the mean magnitude; glitch rejection then drops
//! lone peaks and groups without at least one peak a standard deviation
//! above the noise floor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condition::ConditionedSignal;

/// Whether a peak is a constructive crest or destructive trough.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    Crest,
    Trough,
}

/// One detected fringe peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Milliseconds from signal start.
    pub t_ms: f64,
    /// Magnitude of the conditioned value.
    pub height: f64,
    pub polarity: Polarity,
}

/// Magnitude statistics of the conditioned signal over quiet samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseStats {
    pub mean_abs: f64,
    pub std_abs: f64,
}

/// A half-open-ish time span in milliseconds, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSpan {
    pub start_ms: f64,
    pub end_ms: f64,
}

impl TimeSpan {
    pub fn contains(&self, t_ms: f64) -> bool {
        t_ms >= self.start_ms && t_ms <= self.end_ms
    }
}

/// A gesture candidate: consecutive peaks with small gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakGroup {
    pub peaks: Vec<Peak>,
    pub span: TimeSpan,
}

impl PeakGroup {
    pub fn heights(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.height).collect()
    }

    /// Consecutive inter-peak intervals in milliseconds.
    pub fn intervals_ms(&self) -> Vec<f64> {
        self.peaks.windows(2).map(|w| w[1].t_ms - w[0].t_ms).collect()
    }
}

/// Detection and grouping parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakConfig {
    /// Peaks must exceed this multiple of the mean conditioned magnitude.
    pub threshold_factor: f64,
    /// Peaks closer than this merge into one group.
    pub group_gap_ms: f64,
    /// Groups with fewer peaks are discarded as glitches.
    pub min_group_size: usize,
    /// Groups spanning longer than this split at their largest internal gap.
    pub max_span_ms: f64,
    /// Edge peaks below this fraction of the group maximum, sitting next to
    /// a near-maximum peak, are trimmed as normalization settle artifacts.
    pub edge_trim_frac: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        PeakConfig {
            threshold_factor: 1.5,
            // Gestures that start or end slowly dip under the detection
            // threshold for up to ~1.5 normalization windows; the merge gap
            // must bridge that or boundary fringes split off as their own
            // tiny groups.
            group_gap_ms: 450.0,
            min_group_size: 3,
            max_span_ms: 4000.0,
            edge_trim_frac: 0.5,
        }
    }
}

/// An edge runt is only trimmed when the peak beside it reaches this
/// fraction of the group maximum; gentle real ramps stay intact.
const EDGE_TRIM_NEIGHBOR_FRAC: f64 = 0.6;

/// Minimum quiet signal needed to estimate the noise floor.
pub const MIN_QUIET_S: f64 = 1.0;

#[derive(Debug, Error)]
pub enum PeakError {
    #[error("not enough gesture-free signal to estimate the noise floor")]
    InsufficientQuietSignal,
}

/// Mean and standard deviation of the conditioned magnitude over samples
/// outside the excluded spans. Called with no exclusions this is the
/// bootstrap estimate over the whole signal.
pub fn noise_stats(
    sig: &ConditionedSignal,
    exclusions: &[TimeSpan],
) -> Result<NoiseStats, PeakError> {
    let mut count = 0usize;
    let mut sum = 0.0;
    for (i, v) in sig.values.iter().enumerate() {
        let t = sig.index_to_ms(i);
        if exclusions.iter().any(|s| s.contains(t)) {
            continue;
        }
        count += 1;
        sum += v.abs();
    }
    if (count as f64) < MIN_QUIET_S * sig.rate_hz {
        return Err(PeakError::InsufficientQuietSignal);
    }
    let mean = sum / count as f64;
    let mut sq = 0.0;
    for (i, v) in sig.values.iter().enumerate() {
        let t = sig.index_to_ms(i);
        if exclusions.iter().any(|s| s.contains(t)) {
            continue;
        }
        let d = v.abs() - mean;
        sq += d * d;
    }
    Ok(NoiseStats {
        mean_abs: mean,
        std_abs: (sq / count as f64).sqrt(),
    })
}

/// Local maxima of the conditioned magnitude above the detection threshold.
/// Plateaus yield their center sample; polarity follows the sign of the
/// conditioned value.
pub fn detect_peaks(sig: &ConditionedSignal, stats: &NoiseStats, cfg: &PeakConfig) -> Vec<Peak> {
    let values = &sig.values;
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    let max_abs = values.iter().fold(0f64, |m, v| m.max(v.abs()));
    // A floor relative to the signal scale keeps float dust below threshold
    // while preserving amplitude-scale covariance.
    let threshold = (cfg.threshold_factor * stats.mean_abs).max(1e-9 * max_abs);

    let mut peaks = Vec::new();
    let mut i = 0usize;
    while i < n {
        let h = values[i].abs();
        let mut j = i;
        while j + 1 < n && values[j + 1].abs() == h {
            j += 1;
        }
        if i > 0 && j + 1 < n && values[i - 1].abs() < h && values[j + 1].abs() < h && h > threshold
        {
            let center = (i + j) / 2;
            peaks.push(Peak {
                t_ms: sig.index_to_ms(center),
                height: h,
                polarity: if values[center] >= 0.0 {
                    Polarity::Crest
                } else {
                    Polarity::Trough
                },
            });
        }
        i = j + 1;
    }
    peaks
}

fn split_oversized(peaks: Vec<Peak>, max_span_ms: f64, out: &mut Vec<Vec<Peak>>) {
    let span = peaks.last().unwrap().t_ms - peaks[0].t_ms;
    if span <= max_span_ms || peaks.len() < 2 {
        out.push(peaks);
        return;
    }
    let mut cut = 1;
    let mut largest = 0.0;
    for i in 0..peaks.len() - 1 {
        let gap = peaks[i + 1].t_ms - peaks[i].t_ms;
        if gap > largest {
            largest = gap;
            cut = i + 1;
        }
    }
    let right = peaks[cut..].to_vec();
    let left = peaks[..cut].to_vec();
    split_oversized(left, max_span_ms, out);
    split_oversized(right, max_span_ms, out);
}

/// The centered normalization window echoes a gesture's boundary fringes
/// as a small opposite-sign bump just outside the motion. Such a bump
/// always sits beside the group's largest fringes, well below them; real
/// fringe ramps grow gradually instead. Trim those dominated edge peaks.
fn trim_edge_runts(group: &mut Vec<Peak>, trim_frac: f64) {
    if group.len() < 2 {
        return;
    }
    let max = group.iter().fold(0f64, |m, p| m.max(p.height));
    let runt = |edge: &Peak, neighbor: &Peak| {
        edge.height < trim_frac * max && neighbor.height >= EDGE_TRIM_NEIGHBOR_FRAC * max
    };
    while group.len() >= 2 && runt(&group[0], &group[1]) {
        group.remove(0);
    }
    while group.len() >= 2 && runt(&group[group.len() - 1], &group[group.len() - 2]) {
        group.pop();
    }
}

/// Merge time-ordered peaks into groups, split oversized groups at their
/// largest internal gap, trim settle-artifact edge peaks, then apply the
/// glitch rules: drop groups smaller than `min_group_size` and groups
/// without one peak at least a standard deviation above the mean noise
/// floor.
pub fn group_peaks(peaks: &[Peak], stats: &NoiseStats, cfg: &PeakConfig) -> Vec<PeakGroup> {
    let mut merged: Vec<Vec<Peak>> = Vec::new();
    for p in peaks {
        match merged.last_mut() {
            Some(group) if p.t_ms - group.last().unwrap().t_ms < cfg.group_gap_ms => {
                group.push(*p);
            }
            _ => merged.push(vec![*p]),
        }
    }

    let mut sized: Vec<Vec<Peak>> = Vec::new();
    for group in merged {
        split_oversized(group, cfg.max_span_ms, &mut sized);
    }

    let large = stats.mean_abs + stats.std_abs;
    sized
        .into_iter()
        .map(|mut g| {
            trim_edge_runts(&mut g, cfg.edge_trim_frac);
            g
        })
        .filter(|g| g.len() >= cfg.min_group_size)
        .filter(|g| g.iter().any(|p| p.height >= large))
        .map(|g| PeakGroup {
            span: TimeSpan {
                start_ms: g[0].t_ms,
                end_ms: g.last().unwrap().t_ms,
            },
            peaks: g,
        })
        .collect()
}
