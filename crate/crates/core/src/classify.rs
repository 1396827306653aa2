//! Gesture classification from peak-height trends.
//!
//! Motion closer to the receiver produces larger fringes, so the height
//! sequence of a peak group encodes the motion: rising heights mean an
//! approach (push), falling heights a retreat (pull), rise-then-fall a
//! punch, and rise-fall-rise a lever. Those four patterns are hard-coded;
//! everything else is `Unknown`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::peaks::PeakGroup;

/// The recognized gestures. `Unknown` is the total fallback, never an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gesture {
    Push,
    Pull,
    Punch,
    Lever,
    Unknown,
}

/// Direction of one maximal height run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trend {
    Up,
    Down,
}

/// Alternating maximal run directions of a height sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrendPattern(pub Vec<Trend>);

/// A classified gesture occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureEvent {
    pub gesture: Gesture,
    pub start_ms: f64,
    pub end_ms: f64,
    pub peak_count: usize,
    #[serde(skip)]
    pub pattern: TrendPattern,
    pub max_height: f64,
}

/// Trend-extraction parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    /// Runs whose cumulative height change is below this fraction of the
    /// maximum height are jitter and get dropped.
    pub hysteresis_frac: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            hysteresis_frac: 0.2,
        }
    }
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("need at least three peak heights for a trend")]
    TooFewPeaks,
}

/// Median-of-three smoothing, endpoints kept. Applied only to sequences of
/// five or more heights: with four points the two interior medians can
/// erase an extremum that is the entire signature (a minimal lever).
fn median3(heights: &[f64]) -> Vec<f64> {
    if heights.len() < 5 {
        return heights.to_vec();
    }
    let mut out = Vec::with_capacity(heights.len());
    out.push(heights[0]);
    for w in heights.windows(3) {
        let mut t = [w[0], w[1], w[2]];
        t.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(t[1]);
    }
    out.push(heights[heights.len() - 1]);
    out
}

/// Extract the maximal-run sign sequence of a height series: median
/// smoothing, consecutive differences, maximal same-sign runs, then a
/// hysteresis pass that drops runs smaller than `hysteresis_frac` of the
/// maximum height and merges what remains.
pub fn trend_pattern(heights: &[f64], hysteresis_frac: f64) -> Result<TrendPattern, ClassifyError> {
    if heights.len() < 3 {
        return Err(ClassifyError::TooFewPeaks);
    }
    let smoothed = median3(heights);
    let max_height = smoothed.iter().cloned().fold(0.0, f64::max);

    // Maximal same-sign runs with their cumulative change; flat stretches
    // extend the current run without contributing change.
    let mut runs: Vec<(Trend, f64)> = Vec::new();
    for w in smoothed.windows(2) {
        let diff = w[1] - w[0];
        if diff == 0.0 {
            continue;
        }
        let trend = if diff > 0.0 { Trend::Up } else { Trend::Down };
        match runs.last_mut() {
            Some((t, cum)) if *t == trend => *cum += diff.abs(),
            _ => runs.push((trend, diff.abs())),
        }
    }

    let keep = hysteresis_frac * max_height;
    let mut pattern: Vec<Trend> = Vec::new();
    for (trend, cum) in runs {
        if cum < keep {
            continue;
        }
        if pattern.last() != Some(&trend) {
            pattern.push(trend);
        }
    }
    Ok(TrendPattern(pattern))
}

/// Map a peak group to a gesture event via its height trend. Groups too
/// small for a trend come out `Unknown`.
pub fn classify_group(group: &PeakGroup, cfg: &ClassifyConfig) -> GestureEvent {
    let heights = group.heights();
    let pattern = trend_pattern(&heights, cfg.hysteresis_frac)
        .unwrap_or_else(|_| TrendPattern(Vec::new()));
    let gesture = match pattern.0.as_slice() {
        [Trend::Up] => Gesture::Push,
        [Trend::Down] => Gesture::Pull,
        [Trend::Up, Trend::Down] => Gesture::Punch,
        [Trend::Up, Trend::Down, Trend::Up] => Gesture::Lever,
        _ => Gesture::Unknown,
    };
    let gesture = if heights.len() < 3 {
        Gesture::Unknown
    } else {
        gesture
    };
    GestureEvent {
        gesture,
        start_ms: group.span.start_ms,
        end_ms: group.span.end_ms,
        peak_count: group.peaks.len(),
        pattern,
        max_height: heights.iter().cloned().fold(0.0, f64::max),
    }
}
