//! Trace-level orchestration: conditioning, two-pass noise estimation, peak
//! grouping, and classification, with oversized receive gaps handled by
//! splitting the trace into independent segments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{classify_group, ClassifyConfig, GestureEvent};
use crate::condition::{
    condition_series, split_at_gaps, ConditionConfig, ConditionError, ConditionedSignal,
};
use crate::peaks::{detect_peaks, group_peaks, noise_stats, PeakConfig, PeakError, PeakGroup, TimeSpan};
use crate::trace::{aggregate, AggregationMethod, Trace};

/// Everything the recognizer pipeline needs, JSON-overridable as one block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub condition: ConditionConfig,
    pub peaks: PeakConfig,
    pub classify: ClassifyConfig,
    /// Re-estimate the noise floor with candidate gestures excluded before
    /// the final detection pass.
    pub two_pass: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            condition: ConditionConfig::default(),
            peaks: PeakConfig::default(),
            classify: ClassifyConfig::default(),
            two_pass: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error(transparent)]
    Peaks(#[from] PeakError),
}

/// Run detection and classification over a conditioned signal.
///
/// The detection threshold uses the bootstrap magnitude mean over the whole
/// signal. When `two_pass` is set, candidate group spans (padded by the
/// normalization window) are excluded and the noise floor re-estimated on
/// the quiet remainder; that refined floor drives the large-peak rule in
/// grouping.
pub fn classify_signal_detailed(
    sig: &ConditionedSignal,
    cfg: &PipelineConfig,
) -> Result<Vec<(GestureEvent, PeakGroup)>, PeakError> {
    let bootstrap = noise_stats(sig, &[])?;
    let floor = if cfg.two_pass {
        let pad = cfg.condition.normalize_window_ms;
        let exclusions: Vec<TimeSpan> = {
            let peaks = detect_peaks(sig, &bootstrap, &cfg.peaks);
            group_peaks(&peaks, &bootstrap, &cfg.peaks)
                .iter()
                .map(|g| TimeSpan {
                    start_ms: g.span.start_ms - pad,
                    end_ms: g.span.end_ms + pad,
                })
                .collect()
        };
        noise_stats(sig, &exclusions).unwrap_or(bootstrap)
    } else {
        bootstrap
    };

    let peaks = detect_peaks(sig, &bootstrap, &cfg.peaks);
    let groups = group_peaks(&peaks, &floor, &cfg.peaks);
    Ok(groups
        .into_iter()
        .map(|g| (classify_group(&g, &cfg.classify), g))
        .collect())
}

/// [`classify_signal_detailed`] without the groups.
pub fn classify_signal(
    sig: &ConditionedSignal,
    cfg: &PipelineConfig,
) -> Result<Vec<GestureEvent>, PeakError> {
    Ok(classify_signal_detailed(sig, cfg)?
        .into_iter()
        .map(|(e, _)| e)
        .collect())
}

fn shift_to_trace_time(event: &mut GestureEvent, group: &mut PeakGroup, offset_ms: f64) {
    event.start_ms += offset_ms;
    event.end_ms += offset_ms;
    group.span.start_ms += offset_ms;
    group.span.end_ms += offset_ms;
    for p in group.peaks.iter_mut() {
        p.t_ms += offset_ms;
    }
}

/// Full pipeline over a trace: aggregate, split at oversized gaps,
/// condition and classify each segment. Event times come back in absolute
/// trace milliseconds. Segments too short to carry a gesture are skipped.
pub fn process_trace(
    trace: &Trace,
    method: AggregationMethod,
    cfg: &PipelineConfig,
) -> Result<Vec<(GestureEvent, PeakGroup)>, PipelineError> {
    let series = aggregate(trace, method).map_err(ConditionError::Trace)?;
    let segments = split_at_gaps(&series, cfg.condition.max_gap_ms);
    let mut out = Vec::new();
    for segment in segments {
        let sig = match condition_series(&segment, &cfg.condition) {
            Ok(sig) => sig,
            // A segment shorter than the filters cannot hold a gesture.
            Err(ConditionError::SignalTooShort { .. }) | Err(ConditionError::TooFewPoints) => {
                continue
            }
            Err(e) => return Err(e.into()),
        };
        let offset_ms = sig.t0_us as f64 / 1000.0;
        match classify_signal_detailed(&sig, cfg) {
            Ok(pairs) => {
                for (mut event, mut group) in pairs {
                    shift_to_trace_time(&mut event, &mut group, offset_ms);
                    out.push((event, group));
                }
            }
            // Not enough quiet signal in this segment to set a floor.
            Err(PeakError::InsufficientQuietSignal) => continue,
        }
    }
    Ok(out)
}

/// Events only, in absolute trace milliseconds.
pub fn process_trace_events(
    trace: &Trace,
    method: AggregationMethod,
    cfg: &PipelineConfig,
) -> Result<Vec<GestureEvent>, PipelineError> {
    Ok(process_trace(trace, method, cfg)?
        .into_iter()
        .map(|(e, _)| e)
        .collect())
}

#[test]
fn debug_push_heights() {
    use crate::condition::condition;
    use crate::peaks::{detect_peaks, group_peaks, noise_stats, PeakConfig};
    use crate::synth::{default_duration_s, single_gesture_script, synth_trace, GestureKind, SimConfig};
    use crate::trace::AggregationMethod;
    let cfg = SimConfig::default();
    let dur = default_duration_s(GestureKind::Push);
    let script = single_gesture_script(GestureKind::Push, dur, 0.2, 0.6, 3.0);
    let (trace, _) = synth_trace(&cfg, &script).unwrap();
    let sig = condition(&trace, AggregationMethod::MeanSubcarrier).unwrap();
    let stats = noise_stats(&sig, &[]).unwrap();
    println!("stats mean_abs={} std={}", stats.mean_abs, stats.std_abs);
    let pc = PeakConfig::default();
    let peaks = detect_peaks(&sig, &stats, &pc);
    for p in &peaks {
        println!("t={:8.1}ms h={:.5} {:?}", p.t_ms + sig.t0_us as f64/1000.0, p.height, p.polarity);
    }
    let groups = group_peaks(&peaks, &stats, &pc);
    println!("{} groups", groups.len());
}
