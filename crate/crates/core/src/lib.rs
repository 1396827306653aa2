//! Gesture recognition from Wi-Fi channel-amplitude traces.
//!
//! The crate is organized as a pipeline over packetized channel observations:
//!
//! * [`trace`] - the on-disk trace format and subcarrier aggregation
//! * [`synth`] - a two-path channel simulator that produces labeled traces
//! * [`condition`] - resampling, low-pass filtering, and zero-normalization
//! * [`peaks`] - interference-fringe peak detection and grouping
//! * [`classify`] - peak-height trend classification into gestures
//! * [`pipeline`] - trace-level orchestration of the stages above
//! * [`gate`] - start-gesture arming to suppress false positives

pub mod classify;
pub mod condition;
pub mod gate;
pub mod peaks;
pub mod pipeline;
pub mod synth;
pub mod trace;
