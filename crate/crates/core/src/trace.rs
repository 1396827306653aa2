//! Trace data model and the JSON Lines trace format.
//!
//! A trace is a sequence of per-packet channel observations: RSSI plus one
//! linear amplitude per subcarrier, and optionally the (useless for
//! recognition, but recordable) per-subcarrier phase. The file format is
//! UTF-8 JSON Lines: the first line carries the metadata object, every
//! following line one sample.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One per-packet channel observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    /// Microseconds since trace start.
    pub t_us: u64,
    /// Received signal strength in dB.
    pub rssi_db: f64,
    /// Linear amplitude per subcarrier, all finite and non-negative.
    #[serde(rename = "csi")]
    pub csi_amp: Vec<f64>,
    /// Per-subcarrier phase in [0, 2*pi), when recorded.
    #[serde(rename = "phase", default, skip_serializing_if = "Option::is_none")]
    pub csi_phase: Option<Vec<f64>>,
}

/// Capture metadata, written as the first line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub carrier_hz: f64,
    pub subcarrier_count: usize,
    pub subcarrier_spacing_hz: f64,
    /// Informational mean packet rate.
    pub nominal_rate_pps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// A full trace: metadata plus time-ordered samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub samples: Vec<RawSample>,
}

/// How the per-subcarrier amplitudes collapse to one scalar per packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMethod {
    /// Arithmetic mean across subcarriers (default; suppresses
    /// per-subcarrier noise while keeping the common fringe).
    MeanSubcarrier,
    /// A single subcarrier's amplitude.
    SingleSubcarrier(usize),
    /// RSSI converted to linear scale, `10^(rssi_db/20)`.
    RssiLinear,
}

impl Default for AggregationMethod {
    fn default() -> Self {
        AggregationMethod::MeanSubcarrier
    }
}

/// A timestamped scalar series, the input to the conditioning stage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub t_us: Vec<u64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.t_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_us.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {0}: malformed trace line")]
    MalformedLine(usize),
    #[error("line {0}: timestamp not strictly increasing")]
    NonMonotonicTimestamp(usize),
    #[error("line {0}: subcarrier count does not match metadata")]
    SubcarrierCountMismatch(usize),
    #[error("missing metadata line")]
    MissingMeta,
    #[error("trace has no samples")]
    EmptyTrace,
    #[error("subcarrier index {index} out of range for {count} subcarriers")]
    SubcarrierIndexOutOfRange { index: usize, count: usize },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Wrapper for the metadata line, `{"meta":{...}}`.
#[derive(Serialize, Deserialize)]
struct MetaLine {
    meta: TraceMeta,
}

fn sample_is_valid(s: &RawSample) -> bool {
    if s.csi_amp.is_empty() || !s.rssi_db.is_finite() {
        return false;
    }
    if !s.csi_amp.iter().all(|a| a.is_finite() && *a >= 0.0) {
        return false;
    }
    match &s.csi_phase {
        None => true,
        Some(p) => {
            p.len() == s.csi_amp.len()
                && p.iter()
                    .all(|x| x.is_finite() && *x >= 0.0 && *x < std::f64::consts::TAU)
        }
    }
}

/// Parse a JSON Lines trace. The first line must be the metadata object;
/// samples must be strictly increasing in `t_us` and match the declared
/// subcarrier count.
pub fn parse_trace<R: BufRead>(reader: R) -> Result<Trace, TraceError> {
    let mut lines = reader.lines();

    let meta = match lines.next() {
        None => return Err(TraceError::MissingMeta),
        Some(first) => {
            let first = first?;
            match serde_json::from_str::<MetaLine>(&first) {
                Ok(m) => m.meta,
                Err(_) => return Err(TraceError::MissingMeta),
            }
        }
    };
    if !(meta.carrier_hz > 0.0) || meta.subcarrier_count == 0 {
        return Err(TraceError::MalformedLine(1));
    }

    let mut samples: Vec<RawSample> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: RawSample =
            serde_json::from_str(&line).map_err(|_| TraceError::MalformedLine(line_no))?;
        if !sample_is_valid(&sample) {
            return Err(TraceError::MalformedLine(line_no));
        }
        if sample.csi_amp.len() != meta.subcarrier_count {
            return Err(TraceError::SubcarrierCountMismatch(line_no));
        }
        if let Some(prev) = samples.last() {
            if sample.t_us <= prev.t_us {
                return Err(TraceError::NonMonotonicTimestamp(line_no));
            }
        }
        samples.push(sample);
    }

    Ok(Trace { meta, samples })
}

/// Write a trace in the JSON Lines format. Floats use shortest round-trip
/// formatting, so `parse_trace(write_trace(t)) == t` holds field for field
/// and re-serialization is byte-identical.
pub fn write_trace<W: Write>(trace: &Trace, mut writer: W) -> Result<(), TraceError> {
    let meta_line = serde_json::to_string(&MetaLine {
        meta: trace.meta.clone(),
    })
    .expect("trace metadata serializes");
    writer.write_all(meta_line.as_bytes())?;
    writer.write_all(b"\n")?;
    for sample in &trace.samples {
        let line = serde_json::to_string(sample).expect("trace sample serializes");
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a trace from a file path.
pub fn read_trace_file(path: &std::path::Path) -> Result<Trace, TraceError> {
    let file = std::fs::File::open(path)?;
    parse_trace(io::BufReader::new(file))
}

/// Write a trace to a file path.
pub fn write_trace_file(trace: &Trace, path: &std::path::Path) -> Result<(), TraceError> {
    let file = std::fs::File::create(path)?;
    let mut writer = io::BufWriter::new(file);
    write_trace(trace, &mut writer)?;
    writer.flush()?;
    Ok(())
}

/// Collapse each sample's subcarrier amplitudes to one scalar, keeping the
/// packet timestamps.
pub fn aggregate(trace: &Trace, method: AggregationMethod) -> Result<TimeSeries, TraceError> {
    if trace.samples.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    if let AggregationMethod::SingleSubcarrier(index) = method {
        if index >= trace.meta.subcarrier_count {
            return Err(TraceError::SubcarrierIndexOutOfRange {
                index,
                count: trace.meta.subcarrier_count,
            });
        }
    }

    let mut out = TimeSeries {
        t_us: Vec::with_capacity(trace.samples.len()),
        values: Vec::with_capacity(trace.samples.len()),
    };
    for sample in &trace.samples {
        let value = match method {
            AggregationMethod::MeanSubcarrier => {
                sample.csi_amp.iter().sum::<f64>() / sample.csi_amp.len() as f64
            }
            AggregationMethod::SingleSubcarrier(index) => sample.csi_amp[index],
            AggregationMethod::RssiLinear => 10f64.powf(sample.rssi_db / 20.0),
        };
        out.t_us.push(sample.t_us);
        out.values.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(subcarriers: usize) -> TraceMeta {
        TraceMeta {
            carrier_hz: 2.437e9,
            subcarrier_count: subcarriers,
            subcarrier_spacing_hz: 20e6 / 30.0,
            nominal_rate_pps: 1000.0,
            label: None,
        }
    }

    fn sample(t_us: u64, amps: &[f64]) -> RawSample {
        RawSample {
            t_us,
            rssi_db: 0.0,
            csi_amp: amps.to_vec(),
            csi_phase: None,
        }
    }

    #[test]
    fn parse_meta_only_gives_empty_trace() {
        let input = r#"{"meta":{"carrier_hz":2437000000.0,"subcarrier_count":2,"subcarrier_spacing_hz":666666.0,"nominal_rate_pps":100.0}}"#;
        let trace = parse_trace(input.as_bytes()).unwrap();
        assert_eq!(trace.meta.subcarrier_count, 2);
        assert!(trace.samples.is_empty());
    }

    #[test]
    fn parse_rejects_subcarrier_mismatch() {
        let input = concat!(
            r#"{"meta":{"carrier_hz":2437000000.0,"subcarrier_count":2,"subcarrier_spacing_hz":666666.0,"nominal_rate_pps":100.0}}"#,
            "\n",
            r#"{"t_us":0,"rssi_db":0.0,"csi":[1.0,2.0,3.0]}"#,
        );
        match parse_trace(input.as_bytes()) {
            Err(TraceError::SubcarrierCountMismatch(2)) => {}
            other => panic!("expected mismatch on line 2, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_duplicate_timestamps() {
        let input = concat!(
            r#"{"meta":{"carrier_hz":2437000000.0,"subcarrier_count":1,"subcarrier_spacing_hz":666666.0,"nominal_rate_pps":100.0}}"#,
            "\n",
            r#"{"t_us":5,"rssi_db":0.0,"csi":[1.0]}"#,
            "\n",
            r#"{"t_us":5,"rssi_db":0.0,"csi":[1.0]}"#,
        );
        match parse_trace(input.as_bytes()) {
            Err(TraceError::NonMonotonicTimestamp(3)) => {}
            other => panic!("expected non-monotonic on line 3, got {other:?}"),
        }
    }

    #[test]
    fn parse_requires_meta_first() {
        let input = r#"{"t_us":0,"rssi_db":0.0,"csi":[1.0]}"#;
        assert!(matches!(
            parse_trace(input.as_bytes()),
            Err(TraceError::MissingMeta)
        ));
        assert!(matches!(
            parse_trace("".as_bytes()),
            Err(TraceError::MissingMeta)
        ));
    }

    #[test]
    fn parse_rejects_garbage_sample_line() {
        let input = concat!(
            r#"{"meta":{"carrier_hz":2437000000.0,"subcarrier_count":1,"subcarrier_spacing_hz":666666.0,"nominal_rate_pps":100.0}}"#,
            "\n",
            "not json",
        );
        assert!(matches!(
            parse_trace(input.as_bytes()),
            Err(TraceError::MalformedLine(2))
        ));
    }

    #[test]
    fn parse_rejects_negative_amplitude() {
        let input = concat!(
            r#"{"meta":{"carrier_hz":2437000000.0,"subcarrier_count":1,"subcarrier_spacing_hz":666666.0,"nominal_rate_pps":100.0}}"#,
            "\n",
            r#"{"t_us":0,"rssi_db":0.0,"csi":[-1.0]}"#,
        );
        assert!(matches!(
            parse_trace(input.as_bytes()),
            Err(TraceError::MalformedLine(2))
        ));
    }

    #[test]
    fn write_empty_trace_is_single_meta_line() {
        let trace = Trace {
            meta: meta(2),
            samples: vec![],
        };
        let mut out = Vec::new();
        write_trace(&trace, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with(r#"{"meta":"#));
    }

    #[test]
    fn write_one_sample_is_two_lines() {
        let trace = Trace {
            meta: meta(2),
            samples: vec![sample(10, &[1.0, 2.0])],
        };
        let mut out = Vec::new();
        write_trace(&trace, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn roundtrip_preserves_trace() {
        let trace = Trace {
            meta: TraceMeta {
                label: Some("demo".into()),
                ..meta(3)
            },
            samples: vec![
                RawSample {
                    t_us: 0,
                    rssi_db: -1.25,
                    csi_amp: vec![0.1, 0.2, 0.3],
                    csi_phase: Some(vec![0.0, 1.5, 6.0]),
                },
                sample(1000, &[1.0, 2.0, 0.5]),
            ],
        };
        let mut bytes = Vec::new();
        write_trace(&trace, &mut bytes).unwrap();
        let parsed = parse_trace(&bytes[..]).unwrap();
        assert_eq!(parsed, trace);
    }

    #[test]
    fn aggregate_mean_subcarrier() {
        let trace = Trace {
            meta: meta(2),
            samples: vec![sample(0, &[2.0, 4.0])],
        };
        let series = aggregate(&trace, AggregationMethod::MeanSubcarrier).unwrap();
        assert_eq!(series.values, vec![3.0]);
        assert_eq!(series.t_us, vec![0]);
    }

    #[test]
    fn aggregate_rssi_linear() {
        let trace = Trace {
            meta: meta(1),
            samples: vec![sample(0, &[1.0])],
        };
        let series = aggregate(&trace, AggregationMethod::RssiLinear).unwrap();
        assert_eq!(series.values, vec![1.0]);
    }

    #[test]
    fn aggregate_single_subcarrier() {
        let trace = Trace {
            meta: meta(2),
            samples: vec![sample(0, &[5.0, 1.0])],
        };
        let series = aggregate(&trace, AggregationMethod::SingleSubcarrier(0)).unwrap();
        assert_eq!(series.values, vec![5.0]);
        assert!(matches!(
            aggregate(&trace, AggregationMethod::SingleSubcarrier(2)),
            Err(TraceError::SubcarrierIndexOutOfRange { index: 2, count: 2 })
        ));
    }

    #[test]
    fn aggregate_empty_trace_errors() {
        let trace = Trace {
            meta: meta(2),
            samples: vec![],
        };
        assert!(matches!(
            aggregate(&trace, AggregationMethod::MeanSubcarrier),
            Err(TraceError::EmptyTrace)
        ));
    }
}
