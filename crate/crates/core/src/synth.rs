//! Two-path Wi-Fi channel simulator.
//!
//! Models a direct path of fixed amplitude plus a single arm reflection
//! whose strength falls off as `reflect_gain / d^2` with arm distance `d`.
//! As the arm moves, the round-trip path `2 d(t)` sweeps the reflection
//! through constructive and destructive interference, producing the
//! amplitude fringes the recognizer classifies. Per-packet oscillator phase
//! is uniformly random, so recorded phase is useless across packets while
//! amplitude is unaffected; that asymmetry is the point of the design.
//!
//! Traces are deterministic functions of `(SimConfig, GestureScript)`; the
//! seed lives in the config. The compiled [`ChannelModel`] exposes the
//! noise-free channel response on arbitrary time points, which tests use as
//! a dense oracle for the conditioning and peak stages.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{RawSample, Trace, TraceMeta};

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Bursty-gap model: silence windows of `gap_ms` opening at `prob_per_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstGap {
    pub gap_ms: f64,
    pub prob_per_s: f64,
}

/// Simulator parameters. Defaults model a 2.4 GHz channel-6 link with 30
/// subcarriers over a 20 MHz band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub carrier_hz: f64,
    pub subcarrier_count: usize,
    pub subcarrier_spacing_hz: f64,
    /// Mean Poisson packet rate.
    pub packet_rate_pps: f64,
    pub burst_gap: Option<BurstGap>,
    pub direct_amp: f64,
    /// Reflection strength `kappa`; reflected magnitude is `kappa / d^2`.
    pub reflect_gain: f64,
    /// Per-subcarrier additive amplitude noise, standard deviation.
    pub noise_sigma: f64,
    pub glitch_rate_per_s: f64,
    pub glitch_magnitude: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            carrier_hz: 2.437e9,
            subcarrier_count: 30,
            subcarrier_spacing_hz: 20e6 / 30.0,
            packet_rate_pps: 1000.0,
            burst_gap: None,
            direct_amp: 1.0,
            reflect_gain: 0.02,
            noise_sigma: 0.0,
            glitch_rate_per_s: 0.0,
            glitch_magnitude: 0.5,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Carrier wavelength in meters.
    pub fn carrier_wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT_M_S / self.carrier_hz
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(self.packet_rate_pps > 0.0)
            || self.noise_sigma < 0.0
            || self.reflect_gain < 0.0
            || !(self.direct_amp > 0.0)
            || self.subcarrier_count == 0
            || !(self.carrier_hz > 0.0)
        {
            return Err(SynthError::BadConfig);
        }
        Ok(())
    }
}

/// Noise level that gives a target per-subcarrier amplitude SNR against the
/// direct path, `20*log10(direct_amp / sigma) = snr_db`.
pub fn noise_sigma_for_snr_db(direct_amp: f64, snr_db: f64) -> f64 {
    direct_amp * 10f64.powf(-snr_db / 20.0)
}

/// The scripted motion kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureKind {
    Push,
    Pull,
    Punch,
    Lever,
    AmbientWalk,
    Idle,
}

impl GestureKind {
    pub fn is_gesture(self) -> bool {
        matches!(
            self,
            GestureKind::Push | GestureKind::Pull | GestureKind::Punch | GestureKind::Lever
        )
    }
}

/// The four intentional gestures, in canonical order.
pub const GESTURES: [GestureKind; 4] = [
    GestureKind::Push,
    GestureKind::Pull,
    GestureKind::Punch,
    GestureKind::Lever,
];

/// Default duration for a scripted motion. Gesture speeds are chosen so the
/// fringe rate stays inside the conditioning passband (roughly 2-8 Hz);
/// punch and lever cover twice the path of a push, so they get more time.
pub fn default_duration_s(kind: GestureKind) -> f64 {
    match kind {
        GestureKind::Push | GestureKind::Pull => 1.1,
        GestureKind::Punch => 2.4,
        GestureKind::Lever => 2.6,
        GestureKind::AmbientWalk => 60.0,
        GestureKind::Idle => 3.0,
    }
}

/// One scripted motion window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub start_s: f64,
    pub kind: GestureKind,
    pub duration_s: f64,
    pub d_near_m: f64,
    pub d_far_m: f64,
}

impl ScriptEntry {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }
}

/// An ordered, non-overlapping list of scripted motions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GestureScript {
    pub entries: Vec<ScriptEntry>,
}

impl GestureScript {
    pub fn validate(&self) -> Result<(), SynthError> {
        let mut prev_end = f64::NEG_INFINITY;
        for e in &self.entries {
            if !(e.duration_s > 0.0) || e.start_s < 0.0 {
                return Err(SynthError::BadRange {
                    what: "entry times must be non-negative with positive duration",
                });
            }
            if !(0.0 < e.d_near_m && e.d_near_m < e.d_far_m) {
                return Err(SynthError::BadRange {
                    what: "need 0 < d_near_m < d_far_m",
                });
            }
            if e.start_s < prev_end {
                return Err(SynthError::OverlappingEntries);
            }
            prev_end = e.end_s();
        }
        Ok(())
    }

    /// Script end time: the latest entry end, or zero when empty.
    pub fn end_s(&self) -> f64 {
        self.entries.iter().map(|e| e.end_s()).fold(0.0, f64::max)
    }
}

/// Ground-truth record for one script entry, as written to the sidecar
/// labels file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureLabel {
    pub start_s: f64,
    pub kind: GestureKind,
    pub duration_s: f64,
}

/// Arm-to-receiver distance sampled over a gesture window.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmTrajectory {
    pub rate_hz: f64,
    pub d_m: Vec<f64>,
}

impl ArmTrajectory {
    pub fn duration_s(&self) -> f64 {
        (self.d_m.len().saturating_sub(1)) as f64 / self.rate_hz
    }

    /// Distance at `t_s` (seconds from window start), linearly interpolated
    /// and clamped to the window.
    pub fn at(&self, t_s: f64) -> f64 {
        let x = t_s * self.rate_hz;
        if x <= 0.0 {
            return self.d_m[0];
        }
        let last = self.d_m.len() - 1;
        if x >= last as f64 {
            return self.d_m[last];
        }
        let i = x.floor() as usize;
        let w = x - i as f64;
        self.d_m[i] + (self.d_m[i + 1] - self.d_m[i]) * w
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad range: {what}")]
    BadRange { what: &'static str },
    #[error("script entries overlap in time")]
    OverlappingEntries,
    #[error("invalid simulator configuration")]
    BadConfig,
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Build the distance trajectory for one motion window.
///
/// Push runs `d_far -> d_near` on a smoothstep, pull the reverse, punch is
/// two symmetric smoothstep halves out and back. Lever is three
/// constant-speed legs `d_far -> d_near -> d_mid -> d_near` with
/// `d_mid = (d_near + d_far) / 2`; the steady speed gives the near-uniform
/// fringe periodicity the start-gate checks for. The ambient walk is a
/// velocity random walk bounced off the `[d_near, d_far]` band, and idle
/// holds `d_far`.
pub fn trajectory(
    kind: GestureKind,
    duration_s: f64,
    d_near_m: f64,
    d_far_m: f64,
    samples_per_s: f64,
    rng: &mut impl Rng,
) -> Result<ArmTrajectory, SynthError> {
    if !(duration_s > 0.0) || !(samples_per_s > 0.0) {
        return Err(SynthError::BadRange {
            what: "duration and sample rate must be positive",
        });
    }
    if !(0.0 < d_near_m && d_near_m < d_far_m) {
        return Err(SynthError::BadRange {
            what: "need 0 < d_near_m < d_far_m",
        });
    }

    let n = (duration_s * samples_per_s).ceil() as usize + 1;
    let dt = 1.0 / samples_per_s;
    let span = d_far_m - d_near_m;
    let mut d_m = Vec::with_capacity(n);

    match kind {
        GestureKind::Push => {
            for i in 0..n {
                let u = (i as f64 * dt / duration_s).min(1.0);
                d_m.push(d_far_m - span * smoothstep(u));
            }
        }
        GestureKind::Pull => {
            for i in 0..n {
                let u = (i as f64 * dt / duration_s).min(1.0);
                d_m.push(d_near_m + span * smoothstep(u));
            }
        }
        GestureKind::Punch => {
            for i in 0..n {
                let u = (i as f64 * dt / duration_s).min(1.0);
                let d = if u < 0.5 {
                    d_far_m - span * smoothstep(2.0 * u)
                } else {
                    d_near_m + span * smoothstep(2.0 * u - 1.0)
                };
                d_m.push(d);
            }
        }
        GestureKind::Lever => {
            let d_mid = (d_near_m + d_far_m) / 2.0;
            for i in 0..n {
                let u = (i as f64 * dt / duration_s).min(1.0);
                // Legs cover span, span/2, span/2 at constant speed, so the
                // time splits are 1/2, 1/4, 1/4.
                let d = if u < 0.5 {
                    d_far_m - span * (u / 0.5)
                } else if u < 0.75 {
                    d_near_m + (d_mid - d_near_m) * ((u - 0.5) / 0.25)
                } else {
                    d_mid - (d_mid - d_near_m) * ((u - 0.75) / 0.25)
                };
                d_m.push(d);
            }
        }
        GestureKind::AmbientWalk => {
            // Velocity random walk with ~0.4 s correlation, reflected at the
            // band edges.
            let tau_s = 0.4;
            let sigma_v = 0.35;
            let rho = (-dt / tau_s).exp();
            let kick = Normal::new(0.0, sigma_v * (1.0 - rho * rho).sqrt()).unwrap();
            let mut d = (d_near_m + d_far_m) / 2.0;
            let mut v = 0.0_f64;
            for _ in 0..n {
                d_m.push(d);
                v = v * rho + kick.sample(rng);
                d += v * dt;
                if d > d_far_m {
                    d = d_far_m;
                    v = -v.abs();
                } else if d < d_near_m {
                    d = d_near_m;
                    v = v.abs();
                }
            }
        }
        GestureKind::Idle => {
            d_m.resize(n, d_far_m);
        }
    }

    Ok(ArmTrajectory {
        rate_hz: samples_per_s,
        d_m,
    })
}

/// Piecewise-linear lever with independently adjusted node distances:
/// `far -> turn -> mid -> end` at constant speed per leg (legs split the
/// time 1/2, 1/4, 1/4 matching their lengths).
fn lever_trajectory(
    duration_s: f64,
    d_far: f64,
    d_turn: f64,
    d_mid: f64,
    d_end: f64,
    samples_per_s: f64,
) -> Result<ArmTrajectory, SynthError> {
    if !(duration_s > 0.0) {
        return Err(SynthError::BadRange {
            what: "duration must be positive",
        });
    }
    let n = (duration_s * samples_per_s).ceil() as usize + 1;
    let dt = 1.0 / samples_per_s;
    let mut d_m = Vec::with_capacity(n);
    for i in 0..n {
        let u = (i as f64 * dt / duration_s).min(1.0);
        let d = if u < 0.5 {
            d_far + (d_turn - d_far) * (u / 0.5)
        } else if u < 0.75 {
            d_turn + (d_mid - d_turn) * ((u - 0.5) / 0.25)
        } else {
            d_mid + (d_end - d_mid) * ((u - 0.75) / 0.25)
        };
        d_m.push(d);
    }
    Ok(ArmTrajectory {
        rate_hz: samples_per_s,
        d_m,
    })
}

/// Count half-wavelength crossings of the round-trip path `2*d(t)`: the
/// number of interference extrema a motion sweeps through. Crossings are
/// counted against the absolute `k * lambda/2` grid, summed over monotone
/// runs of the trajectory.
pub fn expected_fringe_count(traj: &ArmTrajectory, wavelength_m: f64) -> usize {
    let grid = |d: f64| (4.0 * d / wavelength_m).floor() as i64;
    traj.d_m
        .windows(2)
        .map(|w| (grid(w[1]) - grid(w[0])).unsigned_abs() as usize)
        .sum()
}

/// One compiled script entry: its window, trajectory (with boundary
/// distances nudged onto amplitude-unity points), and whether it reflects.
#[derive(Debug, Clone)]
pub struct CompiledEntry {
    pub start_s: f64,
    pub end_s: f64,
    pub kind: GestureKind,
    pub reflects: bool,
    pub trajectory: ArmTrajectory,
}

/// Deterministic noise-free channel response for a compiled script.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    carrier_hz: f64,
    subcarrier_spacing_hz: f64,
    direct_amp: f64,
    reflect_gain: f64,
    /// Inverse wavelength per subcarrier.
    inv_lambda: Vec<f64>,
    entries: Vec<CompiledEntry>,
}

const TRAJECTORY_RATE_HZ: f64 = 1000.0;

impl ChannelModel {
    /// Compile a script against a config. Deterministic: ambient-walk
    /// randomness derives from the config seed, independent of packet
    /// generation.
    pub fn compile(cfg: &SimConfig, script: &GestureScript) -> Result<ChannelModel, SynthError> {
        cfg.validate()?;
        script.validate()?;

        let inv_lambda: Vec<f64> = (0..cfg.subcarrier_count)
            .map(|k| (cfg.carrier_hz + k as f64 * cfg.subcarrier_spacing_hz) / SPEED_OF_LIGHT_M_S)
            .collect();
        let mut model = ChannelModel {
            carrier_hz: cfg.carrier_hz,
            subcarrier_spacing_hz: cfg.subcarrier_spacing_hz,
            direct_amp: cfg.direct_amp,
            reflect_gain: cfg.reflect_gain,
            inv_lambda,
            entries: Vec::with_capacity(script.entries.len()),
        };

        for (idx, entry) in script.entries.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(0x1000 + idx as u64);
            let reflects = entry.kind != GestureKind::Idle;
            let traj = match entry.kind {
                GestureKind::Push | GestureKind::Pull => trajectory(
                    entry.kind,
                    entry.duration_s,
                    model.unity_distance(entry.d_near_m),
                    model.unity_distance(entry.d_far_m),
                    TRAJECTORY_RATE_HZ,
                    &mut rng,
                )?,
                // The punch apex reverses at the near point; snapping it
                // onto a fringe extremum makes the apex fringe a clean
                // full-height maximum instead of a phase-luck partial.
                GestureKind::Punch => trajectory(
                    entry.kind,
                    entry.duration_s,
                    model.extremal_distance(entry.d_near_m),
                    model.unity_distance(entry.d_far_m),
                    TRAJECTORY_RATE_HZ,
                    &mut rng,
                )?,
                // The lever reverses at speed; its turn point snaps onto a
                // fringe extremum so the reversal fringe comes out full
                // height instead of a phase-luck partial.
                GestureKind::Lever => lever_trajectory(
                    entry.duration_s,
                    model.unity_distance(entry.d_far_m),
                    model.extremal_distance(entry.d_near_m),
                    (entry.d_near_m + entry.d_far_m) / 2.0,
                    model.unity_distance(entry.d_near_m),
                    TRAJECTORY_RATE_HZ,
                )?,
                GestureKind::AmbientWalk | GestureKind::Idle => trajectory(
                    entry.kind,
                    entry.duration_s,
                    entry.d_near_m,
                    entry.d_far_m,
                    TRAJECTORY_RATE_HZ,
                    &mut rng,
                )?,
            };
            model.entries.push(CompiledEntry {
                start_s: entry.start_s,
                end_s: entry.end_s(),
                kind: entry.kind,
                reflects,
                trajectory: traj,
            });
        }
        Ok(model)
    }

    pub fn carrier_wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT_M_S / self.carrier_hz
    }

    pub fn entries(&self) -> &[CompiledEntry] {
        &self.entries
    }

    /// Fringe oracle for entry `idx` using its compiled trajectory.
    pub fn expected_fringes(&self, idx: usize, wavelength_m: f64) -> usize {
        expected_fringe_count(&self.entries[idx].trajectory, wavelength_m)
    }

    fn active_entry(&self, t_s: f64) -> Option<&CompiledEntry> {
        // Scripts are short; scan is fine and stays correct however the
        // windows are spaced.
        self.entries
            .iter()
            .find(|e| t_s >= e.start_s && t_s < e.end_s)
    }

    /// Reflector state at `t_s`: distance and reflected magnitude, when an
    /// entry with a reflecting arm is active.
    pub fn reflector_at(&self, t_s: f64) -> Option<(f64, f64)> {
        let entry = self.active_entry(t_s)?;
        if !entry.reflects {
            return None;
        }
        let d = entry.trajectory.at(t_s - entry.start_s);
        Some((d, self.reflect_gain / (d * d)))
    }

    /// Mean noise-free subcarrier amplitude at `t_s`; the dense oracle for
    /// the default aggregation.
    pub fn mean_amplitude(&self, t_s: f64) -> f64 {
        match self.reflector_at(t_s) {
            None => self.direct_amp,
            Some((d, r)) => self.mean_amp_at_distance(d, r),
        }
    }

    fn mean_amp_at_distance(&self, d: f64, r: f64) -> f64 {
        let a = self.direct_amp;
        let mut sum = 0.0;
        for inv_l in &self.inv_lambda {
            let phi = 4.0 * std::f64::consts::PI * d * inv_l;
            sum += (a * a + 2.0 * a * r * phi.cos() + r * r).sqrt();
        }
        sum / self.inv_lambda.len() as f64
    }

    /// Noise-free per-subcarrier amplitudes at `t_s`, written into `out`.
    pub fn subcarrier_amplitudes(&self, t_s: f64, out: &mut Vec<f64>) {
        out.clear();
        match self.reflector_at(t_s) {
            None => out.resize(self.inv_lambda.len(), self.direct_amp),
            Some((d, r)) => {
                let a = self.direct_amp;
                for inv_l in &self.inv_lambda {
                    let phi = 4.0 * std::f64::consts::PI * d * inv_l;
                    out.push((a * a + 2.0 * a * r * phi.cos() + r * r).sqrt());
                }
            }
        }
    }

    /// Round-trip reflection phase per subcarrier at distance `d`.
    fn reflection_phase(&self, d: f64, k: usize) -> f64 {
        4.0 * std::f64::consts::PI * d * self.inv_lambda[k]
    }

    /// Half-fringe search window around a target distance.
    fn adjust_window(&self, d_target: f64) -> (f64, f64) {
        let lambda_c = SPEED_OF_LIGHT_M_S
            / (self.carrier_hz
                + self.subcarrier_spacing_hz * (self.inv_lambda.len() - 1) as f64 / 2.0);
        let half_window = lambda_c / 4.0 * 1.08;
        ((d_target - half_window).max(1e-3), d_target + half_window)
    }

    /// Nudge a boundary distance to the nearest point where the mean
    /// subcarrier amplitude equals the direct amplitude, so the reflected
    /// path switches on and off without an amplitude step. The shift is at
    /// most a quarter carrier wavelength (about 3 cm at 2.4 GHz).
    fn unity_distance(&self, d_target: f64) -> f64 {
        let a = self.direct_amp;
        if self.reflect_gain <= 0.0 {
            return d_target;
        }
        let r_target = self.reflect_gain / (d_target * d_target);
        if r_target >= 1.95 * a {
            // No unity point nearby when the reflection rivals the direct
            // path; leave the geometry alone.
            return d_target;
        }
        let (lo, hi) = self.adjust_window(d_target);
        nearest_root(lo, hi, d_target, |d| {
            self.mean_amp_at_distance(d, self.reflect_gain / (d * d)) - a
        })
        .unwrap_or(d_target)
    }

    /// Nudge a distance onto the nearest local extremum of the mean
    /// subcarrier amplitude (zero of its distance derivative).
    fn extremal_distance(&self, d_target: f64) -> f64 {
        if self.reflect_gain <= 0.0 {
            return d_target;
        }
        let (lo, hi) = self.adjust_window(d_target);
        let h = 2e-7;
        nearest_root(lo, hi, d_target, |d| {
            let up = self.mean_amp_at_distance(d + h, self.reflect_gain / ((d + h) * (d + h)));
            let dn = self.mean_amp_at_distance(d - h, self.reflect_gain / ((d - h) * (d - h)));
            up - dn
        })
        .unwrap_or(d_target)
    }
}

/// Scan `[lo, hi]` for sign changes of `f` and bisect each bracket,
/// returning the root closest to `target`.
fn nearest_root(lo: f64, hi: f64, target: f64, f: impl Fn(f64) -> f64) -> Option<f64> {
    let steps = 800;
    let mut best: Option<f64> = None;
    let mut prev_x = lo;
    let mut prev_f = f(lo);
    for i in 1..=steps {
        let x = lo + (hi - lo) * i as f64 / steps as f64;
        let fx = f(x);
        if prev_f * fx <= 0.0 {
            let (mut x0, mut x1, mut f0) = (prev_x, x, prev_f);
            for _ in 0..80 {
                let xm = (x0 + x1) / 2.0;
                let fm = f(xm);
                if f0 * fm <= 0.0 {
                    x1 = xm;
                } else {
                    x0 = xm;
                    f0 = fm;
                }
            }
            let root = (x0 + x1) / 2.0;
            if best.map_or(true, |b| (root - target).abs() < (b - target).abs()) {
                best = Some(root);
            }
        }
        prev_x = x;
        prev_f = fx;
    }
    best
}

fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Synthesize a labeled trace for a script.
///
/// Packet times are a Poisson process at `packet_rate_pps` (optionally with
/// bursty silence windows). For a packet at time `t` and subcarrier `k`:
///
/// ```text
/// amplitude_k = | direct_amp + (reflect_gain / d(t)^2) * exp(i 2pi 2d(t)/lambda_k) |
///               + Gaussian(0, noise_sigma), clamped at zero
/// phase_k     = (2pi 2d(t)/lambda_k + theta_packet) mod 2pi
/// rssi_db     = 20 log10(mean_k amplitude_k)
/// ```
///
/// with `theta_packet` drawn uniformly per packet, so phase decorrelates
/// across packets while amplitude never sees it. Glitches add
/// `glitch_magnitude` to every subcarrier of single packets at
/// `glitch_rate_per_s`. Output is deterministic for a given config.
pub fn synth_trace(
    cfg: &SimConfig,
    script: &GestureScript,
) -> Result<(Trace, Vec<GestureLabel>), SynthError> {
    let model = ChannelModel::compile(cfg, script)?;
    let t_end = script.end_s();

    // Packet arrivals.
    let mut arrivals: Vec<f64> = Vec::new();
    {
        let mut rng = derived_rng(cfg.seed, 1);
        let exp = Exp::new(cfg.packet_rate_pps).unwrap();
        let mut t = 0.0;
        loop {
            t += exp.sample(&mut rng);
            if t >= t_end {
                break;
            }
            arrivals.push(t);
        }
    }

    // Bursty silence windows.
    if let Some(bg) = cfg.burst_gap {
        if bg.prob_per_s > 0.0 && bg.gap_ms > 0.0 {
            let mut rng = derived_rng(cfg.seed, 2);
            let exp = Exp::new(bg.prob_per_s).unwrap();
            let mut gaps: Vec<(f64, f64)> = Vec::new();
            let mut t = 0.0;
            loop {
                t += exp.sample(&mut rng);
                if t >= t_end {
                    break;
                }
                gaps.push((t, t + bg.gap_ms / 1000.0));
            }
            arrivals.retain(|a| !gaps.iter().any(|(s, e)| a >= s && a < e));
        }
    }

    // Per-packet channel state.
    let mut rng_pkt = derived_rng(cfg.seed, 3);
    let noise = if cfg.noise_sigma > 0.0 {
        Some(Normal::new(0.0, cfg.noise_sigma).unwrap())
    } else {
        None
    };
    let tau = std::f64::consts::TAU;
    let mut samples: Vec<RawSample> = Vec::with_capacity(arrivals.len());
    let mut amps: Vec<f64> = Vec::with_capacity(cfg.subcarrier_count);
    let mut prev_t_us: Option<u64> = None;
    for &t in &arrivals {
        let theta = rng_pkt.random::<f64>() * tau;
        model.subcarrier_amplitudes(t, &mut amps);
        let reflector = model.reflector_at(t);
        let phases: Vec<f64> = (0..cfg.subcarrier_count)
            .map(|k| {
                let geom = match reflector {
                    Some((d, _)) => model.reflection_phase(d, k),
                    None => 0.0,
                };
                let p = (geom + theta).rem_euclid(tau);
                if p >= tau {
                    0.0
                } else {
                    p
                }
            })
            .collect();
        if let Some(n) = &noise {
            for a in amps.iter_mut() {
                *a = (*a + n.sample(&mut rng_pkt)).max(0.0);
            }
        }

        let t_us_raw = (t * 1e6).round() as u64;
        let t_us = match prev_t_us {
            Some(p) => t_us_raw.max(p + 1),
            None => t_us_raw,
        };
        prev_t_us = Some(t_us);

        samples.push(RawSample {
            t_us,
            rssi_db: 0.0, // filled after glitches
            csi_amp: amps.clone(),
            csi_phase: Some(phases),
        });
    }

    // Impulse glitches on single packets.
    if cfg.glitch_rate_per_s > 0.0 && cfg.glitch_magnitude != 0.0 && !samples.is_empty() {
        let mut rng = derived_rng(cfg.seed, 4);
        let exp = Exp::new(cfg.glitch_rate_per_s).unwrap();
        let mut t = 0.0;
        loop {
            t += exp.sample(&mut rng);
            if t >= t_end {
                break;
            }
            let t_us = (t * 1e6).round() as u64;
            let idx = samples.partition_point(|s| s.t_us < t_us);
            if idx < samples.len() {
                for a in samples[idx].csi_amp.iter_mut() {
                    *a = (*a + cfg.glitch_magnitude).max(0.0);
                }
            }
        }
    }

    for s in samples.iter_mut() {
        let mean = s.csi_amp.iter().sum::<f64>() / s.csi_amp.len() as f64;
        s.rssi_db = 20.0 * mean.max(1e-12).log10();
    }

    let trace = Trace {
        meta: TraceMeta {
            carrier_hz: cfg.carrier_hz,
            subcarrier_count: cfg.subcarrier_count,
            subcarrier_spacing_hz: cfg.subcarrier_spacing_hz,
            nominal_rate_pps: cfg.packet_rate_pps,
            label: None,
        },
        samples,
    };
    let labels = script
        .entries
        .iter()
        .map(|e| GestureLabel {
            start_s: e.start_s,
            kind: e.kind,
            duration_s: e.duration_s,
        })
        .collect();
    Ok((trace, labels))
}

/// A script with one gesture padded by idle time on both sides.
pub fn single_gesture_script(
    kind: GestureKind,
    duration_s: f64,
    d_near_m: f64,
    d_far_m: f64,
    pad_s: f64,
) -> GestureScript {
    GestureScript {
        entries: vec![
            ScriptEntry {
                start_s: pad_s,
                kind,
                duration_s,
                d_near_m,
                d_far_m,
            },
            ScriptEntry {
                start_s: pad_s + duration_s,
                kind: GestureKind::Idle,
                duration_s: pad_s,
                d_near_m,
                d_far_m,
            },
        ],
    }
}

/// A gesture-free script: one ambient walker wandering 1.5-3 m away for the
/// given time.
pub fn ambient_script(minutes: f64) -> GestureScript {
    GestureScript {
        entries: vec![ScriptEntry {
            start_s: 0.0,
            kind: GestureKind::AmbientWalk,
            duration_s: minutes * 60.0,
            d_near_m: 1.5,
            d_far_m: 3.0,
        }],
    }
}

/// Geometry randomization for corpus generation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryJitter {
    pub d_near_m: (f64, f64),
    pub d_far_m: (f64, f64),
    /// Multiplier range applied to the per-kind default duration.
    pub duration_scale: (f64, f64),
    /// Idle padding around each gesture.
    pub pad_s: f64,
}

impl Default for GeometryJitter {
    fn default() -> Self {
        GeometryJitter {
            d_near_m: (0.18, 0.26),
            d_far_m: (0.52, 0.64),
            duration_scale: (0.9, 1.12),
            pad_s: 3.0,
        }
    }
}

/// One labeled corpus trace.
pub type LabeledTrace = (Trace, Vec<GestureLabel>);

/// Synthesize `n_per_gesture` single-gesture traces per gesture kind, with
/// idle padding and per-trace geometry jitter. Deterministic per seed.
pub fn synth_corpus(
    cfg: &SimConfig,
    n_per_gesture: usize,
    seed: u64,
) -> Result<Vec<LabeledTrace>, SynthError> {
    synth_corpus_with(cfg, n_per_gesture, seed, &GeometryJitter::default())
}

/// [`synth_corpus`] with explicit geometry jitter.
pub fn synth_corpus_with(
    cfg: &SimConfig,
    n_per_gesture: usize,
    seed: u64,
    jitter: &GeometryJitter,
) -> Result<Vec<LabeledTrace>, SynthError> {
    let mut rng = derived_rng(seed, 5);
    let mut out = Vec::with_capacity(4 * n_per_gesture);
    for kind in GESTURES {
        for _ in 0..n_per_gesture {
            let d_near = rng.random_range(jitter.d_near_m.0..jitter.d_near_m.1);
            let d_far = rng.random_range(jitter.d_far_m.0..jitter.d_far_m.1);
            let dur = default_duration_s(kind)
                * rng.random_range(jitter.duration_scale.0..jitter.duration_scale.1);
            let trace_seed = rng.random::<u64>();
            let script = single_gesture_script(kind, dur, d_near, d_far, jitter.pad_s);
            let trace_cfg = SimConfig {
                seed: trace_seed,
                ..cfg.clone()
            };
            let (mut trace, labels) = synth_trace(&trace_cfg, &script)?;
            trace.meta.label = Some(format!("{kind:?}").to_lowercase());
            out.push((trace, labels));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{aggregate, write_trace, AggregationMethod};

    fn test_rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn idle_trajectory_is_constant() {
        let t = trajectory(GestureKind::Idle, 2.0, 0.2, 0.6, 1000.0, &mut test_rng()).unwrap();
        assert!(t.d_m.iter().all(|d| *d == 0.6));
    }

    #[test]
    fn push_trajectory_is_non_increasing() {
        let t = trajectory(GestureKind::Push, 1.0, 0.2, 0.6, 1000.0, &mut test_rng()).unwrap();
        assert_eq!(t.d_m[0], 0.6);
        assert!((t.d_m.last().unwrap() - 0.2).abs() < 1e-12);
        assert!(t.d_m.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn punch_trajectory_is_symmetric_out_and_back() {
        let t = trajectory(GestureKind::Punch, 1.0, 0.2, 0.6, 1000.0, &mut test_rng()).unwrap();
        assert_eq!(t.d_m[0], 0.6);
        assert!((t.d_m.last().unwrap() - 0.6).abs() < 1e-12);
        let min = t.d_m.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((min - 0.2).abs() < 1e-9);
    }

    #[test]
    fn lever_trajectory_hits_near_mid_near() {
        let t = trajectory(GestureKind::Lever, 2.0, 0.2, 0.6, 1000.0, &mut test_rng()).unwrap();
        let at = |u: f64| t.at(u * 2.0);
        assert!((at(0.0) - 0.6).abs() < 1e-9);
        assert!((at(0.5) - 0.2).abs() < 1e-9);
        assert!((at(0.75) - 0.4).abs() < 1e-9);
        assert!((at(1.0) - 0.2).abs() < 1e-9);
    }

    #[test]
    fn ambient_trajectory_stays_in_band() {
        let t = trajectory(
            GestureKind::AmbientWalk,
            30.0,
            1.5,
            3.0,
            1000.0,
            &mut test_rng(),
        )
        .unwrap();
        assert!(t.d_m.iter().all(|d| *d >= 1.5 && *d <= 3.0));
        // It actually moves.
        let min = t.d_m.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = t.d_m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max - min > 0.1);
    }

    #[test]
    fn trajectory_rejects_bad_ranges() {
        assert!(trajectory(GestureKind::Push, 0.0, 0.2, 0.6, 1000.0, &mut test_rng()).is_err());
        assert!(trajectory(GestureKind::Push, 1.0, 0.6, 0.2, 1000.0, &mut test_rng()).is_err());
        assert!(trajectory(GestureKind::Push, 1.0, 0.0, 0.6, 1000.0, &mut test_rng()).is_err());
    }

    #[test]
    fn fringe_count_zero_for_constant() {
        let t = trajectory(GestureKind::Idle, 1.0, 0.2, 0.6, 1000.0, &mut test_rng()).unwrap();
        assert_eq!(expected_fringe_count(&t, 0.123), 0);
    }

    #[test]
    fn fringe_count_two_for_exact_wavelength_sweep() {
        // Monotone sweep with delta(2d) = lambda exactly: two half-wavelength
        // crossings. Anchor away from the grid to avoid boundary landings.
        let lambda = 0.12;
        let d0 = 0.2 + 0.001;
        let d1 = d0 + lambda / 2.0;
        let n = 1001;
        let d_m: Vec<f64> = (0..n)
            .map(|i| d0 + (d1 - d0) * i as f64 / (n - 1) as f64)
            .collect();
        let t = ArmTrajectory {
            rate_hz: 1000.0,
            d_m,
        };
        assert_eq!(expected_fringe_count(&t, lambda), 2);
    }

    #[test]
    fn push_sweep_crosses_about_13_fringes() {
        let cfg = SimConfig::default();
        let lambda = cfg.carrier_wavelength_m();
        let t = trajectory(GestureKind::Push, 1.1, 0.2, 0.6, 1000.0, &mut test_rng()).unwrap();
        let n = expected_fringe_count(&t, lambda);
        assert!((12..=14).contains(&n), "push fringe count {n}");
    }

    #[test]
    fn punch_doubles_the_push_fringe_count() {
        let cfg = SimConfig::default();
        let lambda = cfg.carrier_wavelength_m();
        let push = trajectory(GestureKind::Push, 1.1, 0.2, 0.6, 1000.0, &mut test_rng()).unwrap();
        let punch = trajectory(GestureKind::Punch, 2.2, 0.2, 0.6, 1000.0, &mut test_rng()).unwrap();
        assert_eq!(
            expected_fringe_count(&punch, lambda),
            2 * expected_fringe_count(&push, lambda)
        );
    }

    #[test]
    fn no_reflector_means_flat_direct_amplitude() {
        let cfg = SimConfig {
            reflect_gain: 0.0,
            noise_sigma: 0.0,
            packet_rate_pps: 500.0,
            ..SimConfig::default()
        };
        let script = single_gesture_script(GestureKind::Push, 1.0, 0.2, 0.6, 1.0);
        let (trace, _) = synth_trace(&cfg, &script).unwrap();
        assert!(!trace.samples.is_empty());
        for s in &trace.samples {
            assert!(s.csi_amp.iter().all(|a| *a == cfg.direct_amp));
        }
    }

    #[test]
    fn same_seed_gives_bit_identical_traces() {
        let cfg = SimConfig {
            noise_sigma: 0.3,
            glitch_rate_per_s: 0.5,
            packet_rate_pps: 400.0,
            seed: 42,
            ..SimConfig::default()
        };
        let script = single_gesture_script(GestureKind::Lever, 2.0, 0.2, 0.6, 2.0);
        let (a, la) = synth_trace(&cfg, &script).unwrap();
        let (b, lb) = synth_trace(&cfg, &script).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_trace(&a, &mut ba).unwrap();
        write_trace(&b, &mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(la, lb);
    }

    #[test]
    fn poisson_interarrival_mean_matches_rate() {
        let cfg = SimConfig {
            packet_rate_pps: 1000.0,
            seed: 3,
            ..SimConfig::default()
        };
        let script = GestureScript {
            entries: vec![ScriptEntry {
                start_s: 0.0,
                kind: GestureKind::Idle,
                duration_s: 105.0,
                d_near_m: 0.2,
                d_far_m: 0.6,
            }],
        };
        let (trace, _) = synth_trace(&cfg, &script).unwrap();
        assert!(trace.samples.len() > 100_000);
        let gaps: Vec<f64> = trace
            .samples
            .windows(2)
            .map(|w| (w[1].t_us - w[0].t_us) as f64)
            .collect();
        let mean_us = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let expect_us = 1e6 / cfg.packet_rate_pps;
        assert!(
            (mean_us - expect_us).abs() / expect_us < 0.05,
            "mean gap {mean_us} us vs {expect_us} us"
        );
    }

    #[test]
    fn static_scene_phase_decorrelates_while_amplitude_is_constant() {
        let cfg = SimConfig {
            packet_rate_pps: 1000.0,
            noise_sigma: 0.0,
            seed: 11,
            ..SimConfig::default()
        };
        let script = GestureScript {
            entries: vec![ScriptEntry {
                start_s: 0.0,
                kind: GestureKind::Idle,
                duration_s: 11.0,
                d_near_m: 0.2,
                d_far_m: 0.6,
            }],
        };
        let (trace, _) = synth_trace(&cfg, &script).unwrap();
        assert!(trace.samples.len() >= 10_000);

        let phases: Vec<f64> = trace
            .samples
            .iter()
            .map(|s| s.csi_phase.as_ref().unwrap()[0])
            .collect();
        let n = phases.len() - 1;
        let mean = phases.iter().sum::<f64>() / phases.len() as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for p in &phases {
            den += (p - mean) * (p - mean);
        }
        for i in 0..n {
            num += (phases[i] - mean) * (phases[i + 1] - mean);
        }
        let r = num / den;
        assert!(r.abs() < 0.1, "phase lag-1 autocorrelation {r}");

        let amps = aggregate(&trace, AggregationMethod::MeanSubcarrier).unwrap();
        let first = amps.values[0];
        assert!(amps.values.iter().all(|v| *v == first));
    }

    #[test]
    fn closer_sweep_swings_harder() {
        let cfg = SimConfig {
            seed: 5,
            ..SimConfig::default()
        };
        let swing = |d_near: f64, d_far: f64| {
            let script = single_gesture_script(GestureKind::Push, 1.1, d_near, d_far, 0.5);
            let (trace, _) = synth_trace(&cfg, &script).unwrap();
            let series = aggregate(&trace, AggregationMethod::MeanSubcarrier).unwrap();
            let max = series.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = series.values.iter().cloned().fold(f64::INFINITY, f64::min);
            max - min
        };
        assert!(swing(0.2, 0.4) > swing(0.4, 0.6));
    }

    #[test]
    fn envelope_extrema_match_fringe_oracle() {
        let cfg = SimConfig::default();
        let script = single_gesture_script(GestureKind::Push, 1.1, 0.2, 0.6, 1.0);
        let model = ChannelModel::compile(&cfg, &script).unwrap();
        let entry = &model.entries()[0];

        // Dense noise-free envelope on a 1 kHz grid inside the window.
        let n = ((entry.end_s - entry.start_s) * 1000.0) as usize;
        let env: Vec<f64> = (0..=n)
            .map(|i| model.mean_amplitude(entry.start_s + i as f64 / 1000.0))
            .collect();
        let mut extrema = 0;
        for i in 1..env.len() - 1 {
            if (env[i] > env[i - 1] && env[i] > env[i + 1])
                || (env[i] < env[i - 1] && env[i] < env[i + 1])
            {
                extrema += 1;
            }
        }
        let oracle = model.expected_fringes(0, cfg.carrier_wavelength_m());
        assert!(
            (extrema as i64 - oracle as i64).abs() <= 1,
            "extrema {extrema} vs oracle {oracle}"
        );
    }

    #[test]
    fn boundary_unity_keeps_switches_silent() {
        // Mean amplitude at the compiled gesture boundaries equals the
        // direct amplitude, so the reflector switching cannot leave a step.
        let cfg = SimConfig::default();
        for kind in GESTURES {
            let script =
                single_gesture_script(kind, default_duration_s(kind), 0.2, 0.6, 1.0);
            let model = ChannelModel::compile(&cfg, &script).unwrap();
            let entry = &model.entries()[0];
            let eps = 1e-9;
            let inside_start = model.mean_amplitude(entry.start_s + eps);
            let inside_end = model.mean_amplitude(entry.end_s - eps);
            assert!(
                (inside_start - cfg.direct_amp).abs() < 1e-6,
                "{kind:?} start amplitude {inside_start}"
            );
            assert!(
                (inside_end - cfg.direct_amp).abs() < 1e-6,
                "{kind:?} end amplitude {inside_end}"
            );
        }
    }

    #[test]
    fn corpus_has_n_traces_per_gesture_and_is_deterministic() {
        let cfg = SimConfig::default();
        let corpus = synth_corpus(&cfg, 1, 99).unwrap();
        assert_eq!(corpus.len(), 4);
        let kinds: Vec<GestureKind> = corpus
            .iter()
            .map(|(_, labels)| labels[0].kind)
            .collect();
        assert_eq!(kinds, GESTURES.to_vec());

        let again = synth_corpus(&cfg, 1, 99).unwrap();
        for ((ta, la), (tb, lb)) in corpus.iter().zip(again.iter()) {
            assert_eq!(ta, tb);
            assert_eq!(la, lb);
        }
    }

    #[test]
    fn corpus_session_shape_for_n20() {
        let cfg = SimConfig {
            packet_rate_pps: 50.0,
            ..SimConfig::default()
        };
        let corpus = synth_corpus(&cfg, 20, 1).unwrap();
        assert_eq!(corpus.len(), 80);
        for (_, labels) in &corpus {
            assert_eq!(labels.iter().filter(|l| l.kind.is_gesture()).count(), 1);
        }
    }

    #[test]
    fn glitches_spike_single_packets() {
        let cfg = SimConfig {
            glitch_rate_per_s: 2.0,
            glitch_magnitude: 5.0,
            packet_rate_pps: 500.0,
            seed: 21,
            ..SimConfig::default()
        };
        let script = GestureScript {
            entries: vec![ScriptEntry {
                start_s: 0.0,
                kind: GestureKind::Idle,
                duration_s: 10.0,
                d_near_m: 0.2,
                d_far_m: 0.6,
            }],
        };
        let (trace, _) = synth_trace(&cfg, &script).unwrap();
        let spiked = trace
            .samples
            .iter()
            .filter(|s| s.csi_amp.iter().any(|a| *a > 4.0))
            .count();
        assert!(spiked >= 5, "expected a handful of glitched packets, got {spiked}");
        // Unglitched packets stay at the direct amplitude.
        let clean = trace
            .samples
            .iter()
            .filter(|s| s.csi_amp.iter().all(|a| (*a - 1.0).abs() < 1e-9))
            .count();
        assert!(clean > trace.samples.len() / 2);
    }
}
