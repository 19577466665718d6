//! Salient-point extraction from IoT device event logs and helper IMU traces.
//!
//! Device side: button presses, knob direction changes and swipe direction
//! changes are read directly from the UI controller's events. Helper side:
//! the dominant IMU axis is located, the leading "big silence" is trimmed,
//! and salient points are detected as sharp acceleration peaks (buttons) or
//! validated gyroscope sign changes (knobs, touchscreens).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SensingError {
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("too few salient points: found {found}, need at least 2")]
    TooFewEvents { found: usize },
    #[error("empty trace")]
    EmptyTrace,
    #[error("degenerate trace: no axis shows any amplitude")]
    Degenerate,
    #[error("no leading big silence of at least {min_ms} ms (found {found_ms} ms)")]
    NoSilenceFound { min_ms: u64, found_ms: u64 },
    #[error("trace I/O: {0}")]
    Io(String),
}

/// The three supported kinds of pairing operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UiType {
    Button,
    Knob,
    Screen,
}

impl UiType {
    pub const ALL: [UiType; 3] = [UiType::Button, UiType::Knob, UiType::Screen];

    /// Helper sampling rate used for this operation type.
    pub fn default_rate_hz(self) -> f64 {
        match self {
            UiType::Button => 80.0,
            UiType::Knob | UiType::Screen => 50.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UiType::Button => "button",
            UiType::Knob => "knob",
            UiType::Screen => "screen",
        }
    }
}

impl std::str::FromStr for UiType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "button" => Ok(UiType::Button),
            "knob" => Ok(UiType::Knob),
            "screen" | "touchscreen" => Ok(UiType::Screen),
            other => Err(format!("unknown ui type `{other}`")),
        }
    }
}

impl std::fmt::Display for UiType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which side of the pairing produced a measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Device,
    Helper,
}

/// One IMU reading. `t` is milliseconds since trace start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: u64,
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorTrace {
    pub samples: Vec<ImuSample>,
    pub rate_hz: f64,
    pub ui_type: UiType,
}

impl SensorTrace {
    /// Builds a trace, checking ordering and that sample spacing stays
    /// within ±20% of the declared rate.
    pub fn new(samples: Vec<ImuSample>, rate_hz: f64, ui_type: UiType) -> Result<Self, SensingError> {
        if samples.is_empty() {
            return Err(SensingError::EmptyTrace);
        }
        if !rate_hz.is_finite() || rate_hz <= 0.0 {
            return Err(SensingError::MalformedTrace(format!("invalid sampling rate {rate_hz}")));
        }
        let period = 1000.0 / rate_hz;
        for w in samples.windows(2) {
            if w[1].t <= w[0].t {
                return Err(SensingError::MalformedTrace(format!(
                    "timestamps not strictly increasing at t={}",
                    w[1].t
                )));
            }
            let dt = (w[1].t - w[0].t) as f64;
            // Integer-millisecond timestamps quantize the spacing by up to 1 ms.
            if (dt - period).abs() > 0.2 * period + 1.0 {
                return Err(SensingError::MalformedTrace(format!(
                    "sample spacing {dt} ms at t={} inconsistent with {rate_hz} Hz",
                    w[1].t
                )));
            }
        }
        Ok(SensorTrace { samples, rate_hz, ui_type })
    }

    pub fn period_ms(&self) -> f64 {
        1000.0 / self.rate_hz
    }

    pub fn duration_ms(&self) -> u64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    PressedDown,
    ReleasedUp,
    RotationStart,
    RotationEnd,
    SwipeDirectionChange,
}

/// A UI controller event. `payload` carries the signed twist extent for
/// rotations or the swipe direction for screens.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceEvent {
    pub t: u64,
    pub kind: EventKind,
    #[serde(default)]
    pub payload: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SalientSequence {
    pub timestamps: Vec<f64>,
    pub source: Origin,
    pub ui_type: UiType,
}

impl SalientSequence {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Tunables for helper-side detection. The defaults are engineering
/// choices; none of them is pinned by measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingConfig {
    pub silence_window_ms: u64,
    /// Silence threshold as a fraction of the trace's peak moving variance.
    pub silence_rel_threshold: f64,
    pub min_silence_ms: u64,
    /// Button peaks must exceed mean + `peak_sigma` · stddev.
    pub peak_sigma: f64,
    pub peak_min_separation_ms: f64,
    /// Half-width of the window around a gyro zero crossing in which both
    /// lobes must reach substantial amplitude.
    pub crossing_window_ms: f64,
    /// Substantial amplitude as a fraction of the trace peak.
    pub crossing_rel_amplitude: f64,
    /// Largest RotationEnd → RotationStart gap that still forms one salient point.
    pub knob_max_gap_ms: u64,
}

impl Default for SensingConfig {
    fn default() -> Self {
        SensingConfig {
            silence_window_ms: 200,
            silence_rel_threshold: 0.05,
            min_silence_ms: 1500,
            peak_sigma: 3.0,
            peak_min_separation_ms: 80.0,
            crossing_window_ms: 150.0,
            crossing_rel_amplitude: 0.2,
            knob_max_gap_ms: 1000,
        }
    }
}

fn check_event_order(events: &[DeviceEvent]) -> Result<(), SensingError> {
    for w in events.windows(2) {
        if w[1].t <= w[0].t {
            return Err(SensingError::MalformedTrace(format!("events not strictly increasing at t={}", w[1].t)));
        }
    }
    Ok(())
}

fn salient(timestamps: Vec<f64>, source: Origin, ui_type: UiType) -> Result<SalientSequence, SensingError> {
    if timestamps.len() < 2 {
        return Err(SensingError::TooFewEvents { found: timestamps.len() });
    }
    Ok(SalientSequence { timestamps, source, ui_type })
}

/// Device-side salient points.
///
/// Buttons use `PressedDown` times. Knobs use the midpoint of each
/// `RotationEnd_k` / `RotationStart_{k+1}` pair, provided the gap is at most
/// `knob_max_gap_ms` and the twist direction actually changes (when both
/// payloads carry a sign). Screens use the direction-change events as-is.
pub fn extract_device_salients(
    events: &[DeviceEvent],
    ui_type: UiType,
    cfg: &SensingConfig,
) -> Result<SalientSequence, SensingError> {
    salient(device_salient_times(events, ui_type, cfg)?, Origin::Device, ui_type)
}

/// Same rules as [`extract_device_salients`] without the minimum-count
/// check. A knob log may begin with either rotation event.
pub fn device_salient_times(
    events: &[DeviceEvent],
    ui_type: UiType,
    cfg: &SensingConfig,
) -> Result<Vec<f64>, SensingError> {
    check_event_order(events)?;
    let ts = match ui_type {
        UiType::Button => {
            let mut expect_down = true;
            let mut out = Vec::new();
            for ev in events {
                match (ev.kind, expect_down) {
                    (EventKind::PressedDown, true) => out.push(ev.t as f64),
                    (EventKind::ReleasedUp, false) => {}
                    (kind, _) => {
                        return Err(SensingError::MalformedTrace(format!(
                            "unexpected {kind:?} at t={} in button trace",
                            ev.t
                        )))
                    }
                }
                expect_down = !expect_down;
            }
            out
        }
        UiType::Knob => {
            let mut expect_start = events.first().is_none_or(|e| e.kind != EventKind::RotationEnd);
            let mut last_end: Option<&DeviceEvent> = None;
            let mut last_start_dir: Option<f64> = None;
            let mut out = Vec::new();
            for ev in events {
                match (ev.kind, expect_start) {
                    (EventKind::RotationStart, true) => {
                        if let Some(end) = last_end {
                            let gap = ev.t - end.t;
                            let reversed = match (end.payload.or(last_start_dir), ev.payload) {
                                (Some(a), Some(b)) => a.signum() != b.signum(),
                                _ => true,
                            };
                            if gap <= cfg.knob_max_gap_ms && reversed {
                                out.push((end.t as f64 + ev.t as f64) / 2.0);
                            }
                        }
                        last_start_dir = ev.payload;
                    }
                    (EventKind::RotationEnd, false) => last_end = Some(ev),
                    (kind, _) => {
                        return Err(SensingError::MalformedTrace(format!(
                            "unexpected {kind:?} at t={} in knob trace",
                            ev.t
                        )))
                    }
                }
                expect_start = !expect_start;
            }
            out
        }
        UiType::Screen => {
            let mut out = Vec::new();
            for ev in events {
                if ev.kind != EventKind::SwipeDirectionChange {
                    return Err(SensingError::MalformedTrace(format!(
                        "unexpected {:?} at t={} in screen trace",
                        ev.kind, ev.t
                    )));
                }
                out.push(ev.t as f64);
            }
            out
        }
    };
    Ok(ts)
}

/// Picks the axis with the largest peak-to-peak amplitude: accelerometer
/// axes for buttons, gyroscope axes for knobs and screens.
pub fn dominant_axis(trace: &SensorTrace) -> Result<(usize, Vec<f64>), SensingError> {
    if trace.samples.is_empty() {
        return Err(SensingError::EmptyTrace);
    }
    let pick = |s: &ImuSample| match trace.ui_type {
        UiType::Button => s.accel,
        UiType::Knob | UiType::Screen => s.gyro,
    };
    let mut best = (0usize, 0.0f64);
    for axis in 0..3 {
        let (lo, hi) = trace
            .samples
            .iter()
            .map(|s| pick(s)[axis])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let p2p = hi - lo;
        if p2p > best.1 {
            best = (axis, p2p);
        }
    }
    if best.1 <= f64::EPSILON {
        return Err(SensingError::Degenerate);
    }
    let axis = best.0;
    Ok((axis, trace.samples.iter().map(|s| pick(s)[axis]).collect()))
}

/// Variance of `signal` over the trailing window `(t_i - window, t_i]`.
fn moving_variance(times: &[f64], signal: &[f64], window_ms: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(signal.len());
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    let mut lo = 0usize;
    for i in 0..signal.len() {
        sum += signal[i];
        sum_sq += signal[i] * signal[i];
        while times[i] - times[lo] >= window_ms {
            sum -= signal[lo];
            sum_sq -= signal[lo] * signal[lo];
            lo += 1;
        }
        let n = (i - lo + 1) as f64;
        let mean = sum / n;
        out.push((sum_sq / n - mean * mean).max(0.0));
    }
    out
}

/// Drops everything before the end of the leading big silence.
///
/// The silence is the longest prefix whose dominant-axis moving variance
/// stays below `silence_rel_threshold` of the trace's peak moving variance.
pub fn trim_big_silence(trace: &SensorTrace, cfg: &SensingConfig) -> Result<SensorTrace, SensingError> {
    if trace.duration_ms() <= cfg.silence_window_ms {
        return Err(SensingError::MalformedTrace(format!(
            "trace of {} ms is not longer than the silence window",
            trace.duration_ms()
        )));
    }
    let (_, signal) = dominant_axis(trace)?;
    let times = trace.times();
    let var = moving_variance(&times, &signal, cfg.silence_window_ms as f64);
    let peak = var.iter().cloned().fold(0.0, f64::max);
    let threshold = cfg.silence_rel_threshold * peak;
    let first_active = var.iter().position(|&v| v > threshold).unwrap_or(var.len());
    let cut = first_active.saturating_sub(1);
    let silent_ms = trace.samples[cut].t - trace.samples[0].t;
    if first_active == 0 || silent_ms < cfg.min_silence_ms {
        return Err(SensingError::NoSilenceFound { min_ms: cfg.min_silence_ms, found_ms: silent_ms });
    }
    Ok(SensorTrace { samples: trace.samples[cut..].to_vec(), rate_hz: trace.rate_hz, ui_type: trace.ui_type })
}

/// Vertex of the parabola through three samples; falls back to the middle
/// sample when the points are collinear.
fn parabolic_peak(t: [f64; 3], y: [f64; 3]) -> f64 {
    let d1 = (y[1] - y[0]) / (t[1] - t[0]);
    let d2 = (y[2] - y[1]) / (t[2] - t[1]);
    let a = (d2 - d1) / (t[2] - t[0]);
    if a.abs() < 1e-12 {
        return t[1];
    }
    let b = d1 - a * (t[0] + t[1]);
    (-b / (2.0 * a)).clamp(t[0], t[2])
}

fn button_peaks(times: &[f64], signal: &[f64], cfg: &SensingConfig) -> Vec<f64> {
    let n = signal.len() as f64;
    let mean = signal.iter().sum::<f64>() / n;
    let sd = (signal.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let thr = mean + cfg.peak_sigma * sd;

    let mut candidates: Vec<(usize, f64)> = Vec::new();
    for i in 1..signal.len().saturating_sub(1) {
        let v = signal[i];
        if v > thr && v >= signal[i - 1] && v > signal[i + 1] {
            candidates.push((i, v));
        }
    }
    // Strongest peak wins inside each separation window.
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut kept: Vec<usize> = Vec::new();
    for (i, _) in candidates {
        if kept.iter().all(|&k| (times[k] - times[i]).abs() >= cfg.peak_min_separation_ms) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept.into_iter()
        .map(|i| parabolic_peak([times[i - 1], times[i], times[i + 1]], [signal[i - 1], signal[i], signal[i + 1]]))
        .collect()
}

/// Sign changes between two substantial lobes of opposite sign.
///
/// Hysteresis on `crossing_rel_amplitude · peak` suppresses the small
/// fluctuations that occur while the hand rests; the crossing itself is
/// located by linear interpolation of the last zero crossing before the new
/// lobe becomes substantial.
fn gyro_crossings(times: &[f64], signal: &[f64], cfg: &SensingConfig) -> Vec<f64> {
    let peak = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let level = cfg.crossing_rel_amplitude * peak;
    let mut out = Vec::new();
    // (sign, time) of the most recent substantial sample.
    let mut last_lobe: Option<(f64, f64)> = None;
    let mut pending_cross: Option<f64> = None;
    for i in 0..signal.len() {
        if i > 0 {
            let (a, b) = (signal[i - 1], signal[i]);
            if (a > 0.0 && b <= 0.0) || (a < 0.0 && b >= 0.0) {
                let frac = if a != b { a / (a - b) } else { 0.0 };
                pending_cross = Some(times[i - 1] + frac * (times[i] - times[i - 1]));
            }
        }
        let v = signal[i];
        if v.abs() < level || level <= 0.0 {
            continue;
        }
        let sign = v.signum();
        if let (Some((prev_sign, prev_t)), Some(cross)) = (last_lobe, pending_cross) {
            if prev_sign != sign
                && cross - prev_t <= cfg.crossing_window_ms
                && times[i] - cross <= cfg.crossing_window_ms
            {
                out.push(cross);
            }
        }
        last_lobe = Some((sign, times[i]));
        pending_cross = None;
    }
    out
}

/// Helper-side salient points from an already trimmed trace.
pub fn extract_helper_salients(trace: &SensorTrace, cfg: &SensingConfig) -> Result<SalientSequence, SensingError> {
    let (_, signal) = dominant_axis(trace)?;
    let times = trace.times();
    let ts = match trace.ui_type {
        UiType::Button => button_peaks(&times, &signal, cfg),
        UiType::Knob | UiType::Screen => gyro_crossings(&times, &signal, cfg),
    };
    salient(ts, Origin::Helper, trace.ui_type)
}

/// Trim followed by extraction.
pub fn helper_salients_from_raw(trace: &SensorTrace, cfg: &SensingConfig) -> Result<SalientSequence, SensingError> {
    extract_helper_salients(&trim_big_silence(trace, cfg)?, cfg)
}

// ----------------------------------------------------------------------------
// Trace files
// ----------------------------------------------------------------------------

fn io_err(e: impl std::fmt::Display) -> SensingError {
    SensingError::Io(e.to_string())
}

fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, SensingError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SensingError::Io(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut w: W) -> Result<(), SensingError> {
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    Ok(())
}

pub fn read_samples_jsonl<R: BufRead>(reader: R) -> Result<Vec<ImuSample>, SensingError> {
    read_jsonl(reader)
}

pub fn write_samples_jsonl<W: Write>(samples: &[ImuSample], w: W) -> Result<(), SensingError> {
    write_jsonl(samples, w)
}

pub fn read_events_jsonl<R: BufRead>(reader: R) -> Result<Vec<DeviceEvent>, SensingError> {
    read_jsonl(reader)
}

pub fn write_events_jsonl<W: Write>(events: &[DeviceEvent], w: W) -> Result<(), SensingError> {
    write_jsonl(events, w)
}

#[derive(Deserialize)]
struct CsvRow {
    t: u64,
    ax: f64,
    ay: f64,
    az: f64,
    gx: f64,
    gy: f64,
    gz: f64,
}

/// Reads samples from CSV with header `t,ax,ay,az,gx,gy,gz`.
pub fn read_samples_csv<R: std::io::Read>(reader: R) -> Result<Vec<ImuSample>, SensingError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(io_err)?.clone();
    let expected = ["t", "ax", "ay", "az", "gx", "gy", "gz"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(SensingError::Io(format!("unexpected CSV header {:?}", headers)));
    }
    rdr.deserialize::<CsvRow>()
        .map(|row| {
            let r = row.map_err(io_err)?;
            Ok(ImuSample { t: r.t, accel: [r.ax, r.ay, r.az], gyro: [r.gx, r.gy, r.gz] })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: u64, kind: EventKind) -> DeviceEvent {
        DeviceEvent { t, kind, payload: None }
    }

    fn cfg() -> SensingConfig {
        SensingConfig::default()
    }

    #[test]
    fn button_uses_pressed_down() {
        let events = [
            ev(100, EventKind::PressedDown),
            ev(250, EventKind::ReleasedUp),
            ev(600, EventKind::PressedDown),
            ev(800, EventKind::ReleasedUp),
        ];
        let s = extract_device_salients(&events, UiType::Button, &cfg()).unwrap();
        assert_eq!(s.timestamps, vec![100.0, 600.0]);
        assert_eq!(s.source, Origin::Device);
    }

    #[test]
    fn button_alternation_enforced() {
        let events = [ev(100, EventKind::PressedDown), ev(200, EventKind::PressedDown)];
        assert!(matches!(
            extract_device_salients(&events, UiType::Button, &cfg()),
            Err(SensingError::MalformedTrace(_))
        ));
        let events = [ev(100, EventKind::PressedDown), ev(100, EventKind::ReleasedUp)];
        assert!(matches!(
            extract_device_salients(&events, UiType::Button, &cfg()),
            Err(SensingError::MalformedTrace(_))
        ));
    }

    #[test]
    fn knob_midpoint() {
        let events = [ev(500, EventKind::RotationEnd), ev(540, EventKind::RotationStart)];
        assert_eq!(device_salient_times(&events, UiType::Knob, &cfg()).unwrap(), vec![520.0]);
        // A single direction change is not enough for evidence.
        let err = extract_device_salients(&events, UiType::Knob, &cfg()).unwrap_err();
        assert_eq!(err, SensingError::TooFewEvents { found: 1 });

        let events = [
            ev(0, EventKind::RotationStart),
            ev(500, EventKind::RotationEnd),
            ev(540, EventKind::RotationStart),
            ev(900, EventKind::RotationEnd),
            ev(921, EventKind::RotationStart),
        ];
        let s = extract_device_salients(&events, UiType::Knob, &cfg()).unwrap();
        assert_eq!(s.timestamps, vec![520.0, 910.5]);
    }

    #[test]
    fn knob_large_gap_and_same_direction_skipped() {
        let d = |t, kind, p: f64| DeviceEvent { t, kind, payload: Some(p) };
        let events = [
            d(0, EventKind::RotationStart, 1.0),
            d(200, EventKind::RotationEnd, 1.0),
            d(230, EventKind::RotationStart, -1.0),
            d(400, EventKind::RotationEnd, -1.0),
            // Hold mid-rotation, same direction afterwards.
            d(900, EventKind::RotationStart, -1.0),
            d(1000, EventKind::RotationEnd, -1.0),
            // Too far apart.
            d(2100, EventKind::RotationStart, 1.0),
            d(2300, EventKind::RotationEnd, 1.0),
            d(2320, EventKind::RotationStart, -1.0),
        ];
        let s = extract_device_salients(&events, UiType::Knob, &cfg()).unwrap();
        assert_eq!(s.timestamps, vec![215.0, 2310.0]);
    }

    #[test]
    fn screen_identity() {
        let events: Vec<_> = [300, 900, 1400].iter().map(|&t| ev(t, EventKind::SwipeDirectionChange)).collect();
        let s = extract_device_salients(&events, UiType::Screen, &cfg()).unwrap();
        assert_eq!(s.timestamps, vec![300.0, 900.0, 1400.0]);
    }

    fn flat_trace(ui: UiType, n: usize, f: impl Fn(f64) -> ([f64; 3], [f64; 3])) -> SensorTrace {
        let period = 1000.0 / ui.default_rate_hz();
        let samples = (0..n)
            .map(|i| {
                let t = (i as f64 * period).round();
                let (accel, gyro) = f(t);
                ImuSample { t: t as u64, accel, gyro }
            })
            .collect();
        SensorTrace::new(samples, ui.default_rate_hz(), ui).unwrap()
    }

    #[test]
    fn dominant_axis_picks_largest_swing() {
        let tr = flat_trace(UiType::Knob, 100, |t| {
            let s = (t / 100.0).sin();
            ([0.0; 3], [2.0 * s, 0.15 * s, 0.1 * s])
        });
        assert_eq!(dominant_axis(&tr).unwrap().0, 0);

        let tr = flat_trace(UiType::Button, 100, |t| {
            let bump = if (t as u64) % 500 < 13 { 9.0 } else { 0.0 };
            ([0.1 * bump, 0.2, 9.81 + bump], [0.5 * bump, 0.0, 0.0])
        });
        assert_eq!(dominant_axis(&tr).unwrap().0, 2);

        let tr = flat_trace(UiType::Screen, 50, |_| ([0.0; 3], [0.0; 3]));
        assert_eq!(dominant_axis(&tr), Err(SensingError::Degenerate));
    }

    #[test]
    fn trim_finds_leading_silence() {
        let tr = flat_trace(UiType::Knob, 250, |t| {
            let g = if t < 2500.0 { 0.0 } else { 3.0 * ((t - 2500.0) / 80.0).sin() };
            ([0.0; 3], [g, 0.0, 0.0])
        });
        let trimmed = trim_big_silence(&tr, &cfg()).unwrap();
        let start = trimmed.samples[0].t;
        assert!((2400..=2520).contains(&start), "cut at {start}");
    }

    #[test]
    fn trim_rejects_active_start() {
        let tr = flat_trace(UiType::Knob, 250, |t| ([0.0; 3], [3.0 * (t / 80.0).sin(), 0.0, 0.0]));
        assert!(matches!(trim_big_silence(&tr, &cfg()), Err(SensingError::NoSilenceFound { .. })));
    }

    #[test]
    fn zero_gyro_has_no_salients() {
        let tr = flat_trace(UiType::Knob, 100, |_| ([0.0, 0.0, 9.81], [0.0; 3]));
        assert_eq!(extract_helper_salients(&tr, &cfg()), Err(SensingError::Degenerate));
        // Constant nonzero accel but flat gyro: still no crossings.
        let tr = flat_trace(UiType::Knob, 100, |t| ([t / 1000.0, 0.0, 0.0], [1e-3, 0.0, 0.0]));
        assert!(matches!(
            extract_helper_salients(&tr, &cfg()),
            Err(SensingError::Degenerate) | Err(SensingError::TooFewEvents { .. })
        ));
    }

    #[test]
    fn wiggle_during_pause_is_ignored() {
        // +lobe, pause with a small negative wiggle, +lobe, then true reversals.
        let lobe = |t: f64, a: f64, b: f64, sign: f64| {
            if t >= a && t <= b {
                sign * 3.0 * (std::f64::consts::PI * (t - a) / (b - a)).sin()
            } else {
                0.0
            }
        };
        let tr = flat_trace(UiType::Knob, 120, |t| {
            let g = lobe(t, 0.0, 200.0, 1.0)
                + lobe(t, 230.0, 300.0, -0.1)
                + lobe(t, 1000.0, 1200.0, 1.0)
                + lobe(t, 1200.0, 1450.0, -1.0)
                + lobe(t, 1450.0, 1700.0, 1.0);
            ([0.0; 3], [g, 0.0, 0.0])
        });
        let s = extract_helper_salients(&tr, &cfg()).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s.timestamps[0] - 1200.0).abs() < 2.0);
        assert!((s.timestamps[1] - 1450.0).abs() < 2.0);
    }

    #[test]
    fn spacing_validation() {
        let s = |t| ImuSample { t, accel: [0.0; 3], gyro: [0.0; 3] };
        assert!(SensorTrace::new(vec![s(0), s(12), s(25), s(37)], 80.0, UiType::Button).is_ok());
        assert!(SensorTrace::new(vec![s(0), s(40)], 80.0, UiType::Button).is_err());
        assert!(SensorTrace::new(vec![s(5), s(5)], 80.0, UiType::Button).is_err());
        assert_eq!(SensorTrace::new(vec![], 80.0, UiType::Button), Err(SensingError::EmptyTrace));
    }

    #[test]
    fn csv_and_jsonl_import() {
        let csv = "t,ax,ay,az,gx,gy,gz\n0,0,0,9.8,0.1,0,0\n20,0,0,9.8,0.2,0,0\n";
        let samples = read_samples_csv(csv.as_bytes()).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1].gyro[0], 0.2);

        let mut buf = Vec::new();
        write_samples_jsonl(&samples, &mut buf).unwrap();
        assert_eq!(read_samples_jsonl(buf.as_slice()).unwrap(), samples);

        let line = r#"{"t":100,"kind":"PressedDown","payload":null}"#;
        let evs = read_events_jsonl(line.as_bytes()).unwrap();
        assert_eq!(evs[0].kind, EventKind::PressedDown);
        assert!(read_samples_csv("t,x\n1,2\n".as_bytes()).is_err());
    }
}
