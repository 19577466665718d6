//! Raw device logs and helper IMU traces for a synthetic session.
//!
//! Buttons produce a sharp acceleration pulse at each press with a small
//! approach bump before it and a rebound after release. Knobs and screens
//! produce half-sine angular-velocity lobes whose sign flips at each salient
//! point; a pause is a rotation, a near-still hold and a second rotation in
//! the same direction.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Session;
use crate::sensing::{DeviceEvent, EventKind, ImuSample, SensorTrace, UiType};

const GRAVITY: f64 = 9.81;
const ACCEL_NOISE: f64 = 0.03;
const GYRO_NOISE: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct SessionTraces {
    pub device_events: Vec<DeviceEvent>,
    pub helper_trace: SensorTrace,
    /// Salient times the helper trace was built around, on the helper clock.
    pub helper_truth: Vec<f64>,
}

enum Shape {
    Gauss { center: f64, width: f64, amp: f64 },
    HalfSine { start: f64, end: f64, amp: f64 },
    Wiggle { start: f64, end: f64, amp: f64, period: f64 },
}

impl Shape {
    fn eval(&self, t: f64) -> f64 {
        match *self {
            Shape::Gauss { center, width, amp } => {
                let z = (t - center) / width;
                if z.abs() > 6.0 {
                    0.0
                } else {
                    amp * (-0.5 * z * z).exp()
                }
            }
            Shape::HalfSine { start, end, amp } => {
                if t <= start || t >= end {
                    0.0
                } else {
                    amp * (std::f64::consts::PI * (t - start) / (end - start)).sin()
                }
            }
            Shape::Wiggle { start, end, amp, period } => {
                if t <= start || t >= end {
                    0.0
                } else {
                    amp * (std::f64::consts::TAU * (t - start) / period).sin()
                }
            }
        }
    }
}

/// Button presses: (device events, dominant-axis shapes, motion lead, motion tail).
fn button_motion<R: Rng + ?Sized>(session: &Session, rng: &mut R) -> (Vec<DeviceEvent>, Vec<Shape>, f64, f64) {
    let mut events = Vec::new();
    let mut shapes = Vec::new();
    let mut tail = 0.0;
    for (k, (&d, &h)) in session.device_times.iter().zip(&session.helper_times).enumerate() {
        // The finger lifts well before the next press.
        let next_gap = session.device_times.get(k + 1).map_or(200, |n| n - d);
        let hold = rng.gen_range(40..=80u64).min(next_gap * 2 / 5);
        events.push(DeviceEvent { t: d, kind: EventKind::PressedDown, payload: None });
        events.push(DeviceEvent { t: d + hold, kind: EventKind::ReleasedUp, payload: None });
        let amp = rng.gen_range(9.0..12.0);
        let width = rng.gen_range(11.0..13.0);
        shapes.push(Shape::Gauss { center: h, width, amp });
        shapes.push(Shape::Gauss { center: h - rng.gen_range(70.0..110.0), width: 20.0, amp: 0.1 * amp });
        shapes.push(Shape::Gauss { center: h + hold as f64, width: 1.5 * width, amp: -0.35 * amp });
        if k + 1 == session.device_times.len() {
            tail = hold as f64 + 100.0;
        }
    }
    (events, shapes, 150.0, tail)
}

/// Twists or swipes: (device events, dominant-axis shapes, motion lead, motion tail).
fn rotation_motion<R: Rng + ?Sized>(session: &Session, rng: &mut R) -> (Vec<DeviceEvent>, Vec<Shape>, f64, f64) {
    let knob = session.ui_type == UiType::Knob;
    let base = if knob { 2.5 } else { 1.5 };
    let d = &session.device_times;
    let h = &session.helper_times;
    let n = d.len();
    let mut shapes = Vec::new();
    // Rotations on the device clock: (start, end, direction).
    let mut rotations: Vec<(u64, u64, f64)> = Vec::new();
    let mut sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };

    let lead = rng.gen_range(150.0..300.0);
    let tail = rng.gen_range(150.0..300.0);
    let gaps: Vec<u64> = (0..n).map(|_| 2 * rng.gen_range(5..=30u64)).collect();

    shapes.push(Shape::HalfSine { start: h[0] - lead, end: h[0], amp: sign * base * rng.gen_range(0.8..1.2) });
    rotations.push((d[0] - lead as u64, d[0] - gaps[0] / 2, sign));
    for k in 0..n - 1 {
        sign = -sign;
        let start_dev = d[k] + gaps[k] / 2;
        let end_dev = d[k + 1] - gaps[k + 1] / 2;
        if session.pause_positions.contains(&k) {
            let d1 = rng.gen_range(150..=300u64);
            let d2 = rng.gen_range(150..=300u64);
            shapes.push(Shape::HalfSine {
                start: h[k],
                end: h[k] + d1 as f64,
                amp: sign * base * rng.gen_range(0.8..1.2),
            });
            shapes.push(Shape::Wiggle {
                start: h[k] + d1 as f64,
                end: h[k + 1] - d2 as f64,
                amp: 0.04 * base,
                period: rng.gen_range(250.0..400.0),
            });
            shapes.push(Shape::HalfSine {
                start: h[k + 1] - d2 as f64,
                end: h[k + 1],
                amp: sign * base * rng.gen_range(0.8..1.2),
            });
            rotations.push((start_dev, d[k] + d1, sign));
            rotations.push((d[k + 1] - d2, end_dev, sign));
        } else {
            shapes.push(Shape::HalfSine { start: h[k], end: h[k + 1], amp: sign * base * rng.gen_range(0.8..1.2) });
            rotations.push((start_dev, end_dev, sign));
        }
    }
    sign = -sign;
    shapes.push(Shape::HalfSine { start: h[n - 1], end: h[n - 1] + tail, amp: sign * base * rng.gen_range(0.8..1.2) });
    rotations.push((d[n - 1] + gaps[n - 1] / 2, d[n - 1] + tail as u64, sign));

    let events = if knob {
        rotations
            .iter()
            .flat_map(|&(s, e, dir)| {
                let extent = dir * (e - s) as f64;
                [
                    DeviceEvent { t: s, kind: EventKind::RotationStart, payload: Some(extent) },
                    DeviceEvent { t: e, kind: EventKind::RotationEnd, payload: Some(extent) },
                ]
            })
            .collect()
    } else {
        let mut out = Vec::new();
        for &t in d {
            // Direction of the swipe that starts at this change.
            let dir = rotations.iter().find(|r| r.0 > t).map_or(1.0, |r| r.2);
            out.push(DeviceEvent { t, kind: EventKind::SwipeDirectionChange, payload: Some(dir) });
        }
        out
    };
    (events, shapes, lead, tail)
}

/// Device log and helper IMU trace consistent with `session`.
pub fn gen_traces<R: Rng + ?Sized>(session: &Session, rng: &mut R) -> SessionTraces {
    let ui = session.ui_type;
    let (events, shapes, lead, tail) = match ui {
        UiType::Button => button_motion(session, rng),
        UiType::Knob | UiType::Screen => rotation_motion(session, rng),
    };
    let h = &session.helper_times;
    let silence = rng.gen_range(2000.0..2300.0);
    let start = (h[0] - lead - silence).max(0.0).floor() as u64;
    let end = h[h.len() - 1] + tail + rng.gen_range(2500.0..3500.0);
    let rate = ui.default_rate_hz();
    let period = 1000.0 / rate;
    let axis = rng.gen_range(0..3usize);
    let gravity_axis = rng.gen_range(0..3usize);
    let accel_noise = Normal::new(0.0, ACCEL_NOISE).expect("finite");
    let gyro_noise = Normal::new(0.0, GYRO_NOISE).expect("finite");
    let cross_talk: [f64; 3] = [rng.gen_range(0.1..0.3), rng.gen_range(0.1..0.3), rng.gen_range(0.1..0.3)];

    let mut samples = Vec::new();
    let mut i = 0u64;
    loop {
        let t = start + (i as f64 * period).round() as u64;
        if t as f64 > end {
            break;
        }
        let v: f64 = shapes.iter().map(|s| s.eval(t as f64)).sum();
        let mut accel = [0.0; 3];
        let mut gyro = [0.0; 3];
        for a in 0..3 {
            accel[a] = accel_noise.sample(rng);
            gyro[a] = gyro_noise.sample(rng);
            let scale = if a == axis { 1.0 } else { cross_talk[a] };
            match ui {
                UiType::Button => accel[a] += scale * v,
                UiType::Knob | UiType::Screen => gyro[a] += scale * v,
            }
        }
        accel[gravity_axis] += GRAVITY;
        samples.push(ImuSample { t, accel, gyro });
        i += 1;
    }
    let helper_trace = SensorTrace::new(samples, rate, ui).expect("evenly sampled trace");
    SessionTraces { device_events: events, helper_trace, helper_truth: h.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::EvidencePolicy;
    use crate::sensing::{self, SensingConfig};
    use crate::synthgen::{gen_session_rng, pair_rng, UserModel};

    fn round_trip(ui: UiType, policy: &EvidencePolicy, count: u64) {
        let cfg = SensingConfig::default();
        let model = UserModel::for_ui(ui);
        let tol = 1.5 * 1000.0 / ui.default_rate_hz();
        for id in 0..count {
            let mut rng = pair_rng(11, id);
            let s = gen_session_rng(&model, ui, policy, &mut rng).unwrap();
            let tr = gen_traces(&s, &mut rng);
            let dev = sensing::extract_device_salients(&tr.device_events, ui, &cfg).unwrap();
            let expect: Vec<f64> = s.device_times.iter().map(|&t| t as f64).collect();
            assert_eq!(dev.timestamps, expect, "{ui} #{id} device");
            let got = sensing::helper_salients_from_raw(&tr.helper_trace, &cfg).unwrap();
            assert_eq!(got.len(), s.helper_times.len(), "{ui} #{id}: {:?} vs {:?}", got.timestamps, s.helper_times);
            for (a, b) in got.timestamps.iter().zip(&s.helper_times) {
                assert!((a - b).abs() <= tol, "{ui} #{id}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn traces_round_trip_through_sensing() {
        for ui in UiType::ALL {
            round_trip(ui, &EvidencePolicy::with_pauses(ui), 150);
            round_trip(ui, &EvidencePolicy::without_pauses(), 50);
        }
    }
}
