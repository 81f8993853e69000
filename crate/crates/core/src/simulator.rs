//! Synthetic rides: vehicle kinematics, road grade and scripted bends,
//! rendered through imperfect accelerometers.
//!
//! Ground truth is composed per sample in the body frame. With body pitch
//! `p = grade + bend` (grade pitch `atan(grade_percent / 100)`, positive
//! grades pitch the rider forward) and bend angle `θ(t)` relative to the
//! seat:
//!
//! ```text
//! ax = a_lat
//! ay = -sin(p) + a_long·cos θ + (r / g)·θ''
//! az =  cos(p) + a_long·sin θ - (r / g)·θ'²
//! ```
//!
//! `r` is [`TORSO_LEVER_M`], the distance from the hip pivot to the sensor,
//! so the last terms are the tangential and centripetal acceleration of the
//! chest during the bend. Vehicle and bend profiles use raised-cosine ramps.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensor_model::{ModelError, Sample, SensorSpec, Trace, DEFAULT_RATE_HZ, STANDARD_GRAVITY};
use crate::signal::{sample_at_times, uniform_grid};

/// Hip-to-chest-sensor lever arm in metres.
pub const TORSO_LEVER_M: f64 = 0.4;

pub const MAX_GRADE_PERCENT: f64 = 25.0;
pub const MAX_VEHICLE_G: f64 = 0.3;

/// Longest raised-cosine ramp at the start and end of a vehicle phase.
pub const VEHICLE_RAMP_S: f64 = 1.5;

/// Seed of the fixture corpus used by the evaluation and acceptance runs.
pub const DEFAULT_CORPUS_SEED: u64 = 7;
pub const DEFAULT_CORPUS_SIZE: usize = 20;

pub const WEARABLE: &str = "hitoe";
pub const PHONE: &str = "phone";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("posture maneuvers {0} and {1} overlap")]
    OverlappingManeuvers(usize, usize),
    #[error("unknown sensor {0:?}")]
    UnknownSensor(String),
    #[error(transparent)]
    Sensor(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleKind {
    Idle,
    Accelerate,
    Brake,
    TurnLeft,
    TurnRight,
    Cruise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehiclePhase {
    pub start_s: f64,
    pub end_s: f64,
    pub kind: VehicleKind,
    #[serde(default)]
    pub magnitude_g: f64,
}

impl VehiclePhase {
    pub fn new(start_s: f64, end_s: f64, kind: VehicleKind, magnitude_g: f64) -> Self {
        Self { start_s, end_s, kind, magnitude_g }
    }

    /// (longitudinal, lateral) acceleration in G at time `t`. X points to
    /// the right, so a left turn reads negative.
    fn acceleration_at(&self, t: f64) -> (f64, f64) {
        let d = self.end_s - self.start_s;
        let ramp = (d / 3.0).min(VEHICLE_RAMP_S);
        let u = t - self.start_s;
        let envelope = if u < ramp {
            0.5 * (1.0 - (PI * u / ramp).cos())
        } else if u > d - ramp {
            0.5 * (1.0 - (PI * (d - u) / ramp).cos())
        } else {
            1.0
        };
        let m = self.magnitude_g * envelope;
        match self.kind {
            VehicleKind::Idle | VehicleKind::Cruise => (0.0, 0.0),
            VehicleKind::Accelerate => (m, 0.0),
            VehicleKind::Brake => (-m, 0.0),
            VehicleKind::TurnLeft => (0.0, -m),
            VehicleKind::TurnRight => (0.0, m),
        }
    }
}

/// One bend-hold-return motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostureManeuver {
    pub start_s: f64,
    pub bend_deg: f64,
    pub down_s: f64,
    pub hold_s: f64,
    pub up_s: f64,
}

impl PostureManeuver {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.down_s + self.hold_s + self.up_s
    }

    /// (θ, θ', θ'') in radians at time `t`; zero outside the maneuver.
    fn angle_at(&self, t: f64) -> (f64, f64, f64) {
        let b = self.bend_deg.to_radians();
        let u = t - self.start_s;
        let hold_end = self.down_s + self.hold_s;
        if u <= 0.0 || u >= hold_end + self.up_s {
            (0.0, 0.0, 0.0)
        } else if u < self.down_s {
            let w = PI / self.down_s;
            (
                0.5 * b * (1.0 - (w * u).cos()),
                0.5 * b * w * (w * u).sin(),
                0.5 * b * w * w * (w * u).cos(),
            )
        } else if u <= hold_end {
            (b, 0.0, 0.0)
        } else {
            let w = PI / self.up_s;
            let v = u - hold_end;
            (
                0.5 * b * (1.0 + (w * v).cos()),
                -0.5 * b * w * (w * v).sin(),
                -0.5 * b * w * w * (w * v).cos(),
            )
        }
    }
}

/// Declarative description of a simulated ride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    /// Must tile `[0, duration_s]`; empty means idle throughout.
    #[serde(default)]
    pub vehicle: Vec<VehiclePhase>,
    #[serde(default)]
    pub grade_percent: f64,
    #[serde(default)]
    pub postures: Vec<PostureManeuver>,
    #[serde(default)]
    pub sensors: BTreeMap<String, SensorSpec>,
    #[serde(default)]
    pub seed: u64,
}

fn default_rate() -> f64 {
    DEFAULT_RATE_HZ
}

/// Scripted bend interval, labelled with its depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub bend_deg: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl ScenarioSpec {
    /// Idle, flat, no bends: the ground truth is pure gravity.
    pub fn rest(duration_s: f64) -> Self {
        Self {
            duration_s,
            rate_hz: DEFAULT_RATE_HZ,
            vehicle: vec![VehiclePhase::new(0.0, duration_s, VehicleKind::Idle, 0.0)],
            grade_percent: 0.0,
            postures: vec![],
            sensors: default_sensors(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration_s must be > 0, got {}", self.duration_s));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return bad(format!("rate_hz must be > 0, got {}", self.rate_hz));
        }
        if !(self.grade_percent.abs() <= MAX_GRADE_PERCENT) {
            return bad(format!("|grade_percent| must be <= 25, got {}", self.grade_percent));
        }
        if !self.vehicle.is_empty() {
            let mut cursor = 0.0;
            for (i, p) in self.vehicle.iter().enumerate() {
                if (p.start_s - cursor).abs() > 1e-9 {
                    return bad(format!(
                        "vehicle phase {i} starts at {} but previous ends at {cursor} (phases must tile without gaps or overlap)",
                        p.start_s
                    ));
                }
                if !(p.end_s > p.start_s) {
                    return bad(format!("vehicle phase {i} has end_s <= start_s"));
                }
                if !(0.0..=MAX_VEHICLE_G).contains(&p.magnitude_g) {
                    return bad(format!("vehicle phase {i} magnitude_g must be in [0, 0.3]"));
                }
                cursor = p.end_s;
            }
            if (cursor - self.duration_s).abs() > 1e-9 {
                return bad(format!(
                    "vehicle phases end at {cursor}, expected duration_s {}",
                    self.duration_s
                ));
            }
        }
        for (i, m) in self.postures.iter().enumerate() {
            if !(m.bend_deg > 0.0 && m.bend_deg <= 90.0) {
                return bad(format!("maneuver {i} bend_deg must be in (0, 90]"));
            }
            if !(m.down_s > 0.0 && m.hold_s > 0.0 && m.up_s > 0.0) {
                return bad(format!("maneuver {i} durations must be > 0"));
            }
            if m.start_s < 0.0 || m.end_s() > self.duration_s + 1e-9 {
                return bad(format!("maneuver {i} does not fit in [0, duration_s]"));
            }
        }
        let mut order: Vec<usize> = (0..self.postures.len()).collect();
        order.sort_by(|&a, &b| self.postures[a].start_s.total_cmp(&self.postures[b].start_s));
        for w in order.windows(2) {
            if self.postures[w[1]].start_s < self.postures[w[0]].end_s() {
                return Err(ScenarioError::OverlappingManeuvers(w[0], w[1]));
            }
        }
        for (name, s) in &self.sensors {
            s.validate().map_err(|e| ScenarioError::Invalid(format!("sensor {name:?}: {e}")))?;
        }
        Ok(())
    }

    pub fn grade_pitch_rad(&self) -> f64 {
        (self.grade_percent / 100.0).atan()
    }

    /// The named sensor with its noise seed mixed with the scenario seed,
    /// so scenarios sharing sensor specs draw independent noise.
    pub fn sensor(&self, name: &str) -> Result<SensorSpec, ScenarioError> {
        let base = self
            .sensors
            .get(name)
            .ok_or_else(|| ScenarioError::UnknownSensor(name.to_string()))?;
        Ok(SensorSpec {
            seed: splitmix64(self.seed ^ splitmix64(base.seed)),
            ..base.clone()
        })
    }

    /// Flat ride with at least one scripted bend.
    pub fn is_flat_pickup_ride(&self) -> bool {
        self.grade_percent == 0.0 && !self.postures.is_empty()
    }

    /// Graded ride without bends.
    pub fn is_grade_ride(&self) -> bool {
        self.grade_percent != 0.0 && self.postures.is_empty()
    }
}

pub fn default_sensors() -> BTreeMap<String, SensorSpec> {
    BTreeMap::from([
        (WEARABLE.to_string(), SensorSpec::default_wearable()),
        (PHONE.to_string(), SensorSpec::default_phone()),
    ])
}

/// Ideal noise-free body-frame trace plus every scripted bend interval.
pub fn synth_ground_truth(spec: &ScenarioSpec) -> Result<(Trace, Vec<TruthInterval>), ScenarioError> {
    spec.validate()?;
    let grade = spec.grade_pitch_rad();
    let n = (spec.duration_s * spec.rate_hz + 1e-9).floor() as usize + 1;
    let lever_g = TORSO_LEVER_M / STANDARD_GRAVITY;
    let mut phase_idx = 0;
    let trace = Trace::from_fn("truth", spec.rate_hz, n, |t| {
        while phase_idx + 1 < spec.vehicle.len() && t >= spec.vehicle[phase_idx].end_s {
            phase_idx += 1;
        }
        let (a_long, a_lat) = spec
            .vehicle
            .get(phase_idx)
            .map_or((0.0, 0.0), |p| p.acceleration_at(t));
        let (theta, dtheta, ddtheta) = spec
            .postures
            .iter()
            .find(|m| t > m.start_s && t < m.end_s())
            .map_or((0.0, 0.0, 0.0), |m| m.angle_at(t));
        let (sp, cp) = (grade + theta).sin_cos();
        let (st, ct) = theta.sin_cos();
        [
            a_lat,
            -sp + a_long * ct + lever_g * ddtheta,
            cp + a_long * st - lever_g * dtheta * dtheta,
        ]
    });
    let mut truth: Vec<TruthInterval> = spec
        .postures
        .iter()
        .map(|m| TruthInterval {
            start_s: m.start_s,
            end_s: m.end_s(),
            bend_deg: m.bend_deg,
        })
        .collect();
    truth.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    Ok((trace, truth))
}

/// Passes a ground-truth trace through a sensor: timestamps delayed by the
/// latency, resampled at the sensor rate, then bias and seeded Gaussian
/// noise added per axis.
pub fn render_sensor(truth: &Trace, sensor: &SensorSpec) -> Result<Trace, ScenarioError> {
    sensor.validate()?;
    if truth.len() < 2 {
        return Err(ScenarioError::Invalid("ground truth needs at least 2 samples".into()));
    }
    let delayed = Trace::new(
        truth.source_id(),
        truth.nominal_rate_hz(),
        truth
            .samples()
            .iter()
            .map(|s| Sample::new(s.t + sensor.latency_s, s.ax, s.ay, s.az))
            .collect(),
    );
    let grid = uniform_grid(
        delayed.first_t().expect("non-empty"),
        delayed.last_t().expect("non-empty"),
        sensor.rate_hz,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(sensor.seed);
    let noise: Vec<Option<Normal<f64>>> = sensor
        .noise_sigma
        .iter()
        .map(|&s| (s > 0.0).then(|| Normal::new(0.0, s).expect("sigma validated")))
        .collect();
    let samples = sample_at_times(&delayed, &grid)
        .into_iter()
        .map(|s| {
            let mut v = s.axes();
            for k in 0..3 {
                v[k] += sensor.bias[k];
                if let Some(d) = &noise[k] {
                    v[k] += d.sample(&mut rng);
                }
            }
            Sample::from_axes(s.t, v)
        })
        .collect();
    Ok(Trace::new("sensor", sensor.rate_hz, samples))
}

/// Synthesizes the scenario and renders the named sensor.
pub fn render_named(spec: &ScenarioSpec, name: &str) -> Result<(Trace, Vec<TruthInterval>), ScenarioError> {
    let sensor = spec.sensor(name)?;
    let (truth, events) = synth_ground_truth(spec)?;
    Ok((render_sensor(&truth, &sensor)?.with_source_id(name), events))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    FlatPickup,
    Grade,
    VehicleOnly,
}

impl CorpusKind {
    fn for_index(i: usize) -> Self {
        match i % 3 {
            0 => CorpusKind::FlatPickup,
            1 => CorpusKind::Grade,
            _ => CorpusKind::VehicleOnly,
        }
    }
}

/// Builds a tiled phase list from (kind, duration, magnitude) triples and
/// pads with idle up to `duration_s`.
fn tile_phases(steps: &[(VehicleKind, f64, f64)], duration_s: f64) -> Vec<VehiclePhase> {
    let mut out = Vec::new();
    let mut t = 0.0;
    for &(kind, d, m) in steps {
        if t + d >= duration_s {
            break;
        }
        let end = round_to(t + d, 0.01);
        out.push(VehiclePhase::new(t, end, kind, m));
        t = end;
    }
    out.push(VehiclePhase::new(t, duration_s, VehicleKind::Idle, 0.0));
    out
}

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

/// Random bus route: pull away, some cruising, turns and brakes, repeat.
fn random_route(rng: &mut ChaCha8Rng, duration_s: f64, max_long_g: f64, with_turns: bool) -> Vec<VehiclePhase> {
    let mut steps = vec![(VehicleKind::Idle, round_to(rng.random_range(1.0..3.0), 0.04), 0.0)];
    let mut total = steps[0].1;
    while total < duration_s {
        let mut push = |steps: &mut Vec<_>, kind, d: f64, m: f64| {
            let d = round_to(d, 0.04);
            steps.push((kind, d, round_to(m, 0.001)));
            total += d;
        };
        push(&mut steps, VehicleKind::Accelerate, rng.random_range(2.0..5.0), rng.random_range(0.04..max_long_g));
        push(&mut steps, VehicleKind::Cruise, rng.random_range(2.0..6.0), 0.0);
        if with_turns {
            let kind = if rng.random_bool(0.5) { VehicleKind::TurnLeft } else { VehicleKind::TurnRight };
            push(&mut steps, kind, rng.random_range(3.0..6.0), rng.random_range(0.04..0.10));
            push(&mut steps, VehicleKind::Cruise, rng.random_range(1.0..4.0), 0.0);
        }
        push(&mut steps, VehicleKind::Brake, rng.random_range(2.0..4.0), rng.random_range(0.04..max_long_g));
        push(&mut steps, VehicleKind::Idle, rng.random_range(1.0..3.0), 0.0);
    }
    tile_phases(&steps, duration_s)
}

/// Deterministic evaluation corpus cycling through three ride types:
///
/// * flat ride with 1–3 bends of 30–60° (down/up 0.6–1.2 s, hold 1–3 s,
///   at least 5 s apart), route accelerations up to 0.12 G;
/// * 20% grade ride with no bends, longitudinal accelerations up to 0.06 G;
/// * flat ride with turns and braking up to 0.15 G, no bends.
///
/// Every scenario is 40–60 s at 25 Hz and carries the default wearable and
/// phone sensors.
pub fn scenario_corpus(seed: u64, n: usize) -> Vec<ScenarioSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let kind = CorpusKind::for_index(i);
            let duration_s = round_to(rng.random_range(40.0..60.0), 1.0);
            let scenario_seed = rng.random::<u64>();
            let (vehicle, grade_percent, postures) = match kind {
                CorpusKind::FlatPickup => {
                    let vehicle = random_route(&mut rng, duration_s, 0.12, true);
                    let count = rng.random_range(1..=3);
                    let mut postures = Vec::new();
                    let mut t = rng.random_range(3.0..8.0);
                    for _ in 0..count {
                        let m = PostureManeuver {
                            start_s: round_to(t, 0.01),
                            bend_deg: round_to(rng.random_range(30.0..60.0), 0.1),
                            down_s: round_to(rng.random_range(0.6..1.2), 0.01),
                            hold_s: round_to(rng.random_range(1.0..3.0), 0.01),
                            up_s: round_to(rng.random_range(0.6..1.2), 0.01),
                        };
                        if m.end_s() > duration_s - 3.0 {
                            break;
                        }
                        t = m.end_s() + rng.random_range(5.0..12.0);
                        postures.push(m);
                    }
                    (vehicle, 0.0, postures)
                }
                CorpusKind::Grade => (random_route(&mut rng, duration_s, 0.06, false), 20.0, vec![]),
                CorpusKind::VehicleOnly => (random_route(&mut rng, duration_s, 0.15, true), 0.0, vec![]),
            };
            ScenarioSpec {
                duration_s,
                rate_hz: DEFAULT_RATE_HZ,
                vehicle,
                grade_percent,
                postures,
                sensors: default_sensors(),
                seed: scenario_seed,
            }
        })
        .collect()
}
