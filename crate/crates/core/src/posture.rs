//! Forward-bend detection from the gravity component of the Y axis.
//!
//! The Y axis is low-passed to isolate gravity, converted to a forward tilt
//! with `asin(-ay)`, and fed through a hysteresis state machine with a
//! minimum event length and a refractory window.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensor_model::{Sample, Trace};
use crate::signal::{self, ExpSmoother, FilterSpec, SignalError};

pub const DEFAULT_ENTER_TILT_DEG: f64 = 20.0;
pub const DEFAULT_EXIT_TILT_DEG: f64 = 15.0;
pub const DEFAULT_MIN_DURATION_S: f64 = 0.3;
pub const DEFAULT_REFRACTORY_S: f64 = 0.5;
pub const DEFAULT_GRAVITY_CUTOFF_HZ: f64 = 0.3;

pub const FORWARD_BEND: &str = "forward_bend";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PostureError {
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub enter_tilt_deg: f64,
    /// May equal `enter_tilt_deg` for a plain single-threshold detector.
    pub exit_tilt_deg: f64,
    pub min_duration_s: f64,
    pub refractory_s: f64,
    pub gravity_cutoff_hz: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            enter_tilt_deg: DEFAULT_ENTER_TILT_DEG,
            exit_tilt_deg: DEFAULT_EXIT_TILT_DEG,
            min_duration_s: DEFAULT_MIN_DURATION_S,
            refractory_s: DEFAULT_REFRACTORY_S,
            gravity_cutoff_hz: DEFAULT_GRAVITY_CUTOFF_HZ,
        }
    }
}

impl DetectorConfig {
    /// Single threshold, no hysteresis, no duration or refractory windows.
    pub fn single_threshold(tilt_deg: f64) -> Self {
        Self {
            enter_tilt_deg: tilt_deg,
            exit_tilt_deg: tilt_deg,
            min_duration_s: 0.0,
            refractory_s: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PostureError> {
        let bad = |m: String| Err(PostureError::InvalidConfig(m));
        if !(self.exit_tilt_deg > 0.0
            && self.exit_tilt_deg <= self.enter_tilt_deg
            && self.enter_tilt_deg <= 90.0)
        {
            return bad(format!(
                "need 0 < exit_tilt_deg ({}) <= enter_tilt_deg ({}) <= 90",
                self.exit_tilt_deg, self.enter_tilt_deg
            ));
        }
        if !(self.min_duration_s >= 0.0 && self.min_duration_s.is_finite()) {
            return bad(format!("min_duration_s must be >= 0, got {}", self.min_duration_s));
        }
        if !(self.refractory_s >= 0.0 && self.refractory_s.is_finite()) {
            return bad(format!("refractory_s must be >= 0, got {}", self.refractory_s));
        }
        if !(self.gravity_cutoff_hz > 0.0 && self.gravity_cutoff_hz.is_finite()) {
            return bad(format!("gravity_cutoff_hz must be > 0, got {}", self.gravity_cutoff_hz));
        }
        Ok(())
    }

    fn gravity_filter(&self) -> FilterSpec {
        FilterSpec::new(self.gravity_cutoff_hz, 1)
    }
}

/// A detected forward bend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostureEvent {
    pub start_s: f64,
    pub end_s: f64,
    pub peak_tilt_deg: f64,
    pub kind: String,
}

impl PostureEvent {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltPoint {
    pub t: f64,
    pub tilt_deg: f64,
}

/// Forward tilt in degrees for a smoothed Y reading, saturating at ±90°.
pub fn tilt_from_ay(ay: f64) -> f64 {
    (-ay).clamp(-1.0, 1.0).asin().to_degrees()
}

/// Raw-acceleration form of the entry threshold: `-sin(enter_tilt_deg)` G.
pub fn threshold_crossing_equivalent(config: &DetectorConfig) -> f64 {
    -config.enter_tilt_deg.to_radians().sin()
}

/// Smoothed forward tilt at every sample of `trace`.
pub fn tilt_series(trace: &Trace, gravity_cutoff_hz: f64) -> Result<Vec<TiltPoint>, PostureError> {
    let smoothed = signal::lowpass(trace, &FilterSpec::new(gravity_cutoff_hz, 1))?;
    Ok(smoothed
        .samples()
        .iter()
        .map(|s| TiltPoint {
            t: s.t,
            tilt_deg: tilt_from_ay(s.ay),
        })
        .collect())
}

#[derive(Debug, Clone, Copy)]
enum State {
    Idle,
    Candidate { start_s: f64, peak_deg: f64 },
}

/// Hysteresis state machine over a tilt stream.
///
/// Enters a candidate at `tilt >= enter`, closes it at `tilt <= exit`.
/// Closed candidates shorter than `min_duration_s` are dropped; after an
/// emitted event, entries are suppressed until `refractory_s` has passed
/// since its end. A candidate still open when the stream stops is never
/// reported.
#[derive(Debug, Clone)]
pub struct HysteresisDetector {
    config: DetectorConfig,
    state: State,
    last_end_s: Option<f64>,
}

impl HysteresisDetector {
    pub fn new(config: DetectorConfig) -> Result<Self, PostureError> {
        config.validate()?;
        Ok(Self {
            config,
            state: State::Idle,
            last_end_s: None,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn in_candidate(&self) -> bool {
        matches!(self.state, State::Candidate { .. })
    }

    pub fn push(&mut self, point: TiltPoint) -> Option<PostureEvent> {
        let TiltPoint { t, tilt_deg } = point;
        match self.state {
            State::Idle => {
                let refractory = self
                    .last_end_s
                    .is_some_and(|end| t - end < self.config.refractory_s);
                if !refractory && tilt_deg >= self.config.enter_tilt_deg {
                    self.state = State::Candidate {
                        start_s: t,
                        peak_deg: tilt_deg,
                    };
                }
                None
            }
            State::Candidate { start_s, peak_deg } => {
                if tilt_deg <= self.config.exit_tilt_deg {
                    self.state = State::Idle;
                    if t - start_s >= self.config.min_duration_s && t > start_s {
                        self.last_end_s = Some(t);
                        return Some(PostureEvent {
                            start_s,
                            end_s: t,
                            peak_tilt_deg: peak_deg,
                            kind: FORWARD_BEND.to_string(),
                        });
                    }
                } else {
                    self.state = State::Candidate {
                        start_s,
                        peak_deg: peak_deg.max(tilt_deg),
                    };
                }
                None
            }
        }
    }
}

/// Runs the state machine over an already computed tilt series.
pub fn detect_tilt_series(
    points: &[TiltPoint],
    config: &DetectorConfig,
) -> Result<Vec<PostureEvent>, PostureError> {
    let mut machine = HysteresisDetector::new(*config)?;
    Ok(points.iter().filter_map(|p| machine.push(*p)).collect())
}

/// Detects forward bends in a uniformly sampled trace.
pub fn detect(trace: &Trace, config: &DetectorConfig) -> Result<Vec<PostureEvent>, PostureError> {
    config.validate()?;
    if trace.len() < 2 || trace.span_s() <= config.min_duration_s {
        return Err(PostureError::InsufficientData(format!(
            "trace span {:.3} s must exceed min_duration_s {:.3} s",
            trace.span_s(),
            config.min_duration_s
        )));
    }
    let points = tilt_series(trace, config.gravity_cutoff_hz)?;
    detect_tilt_series(&points, config)
}

/// Same detector keyed on the smoothed raw Y reading: enters at
/// `ay <= -sin(enter)` and exits at `ay >= -sin(exit)`. Event peaks are
/// still reported in degrees.
pub fn detect_raw_threshold(
    trace: &Trace,
    config: &DetectorConfig,
) -> Result<Vec<PostureEvent>, PostureError> {
    config.validate()?;
    if trace.len() < 2 || trace.span_s() <= config.min_duration_s {
        return Err(PostureError::InsufficientData("trace too short".into()));
    }
    let enter_g = threshold_crossing_equivalent(config);
    let exit_g = -config.exit_tilt_deg.to_radians().sin();
    let smoothed = signal::lowpass(trace, &config.gravity_filter())?;
    let mut events = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    let mut last_end: Option<f64> = None;
    for s in smoothed.samples() {
        match open {
            None => {
                let refractory = last_end.is_some_and(|e| s.t - e < config.refractory_s);
                if !refractory && s.ay <= enter_g {
                    open = Some((s.t, s.ay));
                }
            }
            Some((start, min_ay)) => {
                if s.ay >= exit_g {
                    open = None;
                    if s.t - start >= config.min_duration_s && s.t > start {
                        last_end = Some(s.t);
                        events.push(PostureEvent {
                            start_s: start,
                            end_s: s.t,
                            peak_tilt_deg: tilt_from_ay(min_ay),
                            kind: FORWARD_BEND.to_string(),
                        });
                    }
                } else {
                    open = Some((start, min_ay.min(s.ay)));
                }
            }
        }
    }
    Ok(events)
}

/// Incremental detector: feed one sample at a time.
///
/// Uses the nominal sample interval `1 / rate_hz` for the gravity filter.
/// One instance serves one stream; instances are `Send`.
#[derive(Debug, Clone)]
pub struct StreamingDetector {
    smoother: ExpSmoother,
    machine: HysteresisDetector,
}

impl StreamingDetector {
    pub fn new(config: DetectorConfig, rate_hz: f64) -> Result<Self, PostureError> {
        config.validate()?;
        config.gravity_filter().validate_for_rate(rate_hz)?;
        let alpha = config.gravity_filter().alpha(1.0 / rate_hz);
        Ok(Self {
            smoother: ExpSmoother::new(alpha),
            machine: HysteresisDetector::new(config)?,
        })
    }

    pub fn push(&mut self, sample: &Sample) -> Option<PostureEvent> {
        let smoothed = self.smoother.push(sample.axes());
        self.machine.push(TiltPoint {
            t: sample.t,
            tilt_deg: tilt_from_ay(smoothed[1]),
        })
    }
}

/// Writes events as JSON Lines with keys `start_s,end_s,peak_tilt_deg,kind`.
pub fn write_events_jsonl<W: Write>(events: &[PostureEvent], mut out: W) -> std::io::Result<()> {
    for e in events {
        writeln!(
            out,
            "{{\"start_s\":{:.6},\"end_s\":{:.6},\"peak_tilt_deg\":{:.6},\"kind\":{}}}",
            e.start_s + 0.0,
            e.end_s + 0.0,
            e.peak_tilt_deg + 0.0,
            serde_json::to_string(&e.kind).expect("string serializes")
        )?;
    }
    Ok(())
}

pub fn read_events_jsonl(text: &str) -> Result<Vec<PostureEvent>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}
