//! Accelerometer samples, traces and sensor descriptions.
//!
//! Body frame: X points to the wearer's right, Y forward out of the chest,
//! Z toward the head. Readings are specific force in G, so an upright
//! wearer at rest reads `(0, 0, +1)`. Forward bend drives `ay` negative.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard gravity in m/s², i.e. 1 G.
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Hard sanity bound on any accelerometer component, in G.
pub const MAX_ABS_G: f64 = 16.0;

/// Sampling rate used when none is given.
pub const DEFAULT_RATE_HZ: f64 = 25.0;

/// Maximum deviation of a sample interval from the mean interval for a
/// trace to count as uniformly sampled. Covers 6-decimal CSV rounding.
pub const UNIFORM_TOLERANCE_S: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("tilt angle {0} deg outside [-90, 90]")]
    AngleOutOfRange(f64),
    #[error("invalid sensor spec: {0}")]
    InvalidSensor(String),
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// One timestamped specific-force reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl Sample {
    pub fn new(t: f64, ax: f64, ay: f64, az: f64) -> Self {
        Self { t, ax, ay, az }
    }

    pub fn from_axes(t: f64, axes: [f64; 3]) -> Self {
        Self::new(t, axes[0], axes[1], axes[2])
    }

    pub fn axes(&self) -> [f64; 3] {
        [self.ax, self.ay, self.az]
    }

    pub fn get(&self, axis: Axis) -> f64 {
        self.axes()[axis.index()]
    }

    pub fn norm(&self) -> f64 {
        (self.ax * self.ax + self.ay * self.ay + self.az * self.az).sqrt()
    }
}

/// An ordered accelerometer recording from one source.
///
/// Construction does not validate; use [`validate_trace`] to get a list of
/// violations. Processing operations check the preconditions they need.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    samples: Vec<Sample>,
    nominal_rate_hz: f64,
    source_id: String,
}

impl Trace {
    pub fn new(source_id: impl Into<String>, nominal_rate_hz: f64, samples: Vec<Sample>) -> Self {
        Self {
            samples,
            nominal_rate_hz,
            source_id: source_id.into(),
        }
    }

    /// Uniform trace `t_k = k / rate` for `k in 0..n`, values from `f(t)`.
    pub fn from_fn(
        source_id: impl Into<String>,
        rate_hz: f64,
        n: usize,
        mut f: impl FnMut(f64) -> [f64; 3],
    ) -> Self {
        let samples = (0..n)
            .map(|k| {
                let t = k as f64 / rate_hz;
                Sample::from_axes(t, f(t))
            })
            .collect();
        Self::new(source_id, rate_hz, samples)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn nominal_rate_hz(&self) -> f64 {
        self.nominal_rate_hz
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_t(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    pub fn last_t(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }

    /// Time between first and last sample; zero for fewer than two.
    pub fn span_s(&self) -> f64 {
        match (self.first_t(), self.last_t()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn axis(&self, axis: Axis) -> Vec<f64> {
        self.samples.iter().map(|s| s.get(axis)).collect()
    }

    /// Mean sample interval, if there are at least two samples.
    pub fn mean_dt(&self) -> Option<f64> {
        (self.len() >= 2).then(|| self.span_s() / (self.len() - 1) as f64)
    }

    /// True when every interval is within [`UNIFORM_TOLERANCE_S`] of the mean.
    pub fn is_uniform(&self) -> bool {
        let Some(dt) = self.mean_dt() else {
            return false;
        };
        dt > 0.0
            && self
                .samples
                .windows(2)
                .all(|w| ((w[1].t - w[0].t) - dt).abs() <= UNIFORM_TOLERANCE_S)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    EmptyTrace,
    NonPositiveRate,
    NegativeTimestamp,
    NonIncreasingTimestamp,
    NonFiniteComponent,
    ComponentOutOfRange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub index: Option<usize>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::EmptyTrace => "empty trace",
            ViolationKind::NonPositiveRate => "non-positive nominal rate",
            ViolationKind::NegativeTimestamp => "negative timestamp",
            ViolationKind::NonIncreasingTimestamp => "non-increasing timestamp",
            ViolationKind::NonFiniteComponent => "non-finite component",
            ViolationKind::ComponentOutOfRange => "component out of range",
        };
        match self.index {
            Some(i) => write!(f, "{what} at index {i}"),
            None => f.write_str(what),
        }
    }
}

/// Reports every breach of the trace invariants; empty means well formed.
pub fn validate_trace(trace: &Trace) -> Vec<Violation> {
    let mut out = Vec::new();
    let rate = trace.nominal_rate_hz();
    if !(rate.is_finite() && rate > 0.0) {
        out.push(Violation {
            kind: ViolationKind::NonPositiveRate,
            index: None,
        });
    }
    if trace.is_empty() {
        out.push(Violation {
            kind: ViolationKind::EmptyTrace,
            index: None,
        });
        return out;
    }
    let mut push = |kind, i| out.push(Violation { kind, index: Some(i) });
    for (i, s) in trace.samples().iter().enumerate() {
        if !s.t.is_finite() {
            push(ViolationKind::NonFiniteComponent, i);
        } else if s.t < 0.0 {
            push(ViolationKind::NegativeTimestamp, i);
        }
        if i > 0 && !(s.t > trace.samples()[i - 1].t) && s.t.is_finite() {
            push(ViolationKind::NonIncreasingTimestamp, i);
        }
        let axes = s.axes();
        if axes.iter().any(|v| !v.is_finite()) {
            push(ViolationKind::NonFiniteComponent, i);
        } else if axes.iter().any(|v| v.abs() > MAX_ABS_G) {
            push(ViolationKind::ComponentOutOfRange, i);
        }
    }
    out
}

/// Static specific force of a wearer pitched forward by `tilt_forward_deg`:
/// `(0, -sin θ, cos θ)`.
pub fn rest_reading(tilt_forward_deg: f64) -> Result<[f64; 3], ModelError> {
    if !(-90.0..=90.0).contains(&tilt_forward_deg) {
        return Err(ModelError::AngleOutOfRange(tilt_forward_deg));
    }
    let (s, c) = tilt_forward_deg.to_radians().sin_cos();
    Ok([0.0, -s, c])
}

/// Error model of one physical accelerometer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    #[serde(default)]
    pub bias: [f64; 3],
    #[serde(default)]
    pub noise_sigma: [f64; 3],
    #[serde(default)]
    pub latency_s: f64,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_rate() -> f64 {
    DEFAULT_RATE_HZ
}

impl SensorSpec {
    /// Perfect sensor: no bias, noise or latency.
    pub fn ideal(rate_hz: f64) -> Self {
        Self {
            bias: [0.0; 3],
            noise_sigma: [0.0; 3],
            latency_s: 0.0,
            rate_hz,
            seed: 0,
        }
    }

    /// The wearable shirt sensor used in the default scenarios.
    pub fn default_wearable() -> Self {
        Self {
            noise_sigma: [0.01; 3],
            seed: 1,
            ..Self::ideal(DEFAULT_RATE_HZ)
        }
    }

    /// The vehicle-held phone used in the default scenarios: noisier, a
    /// 40 ms reporting delay and a 0.02 G forward bias.
    pub fn default_phone() -> Self {
        Self {
            bias: [0.0, 0.02, 0.0],
            noise_sigma: [0.02; 3],
            latency_s: 0.04,
            rate_hz: DEFAULT_RATE_HZ,
            seed: 2,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidSensor(m.to_string()));
        if self.noise_sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("noise_sigma must be finite and >= 0");
        }
        if self.bias.iter().any(|b| !b.is_finite()) {
            return bad("bias must be finite");
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return bad("rate_hz must be > 0");
        }
        if !(self.latency_s.is_finite() && self.latency_s >= 0.0) {
            return bad("latency_s must be >= 0");
        }
        Ok(())
    }
}

fn fmt_num(v: f64) -> f64 {
    // -0.0 prints as "-0.000000"
    v + 0.0
}

/// Writes the `t,ax,ay,az` CSV form with six decimals and LF endings.
pub fn write_trace_csv<W: Write>(trace: &Trace, mut out: W) -> std::io::Result<()> {
    out.write_all(b"t,ax,ay,az\n")?;
    for s in trace.samples() {
        writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.6}",
            fmt_num(s.t),
            fmt_num(s.ax),
            fmt_num(s.ay),
            fmt_num(s.az)
        )?;
    }
    Ok(())
}

pub fn trace_to_csv_string(trace: &Trace) -> String {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("csv output is ascii")
}

/// Parses the `t,ax,ay,az` CSV form. The nominal rate is inferred from
/// the mean sample interval ([`DEFAULT_RATE_HZ`] for a single sample).
/// Errors carry 1-based line numbers.
pub fn read_trace_csv<R: Read>(input: R, source_id: &str) -> Result<Trace, ModelError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers().map_err(|e| csv_error(&e, 1))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != ["t", "ax", "ay", "az"] {
        return Err(ModelError::Csv {
            line: 1,
            message: format!("expected header t,ax,ay,az, got {}", names.join(",")),
        });
    }
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let fallback_line = i as u64 + 2;
        let record = record.map_err(|e| csv_error(&e, fallback_line))?;
        let line = record.position().map_or(fallback_line, |p| p.line());
        if record.len() != 4 {
            return Err(ModelError::Csv {
                line,
                message: format!("expected 4 fields, got {}", record.len()),
            });
        }
        let mut vals = [0.0; 4];
        for (slot, field) in vals.iter_mut().zip(record.iter()) {
            *slot = field.parse::<f64>().map_err(|_| ModelError::Csv {
                line,
                message: format!("invalid number {field:?}"),
            })?;
        }
        samples.push(Sample::new(vals[0], vals[1], vals[2], vals[3]));
    }
    let mut trace = Trace::new(source_id, DEFAULT_RATE_HZ, samples);
    if let Some(dt) = trace.mean_dt() {
        if dt > 0.0 {
            trace.nominal_rate_hz = 1.0 / dt;
        }
    }
    Ok(trace)
}

fn csv_error(e: &csv::Error, fallback_line: u64) -> ModelError {
    let line = e.position().map_or(fallback_line, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(io) => ModelError::Io(io.to_string()),
        _ => ModelError::Csv {
            line,
            message: e.to_string(),
        },
    }
}
