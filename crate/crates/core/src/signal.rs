//! Resampling, alignment, low-pass filtering and subtraction of traces.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensor_model::{Axis, Sample, Trace};

/// Cutoff used to smooth subtraction residuals.
pub const DEFAULT_RESIDUAL_CUTOFF_HZ: f64 = 1.0;

/// Default half-width of the cross-correlation lag search.
pub const DEFAULT_MAX_LAG_S: f64 = 0.5;

/// Timestamps closer than this are treated as the same instant.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("trace is not uniformly sampled")]
    NonUniform,
    #[error("cutoff {cutoff_hz} Hz must lie in (0, {nyquist_hz}) Hz")]
    CutoffOutOfRange { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("invalid filter order {0}, expected 1 or 2")]
    InvalidOrder(u8),
    #[error("invalid rate {0} Hz")]
    InvalidRate(f64),
    #[error("sampling rates differ: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),
    #[error("no overlap between traces")]
    EmptyOverlap,
    #[error("overlap {overlap_s:.3} s shorter than twice the lag window {max_lag_s:.3} s")]
    ShortOverlap { overlap_s: f64, max_lag_s: f64 },
    #[error("timestamp grids differ at index {index}: {a_t:?} vs {b_t:?}")]
    GridMismatch {
        index: usize,
        a_t: Option<f64>,
        b_t: Option<f64>,
    },
}

/// Low-pass parameters: cascaded first-order exponential sections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub cutoff_hz: f64,
    #[serde(default = "default_order")]
    pub order: u8,
}

fn default_order() -> u8 {
    1
}

impl FilterSpec {
    pub fn new(cutoff_hz: f64, order: u8) -> Self {
        Self { cutoff_hz, order }
    }

    /// Checks order and `0 < cutoff < rate / 2`.
    pub fn validate_for_rate(&self, rate_hz: f64) -> Result<(), SignalError> {
        if !(1..=2).contains(&self.order) {
            return Err(SignalError::InvalidOrder(self.order));
        }
        let nyquist_hz = rate_hz / 2.0;
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist_hz) {
            return Err(SignalError::CutoffOutOfRange {
                cutoff_hz: self.cutoff_hz,
                nyquist_hz,
            });
        }
        Ok(())
    }

    /// Time constant `RC = 1 / (2π fc)`.
    pub fn rc(&self) -> f64 {
        1.0 / (2.0 * PI * self.cutoff_hz)
    }

    /// Smoothing factor `α = dt / (RC + dt)`.
    pub fn alpha(&self, dt: f64) -> f64 {
        dt / (self.rc() + dt)
    }
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self::new(DEFAULT_RESIDUAL_CUTOFF_HZ, 1)
    }
}

/// Streaming first-order exponential smoother over three axes.
///
/// The first sample passes through unchanged and seeds the state.
#[derive(Debug, Clone)]
pub struct ExpSmoother {
    alpha: f64,
    state: Option<[f64; 3]>,
}

impl ExpSmoother {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, state: None }
    }

    pub fn push(&mut self, x: [f64; 3]) -> [f64; 3] {
        let y = match self.state {
            None => x,
            Some(prev) => {
                let mut y = prev;
                for (yi, xi) in y.iter_mut().zip(x) {
                    *yi += self.alpha * (xi - *yi);
                }
                y
            }
        };
        self.state = Some(y);
        y
    }

    pub fn reset(&mut self) {
        self.state = None;
    }
}

/// Applies the low-pass per axis. Timestamps and source are unchanged.
pub fn lowpass(trace: &Trace, spec: &FilterSpec) -> Result<Trace, SignalError> {
    if trace.len() < 2 {
        return Err(SignalError::InsufficientData(
            "low-pass needs at least 2 samples".into(),
        ));
    }
    if !trace.is_uniform() {
        return Err(SignalError::NonUniform);
    }
    let dt = trace.mean_dt().expect("len >= 2");
    spec.validate_for_rate(1.0 / dt)?;
    let alpha = spec.alpha(dt);
    let mut samples = trace.samples().to_vec();
    for _ in 0..spec.order {
        let mut smoother = ExpSmoother::new(alpha);
        for s in samples.iter_mut() {
            *s = Sample::from_axes(s.t, smoother.push(s.axes()));
        }
    }
    Ok(Trace::new(trace.source_id(), trace.nominal_rate_hz(), samples))
}

/// Linear interpolation of `samples` at time `t`, which must lie within
/// their span (up to [`TIME_EPS`]). `hint` is a bracket search start that
/// is advanced monotonically, so sorted queries run in linear time.
fn interpolate_at(samples: &[Sample], t: f64, hint: &mut usize) -> [f64; 3] {
    let last = samples.len() - 1;
    while *hint < last && samples[*hint + 1].t <= t {
        *hint += 1;
    }
    let j = *hint;
    let a = &samples[j];
    if j == last || t <= a.t {
        return a.axes();
    }
    let b = &samples[j + 1];
    let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
    let (va, vb) = (a.axes(), b.axes());
    let mut out = [0.0; 3];
    for k in 0..3 {
        let (lo, hi) = if va[k] <= vb[k] { (va[k], vb[k]) } else { (vb[k], va[k]) };
        out[k] = (va[k] + w * (vb[k] - va[k])).clamp(lo, hi);
    }
    out
}

/// Evaluates `trace` by linear interpolation at every query time, which
/// must be sorted and inside the trace span.
pub(crate) fn sample_at_times(trace: &Trace, times: &[f64]) -> Vec<Sample> {
    let mut hint = 0;
    times
        .iter()
        .map(|&t| Sample::from_axes(t, interpolate_at(trace.samples(), t, &mut hint)))
        .collect()
}

/// Uniform grid `t0 + k / rate_hz` covering `[t0, t1]`, with the final
/// point snapped onto `t1` when it lands within [`TIME_EPS`] of it.
pub(crate) fn uniform_grid(t0: f64, t1: f64, rate_hz: f64) -> Vec<f64> {
    let steps = ((t1 - t0) * rate_hz + TIME_EPS).floor().max(0.0) as usize;
    (0..=steps)
        .map(|k| {
            let t = t0 + k as f64 / rate_hz;
            if (t - t1).abs() <= TIME_EPS || t > t1 {
                t1
            } else {
                t
            }
        })
        .collect()
}

/// Resamples onto a uniform grid from the first to the last input
/// timestamp at `rate_hz` by linear interpolation.
pub fn resample_linear(trace: &Trace, rate_hz: f64) -> Result<Trace, SignalError> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(SignalError::InvalidRate(rate_hz));
    }
    if trace.len() < 2 {
        return Err(SignalError::InsufficientData(
            "resampling needs at least 2 samples".into(),
        ));
    }
    let grid = uniform_grid(
        trace.first_t().expect("non-empty"),
        trace.last_t().expect("non-empty"),
        rate_hz,
    );
    Ok(Trace::new(
        trace.source_id(),
        rate_hz,
        sample_at_times(trace, &grid),
    ))
}

/// Result of aligning `other` against `reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Reference cropped to the overlap.
    pub reference: Trace,
    /// `other` shifted by `-lag_s` and evaluated on the reference grid.
    pub other: Trace,
    /// Positive when `other` lags behind `reference`.
    pub lag_s: f64,
    pub lag_samples: i64,
    /// Set when the Y-axis correlation was undefined (zero variance).
    pub degenerate_correlation: bool,
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // below ~1e-10 G of spread the signal counts as constant
    let floor = n * 1e-20;
    (saa > floor && sbb > floor).then(|| sab / (saa * sbb).sqrt())
}

/// Reference indices whose shifted time `t + lag_s` falls inside `other`.
fn overlap_range(reference: &Trace, other: &Trace, lag_s: f64) -> Option<(usize, usize)> {
    let (o0, o1) = (other.first_t()?, other.last_t()?);
    let rs = reference.samples();
    let lo = rs.iter().position(|s| s.t + lag_s >= o0 - TIME_EPS)?;
    let hi = rs.iter().rposition(|s| s.t + lag_s <= o1 + TIME_EPS)?;
    (lo <= hi).then_some((lo, hi))
}

fn shifted_values(reference: &Trace, other: &Trace, lag_s: f64, lo: usize, hi: usize) -> Vec<Sample> {
    let (o0, o1) = (other.first_t().unwrap(), other.last_t().unwrap());
    let query: Vec<f64> = reference.samples()[lo..=hi]
        .iter()
        .map(|s| (s.t + lag_s).clamp(o0, o1))
        .collect();
    sample_at_times(other, &query)
        .into_iter()
        .zip(&reference.samples()[lo..=hi])
        .map(|(v, r)| Sample::new(r.t, v.ax, v.ay, v.az))
        .collect()
}

/// Finds the lag in `[-max_lag_s, max_lag_s]` (whole samples) maximizing
/// the normalized Y-axis cross-correlation, then returns both traces on
/// the reference grid cropped to their overlap. `max_lag_s = 0` only crops.
pub fn align(reference: &Trace, other: &Trace, max_lag_s: f64) -> Result<Alignment, SignalError> {
    if reference.len() < 2 || other.len() < 2 {
        return Err(SignalError::InsufficientData(
            "alignment needs at least 2 samples per trace".into(),
        ));
    }
    let rate = reference.nominal_rate_hz();
    let other_rate = other.nominal_rate_hz();
    if ((rate - other_rate) / rate).abs() > 1e-6 {
        return Err(SignalError::RateMismatch(rate, other_rate));
    }
    let max_lag_s = max_lag_s.max(0.0);
    let overlap_s = reference.last_t().unwrap().min(other.last_t().unwrap())
        - reference.first_t().unwrap().max(other.first_t().unwrap());
    if overlap_s < 0.0 {
        return Err(SignalError::EmptyOverlap);
    }
    if max_lag_s > 0.0 && overlap_s < 2.0 * max_lag_s {
        return Err(SignalError::ShortOverlap { overlap_s, max_lag_s });
    }
    let max_k = (max_lag_s * rate + TIME_EPS).floor() as i64;

    // (score, |k|, k): keep highest score, ties broken toward zero lag.
    let mut best: Option<(f64, i64)> = None;
    let mut any_defined = false;
    for k in -max_k..=max_k {
        let lag_s = k as f64 / rate;
        let Some((lo, hi)) = overlap_range(reference, other, lag_s) else {
            continue;
        };
        let shifted = shifted_values(reference, other, lag_s, lo, hi);
        let ra: Vec<f64> = reference.samples()[lo..=hi].iter().map(|s| s.ay).collect();
        let rb: Vec<f64> = shifted.iter().map(|s| s.ay).collect();
        let score = match pearson(&ra, &rb) {
            Some(r) => {
                any_defined = true;
                r
            }
            None => f64::NEG_INFINITY,
        };
        let better = match best {
            None => true,
            Some((bs, bk)) => score > bs || (score == bs && k.abs() < bk.abs()),
        };
        if better {
            best = Some((score, k));
        }
    }
    let lag_samples = if any_defined { best.map_or(0, |(_, k)| k) } else { 0 };
    let lag_s = lag_samples as f64 / rate;
    let (lo, hi) = overlap_range(reference, other, lag_s).ok_or(SignalError::EmptyOverlap)?;
    let shifted = shifted_values(reference, other, lag_s, lo, hi);
    Ok(Alignment {
        reference: Trace::new(
            reference.source_id(),
            rate,
            reference.samples()[lo..=hi].to_vec(),
        ),
        other: Trace::new(other.source_id(), rate, shifted),
        lag_s,
        lag_samples,
        degenerate_correlation: !any_defined,
    })
}

/// Per-sample `a - b` on identical timestamp grids.
pub fn subtract(a: &Trace, b: &Trace) -> Result<Trace, SignalError> {
    let (sa, sb) = (a.samples(), b.samples());
    let n = sa.len().max(sb.len());
    for i in 0..n {
        let (ta, tb) = (sa.get(i).map(|s| s.t), sb.get(i).map(|s| s.t));
        if ta != tb {
            return Err(SignalError::GridMismatch { index: i, a_t: ta, b_t: tb });
        }
    }
    let samples = sa
        .iter()
        .zip(sb)
        .map(|(x, y)| Sample::new(x.t, x.ax - y.ax, x.ay - y.ay, x.az - y.az))
        .collect();
    Ok(Trace::new("residual", a.nominal_rate_hz(), samples))
}

/// Per-axis RMS and peak absolute value of a residual trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub rms: [f64; 3],
    pub peak: [f64; 3],
    pub duration_s: f64,
}

impl ResidualStats {
    pub fn rms_of(&self, axis: Axis) -> f64 {
        self.rms[axis.index()]
    }

    pub fn peak_of(&self, axis: Axis) -> f64 {
        self.peak[axis.index()]
    }
}

/// `duration_s` is the first-to-last span, or one sample period for a
/// single-sample trace.
pub fn residual_stats(trace: &Trace) -> Result<ResidualStats, SignalError> {
    if trace.is_empty() {
        return Err(SignalError::InsufficientData("empty trace".into()));
    }
    let mut sum_sq = [0.0; 3];
    let mut peak = [0.0f64; 3];
    for s in trace.samples() {
        for (k, v) in s.axes().into_iter().enumerate() {
            sum_sq[k] += v * v;
            peak[k] = peak[k].max(v.abs());
        }
    }
    let n = trace.len() as f64;
    let mut rms = sum_sq.map(|q| (q / n).sqrt());
    // rounding in the mean of squares can push rms a hair above the peak
    for k in 0..3 {
        rms[k] = rms[k].min(peak[k]);
    }
    let span = trace.span_s();
    let duration_s = if span > 0.0 { span } else { 1.0 / trace.nominal_rate_hz() };
    Ok(ResidualStats { rms, peak, duration_s })
}
