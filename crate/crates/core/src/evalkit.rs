//! Scoring detections against scripted ground truth, and sensor-subtraction
//! residual reports.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::posture::{self, DetectorConfig, PostureError, PostureEvent};
use crate::sensor_model::Trace;
use crate::signal::{self, FilterSpec, ResidualStats, SignalError};
use crate::simulator::{self, ScenarioError, ScenarioSpec, TruthInterval};

pub const DEFAULT_IOU_MIN: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("scenario {index}: {source}")]
    Scenario {
        index: usize,
        #[source]
        source: ScenarioError,
    },
    #[error("scenario {index}: {source}")]
    Detection {
        index: usize,
        #[source]
        source: PostureError,
    },
    #[error(transparent)]
    Simulation(#[from] ScenarioError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Anything with a time span.
pub trait Span {
    fn start_s(&self) -> f64;
    fn end_s(&self) -> f64;
}

impl Span for PostureEvent {
    fn start_s(&self) -> f64 {
        self.start_s
    }
    fn end_s(&self) -> f64 {
        self.end_s
    }
}

impl Span for TruthInterval {
    fn start_s(&self) -> f64 {
        self.start_s
    }
    fn end_s(&self) -> f64 {
        self.end_s
    }
}

impl Span for (f64, f64) {
    fn start_s(&self) -> f64 {
        self.0
    }
    fn end_s(&self) -> f64 {
        self.1
    }
}

pub fn temporal_iou(a: &impl Span, b: &impl Span) -> f64 {
    let inter = (a.end_s().min(b.end_s()) - a.start_s().max(b.start_s())).max(0.0);
    let union = (a.end_s() - a.start_s()) + (b.end_s() - b.start_s()) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// (detected index, truth index, IoU) for every matched pair.
    pub pairs: Vec<(usize, usize, f64)>,
}

/// Greedy one-to-one matching in order of descending IoU. Ties are broken
/// by the interval endpoints, independent of which list a span came from.
pub fn match_events<D: Span, T: Span>(detected: &[D], truth: &[T], iou_min: f64) -> MatchResult {
    let mut candidates = Vec::new();
    for (i, d) in detected.iter().enumerate() {
        for (j, g) in truth.iter().enumerate() {
            let iou = temporal_iou(d, g);
            if iou >= iou_min && iou > 0.0 {
                let (a, b) = ((d.start_s(), d.end_s()), (g.start_s(), g.end_s()));
                let (lo, hi) = if a.partial_cmp(&b) == Some(std::cmp::Ordering::Greater) { (b, a) } else { (a, b) };
                candidates.push((iou, lo, hi, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| {
        y.0.total_cmp(&x.0)
            .then(x.1 .0.total_cmp(&y.1 .0))
            .then(x.1 .1.total_cmp(&y.1 .1))
            .then(x.2 .0.total_cmp(&y.2 .0))
            .then(x.2 .1.total_cmp(&y.2 .1))
    });
    let mut det_used = vec![false; detected.len()];
    let mut truth_used = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for (iou, _, _, i, j) in candidates {
        if !det_used[i] && !truth_used[j] {
            det_used[i] = true;
            truth_used[j] = true;
            pairs.push((i, j, iou));
        }
    }
    MatchResult {
        true_positives: pairs.len(),
        false_positives: detected.len() - pairs.len(),
        false_negatives: truth.len() - pairs.len(),
        pairs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioFlag {
    NoDetections,
    NoTruths,
}

/// `num / den`, or 1.0 with a flag when the denominator is zero.
fn ratio(num: usize, den: usize, flag: RatioFlag) -> (f64, Option<RatioFlag>) {
    if den == 0 {
        (1.0, Some(flag))
    } else {
        (num as f64 / den as f64, None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: usize,
    pub grade_percent: f64,
    pub truths: usize,
    pub detections: usize,
    /// Detections matched to bends shallower than the entry threshold;
    /// counted neither as hits nor as false alarms.
    pub ignored: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub precision_flag: Option<RatioFlag>,
    pub recall_flag: Option<RatioFlag>,
    pub per_scenario: Vec<ScenarioRow>,
    pub residual_summary: Option<ResidualStats>,
}

impl EvalReport {
    /// Aggregates rows; rows are sorted by scenario index first.
    pub fn from_rows(mut rows: Vec<ScenarioRow>) -> Self {
        rows.sort_by_key(|r| r.scenario);
        let tp = rows.iter().map(|r| r.tp).sum();
        let fp = rows.iter().map(|r| r.fp).sum();
        let fn_ = rows.iter().map(|r| r.fn_).sum();
        let (precision, precision_flag) = ratio(tp, tp + fp, RatioFlag::NoDetections);
        let (recall, recall_flag) = ratio(tp, tp + fn_, RatioFlag::NoTruths);
        Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            precision_flag,
            recall_flag,
            per_scenario: rows,
            residual_summary: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// `scenario,tp,fp,fn,precision,recall` with 6-decimal ratios.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "scenario,tp,fp,fn,precision,recall")?;
        for r in &self.per_scenario {
            writeln!(
                out,
                "{},{},{},{},{:.6},{:.6}",
                r.scenario, r.tp, r.fp, r.fn_, r.precision, r.recall
            )?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("vec write");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Scores one scenario's detections. Truth intervals shallower than the
/// config's entry threshold are not expected to be found; detections that
/// match them are ignored rather than counted as false positives.
pub fn score_scenario(
    scenario: usize,
    grade_percent: f64,
    detected: &[PostureEvent],
    truth: &[TruthInterval],
    config: &DetectorConfig,
    iou_min: f64,
) -> ScenarioRow {
    let (expected, shallow): (Vec<TruthInterval>, Vec<TruthInterval>) =
        truth.iter().partition(|g| g.bend_deg >= config.enter_tilt_deg);
    let m = match_events(detected, &expected, iou_min);
    let leftover: Vec<&PostureEvent> = detected
        .iter()
        .enumerate()
        .filter(|(i, _)| !m.pairs.iter().any(|p| p.0 == *i))
        .map(|(_, d)| d)
        .collect();
    let ignored = match_events(&leftover.iter().map(|d| (d.start_s, d.end_s)).collect::<Vec<_>>(), &shallow, iou_min)
        .true_positives;
    let fp = m.false_positives - ignored;
    let (precision, _) = ratio(m.true_positives, m.true_positives + fp, RatioFlag::NoDetections);
    let (recall, _) = ratio(m.true_positives, expected.len(), RatioFlag::NoTruths);
    ScenarioRow {
        scenario,
        grade_percent,
        truths: expected.len(),
        detections: detected.len(),
        ignored,
        tp: m.true_positives,
        fp,
        fn_: m.false_negatives,
        precision,
        recall,
    }
}

/// Synthesizes, renders, detects and scores every scenario. Scenarios run
/// in parallel; the report is independent of scheduling.
pub fn evaluate_corpus(
    corpus: &[ScenarioSpec],
    config: &DetectorConfig,
    sensor_name: &str,
) -> Result<EvalReport, EvalError> {
    evaluate_corpus_with(corpus, config, sensor_name, DEFAULT_IOU_MIN)
}

pub fn evaluate_corpus_with(
    corpus: &[ScenarioSpec],
    config: &DetectorConfig,
    sensor_name: &str,
    iou_min: f64,
) -> Result<EvalReport, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    config
        .validate()
        .map_err(|source| EvalError::Detection { index: 0, source })?;
    let rows = corpus
        .par_iter()
        .enumerate()
        .map(|(index, spec)| {
            let (trace, truth) = simulator::render_named(spec, sensor_name)
                .map_err(|source| EvalError::Scenario { index, source })?;
            let detected =
                posture::detect(&trace, config).map_err(|source| EvalError::Detection { index, source })?;
            Ok(score_scenario(index, spec.grade_percent, &detected, &truth, config, iou_min))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvalReport::from_rows(rows))
}

/// Residual statistics before and after low-pass smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Method1Report {
    pub raw: ResidualStats,
    pub filtered: ResidualStats,
    pub lag_s: f64,
}

/// Renders two sensors from one ground truth, aligns `sensor_b` onto
/// `sensor_a`, subtracts, and summarizes the residual.
pub fn method1_report(
    spec: &ScenarioSpec,
    sensor_a: &str,
    sensor_b: &str,
    filter: &FilterSpec,
    max_lag_s: f64,
) -> Result<Method1Report, EvalError> {
    let a = spec.sensor(sensor_a)?;
    let b = spec.sensor(sensor_b)?;
    let (truth, _) = simulator::synth_ground_truth(spec)?;
    let ta = simulator::render_sensor(&truth, &a)?.with_source_id(sensor_a);
    let mut tb = simulator::render_sensor(&truth, &b)?.with_source_id(sensor_b);
    if (ta.nominal_rate_hz() - tb.nominal_rate_hz()).abs() > 1e-9 {
        tb = signal::resample_linear(&tb, ta.nominal_rate_hz())?;
    }
    fuse(&ta, &tb, filter, max_lag_s).map(|(_, report)| report)
}

/// Subtraction pipeline on two traces with a common rate: align, subtract,
/// then smooth the residual. Returns the raw residual and the report.
pub fn fuse(
    a: &Trace,
    b: &Trace,
    filter: &FilterSpec,
    max_lag_s: f64,
) -> Result<(Trace, Method1Report), EvalError> {
    let aligned = signal::align(a, b, max_lag_s)?;
    let residual = signal::subtract(&aligned.reference, &aligned.other)?;
    let raw = signal::residual_stats(&residual)?;
    let filtered = signal::residual_stats(&signal::lowpass(&residual, filter)?)?;
    Ok((
        residual,
        Method1Report {
            raw,
            filtered,
            lag_s: aligned.lag_s,
        },
    ))
}
