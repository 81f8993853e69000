//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridetilt::evalkit::{evaluate_corpus, method1_report, EvalReport};
use ridetilt::posture::{
    detect_tilt_series, threshold_crossing_equivalent, tilt_series, DetectorConfig, PostureEvent, TiltPoint,
};
use ridetilt::sensor_model::{Axis, SensorSpec, Trace};
use ridetilt::signal::{lowpass, FilterSpec};
use ridetilt::simulator::{
    scenario_corpus, synth_ground_truth, ScenarioSpec, DEFAULT_CORPUS_SEED, DEFAULT_CORPUS_SIZE, PHONE, WEARABLE,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn corpus() -> Vec<ScenarioSpec> {
    scenario_corpus(DEFAULT_CORPUS_SEED, DEFAULT_CORPUS_SIZE)
}

fn threshold_identity() -> Outcome {
    let g = threshold_crossing_equivalent(&DetectorConfig::default());
    check((g - -0.342).abs() <= 0.001, format!("20 deg -> {g:.5} G"))
}

fn flat_ride_report() -> Result<EvalReport, String> {
    let flat: Vec<ScenarioSpec> = corpus().into_iter().filter(|s| s.is_flat_pickup_ride()).collect();
    if flat.is_empty() {
        return Err("corpus has no flat rides".into());
    }
    if let Some(b) = flat.iter().flat_map(|s| &s.postures).find(|p| p.bend_deg < 30.0) {
        return Err(format!("bend of {:.1} deg below 30", b.bend_deg));
    }
    evaluate_corpus(&flat, &DetectorConfig::default(), WEARABLE).map_err(|e| e.to_string())
}

fn flat_ride_detection() -> Outcome {
    let r = flat_ride_report()?;
    check(
        r.precision == 1.0 && r.recall == 1.0 && r.precision_flag.is_none() && r.true_positives > 0,
        format!(
            "{} rides: tp={} fp={} fn={} precision={:.3} recall={:.3}",
            r.per_scenario.len(),
            r.true_positives,
            r.false_positives,
            r.false_negatives,
            r.precision,
            r.recall
        ),
    )
}

fn grade_robustness() -> Outcome {
    let graded: Vec<ScenarioSpec> = corpus().into_iter().filter(|s| s.is_grade_ride()).collect();
    if graded.is_empty() || graded.iter().any(|s| s.grade_percent != 20.0 || !s.postures.is_empty()) {
        return Err("corpus grade rides are not 20% bend-free rides".into());
    }
    let r = evaluate_corpus(&graded, &DetectorConfig::default(), WEARABLE).map_err(|e| e.to_string())?;
    let detections: usize = r.per_scenario.iter().map(|row| row.detections).sum();

    let mut idle = ScenarioSpec::rest(10.0);
    idle.grade_percent = 20.0;
    let (truth, _) = synth_ground_truth(&idle).map_err(|e| e.to_string())?;
    let points = tilt_series(&truth, DetectorConfig::default().gravity_cutoff_hz).map_err(|e| e.to_string())?;
    let tilt = points.last().map(|p| p.tilt_deg).unwrap_or(f64::NAN);
    let oracle = 0.2f64.atan().to_degrees();
    check(
        detections == 0 && (tilt - 11.31).abs() <= 0.05 && (tilt - oracle).abs() <= 1e-9 && tilt < 20.0,
        format!("{} rides, {detections} detections; static tilt {tilt:.4} deg", graded.len()),
    )
}

fn subtraction_residual() -> Outcome {
    let filter = FilterSpec::new(1.0, 1);
    let mut worst_raw = f64::INFINITY;
    let mut worst_filtered = f64::INFINITY;
    for spec in corpus() {
        let r = method1_report(&spec, WEARABLE, PHONE, &filter, 0.0).map_err(|e| e.to_string())?;
        worst_raw = worst_raw.min(r.raw.rms_of(Axis::Y));
        worst_filtered = worst_filtered.min(r.filtered.rms_of(Axis::Y));
    }
    let mut ideal = corpus().swap_remove(0);
    ideal.sensors = [("a".to_string(), SensorSpec::ideal(25.0)), ("b".to_string(), SensorSpec::ideal(25.0))].into();
    let r = method1_report(&ideal, "a", "b", &filter, 0.0).map_err(|e| e.to_string())?;
    let ideal_rms = Axis::ALL
        .iter()
        .map(|&a| r.raw.rms_of(a).max(r.filtered.rms_of(a)))
        .fold(0.0, f64::max);
    check(
        worst_raw > 0.02 && worst_filtered > 0.02 && ideal_rms <= 1e-9,
        format!("min Y rms raw {worst_raw:.4} G, filtered {worst_filtered:.4} G; ideal pair {ideal_rms:.1e} G"),
    )
}

/// Least-squares amplitude of a sinusoid at `f` in `ys`.
fn fitted_amplitude(ts: &[f64], ys: &[f64], f: f64) -> f64 {
    let (mut ss, mut cc, mut sc, mut ys_, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&t, &y) in ts.iter().zip(ys) {
        let (s, c) = (2.0 * PI * f * t).sin_cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        ys_ += y * s;
        yc += y * c;
    }
    let det = ss * cc - sc * sc;
    let a = (ys_ * cc - yc * sc) / det;
    let b = (yc * ss - ys_ * sc) / det;
    a.hypot(b)
}

fn filter_gain(rate: f64, cutoff: f64, f: f64) -> f64 {
    let spec = FilterSpec::new(cutoff, 1);
    let input = Trace::from_fn("sine", rate, (rate * 60.0) as usize, |t| [0.0, (2.0 * PI * f * t).sin(), 0.0]);
    let out = lowpass(&input, &spec).expect("valid filter");
    let skip = (5.0 * spec.rc() * rate).ceil() as usize;
    let tail = &out.samples()[skip..];
    let ts: Vec<f64> = tail.iter().map(|s| s.t).collect();
    let ys: Vec<f64> = tail.iter().map(|s| s.ay).collect();
    fitted_amplitude(&ts, &ys, f)
}

fn filter_correctness() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for rate in [25.0, 100.0] {
        let at = filter_gain(rate, 1.0, 1.0);
        let ten = filter_gain(rate, 1.0, 10.0);
        ok &= (at - std::f64::consts::FRAC_1_SQRT_2).abs() <= 0.05 && ten <= 0.12;
        details.push(format!("{rate} Hz: gain {at:.3} at fc, {ten:.3} at 10 fc"));
    }
    let dc = Trace::from_fn("dc", 25.0, 500, |_| [0.0, 0.0, 1.0]);
    let mut dc_err: f64 = 0.0;
    for order in [1, 2] {
        let out = lowpass(&dc, &FilterSpec::new(1.0, order)).map_err(|e| e.to_string())?;
        for s in out.samples() {
            dc_err = dc_err.max(s.ax.abs()).max(s.ay.abs()).max((s.az - 1.0).abs());
        }
    }
    ok &= dc_err <= 1e-12;
    details.push(format!("DC error {dc_err:.1e}"));
    check(ok, details.join("; "))
}

fn random_series(rng: &mut ChaCha8Rng) -> Vec<TiltPoint> {
    let rate = 25.0;
    let mut points = Vec::new();
    let mut level: f64 = rng.random_range(-5.0..10.0);
    let n = rng.random_range(50..1500);
    for k in 0..n {
        if rng.random_bool(0.05) {
            level = rng.random_range(-5.0..60.0);
        }
        let noise: f64 = rng.random_range(-3.0..3.0);
        points.push(TiltPoint { t: k as f64 / rate, tilt_deg: level + noise });
    }
    points
}

fn violation(events: &[PostureEvent], c: &DetectorConfig) -> Option<String> {
    for e in events {
        if e.end_s <= e.start_s || e.duration_s() < c.min_duration_s - 1e-9 || e.peak_tilt_deg < c.enter_tilt_deg {
            return Some(format!("bad event {e:?}"));
        }
    }
    for w in events.windows(2) {
        if w[1].start_s <= w[0].end_s || w[1].start_s - w[0].end_s < c.refractory_s - 1e-9 {
            return Some(format!("overlap or refractory breach {:?} {:?}", w[0], w[1]));
        }
    }
    None
}

fn state_machine_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_CORPUS_SEED);
    let mut total_events = 0;
    for i in 0..1000 {
        let points = random_series(&mut rng);
        let exit = rng.random_range(5.0..25.0);
        let base = DetectorConfig {
            exit_tilt_deg: exit,
            enter_tilt_deg: exit,
            min_duration_s: rng.random_range(0.0..1.0),
            refractory_s: rng.random_range(0.0..1.5),
            ..DetectorConfig::default()
        };
        let mut previous = usize::MAX;
        for step in 0..8 {
            let c = DetectorConfig { enter_tilt_deg: exit + 5.0 * step as f64, ..base };
            let events = detect_tilt_series(&points, &c).map_err(|e| e.to_string())?;
            if let Some(v) = violation(&events, &c) {
                return Err(format!("series {i}: {v}"));
            }
            if events.len() > previous {
                return Err(format!("series {i}: count rose to {} at enter {}", events.len(), c.enter_tilt_deg));
            }
            previous = events.len();
            total_events += events.len();
        }
    }
    Ok(format!("1000 series x 8 thresholds, {total_events} events, no violations"))
}

fn ridetilt(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ridetilt"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.code() != Some(0) {
        return Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (x, y) = (dir.path().join("x"), dir.path().join("y"));
    let seed = DEFAULT_CORPUS_SEED.to_string();
    ridetilt(&["eval", "--seed", &seed, "--out", path(&x)])?;
    ridetilt(&["eval", "--seed", &seed, "--out", path(&y)])?;
    let mut same = true;
    for name in ["report.json", "report.csv"] {
        let a = fs::read(x.join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(y.join(name)).map_err(|e| e.to_string())?;
        same &= !a.is_empty() && a == b;
    }
    check(same, "report.json and report.csv compared byte for byte".into())
}

fn cli_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenarios = dir.path().join("scenarios");
    ridetilt(&["corpus", "--seed", &DEFAULT_CORPUS_SEED.to_string(), "--out", path(&scenarios)])?;
    let mut specs: Vec<_> = fs::read_dir(&scenarios)
        .map_err(|e| e.to_string())?
        .map(|e| e.map(|e| e.path()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    specs.sort();
    for spec in &specs {
        let out = spec.with_extension("");
        ridetilt(&["simulate", "--spec", path(spec), "--out", path(&out)])?;
        let trace = out.join(format!("{WEARABLE}.csv"));
        ridetilt(&["detect", "--trace", path(&trace), "--out", path(&out.join("events.jsonl"))])?;
    }
    let report_dir = dir.path().join("report");
    let line = ridetilt(&["eval", "--from-dir", path(&scenarios), "--out", path(&report_dir)])?;
    let text = fs::read_to_string(report_dir.join("report.json")).map_err(|e| e.to_string())?;
    let files: EvalReport = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let direct = flat_ride_report()?;
    check(
        specs.len() == DEFAULT_CORPUS_SIZE
            && files.precision == direct.precision
            && files.recall == direct.recall
            && files.true_positives == direct.true_positives
            && files.false_positives == direct.false_positives
            && files.false_negatives == direct.false_negatives,
        format!("{} scenarios from files: {}", specs.len(), line.trim()),
    )
}

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "threshold identity", limit: Duration::from_secs(1), run: threshold_identity },
        Criterion { id: 2, name: "flat-ride detection", limit: Duration::from_secs(10), run: flat_ride_detection },
        Criterion { id: 3, name: "grade robustness", limit: Duration::from_secs(5), run: grade_robustness },
        Criterion { id: 4, name: "sensor subtraction residual", limit: Duration::from_secs(5), run: subtraction_residual },
        Criterion { id: 5, name: "filter correctness", limit: Duration::from_secs(2), run: filter_correctness },
        Criterion { id: 6, name: "state-machine properties", limit: Duration::from_secs(30), run: state_machine_properties },
        Criterion { id: 7, name: "eval determinism", limit: Duration::from_secs(20), run: determinism },
        Criterion { id: 8, name: "cli round trip", limit: Duration::from_secs(30), run: cli_round_trip },
    ];
    let mut failures = 0;
    for c in &criteria {
        let started = Instant::now();
        let outcome = (c.run)();
        let elapsed = started.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > c.limit => Err(format!("{d}; over the {:?} budget", c.limit)),
            other => other,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("[{status}] {}. {} ({:.2} s): {detail}", c.id, c.name, elapsed.as_secs_f64());
        failures += outcome.is_err() as usize;
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
