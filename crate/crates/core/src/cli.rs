//! `ridetilt` command line: simulate rides, detect bends, fuse sensor
//! pairs, evaluate corpora and emit plot data.
//!
//! Exit codes: 0 success, 2 usage or validation error, 1 internal error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::evalkit::{self, EvalReport, DEFAULT_IOU_MIN};
use crate::posture::{self, DetectorConfig, PostureEvent};
use crate::sensor_model::{self, Trace, DEFAULT_RATE_HZ};
use crate::signal::{self, FilterSpec, DEFAULT_MAX_LAG_S};
use crate::simulator::{self, ScenarioSpec, TruthInterval, DEFAULT_CORPUS_SEED, DEFAULT_CORPUS_SIZE, WEARABLE};
use crate::svg::{Chart, Series};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => m,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(m: impl std::fmt::Display) -> CliError {
    CliError::Usage(m.to_string())
}

fn internal(m: impl std::fmt::Display) -> CliError {
    CliError::Internal(m.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "ridetilt", version, about = "Rider posture detection from wearable accelerometers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scenario into ground-truth and per-sensor traces.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a generated scenario corpus as one JSON spec per scenario.
    Corpus {
        #[arg(long, default_value_t = DEFAULT_CORPUS_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_CORPUS_SIZE)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect forward bends in a trace CSV.
    Detect {
        #[arg(long)]
        trace: PathBuf,
        /// Events JSONL output; defaults to the trace path with extension `events.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        detector: DetectorFlags,
    },
    /// Subtract trace `b` from trace `a` after resampling and alignment.
    Fuse {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RATE_HZ)]
        rate: f64,
        #[arg(long = "max-lag", default_value_t = DEFAULT_MAX_LAG_S)]
        max_lag: f64,
        /// Low-pass cutoff for the smoothed residual.
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long, default_value_t = 1)]
        order: u8,
    },
    /// Evaluate the detector over a corpus.
    Eval {
        #[arg(long, default_value_t = DEFAULT_CORPUS_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_CORPUS_SIZE)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = WEARABLE)]
        sensor: String,
        /// Keep only graded rides without bends.
        #[arg(long = "grade-only")]
        grade_only: bool,
        /// Threshold sweep, e.g. `enter-tilt=10:30:5`.
        #[arg(long)]
        sweep: Option<String>,
        /// Score per-scenario directories produced by `simulate` + `detect`
        /// instead of generating a corpus.
        #[arg(long = "from-dir")]
        from_dir: Option<PathBuf>,
        #[arg(long = "iou-min", default_value_t = DEFAULT_IOU_MIN)]
        iou_min: f64,
        #[command(flatten)]
        detector: DetectorFlags,
    },
    /// Plot data for the sensor-pair overlay (1) or the three-axis view (2).
    Report {
        #[arg(long)]
        figure: u8,
        #[arg(long)]
        a: Option<PathBuf>,
        #[arg(long)]
        b: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RATE_HZ)]
        rate: f64,
        #[arg(long = "max-lag", default_value_t = 0.0)]
        max_lag: f64,
        #[command(flatten)]
        detector: DetectorFlags,
    },
}

/// Detector parameters. Flags override `--config`, which overrides defaults.
#[derive(Debug, Args, Clone, Default)]
struct DetectorFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "enter-tilt", alias = "enter-tilt-deg")]
    enter_tilt: Option<f64>,
    #[arg(long = "exit-tilt", alias = "exit-tilt-deg")]
    exit_tilt: Option<f64>,
    #[arg(long = "min-duration", alias = "min-duration-s")]
    min_duration: Option<f64>,
    #[arg(long, alias = "refractory-s")]
    refractory: Option<f64>,
    #[arg(long = "gravity-cutoff", alias = "gravity-cutoff-hz")]
    gravity_cutoff: Option<f64>,
}

impl DetectorFlags {
    fn resolve(&self) -> CliResult<DetectorConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = read_input(path)?;
                serde_json::from_str::<DetectorConfig>(&text)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            None => DetectorConfig::default(),
        };
        if let Some(v) = self.enter_tilt {
            c.enter_tilt_deg = v;
        }
        if let Some(v) = self.exit_tilt {
            c.exit_tilt_deg = v;
        }
        // a low entry threshold drags the exit threshold with it unless
        // the exit was set explicitly
        if self.exit_tilt.is_none() && c.exit_tilt_deg > c.enter_tilt_deg {
            c.exit_tilt_deg = c.enter_tilt_deg;
        }
        if let Some(v) = self.min_duration {
            c.min_duration_s = v;
        }
        if let Some(v) = self.refractory {
            c.refractory_s = v;
        }
        if let Some(v) = self.gravity_cutoff {
            c.gravity_cutoff_hz = v;
        }
        c.validate().map_err(usage)?;
        Ok(c)
    }
}

/// Runs the CLI with `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Simulate { spec, out } => cmd_simulate(&spec, &out),
        Command::Corpus { seed, n, out } => cmd_corpus(seed, n, &out),
        Command::Detect { trace, out, detector } => {
            let out = out.unwrap_or_else(|| trace.with_extension("events.jsonl"));
            cmd_detect(&trace, &out, &detector.resolve()?)
        }
        Command::Fuse { a, b, out, rate, max_lag, cutoff, order } => {
            let filter = cutoff.map(|c| FilterSpec::new(c, order));
            cmd_fuse(&a, &b, &out, rate, max_lag, filter.as_ref())
        }
        Command::Eval { seed, n, out, sensor, grade_only, sweep, from_dir, iou_min, detector } => {
            let config = detector.resolve()?;
            if !(iou_min > 0.0 && iou_min <= 1.0) {
                return Err(usage("--iou-min must be in (0, 1]"));
            }
            match from_dir {
                Some(dir) => cmd_eval_dir(&dir, &out, &config, iou_min),
                None => cmd_eval(seed, n, &out, &sensor, grade_only, sweep.as_deref(), &config, iou_min),
            }
        }
        Command::Report { figure, a, b, trace, events, out, rate, max_lag, detector } => match figure {
            1 => {
                let a = a.ok_or_else(|| usage("--figure 1 needs --a and --b"))?;
                let b = b.ok_or_else(|| usage("--figure 1 needs --a and --b"))?;
                cmd_report_pair(&a, &b, &out, rate, max_lag)
            }
            2 => {
                let trace = trace.ok_or_else(|| usage("--figure 2 needs --trace"))?;
                cmd_report_axes(&trace, events.as_deref(), &out, &detector.resolve()?)
            }
            other => Err(usage(format!("unknown figure {other}, expected 1 or 2"))),
        },
    }
}

fn read_input(path: &Path) -> CliResult<String> {
    if !path.exists() {
        return Err(usage(format!("{}: no such file", path.display())));
    }
    fs::read_to_string(path).map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn write_output(path: &Path, contents: &[u8]) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| internal(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn load_trace(path: &Path) -> CliResult<Trace> {
    let text = read_input(path)?;
    let source = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let trace = sensor_model::read_trace_csv(text.as_bytes(), source)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if let Some(v) = sensor_model::validate_trace(&trace).first() {
        return Err(usage(format!("{}: {v}", path.display())));
    }
    Ok(trace)
}

fn load_spec(path: &Path) -> CliResult<ScenarioSpec> {
    let text = read_input(path)?;
    let spec: ScenarioSpec =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    spec.validate().map_err(usage)?;
    Ok(spec)
}

fn truth_jsonl(truth: &[TruthInterval]) -> String {
    truth
        .iter()
        .map(|g| {
            format!(
                "{{\"start_s\":{:.6},\"end_s\":{:.6},\"bend_deg\":{:.6}}}\n",
                g.start_s, g.end_s, g.bend_deg
            )
        })
        .collect()
}

fn parse_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let text = read_input(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| usage(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn events_jsonl(events: &[PostureEvent]) -> Vec<u8> {
    let mut buf = Vec::new();
    posture::write_events_jsonl(events, &mut buf).expect("vec write");
    buf
}

fn cmd_simulate(spec_path: &Path, out: &Path) -> CliResult {
    let spec = load_spec(spec_path)?;
    let (truth, events) = simulator::synth_ground_truth(&spec).map_err(usage)?;
    write_output(&out.join("truth.csv"), sensor_model::trace_to_csv_string(&truth).as_bytes())?;
    for name in spec.sensors.keys() {
        let rendered = simulator::render_sensor(&truth, &spec.sensor(name).map_err(usage)?).map_err(usage)?;
        write_output(
            &out.join(format!("{name}.csv")),
            sensor_model::trace_to_csv_string(&rendered).as_bytes(),
        )?;
    }
    write_output(&out.join("truth_events.jsonl"), truth_jsonl(&events).as_bytes())?;
    println!(
        "samples={} sensors={} truth_events={}",
        truth.len(),
        spec.sensors.len(),
        events.len()
    );
    Ok(())
}

fn cmd_corpus(seed: u64, n: usize, out: &Path) -> CliResult {
    if n == 0 {
        return Err(usage("--n must be >= 1"));
    }
    for (i, spec) in simulator::scenario_corpus(seed, n).iter().enumerate() {
        let json = serde_json::to_string_pretty(spec).map_err(internal)? + "\n";
        write_output(&out.join(format!("scenario_{i:03}.json")), json.as_bytes())?;
    }
    println!("scenarios={n}");
    Ok(())
}

fn cmd_detect(trace_path: &Path, out: &Path, config: &DetectorConfig) -> CliResult {
    let trace = load_trace(trace_path)?;
    let events = posture::detect(&trace, config).map_err(usage)?;
    write_output(out, &events_jsonl(&events))?;
    println!("events={}", events.len());
    Ok(())
}

/// Loads both traces onto `rate` and aligns `b` onto `a`.
fn load_pair(a: &Path, b: &Path, rate: f64) -> CliResult<(Trace, Trace)> {
    let (ta, tb) = (load_trace(a)?, load_trace(b)?);
    let disjoint = |x: &Trace, y: &Trace| x.last_t() < y.first_t() || y.last_t() < x.first_t();
    if disjoint(&ta, &tb) {
        return Err(usage("no overlap between the two traces"));
    }
    let ra = signal::resample_linear(&ta, rate).map_err(usage)?;
    let rb = signal::resample_linear(&tb, rate).map_err(usage)?;
    Ok((ra, rb))
}

fn signal_usage(e: impl std::fmt::Display) -> CliError {
    let m = e.to_string();
    if m.contains("no overlap") {
        usage("no overlap between the two traces")
    } else {
        usage(m)
    }
}

fn cmd_fuse(a: &Path, b: &Path, out: &Path, rate: f64, max_lag: f64, filter: Option<&FilterSpec>) -> CliResult {
    if !(rate > 0.0) || !(max_lag >= 0.0) {
        return Err(usage("--rate must be > 0 and --max-lag >= 0"));
    }
    let (ra, rb) = load_pair(a, b, rate)?;
    let aligned = signal::align(&ra, &rb, max_lag).map_err(signal_usage)?;
    let residual = signal::subtract(&aligned.reference, &aligned.other).map_err(signal_usage)?;
    let raw = signal::residual_stats(&residual).map_err(usage)?;
    write_output(&out.join("residual.csv"), sensor_model::trace_to_csv_string(&residual).as_bytes())?;
    let filtered = match filter {
        Some(f) => {
            let smooth = signal::lowpass(&residual, f).map_err(usage)?;
            write_output(
                &out.join("residual_filtered.csv"),
                sensor_model::trace_to_csv_string(&smooth).as_bytes(),
            )?;
            Some(signal::residual_stats(&smooth).map_err(usage)?)
        }
        None => None,
    };
    let stats = serde_json::json!({
        "lag_s": aligned.lag_s,
        "degenerate_correlation": aligned.degenerate_correlation,
        "raw": raw,
        "filtered": filtered,
    });
    let text = serde_json::to_string_pretty(&stats).map_err(internal)? + "\n";
    write_output(&out.join("stats.json"), text.as_bytes())?;
    let y = filtered.unwrap_or(raw).rms[1];
    println!("lag_s={:.6} rms_y={:.6} raw_rms_y={:.6}", aligned.lag_s, y, raw.rms[1]);
    Ok(())
}

fn parse_sweep(arg: &str) -> CliResult<Vec<f64>> {
    let bad = || usage(format!("bad --sweep {arg:?}, expected enter-tilt=START:END:STEP"));
    let (name, range) = arg.split_once('=').ok_or_else(bad)?;
    if name != "enter-tilt" {
        return Err(usage(format!("unknown sweep parameter {name:?}, only enter-tilt is supported")));
    }
    let parts: Vec<f64> = range
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0 && end >= start) {
        return Err(bad());
    }
    let count = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| start + k as f64 * step).collect())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    seed: u64,
    n: usize,
    out: &Path,
    sensor: &str,
    grade_only: bool,
    sweep: Option<&str>,
    config: &DetectorConfig,
    iou_min: f64,
) -> CliResult {
    if n == 0 {
        return Err(usage("--n must be >= 1"));
    }
    let sweep_values = sweep.map(parse_sweep).transpose()?;
    let (indices, corpus): (Vec<usize>, Vec<ScenarioSpec>) = simulator::scenario_corpus(seed, n)
        .into_iter()
        .enumerate()
        .filter(|(_, s)| !grade_only || s.is_grade_ride())
        .unzip();
    if corpus.is_empty() {
        return Err(usage("corpus is empty after filtering"));
    }
    let evaluate = |c: &DetectorConfig| -> CliResult<EvalReport> {
        let mut report = evalkit::evaluate_corpus_with(&corpus, c, sensor, iou_min).map_err(usage)?;
        for row in report.per_scenario.iter_mut() {
            row.scenario = indices[row.scenario];
        }
        Ok(report)
    };
    let report = evaluate(config)?;
    write_report(out, &report)?;
    if let Some(values) = sweep_values {
        let mut csv = String::from("enter_tilt_deg,tp,fp,fn,precision,recall\n");
        for v in values {
            let c = DetectorConfig {
                enter_tilt_deg: v,
                exit_tilt_deg: config.exit_tilt_deg.min(v),
                ..*config
            };
            c.validate().map_err(usage)?;
            let r = evaluate(&c)?;
            csv.push_str(&format!(
                "{:.6},{},{},{},{:.6},{:.6}\n",
                v, r.true_positives, r.false_positives, r.false_negatives, r.precision, r.recall
            ));
        }
        write_output(&out.join("sweep.csv"), csv.as_bytes())?;
    }
    Ok(())
}

fn write_report(out: &Path, report: &EvalReport) -> CliResult {
    write_output(&out.join("report.json"), report.to_json().as_bytes())?;
    write_output(&out.join("report.csv"), report.csv_string().as_bytes())?;
    println!(
        "precision={:.3} recall={:.3} tp={} fp={} fn={}",
        report.precision, report.recall, report.true_positives, report.false_positives, report.false_negatives
    );
    Ok(())
}

/// Scores every subdirectory of `dir` that holds `truth_events.jsonl` and
/// `events.jsonl`, in name order. A sibling `<subdir>.json` scenario spec,
/// when present, supplies the grade.
fn cmd_eval_dir(dir: &Path, out: &Path, config: &DetectorConfig, iou_min: f64) -> CliResult {
    if !dir.is_dir() {
        return Err(usage(format!("{}: not a directory", dir.display())));
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(internal)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("truth_events.jsonl").exists())
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(usage(format!("{}: no scenario directories with truth_events.jsonl", dir.display())));
    }
    let mut rows = Vec::new();
    for (i, sub) in subdirs.iter().enumerate() {
        let truth: Vec<TruthInterval> = parse_jsonl(&sub.join("truth_events.jsonl"))?;
        let detected: Vec<PostureEvent> = parse_jsonl(&sub.join("events.jsonl"))?;
        let spec_path = sub.with_extension("json");
        let grade = if spec_path.exists() { load_spec(&spec_path)?.grade_percent } else { 0.0 };
        rows.push(evalkit::score_scenario(i, grade, &detected, &truth, config, iou_min));
    }
    write_report(out, &EvalReport::from_rows(rows))
}

fn cmd_report_pair(a: &Path, b: &Path, out: &Path, rate: f64, max_lag: f64) -> CliResult {
    let (ra, rb) = load_pair(a, b, rate)?;
    let aligned = signal::align(&ra, &rb, max_lag).map_err(signal_usage)?;
    let residual = signal::subtract(&aligned.reference, &aligned.other).map_err(signal_usage)?;
    let (na, nb) = (ra.source_id().to_string(), rb.source_id().to_string());
    let mut csv = format!("t,{na}_ay,{nb}_ay,residual_ay\n");
    for ((x, y), r) in aligned.reference.samples().iter().zip(aligned.other.samples()).zip(residual.samples()) {
        csv.push_str(&format!("{:.6},{:.6},{:.6},{:.6}\n", x.t, x.ay, y.ay, r.ay));
    }
    let series = |name, t: &Trace| Series {
        name,
        points: t.samples().iter().map(|s| (s.t, s.ay)).collect(),
    };
    let chart = Chart {
        title: "Y-axis acceleration of both sensors and their difference",
        y_label: "ay [G]",
        series: vec![
            series(&na, &aligned.reference),
            series(&nb, &aligned.other),
            series("residual", &residual),
        ],
        shaded: vec![],
    };
    write_output(&out.join("figure1.csv"), csv.as_bytes())?;
    write_output(&out.join("figure1.svg"), chart.render().as_bytes())?;
    println!("series=3 samples={}", residual.len());
    Ok(())
}

fn cmd_report_axes(trace_path: &Path, events: Option<&Path>, out: &Path, config: &DetectorConfig) -> CliResult {
    let trace = load_trace(trace_path)?;
    let events: Vec<PostureEvent> = match events {
        Some(p) => parse_jsonl(p)?,
        None => posture::detect(&trace, config).map_err(usage)?,
    };
    let in_event = |t: f64| events.iter().any(|e| t >= e.start_s && t <= e.end_s);
    let mut csv = String::from("t,ax,ay,az,event\n");
    for s in trace.samples() {
        csv.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6},{}\n",
            s.t,
            s.ax,
            s.ay,
            s.az,
            u8::from(in_event(s.t))
        ));
    }
    let axis = |name, f: fn(&sensor_model::Sample) -> f64| Series {
        name,
        points: trace.samples().iter().map(|s| (s.t, f(s))).collect(),
    };
    let chart = Chart {
        title: "Wearable acceleration with detected forward bends",
        y_label: "acceleration [G]",
        series: vec![axis("ax", |s| s.ax), axis("ay", |s| s.ay), axis("az", |s| s.az)],
        shaded: events.iter().map(|e| (e.start_s, e.end_s)).collect(),
    };
    write_output(&out.join("figure2.csv"), csv.as_bytes())?;
    write_output(&out.join("figure2.svg"), chart.render().as_bytes())?;
    println!("events={}", events.len());
    Ok(())
}
