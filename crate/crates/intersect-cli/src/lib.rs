//! File formats and the run driver behind the `intersect` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use intersect::barriers::Tag;
use intersect::dynamics::BicycleState;
use intersect::pedestrian::barycenter_distance;
use intersect::scenario::{load_scenario, ScenarioConfig, ScenarioError};
use intersect::sim::{
    compute_metrics, lateral_barriers, rear_end_series, run, LogEvent, Mode, SafetyMetrics, SimError, SimOptions,
    TraceRecord,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read scenario {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed trace line {line}: {reason}")]
    Trace { line: usize, reason: String },
    #[error("unknown export kind `{0}`")]
    UnknownKind(String),
}

impl CliError {
    /// 1 for bad input documents, 2 for faults while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Scenario(_) | CliError::UnknownKind(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Nine significant digits, `%g` style, independent of locale.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.8e}", x);
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        format!("{mant}e{exp}")
    }
}

/// Rounds through the textual form so in-memory values match a re-read trace.
pub fn round9(x: f64) -> f64 {
    fmt_num(x).parse().expect("formatted number parses")
}

pub const TRACE_HEADER: &str = "t,vehicle_id,mode,p,v,u2,x,y,theta,delta,b5,active_tags";

pub fn round_record(r: &TraceRecord) -> TraceRecord {
    TraceRecord {
        t: round9(r.t),
        p: round9(r.p),
        v: round9(r.v),
        u2: round9(r.u2),
        x: round9(r.x),
        y: round9(r.y),
        theta: round9(r.theta),
        delta: round9(r.delta),
        b5: r.b5.map(round9),
        ..r.clone()
    }
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<(), CliError> {
    let mut out = String::with_capacity(trace.len() * 120);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        let tags: Vec<&str> = r.tags.iter().map(|t| t.as_str()).collect();
        let fields = [
            fmt_num(r.t),
            r.vehicle.to_string(),
            r.mode.as_str().to_string(),
            fmt_num(r.p),
            fmt_num(r.v),
            fmt_num(r.u2),
            fmt_num(r.x),
            fmt_num(r.y),
            fmt_num(r.theta),
            fmt_num(r.delta),
            r.b5.map(fmt_num).unwrap_or_default(),
            tags.join("|"),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Trace { line: 0, reason: e.to_string() })?;
    let headers = reader.headers().map_err(|e| CliError::Trace { line: 1, reason: e.to_string() })?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
        return Err(CliError::Trace { line: 1, reason: "unexpected header".into() });
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let bad = |reason: String| CliError::Trace { line, reason };
        let row = row.map_err(|e| bad(e.to_string()))?;
        let num = |k: usize| -> Result<f64, CliError> {
            row[k].parse().map_err(|_| CliError::Trace { line, reason: format!("column {k} not a number") })
        };
        let tags = if row[11].is_empty() {
            Vec::new()
        } else {
            row[11]
                .split('|')
                .map(|s| Tag::parse(s).ok_or_else(|| bad(format!("unknown tag {s}"))))
                .collect::<Result<_, _>>()?
        };
        out.push(TraceRecord {
            t: num(0)?,
            vehicle: row[1].parse().map_err(|_| bad("vehicle id".into()))?,
            mode: Mode::parse(&row[2]).ok_or_else(|| bad(format!("unknown mode {}", &row[2])))?,
            p: num(3)?,
            v: num(4)?,
            u2: num(5)?,
            x: num(6)?,
            y: num(7)?,
            theta: num(8)?,
            delta: num(9)?,
            b5: if row[10].is_empty() { None } else { Some(num(10)?) },
            tags,
        });
    }
    Ok(out)
}

/// Metric values as written to the summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MetricsSummary {
    pub min_rear_end: String,
    pub min_lateral: String,
    pub min_pedestrian: String,
    pub min_speed: String,
    pub records: usize,
}

impl MetricsSummary {
    pub fn from_metrics(m: &SafetyMetrics, records: usize) -> Self {
        let opt = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), fmt_num);
        let min_speed = m
            .speeds
            .values()
            .flatten()
            .map(|&(_, v)| v)
            .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.min(v))));
        MetricsSummary {
            min_rear_end: opt(m.min_rear_end),
            min_lateral: opt(m.min_lateral),
            min_pedestrian: opt(m.min_pedestrian),
            min_speed: opt(min_speed),
            records,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct SummaryDoc<'a> {
    scenario: &'a str,
    seed: u64,
    horizon: String,
    anti_overshoot: bool,
    wall_ms: u128,
    metrics: &'a MetricsSummary,
    events: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub scenario: String,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub until: Option<f64>,
    pub anti_overshoot: bool,
    pub export: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub wall_ms: u128,
    pub metrics: MetricsSummary,
    pub files: Vec<PathBuf>,
}

/// Accepts a file path or a bare name looked up under `scenarios/`.
pub fn resolve_scenario(name: &str) -> PathBuf {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return direct;
    }
    let with_ext = PathBuf::from("scenarios").join(format!("{name}.toml"));
    if with_ext.is_file() {
        return with_ext;
    }
    let workspace = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"));
    if workspace.is_file() {
        return workspace;
    }
    direct
}

pub fn load_config(name: &str) -> Result<ScenarioConfig, CliError> {
    let path = resolve_scenario(name);
    let text = fs::read_to_string(&path).map_err(|source| CliError::Read { path: path.clone(), source })?;
    Ok(load_scenario(&text)?)
}

pub const EXPORT_KINDS: [&str; 5] = ["speeds", "ped_distances", "min_safety", "trajectory_xy", "steering"];

pub fn run_scenario(args: &RunArgs) -> Result<RunReport, CliError> {
    let mut config = load_config(&args.scenario)?;
    if let Some(seed) = args.seed {
        config.params.seed = seed;
    }
    for kind in &args.export {
        if !EXPORT_KINDS.contains(&kind.as_str()) {
            return Err(CliError::UnknownKind(kind.clone()));
        }
    }
    let started = Instant::now();
    let opts = SimOptions { anti_overshoot: args.anti_overshoot, until: args.until };
    let output = run(config.clone(), opts)?;
    let wall_ms = started.elapsed().as_millis();

    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let trace: Vec<TraceRecord> = output.trace.iter().map(round_record).collect();
    let trace_path = args.out.join("trace.csv");
    write_trace(&trace_path, &trace)?;
    let metrics = MetricsSummary::from_metrics(&compute_metrics(&trace, &config), trace.len());

    let mut files = vec![trace_path];
    for kind in &args.export {
        files.push(export_series(&trace, kind, &config, &args.out)?);
    }
    let log_path = args.out.join("events.csv");
    write_log(&log_path, &output.log)?;
    files.push(log_path);

    let name = if config.name.is_empty() { args.scenario.clone() } else { config.name.clone() };
    let doc = SummaryDoc {
        scenario: &name,
        seed: config.params.seed,
        horizon: fmt_num(opts.until.map_or(config.params.horizon, |u| u.min(config.params.horizon))),
        anti_overshoot: args.anti_overshoot,
        wall_ms,
        metrics: &metrics,
        events: output.log.iter().map(format_event).collect(),
    };
    let summary_path = args.out.join("summary.toml");
    let text = toml::to_string(&doc).expect("summary serializes");
    fs::write(&summary_path, text).map_err(io_err(&summary_path))?;
    files.push(summary_path);

    Ok(RunReport { scenario: name, seed: config.params.seed, wall_ms, metrics, files })
}

fn format_event(e: &LogEvent) -> String {
    match e.vehicle {
        Some(v) => format!("t={} vehicle {}: {}", fmt_num(e.t), v, e.message),
        None => format!("t={}: {}", fmt_num(e.t), e.message),
    }
}

fn write_log(path: &Path, log: &[LogEvent]) -> Result<(), CliError> {
    let mut out = String::from("t,vehicle_id,event\n");
    for e in log {
        let id = e.vehicle.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},\"{}\"\n", fmt_num(e.t), id, e.message.replace('"', "'")));
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Writes one plot-ready columnar file for `kind` into `dir`.
pub fn export_series(
    trace: &[TraceRecord],
    kind: &str,
    config: &ScenarioConfig,
    dir: &Path,
) -> Result<PathBuf, CliError> {
    let mut out: Vec<String> = Vec::new();
    match kind {
        "speeds" => {
            out.push("t,vehicle_id,v".into());
            out.extend(trace.iter().map(|r| format!("{},{},{}", fmt_num(r.t), r.vehicle, fmt_num(r.v))));
        }
        "ped_distances" => {
            out.push("t,vehicle_id,distance,b5".into());
            for r in trace {
                let Some(ped) = config.pedestrian.sample(r.t) else {
                    continue;
                };
                let s = BicycleState { x: r.x, y: r.y, theta: r.theta, v: r.v };
                let d = barycenter_distance(&s, &ped, config.params.sigma);
                let b5 = r.b5.map(fmt_num).unwrap_or_default();
                out.push(format!("{},{},{},{}", fmt_num(r.t), r.vehicle, fmt_num(d), b5));
            }
        }
        "min_safety" => {
            out.push("t,min_rear_end,min_lateral".into());
            let rear = rear_end_series(trace, config);
            let times: Vec<f64> = rear.iter().map(|(t, _)| *t).collect();
            let lateral = lateral_series(trace, config, &times);
            for ((t, rear), lat) in rear.into_iter().zip(lateral) {
                let f = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
                out.push(format!("{},{},{}", fmt_num(t), f(rear), f(lat)));
            }
        }
        "trajectory_xy" => {
            out.push("t,vehicle_id,x,y".into());
            out.extend(
                trace.iter().map(|r| format!("{},{},{},{}", fmt_num(r.t), r.vehicle, fmt_num(r.x), fmt_num(r.y))),
            );
        }
        "steering" => {
            out.push("t,vehicle_id,delta".into());
            out.extend(trace.iter().map(|r| format!("{},{},{}", fmt_num(r.t), r.vehicle, fmt_num(r.delta))));
        }
        other => return Err(CliError::UnknownKind(other.to_string())),
    }
    let path = dir.join(format!("{kind}.csv"));
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    for line in out {
        writeln!(f, "{line}").map_err(io_err(&path))?;
    }
    Ok(path)
}

/// Per-step minimum of the lateral barrier over crossing pairs that entered
/// their safe set.
fn lateral_series(trace: &[TraceRecord], config: &ScenarioConfig, times: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None; times.len()];
    for track in lateral_barriers(trace, config).iter().filter(|t| t.entered_safe()) {
        for &(t, b) in &track.values {
            let k = times.partition_point(|&s| s < t);
            if let Some(cell) = out.get_mut(k) {
                *cell = Some(cell.map_or(b, |m: f64| m.min(b)));
            }
        }
    }
    out
}

/// Recomputes summary metrics from a trace file on disk.
pub fn metrics_from_trace_file(path: &Path, config: &ScenarioConfig) -> Result<MetricsSummary, CliError> {
    let trace = read_trace(path)?;
    Ok(MetricsSummary::from_metrics(&compute_metrics(&trace, config), trace.len()))
}

pub fn lateral_pairs(trace: &[TraceRecord], config: &ScenarioConfig) -> usize {
    lateral_barriers(trace, config).len()
}
