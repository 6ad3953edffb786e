//! Scenario files, overrides, output bundles and the subcommand bodies.
//!
//! Scenario schema (TOML, SI units):
//!
//! ```toml
//! name = "nominal"
//! duration = 40.0          # seconds
//! dt = 0.001
//! leaders = [0]
//! shrink_target = false    # leaders aim at the target shrunk by the formation extent
//!
//! [reference]              # mode = "zero" | "circular" | "constant"
//! mode = "circular"
//! v0 = 0.5
//! theta = 0.5
//!
//! [params]                 # c1..c5, eta, k0, k1, delta_in, delta_ex, u_max, r, [epsilon], [mu]
//! c1 = 15.0
//! # ...
//!
//! [target]                 # shape = "circle" (center, radius) | "polygon" (vertices, CCW)
//! shape = "circle"
//! center = [30.0, 0.0]
//! radius = 6.0
//!
//! [[obstacles]]
//! shape = "polygon"
//! vertices = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]
//!
//! formation = [[0.0, 0.0], [1.5, 1.0]]   # desired positions p*_i
//!
//! [[agents]]
//! position = [0.0, 0.0]
//! velocity = [0.0, 0.0]    # optional
//! gamma = [0.0, 0.0]       # optional, defaults to position
//! ```
//!
//! Overrides are `dotted.path=value` pairs. The value is read as a TOML value
//! when it parses as one and as a string otherwise; `agents.2.position=[1,0]`
//! indexes arrays.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plot;
use crate::qp::QpStatus;
use crate::sim::{run, EventKind, TrajectoryLog};
use crate::world::Scenario;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const SUMMARY_FILE: &str = "summary.toml";

pub const TRAJECTORY_COLUMNS: [&str; 12] = [
    "t",
    "agent_id",
    "px",
    "py",
    "vx",
    "vy",
    "ux",
    "uy",
    "nominal_ux",
    "nominal_uy",
    "qp_status",
    "qp_slack",
];
pub const METRICS_COLUMNS: [&str; 8] = [
    "t",
    "e_f",
    "min_pair_dist",
    "min_h_ext",
    "min_h_int",
    "connected",
    "num_edges",
    "all_leaders_in_region",
];
pub const EVENTS_COLUMNS: [&str; 3] = ["t", "kind", "detail"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: parse error: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Validation(ValidationReport),
    #[error("simulation aborted: {detail}")]
    Runtime { detail: String, bundle: Option<OutputBundle> },
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error("{0}")]
    Data(String),
}

impl CliError {
    /// 0 success, 1 validation failure, 2 runtime abort, 3 I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation(_) => 1,
            CliError::Runtime { .. } => 2,
            CliError::Io { .. } | CliError::Data(_) => 3,
        }
    }

    fn io(context: impl fmt::Display) -> impl FnOnce(io::Error) -> CliError {
        let context = context.to_string();
        move |source| CliError::Io { context, source }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::Io {
                context: "csv".into(),
                source,
            },
            other => CliError::Data(format!("csv: {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub source: String,
    /// `(field path, message)`.
    pub violations: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (field, msg) in &self.violations {
            writeln!(f, "{}: {field}: {msg}", self.source)?;
        }
        for w in &self.warnings {
            writeln!(f, "{}: warning: {w}", self.source)?;
        }
        write!(f, "{}: {} violation(s)", self.source, self.violations.len())
    }
}

/// Values derived from a log; written as `summary.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub steps: usize,
    pub final_time: f64,
    pub initial_formation_error: f64,
    pub final_formation_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_f: Option<f64>,
    pub min_pair_distance: f64,
    pub min_h_external: f64,
    pub min_h_internal: f64,
    pub relaxed_qp_count: usize,
    pub edge_loss_count: usize,
    pub aborted: bool,
}

impl RunSummary {
    pub fn from_log(scenario: &Scenario, log: &TrajectoryLog, aborted: bool) -> RunSummary {
        let fold = |f: fn(&crate::sim::StepRecord) -> f64| log.records.iter().map(f).fold(f64::INFINITY, f64::min);
        RunSummary {
            scenario: scenario.name.clone(),
            steps: log.records.len(),
            final_time: log.last().map_or(0.0, |r| r.t),
            initial_formation_error: log.records.first().map_or(0.0, |r| r.formation_error),
            final_formation_error: log.last().map_or(0.0, |r| r.formation_error),
            t_f: log.t_f,
            min_pair_distance: fold(|r| r.min_pair_distance),
            min_h_external: fold(|r| r.min_h_external),
            min_h_internal: fold(|r| r.min_h_internal),
            relaxed_qp_count: log.count(EventKind::RelaxedQp),
            edge_loss_count: log.count(EventKind::EdgeLoss),
            aborted,
        }
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t_f = self.t_f.map_or("never".to_string(), |t| format!("{t:.3}"));
        write!(
            f,
            "{}: {} records to t={:.3}; e_f {:.4e} -> {:.4e}; t_f {t_f}; min dist {:.4}; min h_ext {:.4}; min h_int {:.4}; relaxed QPs {}",
            self.scenario,
            self.steps,
            self.final_time,
            self.initial_formation_error,
            self.final_formation_error,
            self.min_pair_distance,
            self.min_h_external,
            self.min_h_internal,
            self.relaxed_qp_count,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputBundle {
    pub dir: PathBuf,
    pub trajectory: PathBuf,
    pub metrics: PathBuf,
    pub events: PathBuf,
    pub plots: Vec<PathBuf>,
    pub summary: RunSummary,
}

/// Sets `path` (dot separated, numeric segments index arrays) in `root`.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<(), String> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override `{assignment}` is not key=value"))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = parse_value(raw);
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(format!("override `{assignment}` has an empty path segment"));
    }
    let mut node = root;
    for (depth, seg) in segments.iter().enumerate() {
        let last = depth + 1 == segments.len();
        node = match node {
            toml::Value::Table(table) => {
                if last {
                    table.insert(seg.to_string(), value);
                    return Ok(());
                }
                table
                    .entry(seg.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::map::Map::new()))
            }
            toml::Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| format!("override `{path}`: `{seg}` does not index an array"))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| format!("override `{path}`: index {idx} out of range (len {len})"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("override `{path}`: `{seg}` is inside a scalar")),
        };
    }
    unreachable!("loop returns on the last segment")
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

pub fn parse_scenario(text: &str, source: &str, overrides: &[String]) -> Result<Scenario, CliError> {
    let parse_err = |message: String| CliError::Parse {
        path: source.to_string(),
        message,
    };
    let mut value: toml::Value = toml::from_str::<toml::Table>(text)
        .map(toml::Value::Table)
        .map_err(|e| parse_err(e.to_string()))?;
    for o in overrides {
        apply_override(&mut value, o).map_err(parse_err)?;
    }
    let text = toml::to_string(&value).map_err(|e| parse_err(e.to_string()))?;
    toml::from_str(&text).map_err(|e| parse_err(e.to_string()))
}

pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path.display()))?;
    parse_scenario(&text, &path.display().to_string(), overrides)
}

pub fn scenario_to_toml(scenario: &Scenario) -> String {
    toml::to_string(scenario).expect("scenario serializes")
}

pub fn validate(scenario: &Scenario, source: &str) -> ValidationReport {
    let mut warnings = Vec::new();
    let p = &scenario.params;
    if p.eta * scenario.dt > 0.5 {
        warnings.push(format!(
            "eta*dt = {} exceeds 0.5; the estimator integration may be inaccurate",
            p.eta * scenario.dt
        ));
    }
    ValidationReport {
        source: source.to_string(),
        violations: scenario.violations(),
        warnings,
    }
}

pub fn cmd_check(path: &Path, overrides: &[String]) -> Result<ValidationReport, CliError> {
    let scenario = load_scenario(path, overrides)?;
    let report = validate(&scenario, &path.display().to_string());
    if report.is_ok() {
        Ok(report)
    } else {
        Err(CliError::Validation(report))
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x}")
}

/// Writes the three tables, the resolved scenario and the summary.
pub fn write_bundle(
    scenario: &Scenario,
    log: &TrajectoryLog,
    out_dir: &Path,
    aborted: bool,
) -> Result<OutputBundle, CliError> {
    fs::create_dir_all(out_dir).map_err(CliError::io(out_dir.display()))?;
    let trajectory = out_dir.join(TRAJECTORY_FILE);
    let metrics = out_dir.join(METRICS_FILE);
    let events = out_dir.join(EVENTS_FILE);

    let mut w = csv::Writer::from_path(&trajectory)?;
    w.write_record(TRAJECTORY_COLUMNS)?;
    for rec in &log.records {
        for (id, a) in rec.agents.iter().enumerate() {
            w.write_record([
                fmt_f(rec.t),
                id.to_string(),
                fmt_f(a.position.x),
                fmt_f(a.position.y),
                fmt_f(a.velocity.x),
                fmt_f(a.velocity.y),
                fmt_f(a.control.x),
                fmt_f(a.control.y),
                fmt_f(a.nominal.x),
                fmt_f(a.nominal.y),
                a.status.as_str().to_string(),
                fmt_f(a.slack),
            ])?;
        }
    }
    w.flush().map_err(CliError::io(trajectory.display()))?;

    let mut w = csv::Writer::from_path(&metrics)?;
    w.write_record(METRICS_COLUMNS)?;
    for rec in &log.records {
        w.write_record([
            fmt_f(rec.t),
            fmt_f(rec.formation_error),
            fmt_f(rec.min_pair_distance),
            fmt_f(rec.min_h_external),
            fmt_f(rec.min_h_internal),
            rec.connected.to_string(),
            rec.edges.len().to_string(),
            rec.all_leaders_in_region.to_string(),
        ])?;
    }
    w.flush().map_err(CliError::io(metrics.display()))?;

    let mut w = csv::Writer::from_path(&events)?;
    w.write_record(EVENTS_COLUMNS)?;
    for e in &log.events {
        w.write_record([fmt_f(e.t), e.kind.as_str().to_string(), e.detail.clone()])?;
    }
    w.flush().map_err(CliError::io(events.display()))?;

    let scenario_path = out_dir.join(SCENARIO_FILE);
    fs::write(&scenario_path, scenario_to_toml(scenario)).map_err(CliError::io(scenario_path.display()))?;
    let summary = RunSummary::from_log(scenario, log, aborted);
    let summary_path = out_dir.join(SUMMARY_FILE);
    let summary_text = toml::to_string(&summary).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(&summary_path, summary_text).map_err(CliError::io(summary_path.display()))?;

    Ok(OutputBundle {
        dir: out_dir.to_path_buf(),
        trajectory,
        metrics,
        events,
        plots: Vec::new(),
        summary,
    })
}

/// Validates, runs and writes the bundle. Aborted runs still write the
/// partial tables before reporting the failure.
pub fn run_scenario(scenario: &Scenario, source: &str, out_dir: &Path) -> Result<OutputBundle, CliError> {
    let report = validate(scenario, source);
    if !report.is_ok() {
        return Err(CliError::Validation(report));
    }
    match run(scenario) {
        Ok(log) => write_bundle(scenario, &log, out_dir, false),
        Err(failure) => {
            let bundle = write_bundle(scenario, &failure.log, out_dir, true)?;
            Err(CliError::Runtime {
                detail: failure.error.to_string(),
                bundle: Some(bundle),
            })
        }
    }
}

pub fn cmd_run(path: &Path, out_dir: &Path, overrides: &[String]) -> Result<OutputBundle, CliError> {
    let scenario = load_scenario(path, overrides)?;
    run_scenario(&scenario, &path.display().to_string(), out_dir)
}

/// Renders the five figures of a bundle directory.
pub fn cmd_plot(bundle_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let data = plot::BundleData::load(bundle_dir)?;
    plot::render_all(&data, bundle_dir)
}

/// Runs every scenario into `out_dir/<file stem>` on a worker pool.
pub fn cmd_batch(
    paths: &[PathBuf],
    out_dir: &Path,
    overrides: &[String],
    with_plots: bool,
) -> Vec<(PathBuf, Result<OutputBundle, CliError>)> {
    paths
        .par_iter()
        .map(|path| {
            let stem = path.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned());
            let dir = out_dir.join(stem);
            let result = cmd_run(path, &dir, overrides).and_then(|mut bundle| {
                if with_plots {
                    bundle.plots = cmd_plot(&dir)?;
                }
                Ok(bundle)
            });
            (path.clone(), result)
        })
        .collect()
}

/// Count of steps whose applied control differs from the nominal one.
pub fn filtered_steps(log: &TrajectoryLog, from_t: f64) -> (usize, usize) {
    let mut filtered = 0;
    let mut total = 0;
    for rec in log.records.iter().filter(|r| r.t >= from_t) {
        for a in &rec.agents {
            total += 1;
            if a.control != a.nominal || a.status == QpStatus::Relaxed {
                filtered += 1;
            }
        }
    }
    (filtered, total)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "pair"
duration = 0.01
dt = 0.001
leaders = [0]
formation = [[0.0, 0.0], [1.2, 0.0]]

[reference]
mode = "zero"

[params]
c1 = 15.0
c2 = 0.2
c3 = 1.5
c4 = 5.0
c5 = 4.0
eta = 100.0
k0 = 1.0
k1 = 5.0
delta_in = 0.1
delta_ex = 0.5
u_max = 5.0
r = 4.0

[target]
shape = "circle"
center = [10.0, 0.0]
radius = 2.0

[[agents]]
position = [0.0, 0.0]

[[agents]]
position = [1.0, 0.0]
"#;

    #[test]
    fn override_paths() {
        let mut v: toml::Value = toml::from_str::<toml::Table>(MINIMAL).map(toml::Value::Table).unwrap();
        apply_override(&mut v, "params.c2=0.06").unwrap();
        apply_override(&mut v, "agents.1.position=[2.0, 0.5]").unwrap();
        apply_override(&mut v, "name=renamed").unwrap();
        assert_eq!(v["params"]["c2"].as_float(), Some(0.06));
        assert_eq!(v["agents"][1]["position"][1].as_float(), Some(0.5));
        assert_eq!(v["name"].as_str(), Some("renamed"));
        assert!(apply_override(&mut v, "agents.7.position=[0,0]").is_err());
        assert!(apply_override(&mut v, "name.x=1").is_err());
        assert!(apply_override(&mut v, "no_equals").is_err());
    }

    #[test]
    fn integer_override_is_accepted_for_float_fields() {
        let sc = parse_scenario(MINIMAL, "mem", &["duration=0".into(), "params.c1=2".into()]).unwrap();
        assert_eq!(sc.duration, 0.0);
        assert_eq!(sc.params.c1, 2.0);
    }

    #[test]
    fn scenario_round_trip() {
        let sc = parse_scenario(MINIMAL, "mem", &[]).unwrap();
        let again = parse_scenario(&scenario_to_toml(&sc), "mem", &[]).unwrap();
        assert_eq!(sc, again);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_scenario("name = \n", "bad.toml", &[]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("line 1"), "{err}");
        let err = parse_scenario("bogus = 1\n", "bad.toml", &[]).unwrap_err();
        assert!(matches!(err, CliError::Parse { .. }));
    }

    #[test]
    fn check_reports_violations() {
        let sc = parse_scenario(MINIMAL, "mem", &["params.k1=1".into()]).unwrap();
        let report = validate(&sc, "mem");
        assert!(report.violations.iter().any(|(f, m)| f == "params.k1" && m.contains("k1² ≥ 4k0")));
        let sc = parse_scenario(MINIMAL, "mem", &["agents.1.position=[9.0, 0.0]".into()]).unwrap();
        let report = validate(&sc, "mem");
        assert!(report.violations.iter().any(|(_, m)| m.contains("initial network connected")));
        let sc = parse_scenario(MINIMAL, "mem", &["dt=0.01".into()]).unwrap();
        assert!(validate(&sc, "mem").warnings.len() == 1);
        let near = r#"obstacles=[{shape = "circle", center = [0.0, -0.6], radius = 0.3}]"#;
        let sc = parse_scenario(MINIMAL, "mem", &[near.into()]).unwrap();
        let report = validate(&sc, "mem");
        assert!(report.violations.iter().any(|(f, m)| f == "agents[0].position" && m.contains("delta_ex")), "{report}");
    }

    #[test]
    fn duration_zero_gives_one_row_per_table() {
        let dir = tempfile::tempdir().unwrap();
        let sc = parse_scenario(MINIMAL, "mem", &["duration=0".into()]).unwrap();
        let bundle = run_scenario(&sc, "mem", dir.path()).unwrap();
        let metrics = fs::read_to_string(&bundle.metrics).unwrap();
        assert_eq!(metrics.lines().count(), 2);
        let traj = fs::read_to_string(&bundle.trajectory).unwrap();
        assert_eq!(traj.lines().count(), 3);
        assert_eq!(traj.lines().next().unwrap(), TRAJECTORY_COLUMNS.join(","));
        let plots = cmd_plot(dir.path()).unwrap();
        assert_eq!(plots.len(), 5);
    }

    #[test]
    fn runs_are_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let sc = parse_scenario(MINIMAL, "mem", &[]).unwrap();
        run_scenario(&sc, "mem", a.path()).unwrap();
        run_scenario(&sc, "mem", b.path()).unwrap();
        for f in [TRAJECTORY_FILE, METRICS_FILE, EVENTS_FILE, SUMMARY_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn missing_tables_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_plot(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
