//! Python bindings for `saferegion-core`.
//!
//! Points cross the boundary as `(x, y)` tuples. Runs return plain Python
//! containers so the module has no numpy dependency.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use saferegion_core::cbf::HalfPlane;
use saferegion_core::cli::{self, RunSummary};
use saferegion_core::geometry::{ConvexRegion, Vec2};
use saferegion_core::world::FormationSpec;
use saferegion_core::{nominal, qp, sim};

type Point = (f64, f64);

fn v(p: Point) -> Vec2 {
    Vec2::new(p.0, p.1)
}

fn t(p: Vec2) -> Point {
    (p.x, p.y)
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A closed convex region: a circle or a counter-clockwise polygon.
#[pyclass(name = "Region", module = "saferegion", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyRegion {
    inner: ConvexRegion,
}

#[pymethods]
impl PyRegion {
    #[staticmethod]
    fn circle(center: Point, radius: f64) -> PyResult<Self> {
        let inner = ConvexRegion::circle(v(center), radius).map_err(value_err)?;
        Ok(PyRegion { inner })
    }

    #[staticmethod]
    fn polygon(vertices: Vec<Point>) -> PyResult<Self> {
        let inner = ConvexRegion::polygon(vertices.into_iter().map(v).collect()).map_err(value_err)?;
        Ok(PyRegion { inner })
    }

    #[staticmethod]
    fn rectangle(min: Point, max: Point) -> PyResult<Self> {
        let inner = ConvexRegion::rectangle(v(min), v(max)).map_err(value_err)?;
        Ok(PyRegion { inner })
    }

    fn contains(&self, p: Point) -> bool {
        self.inner.contains(v(p))
    }

    fn project(&self, p: Point) -> Point {
        t(self.inner.project(v(p)))
    }

    fn closest_boundary_point(&self, p: Point) -> PyResult<Point> {
        self.inner.closest_boundary_point(v(p)).map(t).map_err(value_err)
    }

    /// Negative inside, positive outside.
    fn signed_distance(&self, p: Point) -> f64 {
        self.inner.signed_distance(v(p))
    }

    fn shrink(&self, delta: f64) -> PyResult<Self> {
        let inner = self.inner.shrink(delta).map_err(value_err)?;
        Ok(PyRegion { inner })
    }

    fn diameter(&self) -> f64 {
        self.inner.diameter()
    }

    #[pyo3(signature = (segments=64))]
    fn outline(&self, segments: usize) -> Vec<Point> {
        self.inner.outline(segments).into_iter().map(t).collect()
    }

    fn __repr__(&self) -> String {
        match &self.inner {
            ConvexRegion::Circle { center, radius } => format!("Region.circle(({}, {}), {})", center.x, center.y, radius),
            ConvexRegion::Polygon { vertices } => format!("Region.polygon({} vertices)", vertices.len()),
        }
    }
}

/// Pairwise formation potential between agents at `p_i` and `p_j`.
#[pyfunction]
fn potential(p_i: Point, p_j: Point, d_ij: Point, r: f64, mu: f64) -> PyResult<f64> {
    nominal::potential(v(p_i), v(p_j), v(d_ij), r, mu).map_err(value_err)
}

/// Gradient of [`potential`] with respect to `p_i`.
#[pyfunction]
fn potential_gradient(p_i: Point, p_j: Point, d_ij: Point, r: f64, mu: f64) -> PyResult<Point> {
    nominal::potential_gradient(v(p_i), v(p_j), v(d_ij), r, mu).map(t).map_err(value_err)
}

/// Minimise `|z - nominal|^2` subject to `offset + normal . z >= 0` for each
/// `(normal, offset)` pair and `|z|_inf <= u_max`. Falls back to the
/// least-violating point when infeasible.
#[pyfunction]
fn solve_qp<'py>(
    py: Python<'py>,
    nominal: Point,
    constraints: Vec<(Point, f64)>,
    u_max: f64,
) -> PyResult<Bound<'py, PyDict>> {
    if !(u_max > 0.0) {
        return Err(PyValueError::new_err("u_max must be positive"));
    }
    let planes = constraints.into_iter().map(|(n, b)| HalfPlane::new(b, v(n))).collect();
    let sol = qp::solve(&qp::QpProblem::new(v(nominal), planes, u_max));
    let out = PyDict::new(py);
    out.set_item("z", t(sol.z))?;
    out.set_item("status", sol.status.as_str())?;
    out.set_item("active", sol.active)?;
    out.set_item("slack", sol.slack)?;
    Ok(out)
}

/// `sum_{i != j} |p_i - p_j - d_ij|^2` against the shape given by `targets`.
#[pyfunction]
fn formation_error(positions: Vec<Point>, targets: Vec<Point>) -> PyResult<f64> {
    if positions.len() != targets.len() {
        return Err(PyValueError::new_err("positions and targets differ in length"));
    }
    let spec = FormationSpec {
        target_positions: targets.into_iter().map(v).collect(),
    };
    let p: Vec<Vec2> = positions.into_iter().map(v).collect();
    Ok(sim::formation_error(&p, &spec))
}

/// A scenario file parsed and ready to run.
#[pyclass(name = "Scenario", module = "saferegion", frozen)]
struct PyScenario {
    inner: saferegion_core::Scenario,
    source: String,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    #[pyo3(signature = (path, overrides=Vec::new()))]
    fn load(path: PathBuf, overrides: Vec<String>) -> PyResult<Self> {
        let inner = cli::load_scenario(&path, &overrides).map_err(value_err)?;
        Ok(PyScenario {
            inner,
            source: path.display().to_string(),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (text, overrides=Vec::new()))]
    fn from_toml(text: &str, overrides: Vec<String>) -> PyResult<Self> {
        let inner = cli::parse_scenario(text, "<string>", &overrides).map_err(value_err)?;
        Ok(PyScenario {
            inner,
            source: "<string>".into(),
        })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn agent_count(&self) -> usize {
        self.inner.agents.len()
    }

    #[getter]
    fn target(&self) -> PyRegion {
        PyRegion {
            inner: self.inner.target.clone(),
        }
    }

    #[getter]
    fn obstacles(&self) -> Vec<PyRegion> {
        self.inner.obstacles.iter().map(|o| PyRegion { inner: o.clone() }).collect()
    }

    #[getter]
    fn formation(&self) -> Vec<Point> {
        self.inner.formation.target_positions.iter().copied().map(t).collect()
    }

    /// `(field, message)` pairs; empty when the scenario is valid.
    fn violations(&self) -> Vec<(String, String)> {
        cli::validate(&self.inner, &self.source).violations
    }

    fn to_toml(&self) -> String {
        cli::scenario_to_toml(&self.inner)
    }

    /// Simulate the scenario. The GIL is released while stepping.
    fn run(&self, py: Python<'_>) -> PyResult<Run> {
        let report = cli::validate(&self.inner, &self.source);
        if !report.is_ok() {
            return Err(PyValueError::new_err(report.to_string()));
        }
        let scenario = &self.inner;
        let result = py.detach(|| sim::run(scenario));
        let (log, error) = match result {
            Ok(log) => (log, None),
            Err(f) => (f.log, Some(f.error.to_string())),
        };
        let summary = RunSummary::from_log(scenario, &log, error.is_some());
        Ok(Run { log, summary, error })
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?}, {} agents)", self.inner.name, self.inner.agents.len())
    }
}

/// Result of [`PyScenario::run`]; an aborted run keeps its partial log.
#[pyclass(module = "saferegion", frozen)]
struct Run {
    log: sim::TrajectoryLog,
    summary: RunSummary,
    error: Option<String>,
}

#[pymethods]
impl Run {
    /// Failure message when the run aborted early.
    #[getter]
    fn error(&self) -> Option<String> {
        self.error.clone()
    }

    #[getter]
    fn t_f(&self) -> Option<f64> {
        self.log.t_f
    }

    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = &self.summary;
        let out = PyDict::new(py);
        out.set_item("scenario", &s.scenario)?;
        out.set_item("steps", s.steps)?;
        out.set_item("final_time", s.final_time)?;
        out.set_item("initial_formation_error", s.initial_formation_error)?;
        out.set_item("final_formation_error", s.final_formation_error)?;
        out.set_item("t_f", s.t_f)?;
        out.set_item("min_pair_distance", s.min_pair_distance)?;
        out.set_item("min_h_external", s.min_h_external)?;
        out.set_item("min_h_internal", s.min_h_internal)?;
        out.set_item("relaxed_qp_count", s.relaxed_qp_count)?;
        out.set_item("edge_loss_count", s.edge_loss_count)?;
        out.set_item("aborted", s.aborted)?;
        Ok(out)
    }

    /// Per-step scalar series keyed by metric name.
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = &self.log.records;
        let col = |f: fn(&sim::StepRecord) -> f64| r.iter().map(f).collect::<Vec<_>>();
        let out = PyDict::new(py);
        out.set_item("t", col(|s| s.t))?;
        out.set_item("formation_error", col(|s| s.formation_error))?;
        out.set_item("min_pair_distance", col(|s| s.min_pair_distance))?;
        out.set_item("min_h_external", col(|s| s.min_h_external))?;
        out.set_item("min_h_internal", col(|s| s.min_h_internal))?;
        out.set_item("max_estimator_error", col(|s| s.max_estimator_error))?;
        out.set_item("connected", r.iter().map(|s| s.connected).collect::<Vec<_>>())?;
        out.set_item("edge_count", r.iter().map(|s| s.edges.len()).collect::<Vec<_>>())?;
        Ok(out)
    }

    /// `positions()[k][i]` is agent `i` at step `k`.
    fn positions(&self) -> Vec<Vec<Point>> {
        self.log
            .records
            .iter()
            .map(|s| s.agents.iter().map(|a| t(a.position)).collect())
            .collect()
    }

    /// `controls()[k][i]` is the filtered control agent `i` held after step `k`.
    fn controls(&self) -> Vec<Vec<Point>> {
        self.log
            .records
            .iter()
            .map(|s| s.agents.iter().map(|a| t(a.control)).collect())
            .collect()
    }

    /// `(t, kind, detail)` triples in time order.
    fn events(&self) -> Vec<(f64, String, String)> {
        self.log
            .events
            .iter()
            .map(|e| (e.t, e.kind.as_str().to_string(), e.detail.clone()))
            .collect()
    }

    /// Write the CSV and TOML bundle `saferegion run` produces, without plots.
    fn write(&self, py: Python<'_>, scenario: &PyScenario, out_dir: PathBuf) -> PyResult<Vec<String>> {
        let bundle = py
            .detach(|| cli::write_bundle(&scenario.inner, &self.log, &out_dir, self.error.is_some()))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let mut files = vec![bundle.trajectory, bundle.metrics, bundle.events];
        files.extend(bundle.plots);
        Ok(files.into_iter().map(|p| p.display().to_string()).collect())
    }

    fn __len__(&self) -> usize {
        self.log.records.len()
    }
}

#[pymodule]
fn saferegion(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRegion>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<Run>()?;
    m.add_function(wrap_pyfunction!(potential, m)?)?;
    m.add_function(wrap_pyfunction!(potential_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(solve_qp, m)?)?;
    m.add_function(wrap_pyfunction!(formation_error, m)?)?;
    Ok(())
}
