//! SVG figures rendered from a run bundle.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::Deserialize;

use crate::cli::{CliError, METRICS_FILE, SCENARIO_FILE, TRAJECTORY_FILE};
use crate::geometry::{ConvexRegion, Vec2};
use crate::world::{NeighborGraph, Scenario};

pub const PLOT_FILES: [&str; 5] = [
    "trajectories.svg",
    "formation_error.svg",
    "min_distance.svg",
    "velocity.svg",
    "control.svg",
];

const SIZE: (u32, u32) = (900, 600);

#[derive(Debug, Clone, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub agent_id: usize,
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
    pub ux: f64,
    pub uy: f64,
    pub nominal_ux: f64,
    pub nominal_uy: f64,
    pub qp_status: String,
    pub qp_slack: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MetricsRow {
    pub t: f64,
    pub e_f: f64,
    pub min_pair_dist: f64,
    pub min_h_ext: f64,
    pub min_h_int: f64,
    pub connected: bool,
    pub num_edges: usize,
    pub all_leaders_in_region: bool,
}

#[derive(Debug, Clone)]
pub struct BundleData {
    pub scenario: Scenario,
    /// Rows grouped by agent id, in time order.
    pub agents: BTreeMap<usize, Vec<TrajectoryRow>>,
    pub metrics: Vec<MetricsRow>,
}

fn read_table<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            context: format!("missing table {}", path.display()),
            source,
        },
        other => CliError::Data(format!("{}: {other:?}", path.display())),
    })?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

impl BundleData {
    pub fn load(dir: &Path) -> Result<BundleData, CliError> {
        let scenario = crate::cli::load_scenario(&dir.join(SCENARIO_FILE), &[]).map_err(|e| match e {
            CliError::Parse { path, message } => CliError::Data(format!("{path}: {message}")),
            other => other,
        })?;
        let mut agents: BTreeMap<usize, Vec<TrajectoryRow>> = BTreeMap::new();
        for row in read_table::<TrajectoryRow>(&dir.join(TRAJECTORY_FILE))? {
            agents.entry(row.agent_id).or_default().push(row);
        }
        let metrics = read_table(&dir.join(METRICS_FILE))?;
        Ok(BundleData {
            scenario,
            agents,
            metrics,
        })
    }
}

fn draw_err<E: std::fmt::Display>(file: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", file.display()))
}

/// Range with padding; degenerate and non-finite inputs get a unit span.
fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo - pad, hi + pad)
    }
}

fn palette(i: usize) -> RGBColor {
    let (r, g, b) = Palette99::pick(i).rgb();
    RGBColor(r, g, b)
}

fn lighten(c: RGBColor) -> RGBColor {
    let f = |v: u8| ((v as u16 + 255) / 2) as u8;
    RGBColor(f(c.0), f(c.1), f(c.2))
}

fn points(region: &ConvexRegion) -> Vec<(f64, f64)> {
    region.outline(96).into_iter().map(|p| (p.x, p.y)).collect()
}

fn render_trajectories(data: &BundleData, file: &Path) -> Result<(), CliError> {
    let sc = &data.scenario;
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for rows in data.agents.values() {
        xs.extend(rows.iter().map(|r| r.px));
        ys.extend(rows.iter().map(|r| r.py));
    }
    for region in std::iter::once(&sc.target).chain(&sc.obstacles) {
        for (x, y) in points(region) {
            xs.push(x);
            ys.push(y);
        }
    }
    let (mut x0, mut x1) = span(xs.into_iter());
    let (mut y0, mut y1) = span(ys.into_iter());
    // Equal axis scale.
    let aspect = SIZE.0 as f64 / SIZE.1 as f64;
    let (w, h) = (x1 - x0, y1 - y0);
    if w / h > aspect {
        let grow = (w / aspect - h) / 2.0;
        y0 -= grow;
        y1 += grow;
    } else {
        let grow = (h * aspect - w) / 2.0;
        x0 -= grow;
        x1 += grow;
    }

    let root = SVGBackend::new(file, SIZE).into_drawing_area();
    let err = draw_err(file);
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{}: trajectories", sc.name), ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(50)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(&err)?;
    chart.configure_mesh().x_desc("x [m]").y_desc("y [m]").draw().map_err(&err)?;

    let green = RGBColor(30, 140, 60);
    chart
        .draw_series(std::iter::once(Polygon::new(points(&sc.target), green.mix(0.15).filled())))
        .map_err(&err)?
        .label("target")
        .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], green.mix(0.3).filled()));
    chart
        .draw_series(std::iter::once(PathElement::new(points(&sc.target), green.stroke_width(2))))
        .map_err(&err)?;
    for (k, obstacle) in sc.obstacles.iter().enumerate() {
        let series = chart
            .draw_series(std::iter::once(Polygon::new(points(obstacle), RGBColor(60, 60, 60).mix(0.6).filled())))
            .map_err(&err)?;
        if k == 0 {
            series
                .label("unsafe region")
                .legend(|(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], RGBColor(60, 60, 60).filled()));
        }
    }

    for (&id, rows) in &data.agents {
        let color = palette(id);
        let leader = sc.is_leader(id);
        let label = if leader { format!("agent {id} (leader)") } else { format!("agent {id}") };
        chart
            .draw_series(LineSeries::new(rows.iter().map(|r| (r.px, r.py)), color.stroke_width(if leader { 2 } else { 1 })))
            .map_err(&err)?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 15, y)], color.stroke_width(2)));
        if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
            chart
                .draw_series([
                    Circle::new((first.px, first.py), 4, color.stroke_width(1)),
                    Circle::new((last.px, last.py), 4, color.filled()),
                ])
                .map_err(&err)?;
        }
    }

    // Neighbor graph at the final time.
    let finals: Vec<Vec2> = data
        .agents
        .values()
        .filter_map(|rows| rows.last().map(|r| Vec2::new(r.px, r.py)))
        .collect();
    if finals.len() == data.agents.len() && !finals.is_empty() {
        let graph = NeighborGraph::initial(&finals, sc.params.r, sc.params.epsilon());
        chart
            .draw_series(graph.edges().map(|(i, j)| {
                PathElement::new(vec![(finals[i].x, finals[i].y), (finals[j].x, finals[j].y)], BLACK.stroke_width(1))
            }))
            .map_err(&err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(())
}

/// Line chart of one or more `(label, points)` series against time.
fn render_lines(file: &Path, title: &str, y_desc: &str, series: &[(String, Vec<(f64, f64)>, RGBColor)]) -> Result<(), CliError> {
    let err = draw_err(file);
    let (x0, x1) = span(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let (y0, y1) = span(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let root = SVGBackend::new(file, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(&err)?;
    chart.configure_mesh().x_desc("t [s]").y_desc(y_desc).draw().map_err(&err)?;
    for (label, pts, color) in series {
        let color = *color;
        let finite: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.1.is_finite()).collect();
        if finite.len() == 1 {
            chart.draw_series(std::iter::once(Circle::new(finite[0], 3, color.filled()))).map_err(&err)?;
        }
        chart
            .draw_series(LineSeries::new(finite, color.stroke_width(1)))
            .map_err(&err)?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 15, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(())
}

fn per_axis(data: &BundleData, pick: fn(&TrajectoryRow) -> (f64, f64), name: &str) -> Vec<(String, Vec<(f64, f64)>, RGBColor)> {
    let mut out = Vec::new();
    for (&id, rows) in &data.agents {
        let color = palette(id);
        out.push((format!("{name}x agent {id}"), rows.iter().map(|r| (r.t, pick(r).0)).collect(), color));
        out.push((format!("{name}y agent {id}"), rows.iter().map(|r| (r.t, pick(r).1)).collect(), lighten(color)));
    }
    out
}

pub fn render_all(data: &BundleData, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let files: Vec<PathBuf> = PLOT_FILES.iter().map(|f| dir.join(f)).collect();
    render_trajectories(data, &files[0])?;
    let name = &data.scenario.name;
    let blue = RGBColor(20, 60, 180);
    render_lines(
        &files[1],
        &format!("{name}: formation error"),
        "e_f",
        &[("e_f".into(), data.metrics.iter().map(|m| (m.t, m.e_f)).collect(), blue)],
    )?;
    let delta_in = data.scenario.params.delta_in;
    let t_range: Vec<f64> = data.metrics.iter().map(|m| m.t).collect();
    let first = t_range.first().copied().unwrap_or(0.0);
    let last = t_range.last().copied().unwrap_or(0.0);
    render_lines(
        &files[2],
        &format!("{name}: minimum inter-agent distance"),
        "distance [m]",
        &[
            ("min distance".into(), data.metrics.iter().map(|m| (m.t, m.min_pair_dist)).collect(), blue),
            ("delta_in".into(), vec![(first, delta_in), (last, delta_in)], RED),
        ],
    )?;
    render_lines(
        &files[3],
        &format!("{name}: velocity"),
        "v [m/s]",
        &per_axis(data, |r| (r.vx, r.vy), "v"),
    )?;
    render_lines(
        &files[4],
        &format!("{name}: applied control"),
        "u [m/s^2]",
        &per_axis(data, |r| (r.ux, r.uy), "u"),
    )?;
    Ok(files)
}
