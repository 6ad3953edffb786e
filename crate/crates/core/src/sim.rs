//! Closed-loop simulation: neighbor update, per-agent nominal control and
//! safety filter from a shared snapshot, then zero-order-hold integration of
//! positions, velocities and both auxiliary states with a classical
//! four-stage Runge-Kutta step.

use std::fmt;

use thiserror::Error;

use crate::cbf::{self, barrier, external_constraint, internal_constraint, CbfConstraint, ConstraintKind};
use crate::geometry::{ConvexRegion, Vec2};
use crate::nominal::{self, gamma_derivative, nominal_control, simplified_control, velocity_estimate, NeighborData, NominalBreakdown};
use crate::qp::{self, QpProblem, QpStatus};
use crate::world::{reference_velocity, sync_estimator_state, update_neighbors, FormationSpec, Scenario, World};

/// Allowance on barrier margins for inter-sample excursions.
pub const TOL_DISC: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    EdgeGain,
    EdgeLoss,
    RegionEntry,
    RelaxedQp,
    Collision,
    ConnectivityLoss,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::EdgeGain => "edge-gain",
            EventKind::EdgeLoss => "edge-loss",
            EventKind::RegionEntry => "region-entry",
            EventKind::RelaxedQp => "relaxed-qp",
            EventKind::Collision => "collision",
            EventKind::ConnectivityLoss => "connectivity-loss",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub detail: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("t={t}: agent {agent} entered unsafe region {obstacle}")]
    ObstacleCollision { t: f64, agent: usize, obstacle: usize },
    #[error("t={t}: agents {i} and {j} are {distance} apart, below the safe distance")]
    AgentCollision { t: f64, i: usize, j: usize, distance: f64 },
    #[error("t={t}: neighbor graph disconnected")]
    ConnectivityLoss { t: f64 },
    #[error("t={t}: {source}")]
    Nominal { t: f64, source: nominal::NominalError },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

impl SimError {
    pub fn event_kind(&self) -> EventKind {
        match self {
            SimError::ConnectivityLoss { .. } | SimError::Nominal { .. } => EventKind::ConnectivityLoss,
            _ => EventKind::Collision,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Filtered control held over the following interval.
    pub control: Vec2,
    pub nominal: Vec2,
    pub status: QpStatus,
    pub slack: f64,
    /// Whether the nominal control already met every constraint.
    pub nominal_feasible: bool,
    pub in_region: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub agents: Vec<AgentRecord>,
    pub min_pair_distance: f64,
    pub min_h_external: f64,
    pub min_h_internal: f64,
    pub formation_error: f64,
    pub edges: Vec<(usize, usize)>,
    pub connected: bool,
    pub all_leaders_in_region: bool,
    /// Time all leaders first stood inside the target, once known.
    pub t_f: Option<f64>,
    /// Largest `|v_hat_ij - (v_i - v_j)|` over live edges.
    pub max_estimator_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub records: Vec<StepRecord>,
    pub events: Vec<Event>,
    pub t_f: Option<f64>,
}

impl TrajectoryLog {
    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }
}

/// A run that aborted; `log` holds everything recorded up to the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: SimError,
    pub log: TrajectoryLog,
}

/// `sum_{i != j} |p_i - p_j - d_ij|^2` over ordered pairs.
pub fn formation_error(positions: &[Vec2], spec: &FormationSpec) -> f64 {
    let mut total = 0.0;
    for i in 0..positions.len() {
        for j in 0..positions.len() {
            if i != j {
                total += (positions[i] - positions[j] - spec.displacement(i, j)).norm_sq();
            }
        }
    }
    total
}

/// Smallest pairwise distance, smallest obstacle barrier over sensed
/// obstacles, smallest neighbor barrier. Empty categories give `+inf`.
pub fn min_margins(world: &World, obstacles: &[ConvexRegion], params: &crate::world::ControllerParams) -> (f64, f64, f64) {
    let positions = world.positions();
    let mut min_dist = f64::INFINITY;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            min_dist = min_dist.min((positions[i] - positions[j]).norm());
        }
    }
    let mut min_ext = f64::INFINITY;
    for &p in &positions {
        for obstacle in obstacles {
            let s = obstacle.project(p);
            if (p - s).norm() < params.r {
                min_ext = min_ext.min(barrier(p, s, params.delta_ex));
            }
        }
    }
    let mut min_int = f64::INFINITY;
    for (i, j) in world.graph.edges() {
        min_int = min_int.min(barrier(positions[i], positions[j], params.delta_in));
    }
    (min_dist, min_ext, min_int)
}

/// Per-step result of [`Dynamics::step`].
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub world: World,
    pub record: StepRecord,
    pub events: Vec<Event>,
}

/// Scenario-level constants shared by every step.
#[derive(Debug, Clone)]
pub struct Dynamics<'a> {
    pub scenario: &'a Scenario,
    leader_target: ConvexRegion,
}

struct Evaluation {
    world: World,
    controls: Vec<Vec2>,
    record: StepRecord,
    events: Vec<Event>,
}

impl<'a> Dynamics<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self, SimError> {
        let leader_target = scenario
            .leader_target()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        Ok(Dynamics { scenario, leader_target })
    }

    /// Region agent `id` measures its own membership against.
    fn own_target(&self, world: &World, id: usize) -> &ConvexRegion {
        if world.agents[id].is_leader {
            &self.leader_target
        } else {
            &self.scenario.target
        }
    }

    /// Neighbor update, safety checks, controls and metrics at time `t`.
    fn evaluate(&self, world: &World, t: f64) -> Result<Evaluation, SimError> {
        let sc = self.scenario;
        let params = &sc.params;
        let mut events = Vec::new();

        let positions = world.positions();
        let graph = update_neighbors(&world.graph, &positions);
        for (i, j) in world.graph.edges().filter(|&(i, j)| !graph.has_edge(i, j)) {
            events.push(Event {
                t,
                kind: EventKind::EdgeLoss,
                detail: format!("{i}-{j}"),
            });
        }
        for (i, j) in graph.edges().filter(|&(i, j)| !world.graph.has_edge(i, j)) {
            events.push(Event {
                t,
                kind: EventKind::EdgeGain,
                detail: format!("{i}-{j}"),
            });
        }
        let agents = world
            .agents
            .iter()
            .map(|a| sync_estimator_state(a, &graph.neighbors(a.id), &positions))
            .collect();
        let world = World { agents, graph };

        if !world.graph.is_connected() {
            return Err(SimError::ConnectivityLoss { t });
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                let distance = (positions[i] - positions[j]).norm();
                if distance < params.delta_in - TOL_DISC {
                    return Err(SimError::AgentCollision { t, i, j, distance });
                }
            }
        }

        let (_, v_d_dot) = reference_velocity(&sc.reference, t);
        let mut controls = Vec::with_capacity(world.agents.len());
        let mut agent_records = Vec::with_capacity(world.agents.len());
        for agent in &world.agents {
            let i = agent.id;
            let sensed = cbf::sensed_obstacles(agent.position, &sc.obstacles, params.r).map_err(|e| {
                SimError::ObstacleCollision {
                    t,
                    agent: i,
                    obstacle: e.obstacle,
                }
            })?;
            let neighbor_data: Vec<NeighborData> = agent
                .phi
                .iter()
                .map(|(&j, &phi)| NeighborData {
                    position: positions[j],
                    phi,
                    displacement: sc.formation.displacement(i, j),
                })
                .collect();
            let own_target = self.own_target(&world, i);
            let breakdown = if sc.reference.tracking() {
                nominal_control(agent, &neighbor_data, own_target, params, v_d_dot)
            } else {
                simplified_control(agent, &neighbor_data, own_target, params)
            };
            let NominalBreakdown { total: u_nom, .. } = breakdown.map_err(|source| SimError::Nominal { t, source })?;

            let mut constraints: Vec<CbfConstraint> = sensed
                .iter()
                .map(|&(k, s)| CbfConstraint {
                    agent: i,
                    kind: ConstraintKind::Obstacle(k),
                    plane: external_constraint(agent.position, agent.velocity, s, params.k0, params.k1, params.delta_ex),
                })
                .collect();
            constraints.extend(neighbor_data.iter().zip(agent.phi.keys()).map(|(n, &j)| {
                let v_hat = velocity_estimate(n.phi, agent.position, n.position, params.eta);
                CbfConstraint {
                    agent: i,
                    kind: ConstraintKind::Neighbor(j),
                    plane: internal_constraint(agent.position, n.position, v_hat, params),
                }
            }));
            let problem = QpProblem::new(u_nom, constraints.iter().map(|c| c.plane).collect(), params.u_max);
            let nominal_feasible = problem.planes().iter().all(|c| c.margin(u_nom) >= 0.0);
            let solution = qp::solve(&problem);
            if solution.status == QpStatus::Relaxed {
                events.push(Event {
                    t,
                    kind: EventKind::RelaxedQp,
                    detail: format!("agent {i} slack {}", solution.slack),
                });
            }
            controls.push(solution.z);
            agent_records.push(AgentRecord {
                position: agent.position,
                velocity: agent.velocity,
                control: solution.z,
                nominal: u_nom,
                status: solution.status,
                slack: solution.slack,
                nominal_feasible,
                in_region: sc.target.contains(agent.position),
            });
        }

        let (min_pair_distance, min_h_external, min_h_internal) = min_margins(&world, &sc.obstacles, params);
        let all_leaders_in_region = world
            .agents
            .iter()
            .filter(|a| a.is_leader)
            .all(|a| sc.target.contains(a.position));
        let mut max_estimator_error: f64 = 0.0;
        for (i, j) in world.graph.edges() {
            let (a, b) = (&world.agents[i], &world.agents[j]);
            let dv = a.velocity - b.velocity;
            let e_ij = velocity_estimate(a.phi[&j], a.position, b.position, params.eta) - dv;
            let e_ji = velocity_estimate(b.phi[&i], b.position, a.position, params.eta) + dv;
            max_estimator_error = max_estimator_error.max(e_ij.norm()).max(e_ji.norm());
        }
        let record = StepRecord {
            t,
            agents: agent_records,
            min_pair_distance,
            min_h_external,
            min_h_internal,
            formation_error: formation_error(&positions, &sc.formation),
            edges: world.graph.edges().collect(),
            connected: true,
            all_leaders_in_region,
            t_f: None,
            max_estimator_error,
        };
        Ok(Evaluation {
            world,
            controls,
            record,
            events,
        })
    }

    /// Advances `world` from `t` to `t + dt` under held controls.
    pub fn step(&self, world: &World, t: f64, dt: f64) -> Result<StepOutput, SimError> {
        let eval = self.evaluate(world, t)?;
        let next = self.integrate(&eval.world, &eval.controls, t, dt);
        Ok(StepOutput {
            world: next,
            record: eval.record,
            events: eval.events,
        })
    }

    fn integrate(&self, world: &World, controls: &[Vec2], t: f64, dt: f64) -> World {
        let layout = Layout::of(world);
        let y0 = layout.pack(world);
        let f = |tau: f64, y: &[Vec2]| layout.derivative(self.scenario, tau, y, controls);
        let axpy = |y: &[Vec2], k: &[Vec2], h: f64| -> Vec<Vec2> { y.iter().zip(k).map(|(a, b)| *a + *b * h).collect() };
        let k1 = f(t, &y0);
        let k2 = f(t + 0.5 * dt, &axpy(&y0, &k1, 0.5 * dt));
        let k3 = f(t + 0.5 * dt, &axpy(&y0, &k2, 0.5 * dt));
        let k4 = f(t + dt, &axpy(&y0, &k3, dt));
        let y1: Vec<Vec2> = (0..y0.len())
            .map(|n| y0[n] + (k1[n] + k2[n] * 2.0 + k3[n] * 2.0 + k4[n]) * (dt / 6.0))
            .collect();
        layout.unpack(world, &y1)
    }
}

/// Flat layout of the augmented state: per agent `[p, v, gamma, phi_j...]`.
struct Layout {
    offsets: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
    len: usize,
}

impl Layout {
    fn of(world: &World) -> Layout {
        let mut offsets = Vec::with_capacity(world.agents.len());
        let mut neighbors = Vec::with_capacity(world.agents.len());
        let mut len = 0;
        for a in &world.agents {
            offsets.push(len);
            neighbors.push(a.phi.keys().copied().collect::<Vec<_>>());
            len += 3 + a.phi.len();
        }
        Layout { offsets, neighbors, len }
    }

    fn pack(&self, world: &World) -> Vec<Vec2> {
        let mut y = Vec::with_capacity(self.len);
        for a in &world.agents {
            y.push(a.position);
            y.push(a.velocity);
            y.push(a.gamma);
            y.extend(a.phi.values().copied());
        }
        y
    }

    fn unpack(&self, world: &World, y: &[Vec2]) -> World {
        let mut next = world.clone();
        for (i, a) in next.agents.iter_mut().enumerate() {
            let o = self.offsets[i];
            a.position = y[o];
            a.velocity = y[o + 1];
            a.gamma = y[o + 2];
            for (k, phi) in a.phi.values_mut().enumerate() {
                *phi = y[o + 3 + k];
            }
        }
        next
    }

    fn derivative(&self, scenario: &Scenario, t: f64, y: &[Vec2], controls: &[Vec2]) -> Vec<Vec2> {
        let params = &scenario.params;
        let (v_d, _) = reference_velocity(&scenario.reference, t);
        let mut dy = Vec::with_capacity(y.len());
        for (i, &o) in self.offsets.iter().enumerate() {
            let p = y[o];
            dy.push(y[o + 1]);
            dy.push(controls[i]);
            dy.push(gamma_derivative(y[o + 2], p, v_d, params.c5));
            for (k, &j) in self.neighbors[i].iter().enumerate() {
                dy.push(velocity_estimate(y[o + 3 + k], p, y[self.offsets[j]], params.eta));
            }
        }
        dy
    }
}

/// One closed-loop step from `world` at time `t`.
pub fn step(world: &World, scenario: &Scenario, t: f64, dt: f64) -> Result<StepOutput, SimError> {
    Dynamics::new(scenario)?.step(world, t, dt)
}

/// Runs the scenario for `ceil(duration / dt)` steps.
///
/// The log holds one record per step plus a final record at the end time.
pub fn run(scenario: &Scenario) -> Result<TrajectoryLog, RunFailure> {
    let mut log = TrajectoryLog::default();
    let dynamics = match Dynamics::new(scenario) {
        Ok(d) => d,
        Err(error) => return Err(RunFailure { error, log }),
    };
    let mut world = World::from_scenario(scenario);
    let steps = scenario.step_count();
    let mut leader_inside: Vec<bool> = world
        .agents
        .iter()
        .map(|a| a.is_leader && scenario.target.contains(a.position))
        .collect();

    for k in 0..=steps {
        let t = k as f64 * scenario.dt;
        let outcome = if k < steps {
            dynamics.step(&world, t, scenario.dt)
        } else {
            dynamics.evaluate(&world, t).map(|e| StepOutput {
                world: e.world,
                record: e.record,
                events: e.events,
            })
        };
        let StepOutput {
            world: next,
            mut record,
            events,
        } = match outcome {
            Ok(out) => out,
            Err(error) => {
                log.events.push(Event {
                    t,
                    kind: error.event_kind(),
                    detail: error.to_string(),
                });
                return Err(RunFailure { error, log });
            }
        };
        log.events.extend(events);
        for (i, rec) in record.agents.iter().enumerate() {
            let leader = world.agents[i].is_leader;
            if leader && rec.in_region && !leader_inside[i] {
                log.events.push(Event {
                    t,
                    kind: EventKind::RegionEntry,
                    detail: format!("agent {i}"),
                });
            }
            leader_inside[i] = leader && rec.in_region;
        }
        if log.t_f.is_none() && record.all_leaders_in_region {
            log.t_f = Some(t);
        }
        record.t_f = log.t_f;
        log.records.push(record);
        world = next;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{AgentInit, ControllerParams, ReferenceVelocity};

    fn params() -> ControllerParams {
        ControllerParams {
            c1: 15.0,
            c2: 0.2,
            c3: 1.5,
            c4: 5.0,
            c5: 4.0,
            eta: 100.0,
            k0: 1.0,
            k1: 5.0,
            delta_in: 0.1,
            delta_ex: 0.5,
            u_max: 5.0,
            r: 4.5,
            epsilon: None,
            mu: None,
        }
    }

    fn scenario(positions: &[Vec2], formation: &[Vec2], leaders: Vec<usize>) -> Scenario {
        Scenario {
            name: "test".into(),
            description: String::new(),
            duration: 1.0,
            dt: 1e-3,
            leaders,
            shrink_target: false,
            reference: ReferenceVelocity::Zero,
            params: params(),
            target: ConvexRegion::circle(Vec2::new(20.0, 0.0), 2.0).unwrap(),
            obstacles: vec![],
            formation: FormationSpec {
                target_positions: formation.to_vec(),
            },
            agents: positions
                .iter()
                .map(|&p| AgentInit {
                    position: p,
                    velocity: Vec2::ZERO,
                    gamma: None,
                })
                .collect(),
        }
    }

    #[test]
    fn formation_error_examples() {
        let spec = FormationSpec {
            target_positions: vec![Vec2::new(1.0, 0.0), Vec2::ZERO],
        };
        assert_eq!(formation_error(&spec.target_positions, &spec), 0.0);
        let shifted: Vec<Vec2> = spec.target_positions.iter().map(|&p| p + Vec2::new(3.0, -7.0)).collect();
        assert_eq!(formation_error(&shifted, &spec), 0.0);
        assert_eq!(formation_error(&[Vec2::new(2.0, 0.0), Vec2::ZERO], &spec), 2.0);
    }

    #[test]
    fn margins_examples() {
        let sc = scenario(&[Vec2::ZERO, Vec2::new(1.15, 0.0)], &[Vec2::ZERO, Vec2::new(1.0, 0.0)], vec![]);
        let w = World::from_scenario(&sc);
        let (d, ext, int) = min_margins(&w, &[], &sc.params);
        assert!((d - 1.15).abs() < 1e-15);
        assert_eq!(ext, f64::INFINITY);
        assert!((int - (1.15f64.powi(2) - 0.01)).abs() < 1e-12);

        let single = scenario(&[Vec2::ZERO], &[Vec2::ZERO], vec![]);
        let w = World::from_scenario(&single);
        let (d, ext, int) = min_margins(&w, &[], &single.params);
        assert_eq!((d, ext, int), (f64::INFINITY, f64::INFINITY, f64::INFINITY));

        let obstacle = ConvexRegion::circle(Vec2::new(1.5, 0.0), 1.0).unwrap();
        let (_, ext, _) = min_margins(&w, &[obstacle], &single.params);
        assert_eq!(ext, 0.0);
    }

    #[test]
    fn isolated_agent_stays_put() {
        let sc = scenario(&[Vec2::new(1.0, 2.0)], &[Vec2::ZERO], vec![]);
        let w = World::from_scenario(&sc);
        let out = step(&w, &sc, 0.0, 1e-3).unwrap();
        assert_eq!(out.world.agents[0].position, Vec2::new(1.0, 2.0));
        assert_eq!(out.world.agents[0].velocity, Vec2::ZERO);
        assert_eq!(out.record.agents[0].control, Vec2::ZERO);
    }

    #[test]
    fn estimator_relaxes_exponentially_with_positions_held() {
        // A pinned pair with no formation pull: only phi moves.
        let mut sc = scenario(&[Vec2::new(1.0, 0.0), Vec2::ZERO], &[Vec2::new(1.0, 0.0), Vec2::ZERO], vec![]);
        sc.params.c1 = 1e-300;
        let mut w = World::from_scenario(&sc);
        w.agents[0].phi.insert(1, Vec2::ZERO);
        w.agents[1].phi.insert(0, Vec2::ZERO);
        let dynamics = Dynamics::new(&sc).unwrap();
        let eval = dynamics.evaluate(&w, 0.0).unwrap();
        let next = dynamics.integrate(&eval.world, &[Vec2::ZERO, Vec2::ZERO], 0.0, 1e-3);
        let phi = next.agents[0].phi[&1].x;
        // One RK4 step of a linear ODE applies the degree-4 Taylor factor.
        let x: f64 = 0.1;
        let rk4 = 1.0 - (1.0 - x + x * x / 2.0 - x.powi(3) / 6.0 + x.powi(4) / 24.0);
        assert!((phi - rk4).abs() < 1e-14);
        // The local truncation error at eta*dt = 0.1 is about 8e-8.
        assert!((phi - (1.0 - (-x).exp())).abs() < 1e-7);
        assert_eq!(next.agents[0].position, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn mirrored_pair_stays_mirrored() {
        let sc = scenario(
            &[Vec2::new(-1.5, 0.0), Vec2::new(1.5, 0.0)],
            &[Vec2::new(-0.5, 0.0), Vec2::new(0.5, 0.0)],
            vec![],
        );
        let log = run(&sc).unwrap();
        for rec in &log.records {
            let (a, b) = (&rec.agents[0], &rec.agents[1]);
            assert!((a.position.x + b.position.x).abs() < 1e-9);
            assert!((a.velocity.x + b.velocity.x).abs() < 1e-9);
            assert_eq!(a.position.y, 0.0);
        }
        let end = log.last().unwrap();
        assert!(end.formation_error < log.records[0].formation_error);
    }

    #[test]
    fn zero_duration_gives_single_record() {
        let mut sc = scenario(&[Vec2::ZERO, Vec2::new(1.0, 0.0)], &[Vec2::ZERO, Vec2::new(1.0, 0.0)], vec![0]);
        sc.duration = 0.0;
        let log = run(&sc).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.records[0].t, 0.0);
    }

    #[test]
    fn timestamps_advance_by_dt() {
        let mut sc = scenario(&[Vec2::ZERO, Vec2::new(1.0, 0.0)], &[Vec2::ZERO, Vec2::new(1.2, 0.0)], vec![0]);
        sc.duration = 0.05;
        sc.dt = 0.01;
        let log = run(&sc).unwrap();
        assert_eq!(log.records.len(), 6);
        for w in log.records.windows(2) {
            assert!(w[1].t > w[0].t);
            assert!((w[1].t - w[0].t - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn obstacle_start_is_reported_as_collision() {
        let mut sc = scenario(&[Vec2::ZERO, Vec2::new(1.0, 0.0)], &[Vec2::ZERO, Vec2::new(1.0, 0.0)], vec![]);
        sc.obstacles.push(ConvexRegion::circle(Vec2::new(1.0, 0.0), 0.5).unwrap());
        let err = run(&sc).unwrap_err();
        assert!(matches!(err.error, SimError::ObstacleCollision { agent: 1, obstacle: 0, .. }));
        assert_eq!(err.log.count(EventKind::Collision), 1);
    }

    #[test]
    fn locality_of_nominal_control() {
        // Agent 2 is far from agents 0 and 1; perturbing it must not change
        // what agent 0 computes. The graph stays connected through agent 1.
        let positions = [Vec2::ZERO, Vec2::new(3.0, 0.0), Vec2::new(6.5, 0.0)];
        let formation = [Vec2::ZERO, Vec2::new(3.2, 0.1), Vec2::new(6.0, 0.0)];
        let sc = scenario(&positions, &formation, vec![0]);
        let w = World::from_scenario(&sc);
        assert!(!w.graph.has_edge(0, 2));
        let d = Dynamics::new(&sc).unwrap();
        let base = d.evaluate(&w, 0.0).unwrap();
        let mut moved = w.clone();
        moved.agents[2].position += Vec2::new(0.2, -0.3);
        moved.agents[2].velocity = Vec2::new(1.0, 1.0);
        moved.agents[2].gamma = Vec2::new(9.0, 9.0);
        let other = d.evaluate(&moved, 0.0).unwrap();
        assert_eq!(base.record.agents[0].nominal, other.record.agents[0].nominal);
    }
}
