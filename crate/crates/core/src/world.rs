//! Agent state, formation specification, hysteresis neighbor graph and
//! scenario configuration.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::geometry::{ConvexRegion, Vec2};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    pub is_leader: bool,
    /// Estimator auxiliary per current neighbor, keyed by neighbor id.
    pub phi: BTreeMap<usize, Vec2>,
    /// Tracking auxiliary.
    pub gamma: Vec2,
}

/// Desired shape, given as one target position per agent. Only the
/// displacements between targets matter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FormationSpec {
    pub target_positions: Vec<Vec2>,
}

impl FormationSpec {
    /// Desired displacement `p_i* - p_j*`.
    pub fn displacement(&self, i: usize, j: usize) -> Vec2 {
        self.target_positions[i] - self.target_positions[j]
    }

    /// Largest distance between two agents of the desired shape.
    pub fn max_extent(&self) -> f64 {
        let p = &self.target_positions;
        let mut best: f64 = 0.0;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                best = best.max((p[i] - p[j]).norm());
            }
        }
        best
    }
}

/// Undirected neighbor graph with hysteresis: edges form below `r - epsilon`
/// and break only at `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    agents: usize,
    edges: BTreeSet<(usize, usize)>,
    pub radius: f64,
    pub margin: f64,
}

fn key(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl NeighborGraph {
    pub fn empty(agents: usize, radius: f64, margin: f64) -> Self {
        NeighborGraph {
            agents,
            edges: BTreeSet::new(),
            radius,
            margin,
        }
    }

    /// Initial graph: exactly the pairs closer than `r - epsilon`.
    pub fn initial(positions: &[Vec2], radius: f64, margin: f64) -> Self {
        update_neighbors(&Self::empty(positions.len(), radius, margin), positions)
    }

    pub fn from_edges(agents: usize, radius: f64, margin: f64, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::empty(agents, radius, margin);
        for &(i, j) in edges {
            assert!(i != j && i < agents && j < agents, "invalid edge ({i}, {j})");
            g.edges.insert(key(i, j));
        }
        g
    }

    pub fn agent_count(&self) -> usize {
        self.agents
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&key(i, j))
    }

    /// Edges as `(i, j)` with `i < j`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbors of agent `i`, ascending.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Breadth-first reachability from agent 0.
    pub fn is_connected(&self) -> bool {
        if self.agents <= 1 {
            return true;
        }
        let mut adjacency = vec![Vec::new(); self.agents];
        for &(i, j) in &self.edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        let mut seen = vec![false; self.agents];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    reached += 1;
                    queue.push_back(j);
                }
            }
        }
        reached == self.agents
    }
}

/// Applies the hysteresis rules to `graph` at the given positions.
pub fn update_neighbors(graph: &NeighborGraph, positions: &[Vec2]) -> NeighborGraph {
    let mut next = graph.clone();
    next.agents = positions.len();
    let join = graph.radius - graph.margin;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let d = (positions[i] - positions[j]).norm();
            if d >= graph.radius {
                next.edges.remove(&(i, j));
            } else if d < join {
                next.edges.insert((i, j));
            }
        }
    }
    next
}

/// Aligns the estimator map of `agent` with `neighbors`: new neighbors start
/// at the current relative position, departed neighbors are dropped.
pub fn sync_estimator_state(agent: &AgentState, neighbors: &[usize], positions: &[Vec2]) -> AgentState {
    let mut next = agent.clone();
    next.phi.retain(|j, _| neighbors.contains(j));
    for &j in neighbors {
        next.phi
            .entry(j)
            .or_insert_with(|| positions[agent.id] - positions[j]);
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceVelocity {
    /// No reference at all: leaders drop the tracking and feedforward terms.
    None,
    Zero,
    /// `v0 * (cos(theta t), sin(theta t))`.
    Circular { v0: f64, theta: f64 },
    Constant { velocity: Vec2 },
}

impl Default for ReferenceVelocity {
    fn default() -> Self {
        ReferenceVelocity::Zero
    }
}

impl ReferenceVelocity {
    pub fn tracking(&self) -> bool {
        !matches!(self, ReferenceVelocity::None)
    }
}

/// Reference velocity and its time derivative at `t`.
pub fn reference_velocity(mode: &ReferenceVelocity, t: f64) -> (Vec2, Vec2) {
    match *mode {
        ReferenceVelocity::None | ReferenceVelocity::Zero => (Vec2::ZERO, Vec2::ZERO),
        ReferenceVelocity::Constant { velocity } => (velocity, Vec2::ZERO),
        ReferenceVelocity::Circular { v0, theta } => {
            let (s, c) = (theta * t).sin_cos();
            (Vec2::new(v0 * c, v0 * s), Vec2::new(-v0 * theta * s, v0 * theta * c))
        }
    }
}

/// Gains and thresholds shared by every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerParams {
    /// Formation potential gain.
    pub c1: f64,
    /// Velocity consensus gain.
    pub c2: f64,
    /// Region seeking gain.
    pub c3: f64,
    /// Velocity tracking gain.
    pub c4: f64,
    /// Tracking auxiliary rate.
    pub c5: f64,
    /// Relative velocity estimator rate.
    pub eta: f64,
    pub k0: f64,
    pub k1: f64,
    pub delta_in: f64,
    pub delta_ex: f64,
    pub u_max: f64,
    /// Sensing radius.
    pub r: f64,
    /// Hysteresis margin; defaults to `0.1 r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Potential regularizer; defaults to `1e-3 r^2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

impl ControllerParams {
    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(0.1 * self.r)
    }

    pub fn mu(&self) -> f64 {
        self.mu.unwrap_or(1e-3 * self.r * self.r)
    }

    /// Every violated parameter invariant, as `(field, message)`.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut need_positive = |name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                out.push((format!("params.{name}"), format!("must be strictly positive, got {v}")));
            }
        };
        need_positive("c1", self.c1);
        need_positive("c2", self.c2);
        need_positive("c3", self.c3);
        need_positive("c4", self.c4);
        need_positive("c5", self.c5);
        need_positive("eta", self.eta);
        need_positive("k0", self.k0);
        need_positive("k1", self.k1);
        need_positive("delta_in", self.delta_in);
        need_positive("delta_ex", self.delta_ex);
        need_positive("u_max", self.u_max);
        need_positive("r", self.r);
        need_positive("mu", self.mu());
        if self.k1 * self.k1 < 4.0 * self.k0 {
            out.push((
                "params.k1".into(),
                format!(
                    "k1\u{b2} \u{2265} 4k0 required for real negative roots (k1={}, k0={})",
                    self.k1, self.k0
                ),
            ));
        }
        let eps = self.epsilon();
        if !(eps > 0.0 && eps < self.r) {
            out.push(("params.epsilon".into(), format!("must lie in (0, r), got {eps}")));
        }
        if self.delta_in >= self.r / 2.0 {
            out.push(("params.delta_in".into(), format!("must be below r/2 = {}", self.r / 2.0)));
        }
        if self.delta_ex >= self.r / 2.0 {
            out.push(("params.delta_ex".into(), format!("must be below r/2 = {}", self.r / 2.0)));
        }
        out
    }
}

/// Initial condition of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentInit {
    pub position: Vec2,
    #[serde(default)]
    pub velocity: Vec2,
    /// Initial tracking auxiliary; the agent's position when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub duration: f64,
    pub dt: f64,
    /// Ids of the agents that know the target region and reference velocity.
    pub leaders: Vec<usize>,
    /// When set, leaders steer toward the target shrunk by the formation extent
    /// so that the whole formation ends up inside the original target.
    #[serde(default)]
    pub shrink_target: bool,
    #[serde(default)]
    pub reference: ReferenceVelocity,
    pub params: ControllerParams,
    pub target: ConvexRegion,
    #[serde(default)]
    pub obstacles: Vec<ConvexRegion>,
    pub formation: FormationSpec,
    pub agents: Vec<AgentInit>,
}

impl Scenario {
    pub fn initial_positions(&self) -> Vec<Vec2> {
        self.agents.iter().map(|a| a.position).collect()
    }

    pub fn is_leader(&self, id: usize) -> bool {
        self.leaders.contains(&id)
    }

    /// Region the leaders steer toward.
    pub fn leader_target(&self) -> Result<ConvexRegion, crate::geometry::GeometryError> {
        if self.shrink_target {
            self.target.shrink(self.formation.max_extent())
        } else {
            Ok(self.target.clone())
        }
    }

    /// Number of integration steps, `ceil(duration / dt)`.
    pub fn step_count(&self) -> usize {
        let n = self.duration / self.dt;
        // Absorb representation error such as 0.3 / 0.1 = 2.9999999999999996.
        let rounded = n.round();
        if (n - rounded).abs() <= 1e-9 * rounded.max(1.0) {
            rounded as usize
        } else {
            n.ceil() as usize
        }
    }

    /// Every violated scenario invariant, as `(field path, message)`.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = self.params.violations();
        let n = self.agents.len();
        if n == 0 {
            out.push(("agents".into(), "at least one agent required".into()));
            return out;
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            out.push(("dt".into(), format!("must be positive, got {}", self.dt)));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            out.push(("duration".into(), format!("must be non-negative, got {}", self.duration)));
        }
        if self.formation.target_positions.len() != n {
            out.push((
                "formation".into(),
                format!("expected {n} target positions, got {}", self.formation.target_positions.len()),
            ));
        }
        for (k, &id) in self.leaders.iter().enumerate() {
            if id >= n {
                out.push((format!("leaders[{k}]"), format!("agent id {id} out of range")));
            }
        }
        if let Err(e) = self.target.validate() {
            out.push(("target".into(), e.to_string()));
        }
        if self.shrink_target && self.target.validate().is_ok() {
            if let Err(e) = self.leader_target() {
                out.push(("shrink_target".into(), e.to_string()));
            }
        }
        for (k, obstacle) in self.obstacles.iter().enumerate() {
            if let Err(e) = obstacle.validate() {
                out.push((format!("obstacles[{k}]"), e.to_string()));
            }
        }
        for (i, agent) in self.agents.iter().enumerate() {
            if !agent.position.is_finite() {
                out.push((format!("agents[{i}].position"), "non-finite coordinate".into()));
            }
            if agent.velocity != Vec2::ZERO {
                out.push((format!("agents[{i}].velocity"), "initial velocity must be zero".into()));
            }
            for (k, obstacle) in self.obstacles.iter().enumerate() {
                if obstacle.validate().is_ok() && obstacle.signed_distance(agent.position) < self.params.delta_ex {
                    out.push((
                        format!("agents[{i}].position"),
                        format!("starts within delta_ex of obstacles[{k}]"),
                    ));
                }
            }
        }
        let positions = self.initial_positions();
        for i in 0..n {
            for j in i + 1..n {
                let d = (positions[i] - positions[j]).norm();
                if d < self.params.delta_in {
                    out.push((
                        format!("agents[{i}].position"),
                        format!("closer than delta_in to agent {j} ({d})"),
                    ));
                }
            }
        }
        let eps = self.params.epsilon();
        if self.params.r > 0.0 && eps > 0.0 && eps < self.params.r {
            if !NeighborGraph::initial(&positions, self.params.r, eps).is_connected() {
                out.push(("agents".into(), "initial network connected: violated".into()));
            }
            if self.formation.target_positions.len() == n
                && !NeighborGraph::initial(&self.formation.target_positions, self.params.r, eps).is_connected()
            {
                out.push(("formation".into(), "desired formation graph connected: violated".into()));
            }
        }
        out
    }
}

/// Full mutable state of the multi-agent system.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub agents: Vec<AgentState>,
    pub graph: NeighborGraph,
}

impl World {
    pub fn from_scenario(scenario: &Scenario) -> World {
        let positions = scenario.initial_positions();
        let graph = NeighborGraph::initial(&positions, scenario.params.r, scenario.params.epsilon());
        let agents = scenario
            .agents
            .iter()
            .enumerate()
            .map(|(id, init)| {
                let blank = AgentState {
                    id,
                    position: init.position,
                    velocity: init.velocity,
                    is_leader: scenario.is_leader(id),
                    phi: BTreeMap::new(),
                    gamma: init.gamma.unwrap_or(init.position),
                };
                sync_estimator_state(&blank, &graph.neighbors(id), &positions)
            })
            .collect();
        World { agents, graph }
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.agents.iter().map(|a| a.position).collect()
    }
}
