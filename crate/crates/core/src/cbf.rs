//! Exponential control barrier constraints on the control input.
//!
//! Each constraint is a half-plane `a + b . u >= 0`. External constraints keep
//! an agent `delta_ex` away from the nearest point of every sensed unsafe
//! region. Internal constraints keep neighbors `delta_in` apart; they replace
//! the unmeasured relative velocity by its estimate and pay for the estimation
//! error with the worst-case bound, then split the pair constraint evenly
//! between the two agents.

use thiserror::Error;

use crate::geometry::{ConvexRegion, Vec2};
use crate::world::ControllerParams;

/// The set `{u : offset + normal . u >= 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub offset: f64,
    pub normal: Vec2,
}

impl HalfPlane {
    pub const fn new(offset: f64, normal: Vec2) -> Self {
        HalfPlane { offset, normal }
    }

    /// `offset + normal . u`; non-negative when `u` is admissible.
    pub fn margin(&self, u: Vec2) -> f64 {
        self.offset + self.normal.dot(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConstraintKind {
    Obstacle(usize),
    Neighbor(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfConstraint {
    pub agent: usize,
    pub kind: ConstraintKind,
    pub plane: HalfPlane,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("agent at {position} is inside unsafe region {obstacle}")]
pub struct CollisionError {
    pub obstacle: usize,
    pub position: Vec2,
}

/// Worst-case norm of the relative velocity estimation error.
pub fn error_bound(u_max: f64, eta: f64) -> f64 {
    2.0 * u_max / eta
}

/// Barrier value `|p - s|^2 - delta^2`.
pub fn barrier(p: Vec2, s: Vec2, delta: f64) -> f64 {
    (p - s).norm_sq() - delta * delta
}

/// Second-order barrier condition for the distance to an obstacle point `s_ik`.
///
/// The closest point slides along the boundary as the agent moves, which takes
/// `2 v.(I - J) v` out of h'' (`J` the projection Jacobian). Only the normal
/// part `2 (v.n)^2` survives for every convex region, so that is what goes in
/// place of `2 v.v`.
pub fn external_constraint(p_i: Vec2, v_i: Vec2, s_ik: Vec2, k0: f64, k1: f64, delta_ex: f64) -> HalfPlane {
    let dp = p_i - s_ik;
    let v_n = dp.dot(v_i) / dp.norm();
    let offset = 2.0 * v_n * v_n + 2.0 * k1 * dp.dot(v_i) + k0 * (dp.norm_sq() - delta_ex * delta_ex);
    HalfPlane::new(offset, dp * 2.0)
}

/// Pair-estimate offset before the responsibility split.
pub fn internal_offset(p_i: Vec2, p_j: Vec2, v_hat_ij: Vec2, params: &ControllerParams) -> f64 {
    let dp = p_i - p_j;
    let e = error_bound(params.u_max, params.eta);
    // (|v_hat| - |e|)^2 only bounds |dv|^2 from below when |v_hat| >= |e|.
    let speed_floor = (v_hat_ij.norm() - e).max(0.0);
    2.0 * speed_floor * speed_floor + 2.0 * params.k1 * dp.dot(v_hat_ij) - 2.0 * params.k1 * dp.norm() * e
        + params.k0 * (dp.norm_sq() - params.delta_in * params.delta_in)
}

/// Agent `i`'s half of the collision avoidance constraint with neighbor `j`.
pub fn internal_constraint(p_i: Vec2, p_j: Vec2, v_hat_ij: Vec2, params: &ControllerParams) -> HalfPlane {
    HalfPlane::new(0.5 * internal_offset(p_i, p_j, v_hat_ij, params), (p_i - p_j) * 2.0)
}

/// Closest points of the unsafe regions strictly within sensing range.
pub fn sensed_obstacles(p_i: Vec2, obstacles: &[ConvexRegion], r: f64) -> Result<Vec<(usize, Vec2)>, CollisionError> {
    let mut out = Vec::new();
    for (k, obstacle) in obstacles.iter().enumerate() {
        let s = obstacle
            .closest_boundary_point(p_i)
            .map_err(|_| CollisionError { obstacle: k, position: p_i })?;
        if (p_i - s).norm() < r {
            out.push((k, s));
        }
    }
    Ok(out)
}
