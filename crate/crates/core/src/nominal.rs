//! Nominal (safety-unaware) control: formation potential, velocity consensus
//! through a relative velocity estimator, region seeking and reference
//! velocity tracking.
//!
//! Every function here uses only the agent's own state and the relative
//! positions of its current neighbors. Neighbor velocities and controls are
//! never read.

use thiserror::Error;

use crate::geometry::{ConvexRegion, Vec2};
use crate::world::{AgentState, ControllerParams};

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum NominalError {
    #[error("neighbor distance {distance} is outside the sensing radius {radius}")]
    OutOfRange { distance: f64, radius: f64 },
}

/// Per-term decomposition of the nominal control.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NominalBreakdown {
    /// Negative summed potential gradient.
    pub u1: Vec2,
    /// Negative summed relative velocity estimate.
    pub u2: Vec2,
    pub u3: Vec2,
    pub u4: Vec2,
    pub feedforward: Vec2,
    pub total: Vec2,
}

/// What agent `i` knows about one neighbor `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborData {
    pub position: Vec2,
    pub phi: Vec2,
    /// Desired displacement `p_i* - p_j*`.
    pub displacement: Vec2,
}

fn check_range(p_i: Vec2, p_j: Vec2, r: f64) -> Result<Vec2, NominalError> {
    let dp = p_i - p_j;
    let distance = dp.norm();
    if distance < r {
        Ok(dp)
    } else {
        Err(NominalError::OutOfRange { distance, radius: r })
    }
}

/// `|dp - d|^2 / (r^2 - |dp|^2 + mu)` with `dp = p_i - p_j`.
pub fn potential(p_i: Vec2, p_j: Vec2, d_ij: Vec2, r: f64, mu: f64) -> Result<f64, NominalError> {
    let dp = check_range(p_i, p_j, r)?;
    Ok((dp - d_ij).norm_sq() / (r * r - dp.norm_sq() + mu))
}

/// Gradient of [`potential`] with respect to `p_i`.
pub fn potential_gradient(p_i: Vec2, p_j: Vec2, d_ij: Vec2, r: f64, mu: f64) -> Result<Vec2, NominalError> {
    let dp = check_range(p_i, p_j, r)?;
    let denom = r * r - dp.norm_sq() + mu;
    let err = dp - d_ij;
    let numer = err.norm_sq();
    Ok((err * (2.0 * denom) + dp * (2.0 * numer)) / (denom * denom))
}

/// Relative velocity estimate; also the estimator's state derivative.
pub fn velocity_estimate(phi_ij: Vec2, p_i: Vec2, p_j: Vec2, eta: f64) -> Vec2 {
    (phi_ij - (p_i - p_j)) * -eta
}

pub fn gamma_derivative(gamma_i: Vec2, p_i: Vec2, v_d: Vec2, c5: f64) -> Vec2 {
    v_d + (p_i - gamma_i) * c5
}

/// Unit pull toward the target for a leader outside it, zero otherwise.
///
/// Boundary points count as inside, so the normalization never divides by zero.
pub fn region_term(p_i: Vec2, target: &ConvexRegion, is_leader: bool) -> Vec2 {
    if !is_leader || target.contains(p_i) {
        return Vec2::ZERO;
    }
    let away = p_i - target.project(p_i);
    -(away / away.norm())
}

/// Component-wise saturated tracking term, active for leaders inside the target.
pub fn tracking_term(p_i: Vec2, gamma_i: Vec2, c5: f64, in_region: bool, is_leader: bool) -> Vec2 {
    if !(is_leader && in_region) {
        return Vec2::ZERO;
    }
    -((p_i - gamma_i) * c5).map(f64::tanh)
}

/// Composes the five nominal terms for one agent.
///
/// `target` is the region this agent measures its own membership against;
/// `v_d_dot` is the broadcast reference acceleration.
pub fn nominal_control(
    agent: &AgentState,
    neighbors: &[NeighborData],
    target: &ConvexRegion,
    params: &ControllerParams,
    v_d_dot: Vec2,
) -> Result<NominalBreakdown, NominalError> {
    let p = agent.position;
    let mu = params.mu();
    let mut u1 = Vec2::ZERO;
    let mut u2 = Vec2::ZERO;
    for n in neighbors {
        u1 -= potential_gradient(p, n.position, n.displacement, params.r, mu)?;
        u2 -= velocity_estimate(n.phi, p, n.position, params.eta);
    }
    let in_region = target.contains(p);
    let u3 = region_term(p, target, agent.is_leader);
    let u4 = tracking_term(p, agent.gamma, params.c5, in_region, agent.is_leader);
    let feedforward = if in_region { v_d_dot } else { Vec2::ZERO };
    let total = feedforward + u1 * params.c1 + u2 * params.c2 + u3 * params.c3 + u4 * params.c4;
    Ok(NominalBreakdown {
        u1,
        u2,
        u3,
        u4,
        feedforward,
        total,
    })
}

/// Nominal law without reference tracking: formation, consensus and region terms only.
pub fn simplified_control(
    agent: &AgentState,
    neighbors: &[NeighborData],
    target: &ConvexRegion,
    params: &ControllerParams,
) -> Result<NominalBreakdown, NominalError> {
    let mut b = nominal_control(agent, neighbors, target, params, Vec2::ZERO)?;
    b.u4 = Vec2::ZERO;
    b.feedforward = Vec2::ZERO;
    b.total = b.u1 * params.c1 + b.u2 * params.c2 + b.u3 * params.c3;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

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
            r: 2.0,
            epsilon: None,
            mu: Some(0.1),
        }
    }

    fn agent(p: Vec2, leader: bool) -> AgentState {
        AgentState {
            id: 0,
            position: p,
            velocity: Vec2::ZERO,
            is_leader: leader,
            phi: BTreeMap::new(),
            gamma: p,
        }
    }

    #[test]
    fn potential_examples() {
        let d = Vec2::new(0.5, 0.0);
        assert_eq!(potential(Vec2::new(1.5, 2.0), Vec2::new(1.0, 2.0), d, 2.0, 0.1).unwrap(), 0.0);
        let v = potential(Vec2::new(1.0, 0.0), Vec2::ZERO, d, 2.0, 0.1).unwrap();
        assert!((v - 0.25 / 3.1).abs() < 1e-15);
        assert!((v - 0.0806452).abs() < 1e-7);
        assert!(matches!(
            potential(Vec2::new(2.0, 0.0), Vec2::ZERO, d, 2.0, 0.1),
            Err(NominalError::OutOfRange { .. })
        ));
    }

    #[test]
    fn potential_grows_toward_sensing_radius() {
        let mut last = 0.0;
        for k in 1..=40 {
            let x = 2.0 - 0.5f64.powi(k);
            let v = potential(Vec2::new(x, 0.0), Vec2::ZERO, Vec2::new(0.5, 0.0), 2.0, 1e-12).unwrap();
            assert!(v >= last);
            last = v;
        }
        assert!(last > 1e8);
    }

    fn central_difference(p_i: Vec2, p_j: Vec2, d: Vec2, r: f64, mu: f64) -> Vec2 {
        let h = 1e-6;
        let f = |q: Vec2| potential(q, p_j, d, r, mu).unwrap();
        Vec2::new(
            (f(p_i + Vec2::new(h, 0.0)) - f(p_i - Vec2::new(h, 0.0))) / (2.0 * h),
            (f(p_i + Vec2::new(0.0, h)) - f(p_i - Vec2::new(0.0, h))) / (2.0 * h),
        )
    }

    #[test]
    fn gradient_examples() {
        let d = Vec2::new(0.5, 0.0);
        assert_eq!(potential_gradient(Vec2::new(0.5, 0.0), Vec2::ZERO, d, 2.0, 0.1).unwrap(), Vec2::ZERO);
        let g = potential_gradient(Vec2::new(1.0, 0.0), Vec2::ZERO, d, 2.0, 0.1).unwrap();
        let fd = central_difference(Vec2::new(1.0, 0.0), Vec2::ZERO, d, 2.0, 0.1);
        assert!((fd.x - 0.374610).abs() < 1e-6);
        assert!(((g.x - fd.x) / fd.x).abs() < 1e-6);
        assert!((g.x - 3.6 / 9.61).abs() < 1e-15);
        assert_eq!(g.y, 0.0);
    }

    #[test]
    fn gradient_antisymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = 3.0;
        for _ in 0..100 {
            let p_j = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let p_i = p_j + Vec2::new(ang.cos(), ang.sin()) * rng.gen_range(0.0..r * 0.99);
            let d = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let gi = potential_gradient(p_i, p_j, d, r, 0.01).unwrap();
            let gj = potential_gradient(p_j, p_i, -d, r, 0.01).unwrap();
            assert!((gi + gj).norm() <= 1e-12 * gi.norm().max(1.0));
        }
    }

    #[test]
    fn estimator_examples() {
        let p_i = Vec2::new(1.0, 0.0);
        assert_eq!(velocity_estimate(p_i, p_i, Vec2::ZERO, 100.0), Vec2::ZERO);
        assert_eq!(velocity_estimate(Vec2::ZERO, p_i, Vec2::ZERO, 100.0), Vec2::new(100.0, 0.0));
    }

    #[test]
    fn gamma_examples() {
        let p = Vec2::new(3.0, -1.0);
        assert_eq!(gamma_derivative(p, p, Vec2::ZERO, 4.0), Vec2::ZERO);
        assert_eq!(
            gamma_derivative(Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(0.5, 0.0), 4.0),
            Vec2::new(4.5, 0.0)
        );
        assert_eq!(gamma_derivative(Vec2::new(2.0, 0.0), Vec2::ZERO, Vec2::ZERO, 4.0), Vec2::new(-8.0, 0.0));
    }

    #[test]
    fn region_term_examples() {
        let omega = ConvexRegion::circle(Vec2::ZERO, 1.0).unwrap();
        assert_eq!(region_term(Vec2::new(0.2, 0.1), &omega, true), Vec2::ZERO);
        assert_eq!(region_term(Vec2::new(1.0, 0.0), &omega, true), Vec2::ZERO);
        assert_eq!(region_term(Vec2::new(3.0, 0.0), &omega, false), Vec2::ZERO);
        assert_eq!(region_term(Vec2::new(3.0, 0.0), &omega, true), Vec2::new(-1.0, 0.0));
    }

    #[test]
    fn tracking_term_examples() {
        let p = Vec2::new(1.0, 1.0);
        assert_eq!(tracking_term(p, p, 4.0, true, true), Vec2::ZERO);
        assert_eq!(tracking_term(p, Vec2::ZERO, 4.0, true, false), Vec2::ZERO);
        assert_eq!(tracking_term(p, Vec2::ZERO, 4.0, false, true), Vec2::ZERO);
        let sat = tracking_term(Vec2::new(10.0, 0.0), Vec2::ZERO, 4.0, true, true);
        assert!((sat - Vec2::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn simplified_law_drops_tracking() {
        let omega = ConvexRegion::circle(Vec2::ZERO, 1.0).unwrap();
        let p = params();
        let mut a = agent(Vec2::new(0.5, 0.0), true);
        a.gamma = Vec2::new(-2.0, 1.0);
        let full = nominal_control(&a, &[], &omega, &p, Vec2::new(0.3, 0.0)).unwrap();
        assert!(full.total.norm() > 1.0);
        let simple = simplified_control(&a, &[], &omega, &p).unwrap();
        assert_eq!(simple.total, Vec2::ZERO);
        let outside = agent(Vec2::new(3.0, 0.0), true);
        assert_eq!(simplified_control(&outside, &[], &omega, &p).unwrap().total, Vec2::new(-1.5, 0.0));
    }

    #[test]
    fn nominal_examples() {
        let omega = ConvexRegion::circle(Vec2::ZERO, 1.0).unwrap();
        let p = params();
        let isolated = nominal_control(&agent(Vec2::new(3.0, 0.0), false), &[], &omega, &p, Vec2::ZERO).unwrap();
        assert_eq!(isolated.total, Vec2::ZERO);

        let leader = nominal_control(&agent(Vec2::new(3.0, 0.0), true), &[], &omega, &p, Vec2::ZERO).unwrap();
        assert_eq!(leader.total, Vec2::new(-1.5, 0.0));

        // Two non-leaders at the desired displacement with the estimator at rest.
        let (pa, pb) = (Vec2::new(3.0, 0.0), Vec2::new(3.5, 0.5));
        let d = pa - pb;
        let nb = NeighborData { position: pb, phi: d, displacement: d };
        let na = NeighborData { position: pa, phi: -d, displacement: -d };
        let ua = nominal_control(&agent(pa, false), &[nb], &omega, &p, Vec2::ZERO).unwrap();
        let ub = nominal_control(&agent(pb, false), &[na], &omega, &p, Vec2::ZERO).unwrap();
        assert_eq!(ua.total, Vec2::ZERO);
        assert_eq!(ub.total, Vec2::ZERO);
    }

    #[test]
    fn nominal_equilibrium_is_pure_feedforward() {
        let omega = ConvexRegion::circle(Vec2::ZERO, 10.0).unwrap();
        let p = params();
        let pa = Vec2::new(0.3, 0.2);
        let pb = Vec2::new(1.1, -0.4);
        let d = pa - pb;
        let ff = Vec2::new(0.1, -0.2);
        let leader = agent(pa, true);
        let nb = NeighborData { position: pb, phi: d, displacement: d };
        let out = nominal_control(&leader, &[nb], &omega, &p, ff).unwrap();
        assert_eq!(out.total, ff);
        assert_eq!(out.feedforward, ff);
    }

    #[test]
    fn out_of_range_neighbor_propagates() {
        let omega = ConvexRegion::circle(Vec2::ZERO, 1.0).unwrap();
        let nb = NeighborData {
            position: Vec2::new(5.0, 0.0),
            phi: Vec2::ZERO,
            displacement: Vec2::ZERO,
        };
        assert!(nominal_control(&agent(Vec2::ZERO, false), &[nb], &omega, &params(), Vec2::ZERO).is_err());
    }

    proptest! {
        #[test]
        fn breakdown_composes_exactly(
            px in -5.0..5.0f64, py in -5.0..5.0f64,
            gx in -5.0..5.0f64, gy in -5.0..5.0f64,
            offsets in prop::collection::vec((-1.3..1.3f64, -1.3..1.3f64, -1.0..1.0f64, -1.0..1.0f64), 0..5),
            leader in any::<bool>(),
        ) {
            let omega = ConvexRegion::rectangle(Vec2::new(-1.0, -1.0), Vec2::new(2.0, 1.0)).unwrap();
            let p = params();
            let mut a = agent(Vec2::new(px, py), leader);
            a.gamma = Vec2::new(gx, gy);
            let nbs: Vec<NeighborData> = offsets
                .iter()
                .map(|&(dx, dy, fx, fy)| NeighborData {
                    position: a.position + Vec2::new(dx, dy),
                    phi: Vec2::new(fx, fy),
                    displacement: Vec2::new(fy, fx),
                })
                .collect();
            let b = nominal_control(&a, &nbs, &omega, &p, Vec2::new(0.1, 0.2)).unwrap();
            let recomposed = b.feedforward + b.u1 * p.c1 + b.u2 * p.c2 + b.u3 * p.c3 + b.u4 * p.c4;
            prop_assert!((recomposed - b.total).norm() <= 1e-12);
            // tanh rounds to exactly 1 only for arguments beyond ~19.
            prop_assert!(b.u4.x.abs() <= 1.0 && b.u4.y.abs() <= 1.0);
        }
    }
}
