//! Planar vector algebra and convex region queries.
//!
//! Regions are either discs or strictly convex counter-clockwise polygons.
//! Both admit closed-form projection, which the region-seeking term and the
//! obstacle barrier constraints depend on.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance below which a point counts as lying on a region boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("circle radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon is not strictly convex and counter-clockwise at vertex {0}")]
    NotConvex(usize),
    #[error("non-finite coordinate in region definition")]
    NonFinite,
    #[error("point lies inside or on the region boundary")]
    PointInside,
    #[error("inward offset by {0} leaves an empty region")]
    EmptyRegion(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_inf(self) -> f64 {
        self.x.abs().max(self.y.abs())
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Vec2 {
        Vec2::new(f(self.x), f(self.y))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl std::iter::Sum for Vec2 {
    fn sum<I: Iterator<Item = Vec2>>(iter: I) -> Vec2 {
        iter.fold(Vec2::ZERO, |acc, v| acc + v)
    }
}

/// Nearest point of the closed segment `[a, b]` to `p`.
pub fn project_onto_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    a + ab * t
}

/// A closed convex set in the plane: the target region or an unsafe region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvexRegion {
    Circle { center: Vec2, radius: f64 },
    Polygon { vertices: Vec<Vec2> },
}

impl ConvexRegion {
    pub fn circle(center: Vec2, radius: f64) -> Result<Self, GeometryError> {
        let region = ConvexRegion::Circle { center, radius };
        region.validate()?;
        Ok(region)
    }

    pub fn polygon(vertices: Vec<Vec2>) -> Result<Self, GeometryError> {
        let region = ConvexRegion::Polygon { vertices };
        region.validate()?;
        Ok(region)
    }

    /// Axis-aligned rectangle with corners `min` and `max`.
    pub fn rectangle(min: Vec2, max: Vec2) -> Result<Self, GeometryError> {
        Self::polygon(vec![
            min,
            Vec2::new(max.x, min.y),
            max,
            Vec2::new(min.x, max.y),
        ])
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        match self {
            ConvexRegion::Circle { center, radius } => {
                if !center.is_finite() {
                    return Err(GeometryError::NonFinite);
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(GeometryError::BadRadius(*radius));
                }
            }
            ConvexRegion::Polygon { vertices } => {
                let n = vertices.len();
                if n < 3 {
                    return Err(GeometryError::TooFewVertices(n));
                }
                if vertices.iter().any(|v| !v.is_finite()) {
                    return Err(GeometryError::NonFinite);
                }
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let c = vertices[(i + 2) % n];
                    if (b - a).cross(c - b) <= 0.0 {
                        return Err(GeometryError::NotConvex((i + 1) % n));
                    }
                }
                // Locally convex turns can still wind more than once.
                let winding: f64 = (0..n)
                    .map(|i| {
                        let a = vertices[i];
                        let b = vertices[(i + 1) % n];
                        let c = vertices[(i + 2) % n];
                        (b - a).cross(c - b).atan2((b - a).dot(c - b))
                    })
                    .sum();
                if (winding - std::f64::consts::TAU).abs() > 1e-6 {
                    return Err(GeometryError::NotConvex(0));
                }
            }
        }
        Ok(())
    }

    /// True iff `p` is inside the region or within [`BOUNDARY_TOL`] of its boundary.
    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            ConvexRegion::Circle { center, radius } => (p - *center).norm() <= radius + BOUNDARY_TOL,
            ConvexRegion::Polygon { vertices } => edges(vertices).all(|(a, b)| {
                let e = b - a;
                e.cross(p - a) / e.norm() >= -BOUNDARY_TOL
            }),
        }
    }

    /// Nearest point of the region to `p`; `p` itself when contained.
    pub fn project(&self, p: Vec2) -> Vec2 {
        if self.contains(p) {
            return p;
        }
        self.nearest_on_boundary(p)
    }

    /// Closest region point to an exterior `p`.
    pub fn closest_boundary_point(&self, p: Vec2) -> Result<Vec2, GeometryError> {
        if self.contains(p) {
            return Err(GeometryError::PointInside);
        }
        Ok(self.nearest_on_boundary(p))
    }

    fn nearest_on_boundary(&self, p: Vec2) -> Vec2 {
        match self {
            ConvexRegion::Circle { center, radius } => {
                let d = p - *center;
                let n = d.norm();
                if n == 0.0 {
                    // Any boundary point is nearest; pick the +x one.
                    return *center + Vec2::new(*radius, 0.0);
                }
                *center + d * (*radius / n)
            }
            ConvexRegion::Polygon { vertices } => {
                let mut best = vertices[0];
                let mut best_d = f64::INFINITY;
                // Strict comparison: the lowest-index edge wins ties.
                for (a, b) in edges(vertices) {
                    let q = project_onto_segment(p, a, b);
                    let d = (p - q).norm_sq();
                    if d < best_d {
                        best_d = d;
                        best = q;
                    }
                }
                best
            }
        }
    }

    /// Signed distance: negative inside, positive outside.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        match self {
            ConvexRegion::Circle { center, radius } => (p - *center).norm() - radius,
            ConvexRegion::Polygon { vertices } => {
                let outside = (p - self.nearest_on_boundary(p)).norm();
                let interior = edges(vertices)
                    .map(|(a, b)| {
                        let e = b - a;
                        e.cross(p - a) / e.norm()
                    })
                    .fold(f64::INFINITY, f64::min);
                if interior >= 0.0 {
                    -interior
                } else {
                    outside
                }
            }
        }
    }

    /// Inward offset of the region by `delta`.
    pub fn shrink(&self, delta: f64) -> Result<ConvexRegion, GeometryError> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(GeometryError::EmptyRegion(delta));
        }
        if delta == 0.0 {
            return Ok(self.clone());
        }
        match self {
            ConvexRegion::Circle { center, radius } => {
                if *radius <= delta {
                    return Err(GeometryError::EmptyRegion(delta));
                }
                Ok(ConvexRegion::Circle {
                    center: *center,
                    radius: radius - delta,
                })
            }
            ConvexRegion::Polygon { vertices } => {
                let mut poly = vertices.clone();
                for (a, b) in edges(vertices) {
                    let e = b - a;
                    let inward = e.perp() / e.norm();
                    poly = clip_half_plane(&poly, a + inward * delta, inward);
                    if poly.is_empty() {
                        return Err(GeometryError::EmptyRegion(delta));
                    }
                }
                let poly = simplify(poly);
                ConvexRegion::polygon(poly).map_err(|_| GeometryError::EmptyRegion(delta))
            }
        }
    }

    /// Largest distance between two region points.
    pub fn diameter(&self) -> f64 {
        match self {
            ConvexRegion::Circle { radius, .. } => 2.0 * radius,
            ConvexRegion::Polygon { vertices } => {
                let mut best: f64 = 0.0;
                for (i, a) in vertices.iter().enumerate() {
                    for b in &vertices[i + 1..] {
                        best = best.max((*a - *b).norm());
                    }
                }
                best
            }
        }
    }

    /// Points along the boundary, closed (first point repeated) for drawing.
    pub fn outline(&self, segments: usize) -> Vec<Vec2> {
        match self {
            ConvexRegion::Circle { center, radius } => (0..=segments)
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / segments as f64;
                    *center + Vec2::new(a.cos(), a.sin()) * *radius
                })
                .collect(),
            ConvexRegion::Polygon { vertices } => {
                let mut pts = vertices.clone();
                pts.push(vertices[0]);
                pts
            }
        }
    }
}

fn edges(vertices: &[Vec2]) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
    let n = vertices.len();
    (0..n).map(move |i| (vertices[i], vertices[(i + 1) % n]))
}

/// Keeps the part of a convex polygon where `(x - point) . normal >= 0`.
fn clip_half_plane(poly: &[Vec2], point: Vec2, normal: Vec2) -> Vec<Vec2> {
    let side = |v: Vec2| (v - point).dot(normal);
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let cur = poly[i];
        let next = poly[(i + 1) % n];
        let (sc, sn) = (side(cur), side(next));
        if sc >= 0.0 {
            out.push(cur);
        }
        if (sc >= 0.0) != (sn >= 0.0) {
            let t = sc / (sc - sn);
            out.push(cur + (next - cur) * t);
        }
    }
    out
}

/// Drops repeated and collinear vertices left over from clipping.
fn simplify(mut poly: Vec<Vec2>) -> Vec<Vec2> {
    const EPS: f64 = 1e-12;
    poly.dedup_by(|a, b| (*a - *b).norm() < EPS);
    while poly.len() > 1 && (poly[0] - poly[poly.len() - 1]).norm() < EPS {
        poly.pop();
    }
    let mut changed = true;
    while changed && poly.len() >= 3 {
        changed = false;
        let n = poly.len();
        for i in 0..n {
            let a = poly[(i + n - 1) % n];
            let b = poly[i];
            let c = poly[(i + 1) % n];
            if (b - a).cross(c - b) <= EPS * (b - a).norm().max(1.0) {
                poly.remove(i);
                changed = true;
                break;
            }
        }
    }
    poly
}
