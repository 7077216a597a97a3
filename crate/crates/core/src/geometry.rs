//! Convex polygons in dual (vertex + halfspace) form, rigid transforms, and
//! the Minkowski difference that produces configuration obstacles.
//!
//! Conventions
//! - Vertices are strictly counter-clockwise with no three consecutive points
//!   colinear. The first vertex is the lexicographically smallest `(x, y)`.
//! - Row `k` of the halfspace system is the edge from vertex `k` to vertex
//!   `k + 1`, with a unit outward normal `a_k` and offset `b_k = a_k · v_k`.
//!   The polygon is `{ y : a_k · y <= b_k  for all k }`.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use std::cmp::Ordering;
use std::f64::consts::TAU;
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

/// Two edge normals closer than this (radians) are treated as parallel and
/// merged into a single edge.
pub const PARALLEL_TOL: f64 = 1e-9;

/// Sine-of-angle threshold below which three hull points count as colinear.
const COLINEAR_TOL: f64 = 1e-12;

/// Relative area threshold for rejecting slivers.
const AREA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate polygon input: {0}")]
    DegenerateInput(&'static str),
}

/// Planar pose: position in meters and heading in radians.
///
/// `theta` is kept unwrapped so small perturbations stay continuous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub p: Vec2,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            p: Vec2::new(x, y),
            theta,
        }
    }
}

/// Convex polygon carrying both its vertex list and its halfspace system.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
    normals: Vec<Vec2>,
    offsets: Vec<f64>,
}

fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn lex_cmp(a: &Vec2, b: &Vec2) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

/// Outward unit normal of the CCW edge `from -> to`.
fn edge_normal(from: &Vec2, to: &Vec2) -> Vec2 {
    let d = to - from;
    Vec2::new(d.y, -d.x) / d.norm()
}

/// Normal angle mapped into `[0, 2π)`.
fn normal_angle(n: &Vec2) -> f64 {
    n.y.atan2(n.x).rem_euclid(TAU)
}

fn angular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// True when `a`, `b`, `c` make a strict left turn.
fn is_left_turn(a: &Vec2, b: &Vec2, c: &Vec2) -> bool {
    let u = b - a;
    let v = c - a;
    cross(&u, &v) > COLINEAR_TOL * u.norm() * v.norm()
}

/// Convex hull by monotone chain; colinear points are dropped. The output
/// is CCW and starts at the lexicographically smallest point.
fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(lex_cmp);
    pts.dedup_by(|a, b| a == b);
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Vec2> = Vec::with_capacity(pts.len());
    for p in &pts {
        while lower.len() >= 2 && !is_left_turn(&lower[lower.len() - 2], &lower[lower.len() - 1], p)
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Vec2> = Vec::with_capacity(pts.len());
    for p in pts.iter().rev() {
        while upper.len() >= 2 && !is_left_turn(&upper[upper.len() - 2], &upper[upper.len() - 1], p)
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn signed_area(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|k| cross(&vertices[k], &vertices[(k + 1) % n]))
        .sum::<f64>()
        * 0.5
}

impl ConvexPolygon {
    /// Builds the canonical polygon from an arbitrary point cloud (the convex
    /// hull of `points`).
    pub fn from_vertices(points: &[Vec2]) -> Result<Self, GeometryError> {
        if points.len() < 3 {
            return Err(GeometryError::DegenerateInput("fewer than 3 points"));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeometryError::DegenerateInput("non-finite coordinate"));
        }
        let hull = convex_hull(points);
        if hull.len() < 3 {
            return Err(GeometryError::DegenerateInput("hull has fewer than 3 vertices"));
        }
        let scale = hull
            .iter()
            .map(|v| (v - hull[0]).norm_squared())
            .fold(0.0, f64::max);
        if signed_area(&hull) <= AREA_TOL * scale {
            return Err(GeometryError::DegenerateInput("zero-area hull"));
        }
        let normals = (0..hull.len())
            .map(|k| edge_normal(&hull[k], &hull[(k + 1) % hull.len()]))
            .collect();
        Ok(Self::from_parts(hull, normals))
    }

    /// Assembles a polygon from CCW vertices and matching edge normals, then
    /// rotates the cyclic order so the lexicographically smallest vertex is
    /// first.
    fn from_parts(vertices: Vec<Vec2>, normals: Vec<Vec2>) -> Self {
        let offsets = vertices.iter().zip(&normals).map(|(v, n)| n.dot(v)).collect();
        let mut poly = Self {
            vertices,
            normals,
            offsets,
        };
        poly.canonicalize();
        poly
    }

    fn canonicalize(&mut self) {
        let start = (0..self.vertices.len())
            .min_by(|&i, &j| lex_cmp(&self.vertices[i], &self.vertices[j]))
            .unwrap_or(0);
        self.vertices.rotate_left(start);
        self.normals.rotate_left(start);
        self.offsets.rotate_left(start);
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    /// Outward unit normals, one per edge (the rows of `A`).
    pub fn normals(&self) -> &[Vec2] {
        &self.normals
    }

    /// Right-hand side `b` of `A y <= b`.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn edge_count(&self) -> usize {
        self.vertices.len()
    }

    /// `A` as an `edge_count x 2` matrix.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.edge_count(), 2, |r, c| self.normals[r][c])
    }

    pub fn b_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.offsets)
    }

    /// Edge `k` as its (start, end) vertices.
    pub fn edge(&self, k: usize) -> (Vec2, Vec2) {
        let n = self.edge_count();
        (self.vertices[k % n], self.vertices[(k + 1) % n])
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.edge_count();
        let mut acc = Vec2::zeros();
        let mut area2 = 0.0;
        for k in 0..n {
            let (a, b) = (self.vertices[k], self.vertices[(k + 1) % n]);
            let w = cross(&a, &b);
            acc += (a + b) * w;
            area2 += w;
        }
        acc / (3.0 * area2)
    }

    /// Halfspace membership test with slack `tol`.
    pub fn contains(&self, y: &Vec2, tol: f64) -> bool {
        self.normals
            .iter()
            .zip(&self.offsets)
            .all(|(n, b)| n.dot(y) <= b + tol)
    }

    /// Origin membership via `b >= 0`.
    pub fn contains_origin(&self) -> bool {
        self.offsets.iter().all(|&b| b >= 0.0)
    }

    /// Point reflection through the origin, `-P = { -p : p in P }`.
    pub fn reflect(&self) -> Self {
        Self::from_parts(
            self.vertices.iter().map(|v| -v).collect(),
            self.normals.iter().map(|n| -n).collect(),
        )
    }

    /// Translates every vertex by `t`. Normals are untouched.
    pub fn translate(&self, t: &Vec2) -> Self {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v += t;
        }
        for (b, n) in out.offsets.iter_mut().zip(&out.normals) {
            *b += n.dot(t);
        }
        out
    }

    /// Cyclic shift of row order, breaking canonical ordering. Only for
    /// checking that results do not depend on row order.
    #[cfg(test)]
    pub(crate) fn shifted_rows(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.vertices.rotate_left(k);
        out.normals.rotate_left(k);
        out.offsets.rotate_left(k);
        out
    }
}

/// Convenience wrapper matching the free-function style used elsewhere.
pub fn polygon_from_vertices(points: &[Vec2]) -> Result<ConvexPolygon, GeometryError> {
    ConvexPolygon::from_vertices(points)
}

pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Places the robot shape `base`, described at `base_pose`, at `pose`.
///
/// Vertices map as `v -> R(θ-θ0)(v - p0) + p`; rows as `A(x) = A R(θ-θ0)ᵀ`
/// and `b(x) = b + A(x) p - A p0`. With zero rotation the normals are copied
/// bit-for-bit.
pub fn transform_robot(base: &ConvexPolygon, base_pose: &Pose2, pose: &Pose2) -> ConvexPolygon {
    let rot = rotation(pose.theta - base_pose.theta);
    let vertices = base
        .vertices
        .iter()
        .map(|v| rot * (v - base_pose.p) + pose.p)
        .collect();
    let normals: Vec<Vec2> = base.normals.iter().map(|n| rot * n).collect();
    let offsets = base
        .offsets
        .iter()
        .zip(base.normals.iter().zip(&normals))
        .map(|(b, (n0, n))| b + n.dot(&pose.p) - n0.dot(&base_pose.p))
        .collect();
    let mut poly = ConvexPolygon {
        vertices,
        normals,
        offsets,
    };
    poly.canonicalize();
    poly
}

/// Edge sequence of a polygon ordered by normal angle, starting at the edge
/// with the smallest angle in `[0, 2π)`.
struct AngularEdges<'a> {
    poly: &'a ConvexPolygon,
    start: usize,
    angles: Vec<f64>,
}

impl<'a> AngularEdges<'a> {
    fn new(poly: &'a ConvexPolygon) -> Self {
        let n = poly.edge_count();
        let raw: Vec<f64> = poly.normals.iter().map(normal_angle).collect();
        let start = (0..n)
            .min_by(|&i, &j| raw[i].total_cmp(&raw[j]))
            .unwrap_or(0);
        let angles = (0..n).map(|k| raw[(start + k) % n]).collect();
        Self { poly, start, angles }
    }

    fn len(&self) -> usize {
        self.angles.len()
    }

    fn index(&self, k: usize) -> usize {
        (self.start + k) % self.poly.edge_count()
    }

    fn vertex(&self, k: usize) -> Vec2 {
        self.poly.vertices[self.index(k)]
    }

    fn normal(&self, k: usize) -> Vec2 {
        self.poly.normals[self.index(k)]
    }
}

/// Configuration obstacle `obstacle ⊕ (-robot)` by merging the two edge
/// sequences in normal-angle order. Runs in `O(ℓ_o + ℓ_r)`.
///
/// Every vertex is an exact pairwise sum `o_i - r_j` and every normal is copied
/// from an input edge. Edges whose normals agree within [`PARALLEL_TOL`] are
/// fused; on ties the obstacle normal is kept.
pub fn minkowski_difference(obstacle: &ConvexPolygon, robot: &ConvexPolygon) -> ConvexPolygon {
    minkowski_sum(obstacle, &robot.reflect())
}

pub fn minkowski_sum(p: &ConvexPolygon, q: &ConvexPolygon) -> ConvexPolygon {
    let ep = AngularEdges::new(p);
    let eq = AngularEdges::new(q);
    let (lp, lq) = (ep.len(), eq.len());
    let mut vertices = Vec::with_capacity(lp + lq);
    let mut normals = Vec::with_capacity(lp + lq);
    let (mut i, mut j) = (0, 0);
    while i < lp || j < lq {
        vertices.push(ep.vertex(i) + eq.vertex(j));
        if i < lp && j < lq && angular_gap(ep.angles[i], eq.angles[j]) <= PARALLEL_TOL {
            normals.push(ep.normal(i));
            i += 1;
            j += 1;
        } else if j >= lq || (i < lp && ep.angles[i] <= eq.angles[j]) {
            normals.push(ep.normal(i));
            i += 1;
        } else {
            normals.push(eq.normal(j));
            j += 1;
        }
    }
    // The last and first edges may be parallel across the 0/2π seam.
    if normals.len() > 3
        && angular_gap(
            normal_angle(&normals[0]),
            normal_angle(&normals[normals.len() - 1]),
        ) <= PARALLEL_TOL
    {
        vertices.remove(0);
        let first = normals.remove(0);
        if let Some(last) = normals.last_mut() {
            *last = first;
        }
    }
    ConvexPolygon::from_parts(vertices, normals)
}
