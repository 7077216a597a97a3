//! Signed distance between the origin and a configuration obstacle.
//!
//! Outside the CO the value is the Euclidean distance to its projection `z*`
//! (with KKT multipliers recovered on the active rows). Inside, it is minus
//! the depth `min_k b_k`, attained on the face `k_act`, with `z* = b_k a_k`.

use crate::geometry::{minkowski_difference, ConvexPolygon, Vec2};
use nalgebra::Matrix2;
use serde::Serialize;
use thiserror::Error;

/// Rows whose offsets differ from the minimum by at most this much are
/// reported as tied in the penetration branch.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdfError {
    #[error("origin lies inside the configuration obstacle; use penetration_depth")]
    OriginInside,
    #[error("origin lies outside the configuration obstacle; use project_origin")]
    OriginOutside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Distance,
    Penetration,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Distance => "distance",
            Branch::Penetration => "penetration",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdfResult {
    /// Signed distance in meters.
    pub value: f64,
    /// Critical point on the CO boundary.
    pub z_star: Vec2,
    /// Multipliers over all CO rows; zero off the active set.
    pub duals: Vec<f64>,
    /// Active rows in ascending order. In the penetration branch this holds
    /// every row tied at the minimum; the first entry is `k_act`.
    pub active_rows: Vec<usize>,
    pub branch: Branch,
    /// Normals and offsets of the active rows, copied so that downstream
    /// differentiation needs only this value.
    pub active_normals: Vec<Vec2>,
    pub active_offsets: Vec<f64>,
}

impl SdfResult {
    pub fn k_act(&self) -> usize {
        self.active_rows[0]
    }
}

fn closest_on_segment(a: &Vec2, b: &Vec2) -> (f64, Vec2) {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 { -a.dot(&d) / len2 } else { 0.0 };
    (t, a + d * t.clamp(0.0, 1.0))
}

/// Projection of the origin onto `co` when the origin is outside.
pub fn project_origin(co: &ConvexPolygon) -> Result<SdfResult, SdfError> {
    if co.contains_origin() {
        return Err(SdfError::OriginInside);
    }
    let n = co.edge_count();
    let mut best = (f64::INFINITY, 0usize, 0.0f64);
    for k in 0..n {
        let (a, b) = co.edge(k);
        let (t, q) = closest_on_segment(&a, &b);
        let d = q.norm_squared();
        if d < best.0 {
            best = (d, k, t);
        }
    }
    let (_, k, t) = best;
    let normals = co.normals();
    let offsets = co.offsets();
    let mut duals = vec![0.0; n];

    let (z_star, active_rows) = if t > 0.0 && t < 1.0 {
        // Interior of edge k: projection onto the supporting line is exact.
        let z = normals[k] * offsets[k];
        duals[k] = -2.0 * offsets[k];
        (z, vec![k])
    } else {
        // Vertex contact between two consecutive rows.
        let vidx = if t <= 0.0 { k } else { (k + 1) % n };
        let prev = (vidx + n - 1) % n;
        let z = co.vertices()[vidx];
        let (r0, r1) = if prev < vidx { (prev, vidx) } else { (vidx, prev) };
        // 2 z + Aᵀ λ = 0 on the two active rows.
        let at = Matrix2::from_columns(&[normals[r0], normals[r1]]);
        let lam = at
            .lu()
            .solve(&(-2.0 * z))
            .unwrap_or_else(nalgebra::Vector2::zeros);
        duals[r0] = lam[0].max(0.0);
        duals[r1] = lam[1].max(0.0);
        (z, vec![r0, r1])
    };

    Ok(SdfResult {
        value: z_star.norm(),
        z_star,
        active_normals: active_rows.iter().map(|&r| normals[r]).collect(),
        active_offsets: active_rows.iter().map(|&r| offsets[r]).collect(),
        duals,
        active_rows,
        branch: Branch::Distance,
    })
}

/// Depth of the origin inside `co`: `s* = min_k b_k` over unit-normal rows.
pub fn penetration_depth(co: &ConvexPolygon) -> Result<SdfResult, SdfError> {
    if !co.contains_origin() {
        return Err(SdfError::OriginOutside);
    }
    let offsets = co.offsets();
    let normals = co.normals();
    let mut k_act = 0;
    for (k, &b) in offsets.iter().enumerate() {
        if b < offsets[k_act] {
            k_act = k;
        }
    }
    let depth = offsets[k_act];
    let active_rows: Vec<usize> = std::iter::once(k_act)
        .chain((0..offsets.len()).filter(|&k| k != k_act && offsets[k] - depth <= TIE_TOL))
        .collect();
    let mut duals = vec![0.0; offsets.len()];
    duals[k_act] = 1.0;
    let z_star = normals[k_act] * depth;
    Ok(SdfResult {
        value: -depth,
        z_star,
        active_normals: active_rows.iter().map(|&r| normals[r]).collect(),
        active_offsets: active_rows.iter().map(|&r| offsets[r]).collect(),
        duals,
        active_rows,
        branch: Branch::Penetration,
    })
}

/// Dispatches on origin membership.
pub fn signed_distance_co(co: &ConvexPolygon) -> SdfResult {
    if co.contains_origin() {
        penetration_depth(co).expect("origin membership checked")
    } else {
        project_origin(co).expect("origin membership checked")
    }
}

/// Signed distance between `robot` and `obstacle` via their configuration
/// obstacle. Positive when disjoint.
pub fn signed_distance(robot: &ConvexPolygon, obstacle: &ConvexPolygon) -> SdfResult {
    signed_distance_co(&minkowski_difference(obstacle, robot))
}
