//! Reference computations that share no code with the library: brute-force
//! convex hulls, separating axes, segment distances, boundary sampling and a
//! first-order dual QP method.

use nalgebra::{DMatrix, DVector, Vector2};

pub type P = Vector2<f64>;

fn cross(o: &P, a: &P, b: &P) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Gift-wrapping hull, counter-clockwise from the lexicographically smallest
/// point. Colinear points are dropped in favor of the farthest one.
pub fn gift_wrap(points: &[P]) -> Vec<P> {
    let start = *points
        .iter()
        .min_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)))
        .expect("non-empty point set");
    let scale = points.iter().map(|p| p.amax()).fold(1.0, f64::max);
    let eps = 1e-12 * scale * scale;
    let mut hull = vec![start];
    let mut current = start;
    loop {
        let mut next = if points[0] == current { points[1] } else { points[0] };
        for p in points {
            if *p == current {
                continue;
            }
            let c = cross(&current, &next, p);
            if c < -eps || (c.abs() <= eps && (p - current).norm() > (next - current).norm()) {
                next = *p;
            }
        }
        if (next - start).norm() <= 1e-14 * scale || hull.len() > points.len() {
            break;
        }
        hull.push(next);
        current = next;
    }
    hull
}

/// Configuration obstacle as the hull of all obstacle-minus-robot vertex
/// differences.
pub fn difference_hull(obstacle: &[P], robot: &[P]) -> Vec<P> {
    let pts: Vec<P> = obstacle.iter().flat_map(|o| robot.iter().map(move |r| o - r)).collect();
    gift_wrap(&pts)
}

fn projections(poly: &[P], axis: &P) -> (f64, f64) {
    poly.iter()
        .map(|p| p.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Separating-axis test over the edge normals of both polygons. Returns
/// true when some axis separates them with a positive gap.
pub fn sat_separated(a: &[P], b: &[P]) -> bool {
    for poly in [a, b] {
        for i in 0..poly.len() {
            let e = poly[(i + 1) % poly.len()] - poly[i];
            let axis = P::new(e.y, -e.x).normalize();
            let (alo, ahi) = projections(a, &axis);
            let (blo, bhi) = projections(b, &axis);
            if ahi < blo || bhi < alo {
                return true;
            }
        }
    }
    false
}

/// Closest point to `q` on segment `[a, b]` and the unclamped parameter.
pub fn closest_on_segment(q: &P, a: &P, b: &P) -> (P, f64) {
    let d = b - a;
    let t = (q - a).dot(&d) / d.norm_squared();
    (a + d * t.clamp(0.0, 1.0), t)
}

fn segment_distance(a0: &P, a1: &P, b0: &P, b1: &P) -> f64 {
    let d = |q: &P, s: &P, e: &P| (closest_on_segment(q, s, e).0 - q).norm();
    d(a0, b0, b1).min(d(a1, b0, b1)).min(d(b0, a0, a1)).min(d(b1, a0, a1))
}

/// Minimum distance between the boundaries of two disjoint polygons.
pub fn boundary_distance(a: &[P], b: &[P]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..a.len() {
        for j in 0..b.len() {
            best = best.min(segment_distance(
                &a[i],
                &a[(i + 1) % a.len()],
                &b[j],
                &b[(j + 1) % b.len()],
            ));
        }
    }
    best
}

/// Point-in-polygon for a counter-clockwise convex polygon.
pub fn contains(poly: &[P], q: &P) -> bool {
    (0..poly.len()).all(|i| cross(&poly[i], &poly[(i + 1) % poly.len()], q) >= 0.0)
}

/// Nearest point to the origin on the polygon boundary, with the index of
/// the edge it lies on and that edge's unclamped parameter.
pub fn nearest_boundary_point(poly: &[P]) -> (P, usize, f64) {
    let origin = P::zeros();
    (0..poly.len())
        .map(|i| {
            let (p, t) = closest_on_segment(&origin, &poly[i], &poly[(i + 1) % poly.len()]);
            (p, i, t)
        })
        .min_by(|a, b| a.0.norm().total_cmp(&b.0.norm()))
        .expect("non-empty polygon")
}

/// Signed distance of the origin to a polygon: boundary distance, negated
/// when the origin is inside.
pub fn signed_origin_distance(poly: &[P]) -> (f64, P) {
    let (p, _, _) = nearest_boundary_point(poly);
    let d = p.norm();
    if contains(poly, &P::zeros()) {
        (-d, p)
    } else {
        (d, p)
    }
}

/// Distance from the origin to the polygon boundary by dense sampling:
/// `samples` points per edge, then the same number again on the two
/// intervals around the best coarse sample.
pub fn sampled_boundary_distance(poly: &[P], samples: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let at = |s: f64| (a + (b - a) * s).norm();
        let step = 1.0 / samples as f64;
        let (mut s_best, mut d_best) = (0.0, f64::INFINITY);
        for k in 0..=samples {
            let s = k as f64 * step;
            let d = at(s);
            if d < d_best {
                d_best = d;
                s_best = s;
            }
        }
        let lo = (s_best - step).max(0.0);
        let hi = (s_best + step).min(1.0);
        for k in 0..=samples {
            d_best = d_best.min(at(lo + (hi - lo) * k as f64 / samples as f64));
        }
        best = best.min(d_best);
    }
    best
}

/// Result of the first-order reference QP method.
pub struct DualPgSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Largest violation of `G x <= d` at `x`.
    pub violation: f64,
    /// Primal objective minus dual objective.
    pub gap: f64,
    pub iterations: usize,
}

/// Accelerated projected gradient on the dual of
/// `min 1/2 xᵀHx + cᵀx  s.t.  Gx <= d`, with adaptive restart.
pub fn dual_projected_gradient(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    g: &DMatrix<f64>,
    d: &DVector<f64>,
    max_iter: usize,
    gap_tol: f64,
) -> DualPgSolution {
    let hinv = h.clone().try_inverse().expect("invertible Hessian");
    let m = d.len();
    let f = |x: &DVector<f64>| 0.5 * x.dot(&(h * x)) + c.dot(x);
    if m == 0 {
        let x = -(&hinv * c);
        return DualPgSolution {
            objective: f(&x),
            violation: 0.0,
            gap: 0.0,
            x,
            iterations: 0,
        };
    }
    let q = g * &hinv * g.transpose();
    let lip = q.clone().symmetric_eigenvalues().amax().max(1e-12);
    let primal = |lam: &DVector<f64>| -(&hinv * (c + g.transpose() * lam));
    let dual_value = |lam: &DVector<f64>| {
        let w = c + g.transpose() * lam;
        -0.5 * w.dot(&(&hinv * &w)) - d.dot(lam)
    };
    let viol = |x: &DVector<f64>| (g * x - d).iter().fold(0.0f64, |a, &v| a.max(v));

    let mut lam = DVector::zeros(m);
    let mut y = lam.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut best: Option<(DVector<f64>, f64)> = None;
    while iterations < max_iter {
        iterations += 1;
        let x = primal(&y);
        let grad = g * &x - d;
        let next = (&y + grad / lip).map(|v| v.max(0.0));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let restart = (&next - &lam).dot(&(&y - &next)) > 0.0;
        y = if restart {
            t = 1.0;
            next.clone()
        } else {
            let y_next = &next + (&next - &lam) * ((t - 1.0) / t_next);
            t = t_next;
            y_next
        };
        lam = next;
        if iterations % 20 == 0 || iterations == max_iter {
            let x = primal(&lam);
            let v = viol(&x);
            let gap = f(&x) - dual_value(&lam);
            if v <= 1e-12 && gap.abs() <= gap_tol {
                best = Some((x, gap));
                break;
            }
        }
    }
    let (x, gap) = best.unwrap_or_else(|| {
        let x = primal(&lam);
        let gap = f(&x) - dual_value(&lam);
        (x, gap)
    });
    DualPgSolution {
        objective: f(&x),
        violation: viol(&x),
        gap,
        x,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(cx: f64, cy: f64, half: f64) -> Vec<P> {
        vec![
            P::new(cx - half, cy - half),
            P::new(cx + half, cy - half),
            P::new(cx + half, cy + half),
            P::new(cx - half, cy + half),
        ]
    }

    #[test]
    fn hull_drops_interior_and_colinear_points() {
        let mut pts = square(0.0, 0.0, 1.0);
        pts.extend([P::new(0.0, 0.0), P::new(0.0, -1.0), P::new(0.3, 0.2)]);
        assert_eq!(gift_wrap(&pts), square(0.0, 0.0, 1.0));
    }

    #[test]
    fn difference_of_squares() {
        let hull = difference_hull(&square(3.0, 0.0, 1.0), &square(0.0, 0.0, 0.5));
        assert_eq!(hull, square(3.0, 0.0, 1.5));
    }

    #[test]
    fn separating_axes() {
        assert!(sat_separated(&square(0.0, 0.0, 1.0), &square(2.5, 0.0, 1.0)));
        assert!(!sat_separated(&square(0.0, 0.0, 1.0), &square(1.5, 0.0, 1.0)));
        let diamond = vec![P::new(2.2, 0.0), P::new(3.0, -0.8), P::new(3.8, 0.0), P::new(3.0, 0.8)];
        assert!(sat_separated(&square(0.0, 0.0, 1.0), &diamond));
    }

    #[test]
    fn distances() {
        assert!((boundary_distance(&square(0.0, 0.0, 1.0), &square(4.0, 3.0, 1.0)) - 5f64.sqrt()).abs() < 1e-15);
        let (sd, z) = signed_origin_distance(&square(0.5, 0.0, 1.0));
        assert_eq!((sd, z), (-0.5, P::new(-0.5, 0.0)));
        assert!((sampled_boundary_distance(&square(0.5, 0.0, 1.0), 1000) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dual_method_solves_a_known_qp() {
        // min |x|² s.t. x0 + x1 >= 2, optimum (1, 1).
        let h = DMatrix::identity(2, 2) * 2.0;
        let g = DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]);
        let s = dual_projected_gradient(&h, &DVector::zeros(2), &g, &DVector::from_element(1, -2.0), 10_000, 1e-13);
        assert!((s.x - DVector::from_element(2, 1.0)).amax() < 1e-9);
        assert!((s.objective - 2.0).abs() < 1e-9);
    }
}
