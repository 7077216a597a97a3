//! State derivatives of the configuration obstacle, implicit differentiation
//! of the critical point through the KKT system, and the CBF gradient.

use crate::geometry::{minkowski_difference, transform_robot, ConvexPolygon, Pose2, Vec2};
use crate::sdf::{Branch, SdfResult};
use nalgebra::{DMatrix, DVector, Matrix2xX};
use std::f64::consts::TAU;
use thiserror::Error;

/// Below this `‖z*‖` the signed distance is at contact and has no gradient.
pub const CONTACT_EPSILON: f64 = 1e-9;

/// Relative singular-value floor for the KKT matrix.
pub const KKT_RANK_TOL: f64 = 1e-10;

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Largest normal-angle change between matched rows of perturbed COs.
pub const MAX_ROW_ROTATION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("active set changed under finite-difference perturbation of state component {component}")]
    ActiveSetChange { component: usize },
    #[error("KKT matrix is singular (smallest relative singular value {0:e})")]
    SingularKkt(f64),
    #[error("signed distance at contact, gradient undefined (|z*| = {0:e})")]
    ContactSingularity(f64),
    #[error("penetration depth attained on {0} tied rows")]
    PenetrationTie(usize),
    #[error("non-finite finite-difference derivative")]
    NonFinite,
    #[error("derivative rows ({derivs}) do not match the CO ({co})")]
    RowMismatch { derivs: usize, co: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeSource {
    ClosedFormTranslation,
    FiniteDifference,
    Mixed,
}

/// Which pose coordinate a state component drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseComponent {
    X,
    Y,
    Theta,
}

/// `d_x A^C` (one `ℓ_C x 2` slice per state component) and `d_x b^C`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoDerivatives {
    pub da: Vec<DMatrix<f64>>,
    pub db: DMatrix<f64>,
    pub source: DerivativeSource,
}

impl CoDerivatives {
    pub fn zeros(rows: usize, n_state: usize, source: DerivativeSource) -> Self {
        Self {
            da: vec![DMatrix::zeros(rows, 2); n_state],
            db: DMatrix::zeros(rows, n_state),
            source,
        }
    }

    pub fn rows(&self) -> usize {
        self.db.nrows()
    }

    pub fn n_state(&self) -> usize {
        self.db.ncols()
    }

    /// Derivative of row `k`'s normal w.r.t. state component `j`.
    pub fn da_row(&self, k: usize, j: usize) -> Vec2 {
        Vec2::new(self.da[j][(k, 0)], self.da[j][(k, 1)])
    }

    /// Sum of two derivative sets over disjoint state columns.
    pub fn combine(&self, other: &CoDerivatives) -> CoDerivatives {
        let source = if self.source == other.source {
            self.source
        } else {
            DerivativeSource::Mixed
        };
        CoDerivatives {
            da: self.da.iter().zip(&other.da).map(|(a, b)| a + b).collect(),
            db: &self.db + &other.db,
            source,
        }
    }
}

/// Closed-form derivatives for pure translation: `d A^C = 0`, `d b^C = -A^C`
/// in the position columns.
pub fn translation_co_derivatives(
    co: &ConvexPolygon,
    n_state: usize,
    position_indices: (usize, usize),
) -> CoDerivatives {
    let mut d = CoDerivatives::zeros(co.edge_count(), n_state, DerivativeSource::ClosedFormTranslation);
    for (k, a) in co.normals().iter().enumerate() {
        d.db[(k, position_indices.0)] = -a.x;
        d.db[(k, position_indices.1)] = -a.y;
    }
    d
}

/// Robot footprint together with the pose it was described at.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotShape {
    pub base: ConvexPolygon,
    pub base_pose: Pose2,
}

impl RobotShape {
    pub fn at(&self, pose: &Pose2) -> ConvexPolygon {
        transform_robot(&self.base, &self.base_pose, pose)
    }

    pub fn configuration_obstacle(&self, obstacle: &ConvexPolygon, pose: &Pose2) -> ConvexPolygon {
        minkowski_difference(obstacle, &self.at(pose))
    }
}

fn perturbed(pose: &Pose2, component: PoseComponent, h: f64) -> Pose2 {
    let mut p = *pose;
    match component {
        PoseComponent::X => p.p.x += h,
        PoseComponent::Y => p.p.y += h,
        PoseComponent::Theta => p.theta += h,
    }
    p
}

fn angle_diff(a: &Vec2, b: &Vec2) -> f64 {
    let d = (b.y.atan2(b.x) - a.y.atan2(a.x)).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Cyclic shift `s` so that row `k` of `nominal` matches row `k + s` of
/// `other`, with the worst normal-angle mismatch.
fn align_rows(nominal: &ConvexPolygon, other: &ConvexPolygon) -> (usize, f64) {
    let n = nominal.edge_count();
    (0..n)
        .map(|s| {
            let worst = (0..n)
                .map(|k| angle_diff(&nominal.normals()[k], &other.normals()[(k + s) % n]))
                .fold(0.0, f64::max);
            (s, worst)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, f64::INFINITY))
}

/// Central differences of `(A^C, b^C)` for the listed `(pose component,
/// state column)` pairs. Other columns are zero.
///
/// Rows of the perturbed COs are matched to the nominal CO by cyclic
/// alignment of their normals, so a change of canonical start vertex does
/// not corrupt the correspondence.
pub fn finite_difference_co_derivatives(
    obstacle: &ConvexPolygon,
    robot: &RobotShape,
    pose: &Pose2,
    columns: &[(PoseComponent, usize)],
    n_state: usize,
    step: f64,
) -> Result<CoDerivatives, DiffError> {
    let nominal = robot.configuration_obstacle(obstacle, pose);
    let rows = nominal.edge_count();
    let mut d = CoDerivatives::zeros(rows, n_state, DerivativeSource::FiniteDifference);
    for &(component, col) in columns {
        let plus = robot.configuration_obstacle(obstacle, &perturbed(pose, component, step));
        let minus = robot.configuration_obstacle(obstacle, &perturbed(pose, component, -step));
        if plus.edge_count() != rows || minus.edge_count() != rows {
            return Err(DiffError::ActiveSetChange { component: col });
        }
        let (sp, wp) = align_rows(&nominal, &plus);
        let (sm, wm) = align_rows(&nominal, &minus);
        if wp > MAX_ROW_ROTATION || wm > MAX_ROW_ROTATION {
            return Err(DiffError::ActiveSetChange { component: col });
        }
        for k in 0..rows {
            let (kp, km) = ((k + sp) % rows, (k + sm) % rows);
            let dn = (plus.normals()[kp] - minus.normals()[km]) / (2.0 * step);
            let dbk = (plus.offsets()[kp] - minus.offsets()[km]) / (2.0 * step);
            if !(dn.x.is_finite() && dn.y.is_finite() && dbk.is_finite()) {
                return Err(DiffError::NonFinite);
            }
            d.da[col][(k, 0)] = dn.x;
            d.da[col][(k, 1)] = dn.y;
            d.db[(k, col)] = dbk;
        }
    }
    Ok(d)
}

/// [`finite_difference_co_derivatives`] with one retry at half the step on
/// an active-set change.
pub fn finite_difference_with_retry(
    obstacle: &ConvexPolygon,
    robot: &RobotShape,
    pose: &Pose2,
    columns: &[(PoseComponent, usize)],
    n_state: usize,
    step: f64,
) -> Result<CoDerivatives, DiffError> {
    match finite_difference_co_derivatives(obstacle, robot, pose, columns, n_state, step) {
        Err(DiffError::ActiveSetChange { .. }) => {
            finite_difference_co_derivatives(obstacle, robot, pose, columns, n_state, 0.5 * step)
        }
        other => other,
    }
}

/// Sensitivities of the primal-dual optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct KktJacobian {
    /// `∂z*/∂x`, `2 x n`.
    pub dz_dx: Matrix2xX<f64>,
    /// `∂λ/∂x` for the active rows (in `active_rows` order).
    pub dlambda_dx: DMatrix<f64>,
}

/// Implicit differentiation of the distance QP restricted to its active
/// rows, or of the closed-form `z* = b_k a_k` in the penetration branch.
pub fn kkt_jacobian(result: &SdfResult, derivs: &CoDerivatives) -> Result<KktJacobian, DiffError> {
    let n = derivs.n_state();
    if let Some(&max_row) = result.active_rows.iter().max() {
        if max_row >= derivs.rows() {
            return Err(DiffError::RowMismatch {
                derivs: derivs.rows(),
                co: max_row + 1,
            });
        }
    }
    match result.branch {
        Branch::Distance => distance_jacobian(result, derivs, n),
        Branch::Penetration => penetration_jacobian(result, derivs, n),
    }
}

fn distance_jacobian(result: &SdfResult, derivs: &CoDerivatives, n: usize) -> Result<KktJacobian, DiffError> {
    let rows = &result.active_rows;
    let m = rows.len();
    let dim = 2 + m;
    let z = result.z_star;

    // ∂_ξ G = [2I  Aᵀ; D(λ)A  D(Az - b)]
    let mut lhs = DMatrix::<f64>::zeros(dim, dim);
    lhs[(0, 0)] = 2.0;
    lhs[(1, 1)] = 2.0;
    for (i, (&k, a)) in rows.iter().zip(&result.active_normals).enumerate() {
        let lam = result.duals[k];
        lhs[(0, 2 + i)] = a.x;
        lhs[(1, 2 + i)] = a.y;
        lhs[(2 + i, 0)] = lam * a.x;
        lhs[(2 + i, 1)] = lam * a.y;
        lhs[(2 + i, 2 + i)] = a.dot(&z) - result.active_offsets[i];
    }

    // ∂_x G = [Σ λ_k dA_kᵀ ; D(λ)(dA z - db)]
    let mut rhs = DMatrix::<f64>::zeros(dim, n);
    for j in 0..n {
        for (i, &k) in rows.iter().enumerate() {
            let lam = result.duals[k];
            let da = derivs.da_row(k, j);
            rhs[(0, j)] += lam * da.x;
            rhs[(1, j)] += lam * da.y;
            rhs[(2 + i, j)] = lam * (da.dot(&z) - derivs.db[(k, j)]);
        }
    }

    let svd = lhs.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin / smax < KKT_RANK_TOL {
        return Err(DiffError::SingularKkt(if smax > 0.0 { smin / smax } else { 0.0 }));
    }
    let sol = lhs
        .lu()
        .solve(&(-rhs))
        .ok_or(DiffError::SingularKkt(0.0))?;
    Ok(KktJacobian {
        dz_dx: Matrix2xX::from_fn(n, |r, c| sol[(r, c)]),
        dlambda_dx: sol.rows(2, m).into_owned(),
    })
}

fn penetration_jacobian(result: &SdfResult, derivs: &CoDerivatives, n: usize) -> Result<KktJacobian, DiffError> {
    if result.active_rows.len() > 1 {
        return Err(DiffError::PenetrationTie(result.active_rows.len()));
    }
    let k = result.k_act();
    let a = result.active_normals[0];
    let b = result.active_offsets[0];
    // z* = b_k a_k  =>  ∂z*/∂x_j = (∂b_k/∂x_j) a_k + b_k ∂a_k/∂x_j
    let dz_dx = Matrix2xX::from_fn(n, |r, j| derivs.db[(k, j)] * a[r] + b * derivs.da_row(k, j)[r]);
    Ok(KktJacobian {
        dz_dx,
        dlambda_dx: DMatrix::zeros(1, n),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbfGradient {
    pub dh_dx: DVector<f64>,
    pub valid: bool,
}

/// `∂h/∂x = (∂h/∂z*)(∂z*/∂x)` with `∂h/∂z* = z*ᵀ / (h + d_safe)`.
pub fn cbf_gradient(result: &SdfResult, jac: &KktJacobian, d_safe: f64) -> Result<CbfGradient, DiffError> {
    let norm = result.z_star.norm();
    if norm <= CONTACT_EPSILON {
        return Err(DiffError::ContactSingularity(norm));
    }
    let h = result.value - d_safe;
    let dh_dz = result.z_star / (h + d_safe);
    let row = dh_dz.transpose() * &jac.dz_dx;
    Ok(CbfGradient {
        dh_dx: DVector::from_iterator(row.len(), row.iter().copied()),
        valid: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::polygon_from_vertices;
    use crate::sdf::{penetration_depth, project_origin, signed_distance_co};
    use approx::assert_relative_eq;
    use nalgebra::Matrix2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> ConvexPolygon {
        polygon_from_vertices(&[
            Vec2::new(x0, y0),
            Vec2::new(x1, y0),
            Vec2::new(x1, y1),
            Vec2::new(x0, y1),
        ])
        .unwrap()
    }

    fn random_polygon(rng: &mut ChaCha8Rng, spread: f64) -> ConvexPolygon {
        loop {
            let k = rng.gen_range(3..=7);
            let c = Vec2::new(rng.gen_range(-spread..spread), rng.gen_range(-spread..spread));
            let r = rng.gen_range(0.5..2.0);
            let pts: Vec<Vec2> = (0..k)
                .map(|_| {
                    let t: f64 = rng.gen_range(0.0..TAU);
                    c + Vec2::new(t.cos(), t.sin()) * r
                })
                .collect();
            if let Ok(p) = polygon_from_vertices(&pts) {
                return p;
            }
        }
    }

    const POSE_COLUMNS: [(PoseComponent, usize); 3] =
        [(PoseComponent::X, 0), (PoseComponent::Y, 1), (PoseComponent::Theta, 2)];

    #[test]
    fn translation_derivatives_are_minus_a() {
        let co = rect(1.0, 3.0, -1.0, 1.0);
        let d = translation_co_derivatives(&co, 2, (0, 1));
        assert_eq!(d.db, -co.a_matrix());
        assert!(d.da.iter().all(|m| m.iter().all(|&v| v == 0.0)));
        let d4 = translation_co_derivatives(&co, 4, (0, 1));
        assert!(d4.db.column(2).iter().chain(d4.db.column(3).iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn finite_difference_translation_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        while checked < 50 {
            let obstacle = random_polygon(&mut rng, 3.0);
            let robot = RobotShape {
                base: random_polygon(&mut rng, 3.0),
                base_pose: Pose2::new(0.0, 0.0, 0.0),
            };
            let pose = Pose2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let cols = [(PoseComponent::X, 0), (PoseComponent::Y, 1)];
            let Ok(fd) = finite_difference_co_derivatives(&obstacle, &robot, &pose, &cols, 2, 1e-6) else {
                continue;
            };
            let co = robot.configuration_obstacle(&obstacle, &pose);
            let cf = translation_co_derivatives(&co, 2, (0, 1));
            assert!((fd.db - cf.db).abs().max() <= 1e-6);
            assert!(fd.da.iter().all(|m| m.abs().max() <= 1e-6));
            checked += 1;
        }
    }

    #[test]
    fn theta_derivative_of_rotated_edge_normal() {
        // Square robot at θ0 = 0 against a triangle with no parallel edges.
        let obstacle = polygon_from_vertices(&[
            Vec2::new(3.0, -1.0),
            Vec2::new(5.0, 0.2),
            Vec2::new(3.4, 1.7),
        ])
        .unwrap();
        let robot = RobotShape {
            base: rect(-0.5, 0.5, -0.5, 0.5),
            base_pose: Pose2::new(0.0, 0.0, 0.0),
        };
        let theta = 0.0;
        let d = finite_difference_co_derivatives(
            &obstacle,
            &robot,
            &Pose2::new(0.0, 0.0, theta),
            &[(PoseComponent::Theta, 2)],
            3,
            DEFAULT_FD_STEP,
        )
        .unwrap();
        let co = robot.configuration_obstacle(&obstacle, &Pose2::new(0.0, 0.0, theta));
        // Rows from the reflected robot have normal -R(θ) n0; its derivative
        // is -R'(θ) n0 with R'(θ) = [-sin -cos; cos -sin].
        let dr = Matrix2::new(-theta.sin(), -theta.cos(), theta.cos(), -theta.sin());
        let robot_normals: Vec<Vec2> = robot.base.normals().iter().map(|n| -n).collect();
        let mut matched = 0;
        for (k, a) in co.normals().iter().enumerate() {
            if let Some(n0) = robot_normals.iter().find(|n| (*n - a).norm() < 1e-12) {
                let expected = dr * n0;
                assert!((d.da_row(k, 2) - expected).norm() <= 1e-6);
                matched += 1;
            } else {
                // Obstacle rows keep their normals under robot rotation.
                assert!(d.da_row(k, 2).norm() <= 1e-6);
            }
        }
        assert_eq!(matched, 4);
    }

    #[test]
    fn parallel_edges_raise_active_set_change() {
        let obstacle = rect(2.0, 3.0, -1.0, 1.0);
        let robot = RobotShape {
            base: rect(-0.5, 0.5, -0.5, 0.5),
            base_pose: Pose2::new(0.0, 0.0, 0.0),
        };
        let res = finite_difference_with_retry(
            &obstacle,
            &robot,
            &Pose2::new(0.0, 0.0, 0.0),
            &[(PoseComponent::Theta, 2)],
            3,
            DEFAULT_FD_STEP,
        );
        assert!(matches!(res, Err(DiffError::ActiveSetChange { component: 2 })));
    }

    #[test]
    fn single_edge_translation_jacobian() {
        let co = rect(1.0, 3.0, -1.0, 1.0);
        let r = project_origin(&co).unwrap();
        let jac = kkt_jacobian(&r, &translation_co_derivatives(&co, 2, (0, 1))).unwrap();
        let a = r.active_normals[0];
        let expected = -(a * a.transpose());
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(jac.dz_dx[(i, j)], expected[(i, j)], epsilon = 1e-12);
            }
        }
        let g = cbf_gradient(&r, &jac, 0.0).unwrap();
        // Moving the robot along +x brings the CO toward the origin.
        assert_relative_eq!(g.dh_dx[0], a.x, epsilon = 1e-12);
        assert_relative_eq!(g.dh_dx[1], a.y, epsilon = 1e-12);
    }

    #[test]
    fn vertex_translation_jacobian_is_minus_identity() {
        let co = rect(1.0, 2.0, 1.0, 2.0);
        let r = project_origin(&co).unwrap();
        let jac = kkt_jacobian(&r, &translation_co_derivatives(&co, 2, (0, 1))).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { -1.0 } else { 0.0 };
                assert_relative_eq!(jac.dz_dx[(i, j)], e, epsilon = 1e-12);
            }
        }
        // Cross-check with finite differences of z*(p).
        let h = 1e-6;
        for j in 0..2 {
            let mut t = Vec2::zeros();
            t[j] = h;
            let zp = project_origin(&co.translate(&-t)).unwrap().z_star;
            let zm = project_origin(&co.translate(&t)).unwrap().z_star;
            let fd = (zp - zm) / (2.0 * h);
            assert!((fd - jac.dz_dx.column(j)).norm() <= 1e-8);
        }
    }

    #[test]
    fn penetration_gradient_points_along_face() {
        let co = rect(-1.2, 0.8, -1.0, 1.0);
        let r = penetration_depth(&co).unwrap();
        assert_eq!(r.active_rows.len(), 1);
        let jac = kkt_jacobian(&r, &translation_co_derivatives(&co, 2, (0, 1))).unwrap();
        let g = cbf_gradient(&r, &jac, 0.0).unwrap();
        assert_relative_eq!(g.dh_dx.norm(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.dh_dx[0], 1.0, epsilon = 1e-12);
        let h = 1e-6;
        let sp = signed_distance_co(&co.translate(&Vec2::new(-h, 0.0))).value;
        let sm = signed_distance_co(&co.translate(&Vec2::new(h, 0.0))).value;
        assert_relative_eq!((sp - sm) / (2.0 * h), g.dh_dx[0], epsilon = 1e-6);
    }

    #[test]
    fn penetration_tie_and_contact_are_errors() {
        let co = rect(-1.0, 1.0, -1.0, 1.0);
        let r = penetration_depth(&co).unwrap();
        let d = translation_co_derivatives(&co, 2, (0, 1));
        assert_eq!(kkt_jacobian(&r, &d), Err(DiffError::PenetrationTie(4)));

        let touching = rect(0.0, 1.0, -0.3, 0.7);
        let r = signed_distance_co(&touching);
        let jac = kkt_jacobian(&r, &translation_co_derivatives(&touching, 2, (0, 1))).unwrap();
        assert!(matches!(cbf_gradient(&r, &jac, 0.0), Err(DiffError::ContactSingularity(_))));
    }

    #[test]
    fn degenerate_vertex_contact_is_singular() {
        // Origin projects exactly onto a vertex along one edge's normal: one
        // of the two active multipliers is zero.
        let co = rect(1.0, 2.0, 0.0, 1.0);
        let r = project_origin(&co).unwrap();
        let d = translation_co_derivatives(&co, 2, (0, 1));
        if r.active_rows.len() == 2 {
            assert!(matches!(kkt_jacobian(&r, &d), Err(DiffError::SingularKkt(_))));
        }
    }

    #[test]
    fn inactive_rows_do_not_enter_the_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let co = loop {
            let co = minkowski_difference(&random_polygon(&mut rng, 4.0), &random_polygon(&mut rng, 4.0));
            if !co.contains_origin() {
                break co;
            }
        };
        let r = project_origin(&co).unwrap();
        let mut d = translation_co_derivatives(&co, 2, (0, 1));
        let base = kkt_jacobian(&r, &d).unwrap();
        for k in 0..co.edge_count() {
            if !r.active_rows.contains(&k) {
                assert_eq!(r.duals[k], 0.0);
                d.db[(k, 0)] += 3.0;
                d.da[1][(k, 0)] -= 2.0;
            }
        }
        assert_eq!(kkt_jacobian(&r, &d).unwrap(), base);
    }

    #[test]
    fn kkt_matches_finite_differences_of_z_star() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut checked = 0;
        let mut attempts = 0;
        while checked < 100 {
            attempts += 1;
            assert!(attempts < 10_000);
            let obstacle = random_polygon(&mut rng, 4.0);
            let robot = RobotShape {
                base: random_polygon(&mut rng, 4.0),
                base_pose: Pose2::new(0.0, 0.0, 0.0),
            };
            let pose = Pose2::new(0.0, 0.0, rng.gen_range(-0.5..0.5));
            let co = robot.configuration_obstacle(&obstacle, &pose);
            if co.contains_origin() {
                continue;
            }
            let r = project_origin(&co).unwrap();
            if r.active_rows.iter().any(|&k| r.duals[k] < 1e-6) {
                continue;
            }
            let Ok(d) = finite_difference_co_derivatives(&obstacle, &robot, &pose, &POSE_COLUMNS, 3, DEFAULT_FD_STEP)
            else {
                continue;
            };
            let Ok(jac) = kkt_jacobian(&r, &d) else { continue };
            let h = 1e-6;
            let mut fd = Matrix2xX::<f64>::zeros(3);
            let mut stable = true;
            for (j, (comp, _)) in POSE_COLUMNS.iter().enumerate() {
                let rp = project_origin(&robot.configuration_obstacle(&obstacle, &perturbed(&pose, *comp, h)));
                let rm = project_origin(&robot.configuration_obstacle(&obstacle, &perturbed(&pose, *comp, -h)));
                let (Ok(rp), Ok(rm)) = (rp, rm) else {
                    stable = false;
                    break;
                };
                if rp.active_rows.len() != r.active_rows.len() || rm.active_rows.len() != r.active_rows.len() {
                    stable = false;
                    break;
                }
                fd.set_column(j, &((rp.z_star - rm.z_star) / (2.0 * h)));
            }
            if !stable {
                continue;
            }
            let err = (&jac.dz_dx - &fd).norm() / fd.norm().max(1e-8);
            assert!(err <= 1e-4, "relative error {err}");
            checked += 1;
        }
    }

    #[test]
    fn single_integrator_gradient_has_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let mut checked = 0;
        while checked < 100 {
            let co = minkowski_difference(&random_polygon(&mut rng, 4.0), &random_polygon(&mut rng, 4.0));
            if co.contains_origin() {
                continue;
            }
            let r = project_origin(&co).unwrap();
            let Ok(jac) = kkt_jacobian(&r, &translation_co_derivatives(&co, 2, (0, 1))) else {
                continue;
            };
            let g = cbf_gradient(&r, &jac, 0.1).unwrap();
            assert!((g.dh_dx.norm() - 1.0).abs() <= 1e-6);
            checked += 1;
        }
    }
}
