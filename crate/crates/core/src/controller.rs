//! Per-step CLF-CBF-QP.
//!
//! Decision vector `(u, δ)`, one shared CLF slack:
//!
//! ```text
//!     minimize    uᵀu + p δ²
//!     subject to  L_f h_i + L_g h_i u + γ h_i >= ε      (each obstacle)
//!                 L_f V_j + L_g V_j u + c V_j <= δ      (each CLF)
//!                 u_min <= u <= u_max
//! ```

use crate::diffopt::{
    cbf_gradient, finite_difference_with_retry, kkt_jacobian, translation_co_derivatives, DiffError, PoseComponent,
    RobotShape, DEFAULT_FD_STEP,
};
use crate::dynamics::RobotModel;
use crate::geometry::{ConvexPolygon, Vec2};
use crate::qpsolver::{solve_qp, QpError, QpProblem, QpStatus};
use crate::sdf::{signed_distance_co, Branch};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::time::Instant;
use thiserror::Error;

/// Regularization added to the QP Hessian.
pub const HESSIAN_REG: f64 = 1e-9;

/// Below this distance to the goal the bearing angle is undefined.
pub const GOAL_EPSILON: f64 = 1e-6;

/// Consecutive fallback steps tolerated before aborting.
pub const MAX_CONSECUTIVE_FALLBACKS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("invalid controller parameters: {0}")]
    InvalidParams(String),
    #[error("goal singularity: robot within {0:e} m of the goal")]
    GoalSingularity(f64),
    #[error("safety filter failed for {0} consecutive steps")]
    SafetyFilterFailure(usize),
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    /// CBF gain (1/s).
    pub gamma: f64,
    /// CBF offset.
    #[serde(default)]
    pub epsilon: f64,
    /// Safety margin (m).
    #[serde(default)]
    pub d_safe: f64,
    /// CLF slack penalty.
    pub p: f64,
    /// CLF rate.
    pub c: f64,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    /// Control period (s).
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    0.01
}

impl ControllerParams {
    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: &str| Err(ControlError::InvalidParams(m.to_string()));
        if !(self.gamma > 0.0) {
            return bad("gamma must be > 0");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be >= 0");
        }
        if !(self.d_safe >= 0.0) {
            return bad("d_safe must be >= 0");
        }
        if !(self.p > 0.0) {
            return bad("p must be > 0");
        }
        if !(self.c > 0.0) {
            return bad("c must be > 0");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be > 0");
        }
        if self.u_min.len() != self.u_max.len() {
            return bad("u_min and u_max differ in length");
        }
        if self.u_min.iter().zip(&self.u_max).any(|(lo, hi)| !(lo <= hi)) {
            return bad("u_min must not exceed u_max");
        }
        Ok(())
    }
}

/// Control Lyapunov functions over the state layout `(x, y, θ, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClfSpec {
    /// `V = ‖p - x_d‖²`.
    Position { goal: Vec2 },
    /// `V = wrap(θ - atan2(y_d - y, x_d - x))²`.
    Heading { goal: Vec2 },
    /// `V = (v - v_d)²`.
    Speed { v_d: f64 },
}

pub fn clf_position(goal: Vec2) -> ClfSpec {
    ClfSpec::Position { goal }
}

pub fn clf_heading(goal: Vec2) -> ClfSpec {
    ClfSpec::Heading { goal }
}

pub fn clf_speed(v_d: f64) -> ClfSpec {
    ClfSpec::Speed { v_d }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    PI - (PI - a).rem_euclid(TAU)
}

impl ClfSpec {
    /// Value and gradient at `x`.
    pub fn evaluate(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>), ControlError> {
        let mut grad = DVector::zeros(x.len());
        match *self {
            ClfSpec::Position { goal } => {
                let e = Vec2::new(x[0], x[1]) - goal;
                grad[0] = 2.0 * e.x;
                grad[1] = 2.0 * e.y;
                Ok((e.norm_squared(), grad))
            }
            ClfSpec::Heading { goal } => {
                let delta = goal - Vec2::new(x[0], x[1]);
                let r2 = delta.norm_squared();
                if r2.sqrt() < GOAL_EPSILON {
                    return Err(ControlError::GoalSingularity(r2.sqrt()));
                }
                let bearing = delta.y.atan2(delta.x);
                let e = wrap_angle(x[2] - bearing);
                // ∂bearing/∂x = Δy/r², ∂bearing/∂y = -Δx/r²
                grad[0] = -2.0 * e * delta.y / r2;
                grad[1] = 2.0 * e * delta.x / r2;
                grad[2] = 2.0 * e;
                Ok((e * e, grad))
            }
            ClfSpec::Speed { v_d } => {
                let e = x[3] - v_d;
                grad[3] = 2.0 * e;
                Ok((e * e, grad))
            }
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64, ControlError> {
        self.evaluate(x).map(|(v, _)| v)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, ControlError> {
        self.evaluate(x).map(|(_, g)| g)
    }
}

/// CBF value and state gradient for one obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct CbfRow {
    pub h: f64,
    pub dh_dx: DVector<f64>,
}

/// Assembles the QP over `(u, δ)`. CLFs that hit the goal singularity are
/// left out for this step.
pub fn build_step_qp(
    x: &DVector<f64>,
    model: &RobotModel,
    cbfs: &[CbfRow],
    clfs: &[ClfSpec],
    params: &ControllerParams,
) -> QpProblem {
    let q = model.q();
    let nv = q + 1;
    let f = model.f(x);
    let g = model.g(x);

    let clf_rows: Vec<(f64, DVector<f64>)> = clfs.iter().filter_map(|c| c.evaluate(x).ok()).collect();
    let m = cbfs.len() + clf_rows.len();
    let mut gm = DMatrix::zeros(m, nv);
    let mut d = DVector::zeros(m);
    for (i, cbf) in cbfs.iter().enumerate() {
        let lf = cbf.dh_dx.dot(&f);
        let lg = cbf.dh_dx.transpose() * &g;
        for j in 0..q {
            gm[(i, j)] = -lg[j];
        }
        d[i] = lf + params.gamma * cbf.h - params.epsilon;
    }
    for (i, (v, dv)) in clf_rows.iter().enumerate() {
        let r = cbfs.len() + i;
        let lf = dv.dot(&f);
        let lg = dv.transpose() * &g;
        for j in 0..q {
            gm[(r, j)] = lg[j];
        }
        gm[(r, q)] = -1.0;
        d[r] = -lf - params.c * v;
    }

    let mut h = DMatrix::identity(nv, nv) * 2.0;
    h[(q, q)] = 2.0 * params.p;
    h += DMatrix::identity(nv, nv) * HESSIAN_REG;

    let mut lb = DVector::from_element(nv, f64::NEG_INFINITY);
    let mut ub = DVector::from_element(nv, f64::INFINITY);
    for j in 0..q {
        lb[j] = params.u_min[j];
        ub[j] = params.u_max[j];
    }
    QpProblem::new(h, DVector::zeros(nv), gm, d).with_bounds(lb, ub)
}

/// Why a step fell back to the previous control.
#[derive(Debug, Clone, PartialEq)]
pub enum Fallback {
    Gradient { obstacle: usize, error: DiffError },
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleDiagnostics {
    /// `h_i = sd_i - d_safe`.
    pub h: f64,
    pub sd: f64,
    pub branch: Branch,
    pub z_star: Vec2,
    pub dh_dx: Option<DVector<f64>>,
    /// Wall time for CO, signed distance and gradient.
    pub solve_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub obstacles: Vec<ObstacleDiagnostics>,
    pub delta: f64,
    pub qp_iterations: usize,
    pub fallback: Option<Fallback>,
    pub qp_time_s: f64,
}

/// Signed distance, CBF value and gradient of one obstacle at state `x`.
pub fn obstacle_cbf(
    x: &DVector<f64>,
    model: &RobotModel,
    robot: &RobotShape,
    obstacle: &ConvexPolygon,
    d_safe: f64,
) -> (ObstacleDiagnostics, Result<CbfRow, DiffError>) {
    let start = Instant::now();
    let pose = model.pose_of(x);
    let co = robot.configuration_obstacle(obstacle, &pose);
    let sdf = signed_distance_co(&co);
    let h = sdf.value - d_safe;

    let gradient = (|| {
        let n = model.n();
        let mut derivs = translation_co_derivatives(&co, n, model.position_indices());
        let rotational: Vec<(PoseComponent, usize)> = model
            .co_dependent_indices()
            .into_iter()
            .filter(|(c, _)| *c == PoseComponent::Theta)
            .collect();
        if !rotational.is_empty() {
            let fd = finite_difference_with_retry(obstacle, robot, &pose, &rotational, n, DEFAULT_FD_STEP)?;
            derivs = derivs.combine(&fd);
        }
        let jac = kkt_jacobian(&sdf, &derivs)?;
        cbf_gradient(&sdf, &jac, d_safe)
    })();

    let row = gradient.map(|g| CbfRow { h, dh_dx: g.dh_dx });
    let diag = ObstacleDiagnostics {
        h,
        sd: sdf.value,
        branch: sdf.branch,
        z_star: sdf.z_star,
        dh_dx: row.as_ref().ok().map(|r| r.dh_dx.clone()),
        solve_time_s: start.elapsed().as_secs_f64(),
    };
    (diag, row)
}

/// One controller evaluation. Degenerate gradients or an infeasible QP
/// return `prev_u` with the reason recorded in the diagnostics.
pub fn control_step(
    x: &DVector<f64>,
    model: &RobotModel,
    robot: &RobotShape,
    obstacles: &[ConvexPolygon],
    clfs: &[ClfSpec],
    params: &ControllerParams,
    prev_u: &DVector<f64>,
) -> Result<(DVector<f64>, StepDiagnostics), ControlError> {
    let mut diags = Vec::with_capacity(obstacles.len());
    let mut rows = Vec::with_capacity(obstacles.len());
    let mut fallback = None;
    for (i, obstacle) in obstacles.iter().enumerate() {
        let (diag, row) = obstacle_cbf(x, model, robot, obstacle, params.d_safe);
        diags.push(diag);
        match row {
            Ok(r) => rows.push(r),
            Err(error) => {
                if fallback.is_none() {
                    fallback = Some(Fallback::Gradient { obstacle: i, error });
                }
            }
        }
    }
    let mut out = StepDiagnostics {
        obstacles: diags,
        delta: 0.0,
        qp_iterations: 0,
        fallback,
        qp_time_s: 0.0,
    };
    if out.fallback.is_some() {
        return Ok((prev_u.clone(), out));
    }

    let start = Instant::now();
    let qp = build_step_qp(x, model, &rows, clfs, params);
    let sol = solve_qp(&qp)?;
    out.qp_time_s = start.elapsed().as_secs_f64();
    out.qp_iterations = sol.iterations;
    if sol.status == QpStatus::Infeasible {
        out.fallback = Some(Fallback::Infeasible);
        return Ok((prev_u.clone(), out));
    }
    let q = model.q();
    let u = DVector::from_fn(q, |j, _| sol.u_star[j].clamp(params.u_min[j], params.u_max[j]));
    out.delta = sol.u_star[q];
    Ok((u, out))
}

/// Stateful wrapper that holds the previous control and aborts after too
/// many consecutive fallbacks.
#[derive(Debug, Clone)]
pub struct SafetyController {
    pub model: RobotModel,
    pub robot: RobotShape,
    pub obstacles: Vec<ConvexPolygon>,
    pub clfs: Vec<ClfSpec>,
    pub params: ControllerParams,
    prev_u: DVector<f64>,
    consecutive_fallbacks: usize,
}

impl SafetyController {
    pub fn new(
        model: RobotModel,
        robot: RobotShape,
        obstacles: Vec<ConvexPolygon>,
        clfs: Vec<ClfSpec>,
        params: ControllerParams,
    ) -> Result<Self, ControlError> {
        params.validate()?;
        if params.u_min.len() != model.q() {
            return Err(ControlError::InvalidParams(format!(
                "input bounds have length {}, model needs {}",
                params.u_min.len(),
                model.q()
            )));
        }
        Ok(Self {
            prev_u: DVector::zeros(model.q()),
            model,
            robot,
            obstacles,
            clfs,
            params,
            consecutive_fallbacks: 0,
        })
    }

    pub fn prev_u(&self) -> &DVector<f64> {
        &self.prev_u
    }

    pub fn step(&mut self, x: &DVector<f64>) -> Result<(DVector<f64>, StepDiagnostics), ControlError> {
        let (u, diag) = control_step(
            x,
            &self.model,
            &self.robot,
            &self.obstacles,
            &self.clfs,
            &self.params,
            &self.prev_u,
        )?;
        if diag.fallback.is_some() {
            self.consecutive_fallbacks += 1;
            if self.consecutive_fallbacks > MAX_CONSECUTIVE_FALLBACKS {
                return Err(ControlError::SafetyFilterFailure(self.consecutive_fallbacks));
            }
        } else {
            self.consecutive_fallbacks = 0;
        }
        self.prev_u = u.clone();
        Ok((u, diag))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{single_integrator, unicycle};
    use crate::geometry::{polygon_from_vertices, Pose2};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn params() -> ControllerParams {
        ControllerParams {
            gamma: 3.0,
            epsilon: 0.0,
            d_safe: 0.0,
            p: 10.0,
            c: 1.0,
            u_min: vec![-5.0, -5.0],
            u_max: vec![5.0, 5.0],
            dt: 0.01,
        }
    }

    fn triangle_robot(at: Vec2) -> RobotShape {
        RobotShape {
            base: polygon_from_vertices(&[
                at + Vec2::new(-0.4, -0.3),
                at + Vec2::new(0.45, -0.1),
                at + Vec2::new(-0.1, 0.4),
            ])
            .unwrap(),
            base_pose: Pose2::new(at.x, at.y, 0.0),
        }
    }

    fn fd_grad(clf: &ClfSpec, x: &DVector<f64>, h: f64) -> DVector<f64> {
        DVector::from_fn(x.len(), |j, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            (clf.value(&xp).unwrap() - clf.value(&xm).unwrap()) / (2.0 * h)
        })
    }

    #[test]
    fn wrap_range() {
        assert_relative_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(wrap_angle(0.3), 0.3);
    }

    #[test]
    fn position_clf() {
        let goal = Vec2::new(5.0, 8.0);
        let clf = clf_position(goal);
        let (val, g) = clf.evaluate(&v(&[5.0, 8.0])).unwrap();
        assert_eq!(val, 0.0);
        assert_eq!(g, v(&[0.0, 0.0]));
        let (val, g) = clf.evaluate(&v(&[6.0, 8.0])).unwrap();
        assert_eq!(val, 1.0);
        assert_eq!(g, v(&[2.0, 0.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let x = v(&[rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)]);
            assert!((clf.gradient(&x).unwrap() - fd_grad(&clf, &x, 1e-5)).amax() <= 1e-8);
        }
    }

    #[test]
    fn heading_and_speed_clfs() {
        let h = clf_heading(Vec2::new(3.0, 0.0));
        assert_eq!(h.value(&v(&[0.0, 0.0, 0.0, 1.0])).unwrap(), 0.0);
        assert!(matches!(
            h.value(&v(&[3.0, 0.0, 0.0, 1.0])),
            Err(ControlError::GoalSingularity(_))
        ));
        let s = clf_speed(2.0);
        let (val, g) = s.evaluate(&v(&[1.0, 1.0, 0.4, 2.0])).unwrap();
        assert_eq!(val, 0.0);
        assert_eq!(g, DVector::zeros(4));

        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 100 {
            let goal = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let x = v(&[
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-6.0..6.0),
                rng.gen_range(-1.0..3.0),
            ]);
            let clf = clf_heading(goal);
            let (val, g) = clf.evaluate(&x).unwrap();
            // Stay away from the ±π wrap discontinuity.
            if val.sqrt() > PI - 1e-3 || (goal - Vec2::new(x[0], x[1])).norm() < 0.5 {
                continue;
            }
            let fd = fd_grad(&clf, &x, 1e-6);
            assert!((&g - &fd).norm() <= 1e-6 * g.norm().max(1.0), "{g} vs {fd}");
            checked += 1;
        }
    }

    #[test]
    fn far_obstacle_matches_clf_only_solution() {
        let model = single_integrator();
        let robot = triangle_robot(Vec2::new(-4.83, 0.77));
        let obstacle = polygon_from_vertices(&[
            Vec2::new(20.0, 20.0),
            Vec2::new(22.0, 20.0),
            Vec2::new(21.0, 22.0),
        ])
        .unwrap();
        let x = v(&[-4.83, 0.77]);
        let clfs = [clf_position(Vec2::new(5.0, 8.0))];
        let (diag, row) = obstacle_cbf(&x, &model, &robot, &obstacle, 0.0);
        assert!(diag.h > 20.0);
        let with = solve_qp(&build_step_qp(&x, &model, &[row.unwrap()], &clfs, &params())).unwrap();
        let without = solve_qp(&build_step_qp(&x, &model, &[], &clfs, &params())).unwrap();
        assert_eq!(with.duals[0], 0.0);
        assert_relative_eq!(with.u_star, without.u_star, epsilon = 1e-12);
    }

    #[test]
    fn binding_cbf_has_positive_dual() {
        // Robot heading straight at a nearby wall with the goal behind it.
        let model = single_integrator();
        let robot = triangle_robot(Vec2::new(0.0, 0.0));
        let wall = polygon_from_vertices(&[
            Vec2::new(0.6, -3.0),
            Vec2::new(1.6, -3.1),
            Vec2::new(1.7, 3.0),
            Vec2::new(0.7, 3.1),
        ])
        .unwrap();
        let x = v(&[0.0, 0.0]);
        let clfs = [clf_position(Vec2::new(6.0, 0.0))];
        let (_, row) = obstacle_cbf(&x, &model, &robot, &wall, 0.0);
        let row = row.unwrap();
        let qp = build_step_qp(&x, &model, std::slice::from_ref(&row), &clfs, &params());
        let sol = solve_qp(&qp).unwrap();
        assert!(sol.duals[0] > 0.0);
        let u = sol.u_star.rows(0, 2).into_owned();
        let hdot = row.dh_dx.dot(&u);
        assert!((hdot + 3.0 * row.h).abs() <= 1e-8);
        assert!(sol.kkt_residual(&qp) <= 1e-8);
    }

    #[test]
    fn zero_bounds_force_zero_input() {
        let model = single_integrator();
        let mut p = params();
        p.u_min = vec![0.0, 0.0];
        p.u_max = vec![0.0, 0.0];
        let x = v(&[1.0, 1.0]);
        let qp = build_step_qp(&x, &model, &[], &[clf_position(Vec2::new(3.0, 1.0))], &p);
        let sol = solve_qp(&qp).unwrap();
        assert_eq!(sol.u_star[0], 0.0);
        assert_eq!(sol.u_star[1], 0.0);
        // δ >= cV = 4
        assert_relative_eq!(sol.u_star[2], 4.0, epsilon = 1e-8);
    }

    #[test]
    fn no_obstacles_is_pure_tracking() {
        let model = single_integrator();
        let robot = triangle_robot(Vec2::new(0.0, 0.0));
        let x = v(&[0.0, 0.0]);
        let clfs = [clf_position(Vec2::new(2.0, 1.0))];
        let (u, diag) = control_step(&x, &model, &robot, &[], &clfs, &params(), &v(&[0.0, 0.0])).unwrap();
        let sol = solve_qp(&build_step_qp(&x, &model, &[], &clfs, &params())).unwrap();
        assert_eq!(u, sol.u_star.rows(0, 2).into_owned());
        assert!(diag.fallback.is_none());
    }

    #[test]
    fn case_one_start_respects_constraints() {
        let model = single_integrator();
        let robot = triangle_robot(Vec2::new(-4.83, 0.77));
        let obstacle = polygon_from_vertices(&[
            Vec2::new(-1.5, 1.5),
            Vec2::new(1.2, 1.0),
            Vec2::new(2.0, 3.6),
            Vec2::new(0.2, 5.4),
            Vec2::new(-1.8, 4.0),
        ])
        .unwrap();
        let x = v(&[-4.83, 0.77]);
        let (u, diag) = control_step(
            &x,
            &model,
            &robot,
            &[obstacle],
            &[clf_position(Vec2::new(5.0, 8.0))],
            &params(),
            &v(&[0.0, 0.0]),
        )
        .unwrap();
        assert!(u.amax() <= 5.0);
        let dh = diag.obstacles[0].dh_dx.clone().unwrap();
        assert!(dh.dot(&u) + 3.0 * diag.obstacles[0].h >= -1e-9);
    }

    #[test]
    fn recovery_step_increases_h() {
        let model = unicycle();
        let base = polygon_from_vertices(&[
            Vec2::new(-0.5, -0.25),
            Vec2::new(0.5, -0.3),
            Vec2::new(0.6, 0.2),
            Vec2::new(-0.4, 0.3),
        ])
        .unwrap();
        let robot = RobotShape {
            base,
            base_pose: Pose2::new(0.0, 0.0, 0.0),
        };
        let obstacle = polygon_from_vertices(&[
            Vec2::new(0.2, -2.0),
            Vec2::new(3.0, -1.7),
            Vec2::new(2.6, 2.1),
            Vec2::new(0.4, 1.8),
        ])
        .unwrap();
        let p = ControllerParams {
            gamma: 0.8,
            epsilon: 1e-6,
            d_safe: 0.02,
            p: 8.0,
            c: 5.0,
            u_min: vec![-5.0, -8.0],
            u_max: vec![5.0, 8.0],
            dt: 0.01,
        };
        let x = v(&[0.0, 0.0, 0.1, 0.0]);
        let clfs = [clf_heading(Vec2::new(-6.0, 1.0)), clf_speed(2.0)];
        let (u, diag) = control_step(&x, &model, &robot, std::slice::from_ref(&obstacle), &clfs, &p, &v(&[0.0, 0.0])).unwrap();
        assert!(diag.fallback.is_none(), "{:?}", diag.fallback);
        let h0 = diag.obstacles[0].h;
        assert!(h0 < 0.0);
        let x1 = crate::dynamics::rk4_step(&model, &x, &u, 0.01).unwrap();
        let (d1, _) = obstacle_cbf(&x1, &model, &robot, &obstacle, p.d_safe);
        assert!(d1.h > h0);
    }

    #[test]
    fn controller_aborts_after_repeated_fallbacks() {
        // Parallel edges at θ = 0 make every rotational derivative invalid.
        let model = unicycle();
        let square = |c: Vec2, s: f64| {
            polygon_from_vertices(&[
                c + Vec2::new(-s, -s),
                c + Vec2::new(s, -s),
                c + Vec2::new(s, s),
                c + Vec2::new(-s, s),
            ])
            .unwrap()
        };
        let robot = RobotShape {
            base: square(Vec2::zeros(), 0.5),
            base_pose: Pose2::new(0.0, 0.0, 0.0),
        };
        let mut p = params();
        p.u_min = vec![-5.0, -8.0];
        p.u_max = vec![5.0, 8.0];
        let mut ctl = SafetyController::new(
            model,
            robot,
            vec![square(Vec2::new(3.0, 0.0), 1.0)],
            vec![clf_speed(1.0)],
            p,
        )
        .unwrap();
        let x = v(&[0.0, 0.0, 0.0, 0.0]);
        for _ in 0..MAX_CONSECUTIVE_FALLBACKS {
            let (u, diag) = ctl.step(&x).unwrap();
            assert_eq!(u, v(&[0.0, 0.0]));
            assert!(matches!(diag.fallback, Some(Fallback::Gradient { .. })));
        }
        assert!(matches!(ctl.step(&x), Err(ControlError::SafetyFilterFailure(6))));
    }

    #[test]
    fn params_validation() {
        let mut p = params();
        assert!(p.validate().is_ok());
        p.gamma = 0.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.u_min = vec![1.0, 0.0];
        p.u_max = vec![0.0, 1.0];
        assert!(p.validate().is_err());
    }
}
