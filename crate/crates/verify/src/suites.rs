//! One suite per acceptance criterion. Each returns a [`Report`] instead of
//! panicking so the CLI and the test harness can print every line.

use crate::oracles::{self, P};
use crate::random;
use crate::Report;
use nalgebra::{DMatrix, DVector, Matrix2, Matrix2xX};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdcbf::diffopt::{finite_difference_co_derivatives, DEFAULT_FD_STEP};
use sdcbf::sdf::signed_distance_co;
use sdcbf::sim::{builtin_scenario, run_scenario, SimError, Trace};
use sdcbf::{
    cbf_gradient, kkt_jacobian, minkowski_difference, polygon_from_vertices, solve_qp, translation_co_derivatives,
    ControllerParams, ConvexPolygon, Pose2, PoseComponent, QpProblem, QpStatus, RobotModel, RobotShape,
    ScenarioConfig,
};
use std::time::Instant;

fn poly(v: &[P]) -> ConvexPolygon {
    polygon_from_vertices(v).expect("generated polygons are valid")
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn space_equivalence() -> Report {
    let start = Instant::now();
    let mut r = rng(101);
    let (mut n, mut max_err) = (0, 0.0f64);
    while n < 1000 {
        let (a, b) = random::nearby_pair(&mut r);
        if !oracles::sat_separated(&a, &b) {
            continue;
        }
        let sd = sdcbf::signed_distance(&poly(&a), &poly(&b));
        let reference = oracles::boundary_distance(&a, &b);
        max_err = max_err.max((sd.value - reference).abs());
        n += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    Report::new(
        1,
        "space equivalence",
        max_err <= 1e-9 && secs < 5.0,
        format!("{n} disjoint pairs, max |sd - segment distance| = {max_err:.2e} (tol 1e-9), {secs:.2} s (limit 5 s)"),
    )
}

pub fn penetration_oracle() -> Report {
    let mut r = rng(102);
    let (mut n, mut max_err, mut wrong_sign) = (0, 0.0f64, 0);
    while n < 1000 {
        let (a, b) = random::nearby_pair(&mut r);
        if oracles::sat_separated(&a, &b) {
            continue;
        }
        let co = oracles::difference_hull(&b, &a);
        let depth = oracles::sampled_boundary_distance(&co, 4000);
        let sd = sdcbf::signed_distance(&poly(&a), &poly(&b));
        if sd.value > 0.0 {
            wrong_sign += 1;
        }
        max_err = max_err.max((sd.value.abs() - depth).abs());
        n += 1;
    }
    Report::new(
        2,
        "penetration oracle",
        max_err <= 1e-4 && wrong_sign == 0,
        format!("{n} overlapping pairs, max |depth - sampled| = {max_err:.2e} (tol 1e-4), {wrong_sign} positive values"),
    )
}

pub fn collision_predicate() -> Report {
    let mut r = rng(103);
    let (mut mismatches, mut skipped, mut overlapping) = (0, 0, 0);
    for _ in 0..2000 {
        let (a, b) = random::nearby_pair(&mut r);
        let sd = sdcbf::signed_distance(&poly(&a), &poly(&b)).value;
        if sd.abs() < 1e-9 {
            skipped += 1;
            continue;
        }
        let separated = oracles::sat_separated(&a, &b);
        overlapping += (!separated) as usize;
        if separated != (sd > 0.0) {
            mismatches += 1;
        }
    }
    Report::new(
        3,
        "collision predicate",
        mismatches == 0,
        format!("2000 pairs ({overlapping} overlapping), {mismatches} sign mismatches vs SAT, {skipped} skipped at |sd| < 1e-9"),
    )
}

pub fn minkowski_properties() -> Report {
    let mut r = rng(104);
    let (mut max_dev, mut count_mismatch, mut too_many_edges) = (0.0f64, 0, 0);
    for _ in 0..1000 {
        let (a, b) = random::nearby_pair(&mut r);
        let co = minkowski_difference(&poly(&b), &poly(&a));
        let reference = oracles::difference_hull(&b, &a);
        if co.edge_count() != reference.len() {
            count_mismatch += 1;
        }
        if co.edge_count() > a.len() + b.len() {
            too_many_edges += 1;
        }
        let nearest = |p: &P, set: &[P]| set.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
        for v in co.vertices() {
            max_dev = max_dev.max(nearest(v, &reference));
        }
        for v in &reference {
            max_dev = max_dev.max(nearest(v, co.vertices()));
        }
    }
    Report::new(
        4,
        "Minkowski properties",
        max_dev <= 1e-9 && count_mismatch == 0 && too_many_edges == 0,
        format!(
            "1000 pairs, max vertex deviation from difference hull = {max_dev:.2e} (tol 1e-9), \
             {count_mismatch} vertex-count mismatches, {too_many_edges} with more than l_r + l_o edges"
        ),
    )
}

/// Robot and obstacle vertex lists plus the robot's reference pose, kept
/// separately from the library types so the oracle can move the robot itself.
struct GradientCase {
    robot: Vec<P>,
    theta0: f64,
    obstacle: Vec<P>,
}

impl GradientCase {
    fn robot_at(&self, x: f64, y: f64, theta: f64) -> Vec<P> {
        let (s, c) = (theta - self.theta0).sin_cos();
        let rot = Matrix2::new(c, -s, s, c);
        self.robot.iter().map(|v| rot * v + P::new(x, y)).collect()
    }

    /// Signed distance and critical point from the difference hull.
    fn oracle(&self, pose: [f64; 3]) -> (f64, P) {
        let co = oracles::difference_hull(&self.obstacle, &self.robot_at(pose[0], pose[1], pose[2]));
        oracles::signed_origin_distance(&co)
    }

    /// Away from edge/vertex transitions and penetration ties.
    fn non_degenerate(&self, pose: [f64; 3]) -> bool {
        let co = oracles::difference_hull(&self.obstacle, &self.robot_at(pose[0], pose[1], pose[2]));
        let (sd, _) = oracles::signed_origin_distance(&co);
        if sd.abs() < 0.05 {
            return false;
        }
        let origin = P::zeros();
        let mut dists: Vec<(f64, f64)> = (0..co.len())
            .map(|i| {
                let (p, t) = oracles::closest_on_segment(&origin, &co[i], &co[(i + 1) % co.len()]);
                (p.norm(), t)
            })
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0));
        let margin = 1e-3;
        let near_transition = dists
            .iter()
            .filter(|(d, _)| *d <= dists[0].0 + margin)
            .any(|(_, t)| t.abs() < margin || (t - 1.0).abs() < margin);
        let tie = sd < 0.0 && {
            let line: Vec<f64> = (0..co.len())
                .map(|i| {
                    let e = co[(i + 1) % co.len()] - co[i];
                    (P::new(e.y, -e.x).normalize()).dot(&co[i])
                })
                .collect();
            let mut l = line.clone();
            l.sort_by(f64::total_cmp);
            l[1] - l[0] < margin
        };
        !near_transition && !tie
    }
}

fn gradient_case(r: &mut ChaCha8Rng) -> GradientCase {
    let theta0 = r.gen_range(-3.0..3.0);
    let robot = random::convex_polygon(r, P::zeros(), 0.4..1.5, 3..=6);
    let center = P::new(r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0));
    let obstacle = random::convex_polygon(r, center, 0.5..3.0, 3..=8);
    GradientCase { robot, theta0, obstacle }
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Library Jacobians `(dz/dx, dh/dx)` and central differences of the
/// oracle with step `1e-6` in each pose column.
fn compare_gradients(case: &GradientCase, model: &RobotModel, x: &DVector<f64>) -> Option<(f64, f64)> {
    let pose = model.pose_of(x);
    let p = [pose.p.x, pose.p.y, pose.theta];
    if !case.non_degenerate(p) {
        return None;
    }
    let robot = RobotShape {
        base: poly(&case.robot),
        base_pose: Pose2::new(0.0, 0.0, case.theta0),
    };
    let obstacle = poly(&case.obstacle);
    let co = robot.configuration_obstacle(&obstacle, &pose);
    let sdf = signed_distance_co(&co);
    let n = model.n();
    let derivs = match model {
        RobotModel::SingleIntegrator { .. } => translation_co_derivatives(&co, n, (0, 1)),
        RobotModel::Unicycle => finite_difference_co_derivatives(
            &obstacle,
            &robot,
            &pose,
            &[(PoseComponent::X, 0), (PoseComponent::Y, 1), (PoseComponent::Theta, 2)],
            n,
            DEFAULT_FD_STEP,
        )
        .ok()?,
    };
    let jac = kkt_jacobian(&sdf, &derivs).ok()?;
    let grad = cbf_gradient(&sdf, &jac, 0.0).ok()?;

    let step = 1e-6;
    let mut jz = DMatrix::zeros(2, n);
    let mut jh = DMatrix::zeros(1, n);
    for (col, comp) in [(0, 0), (1, 1), (2, 2)] {
        if col >= n || (comp == 2 && matches!(model, RobotModel::SingleIntegrator { .. })) {
            continue;
        }
        let mut plus = p;
        let mut minus = p;
        plus[comp] += step;
        minus[comp] -= step;
        let (hp, zp) = case.oracle(plus);
        let (hm, zm) = case.oracle(minus);
        let dz = (zp - zm) / (2.0 * step);
        jz[(0, col)] = dz.x;
        jz[(1, col)] = dz.y;
        jh[(0, col)] = (hp - hm) / (2.0 * step);
    }
    let kz = DMatrix::from_iterator(2, n, Matrix2xX::iter(&jac.dz_dx).copied());
    let kh = DMatrix::from_row_slice(1, n, grad.dh_dx.as_slice());
    Some((rel_err(&kz, &jz), rel_err(&kh, &jh)))
}

pub fn gradient_fidelity() -> Report {
    let mut r = rng(105);
    let mut lines = Vec::new();
    let mut pass = true;
    for (label, unicycle) in [("closed-form translation", false), ("finite-difference CO", true)] {
        let (mut n, mut attempts, mut penetrating) = (0, 0, 0);
        let (mut max_z, mut max_h) = (0.0f64, 0.0f64);
        while n < 100 && attempts < 20_000 {
            attempts += 1;
            let case = gradient_case(&mut r);
            let (px, py) = (r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0));
            let (model, x) = if unicycle {
                let th = r.gen_range(-3.0..3.0);
                (RobotModel::Unicycle, DVector::from_vec(vec![px, py, th, r.gen_range(-2.0..2.0)]))
            } else {
                (
                    RobotModel::SingleIntegrator { theta0: case.theta0 },
                    DVector::from_vec(vec![px, py]),
                )
            };
            if let Some((ez, eh)) = compare_gradients(&case, &model, &x) {
                n += 1;
                max_z = max_z.max(ez);
                max_h = max_h.max(eh);
                penetrating += (case.oracle([model.pose_of(&x).p.x, model.pose_of(&x).p.y, model.pose_of(&x).theta]).0 < 0.0) as usize;
            }
        }
        let ok = n == 100 && max_z <= 1e-4 && max_h <= 1e-4;
        pass &= ok;
        lines.push(format!(
            "{label}: {n} configs ({penetrating} penetrating), max rel err dz {max_z:.2e}, dh {max_h:.2e}"
        ));
    }
    Report::new(5, "gradient fidelity", pass, format!("{} (tol 1e-4)", lines.join("; ")))
}

fn first_within(trace: &Trace, goal: [f64; 2], tol: f64) -> Option<f64> {
    trace
        .records
        .iter()
        .find(|r| (r.state[0] - goal[0]).hypot(r.state[1] - goal[1]) <= tol)
        .map(|r| r.t)
}

fn min_h(trace: &Trace) -> f64 {
    trace
        .records
        .iter()
        .flat_map(|r| r.obstacles.iter().map(|o| o.h))
        .fold(f64::INFINITY, f64::min)
}

fn run_builtin(name: &str) -> Result<(ScenarioConfig, Trace, f64), String> {
    let cfg = builtin_scenario(name).ok_or_else(|| format!("missing built-in {name}"))?;
    let start = Instant::now();
    let trace = run_scenario(&cfg).map_err(|e| e.to_string())?;
    Ok((cfg, trace, start.elapsed().as_secs_f64()))
}

pub fn case_translation() -> Report {
    let (cfg, trace, secs) = match run_builtin("case1_translation") {
        Ok(v) => v,
        Err(e) => return Report::new(6, "case I translation", false, e),
    };
    let arrival = first_within(&trace, cfg.goal, 0.1);
    let mh = min_h(&trace);
    let umax = trace
        .records
        .iter()
        .flat_map(|r| r.u.iter().map(|u| u.abs()))
        .fold(0.0f64, f64::max);
    let closest = trace.summary.min_goal_distance;
    let pass = arrival.is_some_and(|t| t <= 10.0) && mh >= -1e-6 && umax <= 5.0 && secs < 10.0;
    let arrival_text = arrival.map_or(format!("not within 0.1 m (closest {closest:.3} m)"), |t| format!("t = {t:.2} s"));
    Report::new(
        6,
        "case I translation",
        pass,
        format!(
            "goal {arrival_text} (need <= 10 s), min h = {mh:.3e}, max |u| = {umax:.3}, \
             fallbacks {}, {secs:.2} s wall",
            trace.summary.fallback_steps
        ),
    )
}

pub fn case_recovery() -> Report {
    let (cfg, trace, _) = match run_builtin("case2_collision_recovery") {
        Ok(v) => v,
        Err(e) => return Report::new(7, "case II collision recovery", false, e),
    };
    let h = trace.h_series(0);
    let t = trace.times();
    let h0 = h[0];
    let cross = h.iter().position(|&v| v >= 0.0);
    let (mut monotone, mut after) = (false, f64::NAN);
    if let Some(i) = cross {
        monotone = h[..=i].windows(2).all(|w| w[1] >= w[0]);
        after = h[i..].iter().copied().fold(f64::INFINITY, f64::min);
    }
    let t_cross = cross.map(|i| t[i]);
    let pass = h0 < 0.0 && t_cross.is_some_and(|tc| tc <= 3.0) && monotone && after >= -1e-6;
    Report::new(
        7,
        "case II collision recovery",
        pass,
        format!(
            "h(0) = {h0:.4}, h >= 0 at t = {} (need <= 3 s), non-decreasing while negative: {monotone}, \
             min h after = {after:.3e} (sd >= d_safe - 1e-6, d_safe = {}), fallbacks {}",
            t_cross.map_or("never".into(), |v| format!("{v:.2} s")),
            cfg.params.d_safe,
            trace.summary.fallback_steps
        ),
    )
}

pub fn case_multi_obstacle() -> Report {
    let (cfg, trace, _) = match run_builtin("case3_multi_obstacle") {
        Ok(v) => v,
        Err(e) => return Report::new(8, "case III multi-obstacle", false, e),
    };
    let mins: Vec<f64> = (0..trace.n_obstacles)
        .map(|i| trace.h_series(i).into_iter().fold(f64::INFINITY, f64::min))
        .collect();
    let closest = trace.summary.min_goal_distance;
    let mean_ms = trace.summary.mean_loop_ms;
    let pass = trace.n_obstacles == 4
        && mins.iter().all(|&m| m >= -1e-6)
        && closest <= 0.2
        && mean_ms <= 15.0
        && trace.records.iter().all(|r| r.obstacles.len() == 4);
    Report::new(
        8,
        "case III multi-obstacle",
        pass,
        format!(
            "min h_i = [{}], closest approach to goal {closest:.3} m (tol 0.2), first within 0.2 m at {}, \
             mean loop {mean_ms:.3} ms (limit 15), goal {:?}",
            mins.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join(", "),
            first_within(&trace, cfg.goal, 0.2).map_or("never".into(), |t| format!("t = {t:.2} s")),
            cfg.goal
        ),
    )
}

fn random_scenario(r: &mut ChaCha8Rng, seed: u64) -> ScenarioConfig {
    loop {
        let robot = random::convex_polygon(r, P::zeros(), 0.3..1.0, 3..=6);
        let obstacle = random::convex_polygon(r, P::zeros(), 1.0..3.0, 3..=8);
        let dir = r.gen_range(0.0..std::f64::consts::TAU);
        let (s, c) = dir.sin_cos();
        let start = P::new(c, s) * r.gen_range(5.0..7.0) + P::new(-s, c) * r.gen_range(-1.5..1.5);
        let goal = P::new(-c, -s) * r.gen_range(4.0..6.0) + P::new(-s, c) * r.gen_range(-1.5..1.5);
        let d_safe = r.gen_range(0.0..0.2);
        let bound = r.gen_range(2.0..6.0);
        let cfg = ScenarioConfig {
            name: format!("sweep_{seed}"),
            note: String::new(),
            model: RobotModel::SingleIntegrator { theta0: 0.0 },
            robot_vertices: robot.iter().map(|v| [v.x + start.x, v.y + start.y]).collect(),
            initial_state: vec![start.x, start.y],
            obstacles: vec![obstacle.iter().map(|v| [v.x, v.y]).collect()],
            goal: [goal.x, goal.y],
            v_d: None,
            params: ControllerParams {
                gamma: r.gen_range(0.5..5.0),
                epsilon: 0.0,
                d_safe,
                p: r.gen_range(1.0..20.0),
                c: r.gen_range(0.5..3.0),
                u_min: vec![-bound; 2],
                u_max: vec![bound; 2],
                dt: 0.01,
            },
            duration: 8.0,
            seed,
            goal_tolerance: 0.1,
        };
        let robot_poly = poly(&robot.iter().map(|v| v + start).collect::<Vec<_>>());
        if sdcbf::signed_distance(&robot_poly, &poly(&obstacle)).value - d_safe > 0.2 {
            return cfg;
        }
    }
}

pub fn forward_invariance() -> Report {
    let mut r = rng(109);
    let (mut worst, mut violations, mut aborted, mut fallbacks, mut close) = (f64::INFINITY, 0, 0, 0, 0);
    for seed in 0..50 {
        let cfg = random_scenario(&mut r, seed);
        match run_scenario(&cfg) {
            Ok(trace) => {
                let m = min_h(&trace);
                worst = worst.min(m);
                violations += (m < -1e-6) as usize;
                fallbacks += trace.summary.fallback_steps;
                close += (m < 0.05) as usize;
            }
            Err(SimError::SafetyFilterFailure { partial, .. }) => {
                aborted += 1;
                worst = worst.min(min_h(&partial));
            }
            Err(_) => aborted += 1,
        }
    }
    Report::new(
        9,
        "forward invariance sweep",
        violations == 0 && aborted == 0,
        format!(
            "50 runs, worst min h = {worst:.3e} (tol -1e-6), {violations} violations, {aborted} aborted, \
             {close} runs came within 0.05 m of the margin, {fallbacks} fallback steps"
        ),
    )
}

pub fn qp_conformance() -> Report {
    let mut r = rng(110);
    let (mut n_done, mut max_obj, mut max_kkt, mut oracle_unconverged) = (0, 0.0f64, 0.0f64, 0);
    while n_done < 1000 {
        let n = r.gen_range(1..=5);
        let m = r.gen_range(0..=8);
        let a = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let h = a.transpose() * &a + DMatrix::identity(n, n);
        let c = DVector::from_fn(n, |_, _| r.gen_range(-5.0..5.0));
        let g = DMatrix::from_fn(m, n, |_, _| r.gen_range(-1.0..1.0));
        let feasible = DVector::from_fn(n, |_, _| r.gen_range(-1.0..1.0));
        let d = &g * &feasible + DVector::from_fn(m, |_, _| r.gen_range(0.0..1.0));
        let bounded = r.gen_bool(0.5);
        let (lb, ub) = if bounded {
            (DVector::from_element(n, -2.0), DVector::from_element(n, 2.0))
        } else {
            (DVector::from_element(n, f64::NEG_INFINITY), DVector::from_element(n, f64::INFINITY))
        };
        let problem = QpProblem::new(h.clone(), c.clone(), g.clone(), d.clone()).with_bounds(lb, ub);
        let sol = match solve_qp(&problem) {
            Ok(s) if s.status == QpStatus::Optimal => s,
            _ => {
                max_kkt = f64::INFINITY;
                n_done += 1;
                continue;
            }
        };
        // Bounds folded into the inequality rows for the oracle.
        let (gs, ds) = if bounded {
            let mut gs = DMatrix::zeros(m + 2 * n, n);
            gs.rows_mut(0, m).copy_from(&g);
            let mut ds = DVector::zeros(m + 2 * n);
            ds.rows_mut(0, m).copy_from(&d);
            for j in 0..n {
                gs[(m + j, j)] = 1.0;
                ds[m + j] = 2.0;
                gs[(m + n + j, j)] = -1.0;
                ds[m + n + j] = 2.0;
            }
            (gs, ds)
        } else {
            (g, d)
        };
        let oracle = oracles::dual_projected_gradient(&h, &c, &gs, &ds, 400_000, 1e-11);
        if oracle.violation > 1e-9 || oracle.gap.abs() > 1e-9 {
            oracle_unconverged += 1;
        }
        let f = problem.objective(&sol.u_star);
        max_obj = max_obj.max((f - oracle.objective).abs() / oracle.objective.abs().max(1.0));
        max_kkt = max_kkt.max(sol.kkt_residual(&problem));
        n_done += 1;
    }
    Report::new(
        10,
        "QP solver conformance",
        max_obj <= 1e-7 && max_kkt <= 1e-8 && oracle_unconverged == 0,
        format!(
            "1000 QPs, max objective gap vs dual projected gradient = {max_obj:.2e} (tol 1e-7), \
             max KKT residual = {max_kkt:.2e} (tol 1e-8), {oracle_unconverged} oracle runs unconverged"
        ),
    )
}
