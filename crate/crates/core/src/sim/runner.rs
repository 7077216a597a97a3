use crate::controller::{ControlError, SafetyController, StepDiagnostics};
use crate::dynamics::rk4_step;
use crate::sdf::Branch;
use nalgebra::DVector;
use serde::Serialize;
use std::time::Instant;

use super::{ScenarioConfig, SimError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstacleSample {
    pub h: f64,
    pub sd: f64,
    pub branch: Branch,
    pub z_star: [f64; 2],
    pub gradient_valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: f64,
    pub state: Vec<f64>,
    /// Control applied on `[t, t + dt)`.
    pub u: Vec<f64>,
    pub delta: f64,
    pub obstacles: Vec<ObstacleSample>,
    pub qp_iterations: usize,
    pub fallback: bool,
    /// Wall time of the control computation (not deterministic).
    pub loop_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub min_h: Vec<f64>,
    /// First time the position is within the goal tolerance.
    pub arrival_time: Option<f64>,
    pub min_goal_distance: f64,
    pub final_goal_distance: f64,
    pub mean_loop_ms: f64,
    pub max_loop_ms: f64,
    pub fallback_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub scenario: String,
    pub n_state: usize,
    pub n_input: usize,
    pub n_obstacles: usize,
    pub dt: f64,
    pub records: Vec<TraceRecord>,
    pub summary: TraceSummary,
}

impl Trace {
    fn empty(cfg: &ScenarioConfig) -> Self {
        Trace {
            scenario: cfg.name.clone(),
            n_state: cfg.model.n(),
            n_input: cfg.model.q(),
            n_obstacles: cfg.obstacles.len(),
            dt: cfg.params.dt,
            records: Vec::new(),
            summary: TraceSummary {
                min_h: Vec::new(),
                arrival_time: None,
                min_goal_distance: f64::INFINITY,
                final_goal_distance: f64::INFINITY,
                mean_loop_ms: 0.0,
                max_loop_ms: 0.0,
                fallback_steps: 0,
            },
        }
    }

    /// `h_i` over time for obstacle `i`.
    pub fn h_series(&self, i: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.obstacles[i].h).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// Equality over every field except wall-clock timings.
    pub fn same_trajectory(&self, other: &Trace) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.t.to_bits() == b.t.to_bits()
                    && a.state == b.state
                    && a.u == b.u
                    && a.delta.to_bits() == b.delta.to_bits()
                    && a.obstacles == b.obstacles
                    && a.qp_iterations == b.qp_iterations
                    && a.fallback == b.fallback
            })
    }

    fn summarize(&mut self, goal: [f64; 2], tol: f64) {
        let mut s = TraceSummary {
            min_h: vec![f64::INFINITY; self.n_obstacles],
            arrival_time: None,
            min_goal_distance: f64::INFINITY,
            final_goal_distance: f64::INFINITY,
            mean_loop_ms: 0.0,
            max_loop_ms: 0.0,
            fallback_steps: 0,
        };
        for r in &self.records {
            for (m, o) in s.min_h.iter_mut().zip(&r.obstacles) {
                *m = m.min(o.h);
            }
            let dist = (r.state[0] - goal[0]).hypot(r.state[1] - goal[1]);
            s.min_goal_distance = s.min_goal_distance.min(dist);
            s.final_goal_distance = dist;
            if s.arrival_time.is_none() && dist <= tol {
                s.arrival_time = Some(r.t);
            }
            s.max_loop_ms = s.max_loop_ms.max(r.loop_ms);
            s.mean_loop_ms += r.loop_ms;
            s.fallback_steps += r.fallback as usize;
        }
        if !self.records.is_empty() {
            s.mean_loop_ms /= self.records.len() as f64;
        }
        self.summary = s;
    }
}

fn record(t: f64, x: &DVector<f64>, u: &DVector<f64>, diag: &StepDiagnostics, loop_ms: f64) -> TraceRecord {
    TraceRecord {
        t,
        state: x.iter().copied().collect(),
        u: u.iter().copied().collect(),
        delta: diag.delta,
        obstacles: diag
            .obstacles
            .iter()
            .map(|o| ObstacleSample {
                h: o.h,
                sd: o.sd,
                branch: o.branch,
                z_star: [o.z_star.x, o.z_star.y],
                gradient_valid: o.dh_dx.is_some(),
            })
            .collect(),
        qp_iterations: diag.qp_iterations,
        fallback: diag.fallback.is_some(),
        loop_ms,
    }
}

/// Runs the closed loop: controller evaluation then one RK4 period, with
/// `round(duration / dt) + 1` records at `t_k = k dt`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Trace, SimError> {
    cfg.validate()?;
    let mut ctl = SafetyController::new(
        cfg.model,
        cfg.robot()?,
        cfg.obstacle_polygons()?,
        cfg.clfs(),
        cfg.params.clone(),
    )?;
    let dt = cfg.params.dt;
    let steps = cfg.steps();
    let mut trace = Trace::empty(cfg);
    trace.records.reserve(steps + 1);
    let mut x = cfg.initial_state();

    for k in 0..=steps {
        let t = k as f64 * dt;
        let start = Instant::now();
        let (u, diag) = match ctl.step(&x) {
            Ok(out) => out,
            Err(ControlError::SafetyFilterFailure(n)) => {
                trace.summarize(cfg.goal, cfg.goal_tolerance);
                return Err(SimError::SafetyFilterFailure {
                    t,
                    steps: n,
                    partial: Box::new(trace),
                });
            }
            Err(e) => return Err(e.into()),
        };
        let loop_ms = start.elapsed().as_secs_f64() * 1e3;
        trace.records.push(record(t, &x, &u, &diag, loop_ms));
        if k < steps {
            x = rk4_step(&cfg.model, &x, &u, dt)?;
        }
    }
    trace.summarize(cfg.goal, cfg.goal_tolerance);
    Ok(trace)
}
