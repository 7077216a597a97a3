use crate::controller::{clf_heading, clf_position, clf_speed, ClfSpec, ControllerParams};
use crate::diffopt::RobotShape;
use crate::dynamics::RobotModel;
use crate::geometry::{polygon_from_vertices, ConvexPolygon, GeometryError, Vec2};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::SimError;

fn default_goal_tolerance() -> f64 {
    0.1
}

/// Declarative description of one closed-loop experiment. Lengths in
/// meters, angles in radians. Robot vertices are world coordinates at the
/// initial state's pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    /// Free-form provenance note.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
    pub model: RobotModel,
    pub robot_vertices: Vec<[f64; 2]>,
    pub initial_state: Vec<f64>,
    pub obstacles: Vec<Vec<[f64; 2]>>,
    pub goal: [f64; 2],
    #[serde(default)]
    pub v_d: Option<f64>,
    pub params: ControllerParams,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Distance at which the goal counts as reached.
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance: f64,
}

fn points(v: &[[f64; 2]]) -> Vec<Vec2> {
    v.iter().map(|p| Vec2::new(p[0], p[1])).collect()
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(SimError::Config(format!("duration must be >= 0, got {}", self.duration)));
        }
        if self.initial_state.len() != self.model.n() {
            return Err(SimError::Config(format!(
                "initial_state has {} components, {} expects {}",
                self.initial_state.len(),
                self.model.name(),
                self.model.n()
            )));
        }
        if self.params.u_min.len() != self.model.q() {
            return Err(SimError::Config("input bounds do not match the model".into()));
        }
        if matches!(self.model, RobotModel::Unicycle) && self.v_d.is_none() {
            return Err(SimError::Config("unicycle scenarios need v_d".into()));
        }
        self.robot()?;
        self.obstacle_polygons()?;
        Ok(())
    }

    pub fn initial_state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.initial_state)
    }

    pub fn goal(&self) -> Vec2 {
        Vec2::new(self.goal[0], self.goal[1])
    }

    pub fn robot(&self) -> Result<RobotShape, GeometryError> {
        Ok(RobotShape {
            base: polygon_from_vertices(&points(&self.robot_vertices))?,
            base_pose: self.model.pose_of(&self.initial_state()),
        })
    }

    pub fn obstacle_polygons(&self) -> Result<Vec<ConvexPolygon>, GeometryError> {
        self.obstacles.iter().map(|o| polygon_from_vertices(&points(o))).collect()
    }

    /// Position CLF for the single integrator; heading and speed CLFs for
    /// the unicycle.
    pub fn clfs(&self) -> Vec<ClfSpec> {
        match self.model {
            RobotModel::SingleIntegrator { .. } => vec![clf_position(self.goal())],
            RobotModel::Unicycle => vec![clf_heading(self.goal()), clf_speed(self.v_d.unwrap_or(0.0))],
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.params.dt).round() as usize
    }
}

const BUILTIN: [(&str, &str); 3] = [
    ("case1_translation", include_str!("../../scenarios/case1_translation.json")),
    ("case2_collision_recovery", include_str!("../../scenarios/case2_collision_recovery.json")),
    ("case3_multi_obstacle", include_str!("../../scenarios/case3_multi_obstacle.json")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

pub fn builtin_scenarios() -> Vec<ScenarioConfig> {
    BUILTIN
        .iter()
        .map(|(name, text)| {
            let mut cfg = ScenarioConfig::from_json(text).unwrap_or_else(|e| panic!("bundled scenario {name}: {e}"));
            cfg.name = name.to_string();
            cfg
        })
        .collect()
}

pub fn builtin_scenario(name: &str) -> Option<ScenarioConfig> {
    builtin_scenarios().into_iter().find(|c| c.name == name)
}
