//! Control-affine robot models `ẋ = f(x) + g(x) u` and fixed-step RK4.

use crate::diffopt::PoseComponent;
use crate::geometry::Pose2;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SUBSTEPS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("non-finite state after integration: {0:?}")]
    NonFiniteState(Vec<f64>),
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RobotModel {
    /// `ẋ = u`, state `(x, y)`. The heading is fixed at `theta0`.
    SingleIntegrator {
        #[serde(default)]
        theta0: f64,
    },
    /// `ẋ = v cos θ, ẏ = v sin θ, θ̇ = u₁, v̇ = u₂`, state `(x, y, θ, v)`.
    Unicycle,
}

pub fn single_integrator() -> RobotModel {
    RobotModel::SingleIntegrator { theta0: 0.0 }
}

pub fn unicycle() -> RobotModel {
    RobotModel::Unicycle
}

impl RobotModel {
    pub fn n(&self) -> usize {
        match self {
            RobotModel::SingleIntegrator { .. } => 2,
            RobotModel::Unicycle => 4,
        }
    }

    pub fn q(&self) -> usize {
        2
    }

    pub fn f(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            RobotModel::SingleIntegrator { .. } => DVector::zeros(2),
            RobotModel::Unicycle => {
                let (s, c) = x[2].sin_cos();
                DVector::from_vec(vec![x[3] * c, x[3] * s, 0.0, 0.0])
            }
        }
    }

    pub fn g(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            RobotModel::SingleIntegrator { .. } => DMatrix::identity(2, 2),
            RobotModel::Unicycle => {
                let mut g = DMatrix::zeros(4, 2);
                g[(2, 0)] = 1.0;
                g[(3, 1)] = 1.0;
                g
            }
        }
    }

    pub fn pose_of(&self, x: &DVector<f64>) -> Pose2 {
        match self {
            RobotModel::SingleIntegrator { theta0 } => Pose2::new(x[0], x[1], *theta0),
            RobotModel::Unicycle => Pose2::new(x[0], x[1], x[2]),
        }
    }

    /// State components that move the configuration obstacle, paired with the
    /// pose coordinate each one drives.
    pub fn co_dependent_indices(&self) -> Vec<(PoseComponent, usize)> {
        match self {
            RobotModel::SingleIntegrator { .. } => vec![(PoseComponent::X, 0), (PoseComponent::Y, 1)],
            RobotModel::Unicycle => vec![
                (PoseComponent::X, 0),
                (PoseComponent::Y, 1),
                (PoseComponent::Theta, 2),
            ],
        }
    }

    pub fn position_indices(&self) -> (usize, usize) {
        (0, 1)
    }

    pub fn xdot(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.f(x) + self.g(x) * u
    }

    pub fn name(&self) -> &'static str {
        match self {
            RobotModel::SingleIntegrator { .. } => "single_integrator",
            RobotModel::Unicycle => "unicycle",
        }
    }
}

/// Integrates one control period of length `dt` with `u` held constant,
/// using `substeps` classical RK4 steps.
pub fn rk4_step_with(
    model: &RobotModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    substeps: usize,
) -> Result<DVector<f64>, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::BadStep(dt));
    }
    if x.len() != model.n() {
        return Err(DynamicsError::Dimension { expected: model.n(), got: x.len() });
    }
    if u.len() != model.q() {
        return Err(DynamicsError::Dimension { expected: model.q(), got: u.len() });
    }
    let h = dt / substeps.max(1) as f64;
    let mut x = x.clone();
    for _ in 0..substeps.max(1) {
        let k1 = model.xdot(&x, u);
        let k2 = model.xdot(&(&x + &k1 * (0.5 * h)), u);
        let k3 = model.xdot(&(&x + &k2 * (0.5 * h)), u);
        let k4 = model.xdot(&(&x + &k3 * h), u);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFiniteState(x.iter().copied().collect()));
    }
    Ok(x)
}

pub fn rk4_step(
    model: &RobotModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>, DynamicsError> {
    rk4_step_with(model, x, u, dt, DEFAULT_SUBSTEPS)
}
