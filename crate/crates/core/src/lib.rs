//! Exact signed-distance control barrier functions for convex polygonal
//! robots and obstacles.
//!
//! The signed distance is computed on the configuration obstacle (the
//! Minkowski difference of obstacle and robot): a projection of the origin
//! when the shapes are apart, a depth LP when they overlap. Its state
//! gradient comes from implicit differentiation of the KKT conditions and
//! feeds a per-step CLF-CBF quadratic program.

// Negated comparisons are used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod diffopt;
pub mod dynamics;
pub mod geometry;
pub mod qpsolver;
pub mod sdf;
pub mod sim;

pub use controller::{
    build_step_qp, clf_heading, clf_position, clf_speed, control_step, CbfRow, ClfSpec, ControlError,
    ControllerParams, SafetyController,
};
pub use diffopt::{
    cbf_gradient, finite_difference_co_derivatives, kkt_jacobian, translation_co_derivatives, CbfGradient,
    CoDerivatives, DiffError, PoseComponent, RobotShape,
};
pub use dynamics::{rk4_step, single_integrator, unicycle, RobotModel};
pub use geometry::{minkowski_difference, polygon_from_vertices, transform_robot, ConvexPolygon, Pose2, Vec2};
pub use qpsolver::{solve_qp, QpProblem, QpSolution, QpStatus};
pub use sdf::{penetration_depth, project_origin, signed_distance, Branch, SdfResult};
pub use sim::{builtin_scenarios, run_scenario, ScenarioConfig, Trace};
