//! Closed-loop scenario runner, trace logging, and plot output.

mod output;
mod runner;
mod scenario;
mod svg;

pub use output::{read_trace_csv, trace_csv_header, write_summary_json, write_trace_csv, CsvTable};
pub use runner::{run_scenario, ObstacleSample, Trace, TraceRecord, TraceSummary};
pub use scenario::{builtin_names, builtin_scenario, builtin_scenarios, ScenarioConfig};
pub use svg::render_svg;

use crate::controller::ControlError;
use crate::dynamics::DynamicsError;
use crate::geometry::GeometryError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Control(ControlError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("safety filter failed at t = {t}s after {steps} consecutive fallback steps")]
    SafetyFilterFailure { t: f64, steps: usize, partial: Box<Trace> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<ControlError> for SimError {
    fn from(e: ControlError) -> Self {
        SimError::Control(e)
    }
}
