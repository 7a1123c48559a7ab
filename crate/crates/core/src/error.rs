use thiserror::Error;

/// Errors raised by engine constructors and operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{field} must be finite")]
    NonFinite { field: &'static str },

    #[error("{field} = {value} is out of range: {constraint}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("steering angle {value_rad} rad is at or beyond the tan singularity (|delta| < pi/2)")]
    SteeringSingularity { value_rad: f64 },

    #[error("action list must be nonempty")]
    EmptyActions,

    #[error("lane list must be nonempty")]
    EmptyLanes,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("step {index} failed: {source}")]
    StepFailed {
        index: usize,
        #[source]
        source: Box<ModelError>,
    },

    #[error("agent {agent} contributed an empty scenario set")]
    EmptyScenarioSet { agent: usize },

    #[error("agent {agent} not found")]
    UnknownAgent { agent: usize },

    #[error("trajectory states do not satisfy the step recurrence at index {index}")]
    InconsistentTrajectory { index: usize },
}

/// Convenience alias used across the crate.
pub type Result<T, E = ModelError> = std::result::Result<T, E>;
