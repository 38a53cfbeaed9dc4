use thiserror::Error;

use crate::geometry::Direction;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate triangle base: endpoints coincide")]
    DegenerateBase,
    #[error("robot {0} is not part of the formation")]
    UnknownRobot(usize),
    #[error("robot {robot} cannot step {direction:?} from the current formation")]
    Unreachable { robot: usize, direction: Direction },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VisionError {
    #[error("marker of robot {0} is not visible")]
    NotVisible(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("vertex maneuver did not settle within {0:.1} s")]
    Timeout(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("need at least 2 samples for a standard deviation, got {0}")]
    TooFewSamples(usize),
    #[error("sample lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no truncated normal has mean {mean} and standard deviation {std}")]
    InfeasibleMoments { mean: f64, std: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("formation needs at least 4 robots, got {0}")]
    TooFewRobots(usize),
    #[error("every candidate vertex is blocked for every robot")]
    Blocked,
    #[error("no robot can move closer to the destination")]
    NoProgress,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("unknown localization method `{0}`")]
    UnknownMethod(String),
    #[error("planning failed: {0}")]
    Plan(#[from] PlanError),
    #[error("maneuver failed at step {step}: {source}")]
    Maneuver { step: usize, source: ControlError },
    #[error("formation did not reach the destination within {0} steps")]
    StepLimit(usize),
    #[error("run {run_index} failed: {source}")]
    Run {
        run_index: usize,
        source: Box<SimError>,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("invalid parameter `{0}`: {1}")]
    Invalid(&'static str, String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("{message}")]
    Parse { message: String },
    #[error("{}`{key}` {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        key: String,
        /// 1-based line of the key, absent when the key was defaulted.
        line: Option<usize>,
        message: String,
    },
    #[error("cannot read scenario: {0}")]
    Io(String),
}

impl ScenarioError {
    pub fn key(&self) -> Option<&str> {
        match self {
            ScenarioError::Invalid { key, .. } => Some(key),
            ScenarioError::Parse { .. } | ScenarioError::Io(_) => None,
        }
    }
}
