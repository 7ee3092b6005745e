use thiserror::Error;

/// Geometry and physics failures. Most of these mean the scenario is ill-posed
/// and the run cannot continue.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(
        "robot {}: altitude {robot_altitude} m is within {eps} m of the reference altitude {other_altitude} m",
        fmt_robot(robot)
    )]
    DegenerateAltitude {
        robot: Option<usize>,
        robot_altitude: f64,
        other_altitude: f64,
        eps: f64,
    },
    #[error("cable endpoints coincide (separation {distance} m)")]
    CoincidentPoints { distance: f64 },
    #[error("virtual nodes {first} and {second} coincide ({distance} m apart)")]
    CoincidentNodes { first: usize, second: usize, distance: f64 },
    #[error("numerical blowup: {quantity} reached magnitude {magnitude:e}")]
    NumericalBlowup { quantity: String, magnitude: f64 },
}

/// Failures raised by the baseline controllers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("formation template holds {template} robots but the team has {team}")]
    MissingTemplate { template: usize, team: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{key}: {message}")]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl Violation {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scenario: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("sampled cable length {length:.3} m for robot {robot} is infeasible (must exceed {min} m)")]
    InvalidSample { robot: usize, length: f64, min: f64 },
    #[error("event at t={time} s targets robot {robot}, which does not exist or is already detached")]
    EventTargetMissing { time: f64, robot: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// A failed closed-loop run, tagged with the physics tick at which it happened.
#[derive(Debug, Error)]
#[error("run failed at tick {tick} (t = {time:.3} s): {source}")]
pub struct RunError {
    pub tick: u64,
    pub time: f64,
    #[source]
    pub source: RunFailure,
}

#[derive(Debug, Error)]
pub enum RunFailure {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("trace holds no records")]
    EmptyTrace,
    #[error("convex hull of {count} node(s) is degenerate")]
    DegenerateHull { count: usize },
}

fn fmt_robot(robot: &Option<usize>) -> String {
    robot.map_or_else(|| "?".to_string(), |r| r.to_string())
}
