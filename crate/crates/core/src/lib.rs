//! Cooperative payload transport by a team of cable-suspended aerial robots.
//!
//! Each robot hangs the payload from its own cable and runs a local
//! dissipative controller on a virtual node lifted to a common altitude.
//! The crate holds the model, the controllers (plus two baselines), a
//! deterministic simulator and the metrics used to compare them.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod scenario;
pub mod sim;
pub mod trace;

pub type Vec3 = nalgebra::Vector3<f64>;

pub use control::{ControllerKind, LocalObservation, ReferenceSample};
pub use dynamics::{CableModel, Integrator, WindParams, WorldParams};
pub use error::{ControlError, MetricsError, ModelError, RunError, RunFailure, ScenarioError};
pub use metrics::{compute_metrics, RunMetrics, TrackingMode};
pub use model::{
    ConnectivityMatrix, ControllerParams, DissipativeGains, FormationCenter, PayloadState, RestLengths, RobotState,
    VirtualNode,
};
pub use scenario::{presets, sample_instance, ScenarioInstance, ScenarioSpec};
pub use sim::{run, simulate, Simulation};
pub use trace::{Trace, TraceHeader, TraceRecord};
