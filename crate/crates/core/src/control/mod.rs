//! Per-robot command laws. Every controller sees the world only through a
//! [`LocalObservation`]: its own state, the robots inside its perception range,
//! the payload it hangs from, and its own cable tension.

pub mod baselines;
pub mod dissipative;
pub mod tracking;

use serde::{Deserialize, Serialize};

use crate::model::{horizontal, RobotState};
use crate::Vec3;

pub use baselines::{formation_based_control, payload_leader_control, BaselineGains, FormationTemplate};
pub use dissipative::{
    acceleration_command, coupling_center, dissipative_control, formation_center_estimate, invariant_set_residual,
    observed_nodes, payload_fix, rest_lengths_init, DissipativeOutput, ObservedNodes, SystemSnapshot, DISTANCE_EPS,
};
pub use tracking::{expected_acceleration, TrackingAnchor, TrackingGains};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Dissipative,
    Formation,
    Leader,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [
        ControllerKind::Dissipative,
        ControllerKind::Formation,
        ControllerKind::Leader,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Dissipative => "dissipative",
            ControllerKind::Formation => "formation",
            ControllerKind::Leader => "leader",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborObservation {
    pub id: usize,
    pub position: Vec3,
    pub velocity: Vec3,
}

/// What one robot knows at a control tick. Built by the engine from the
/// connectivity gate, so robots outside the perception range never appear.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalObservation {
    pub robot: RobotState,
    pub neighbors: Vec<NeighborObservation>,
    pub payload_position: Vec3,
    pub payload_velocity: Vec3,
    /// Cable force on this robot, N.
    pub tension: Vec3,
}

/// Shapes an acceleration command so that its thrust fits `thrust_limit`,
/// giving lift priority: the vertical thrust is kept (up to the limit) and the
/// horizontal part gets whatever magnitude remains. Commands already inside
/// the limit pass through unchanged. Every controller's output goes through
/// this before the physics, which then never has to clip.
///
/// Without it a robot near capacity loses lift to its own lateral demands,
/// sinks, and demands even more.
pub fn allocate_thrust(a_cmd: &Vec3, mass: f64, thrust_limit: f64, gravity: &Vec3) -> Vec3 {
    let f = (a_cmd - gravity) * mass;
    if f.norm() <= thrust_limit {
        return *a_cmd;
    }
    let lift = f.z.clamp(0.0, thrust_limit);
    let room = (thrust_limit * thrust_limit - lift * lift).max(0.0).sqrt();
    let side = horizontal(f);
    let side = if side.norm() > room {
        side * (room / side.norm())
    } else {
        side
    };
    Vec3::new(side.x, side.y, lift) / mass + gravity
}

/// Reference sample at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceSample {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn g() -> Vec3 {
        Vec3::new(0.0, 0.0, -9.81)
    }

    #[test]
    fn inside_limit_passes_through() {
        let a = Vec3::new(1.0, -2.0, 0.5);
        assert_eq!(allocate_thrust(&a, 1.0, 20.0, &g()), a);
    }

    #[test]
    fn lift_is_kept_before_lateral() {
        // needs 10 N up and 10 N sideways; 12 N available
        let a = Vec3::new(10.0, 0.0, 10.0 - 9.81);
        let out = allocate_thrust(&a, 1.0, 12.0, &g());
        let f = out - g();
        assert_relative_eq!(f.z, 10.0, epsilon = 1e-12);
        assert_relative_eq!(f.x, 44.0_f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(f.norm(), 12.0, epsilon = 1e-12);
    }

    #[test]
    fn lift_beyond_limit_leaves_no_lateral() {
        let a = Vec3::new(3.0, 4.0, 5.0);
        let out = allocate_thrust(&a, 1.0, 9.0, &g());
        assert_relative_eq!(out - g(), Vec3::new(0.0, 0.0, 9.0), epsilon = 1e-12);
    }

    #[test]
    fn downward_demand_gets_no_lift() {
        let a = Vec3::new(30.0, 0.0, -40.0);
        let out = allocate_thrust(&a, 1.0, 10.0, &g());
        assert_relative_eq!(out - g(), Vec3::new(10.0, 0.0, 0.0), epsilon = 1e-12);
    }
}
