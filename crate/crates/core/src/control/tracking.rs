use serde::{Deserialize, Serialize};

use crate::control::ReferenceSample;
use crate::model::{horizontal, FormationCenter};
use crate::Vec3;

/// What the tracking PD drives toward the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackingAnchor {
    /// The robot's local formation-center estimate.
    Center,
    /// The payload as the robot observes it. Every attached robot sees the
    /// same point, so isolated robots do not pull their own node onto the
    /// reference.
    #[default]
    Payload,
}

/// Gains of the shared reference-tracking feed-forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingGains {
    /// 1/s²
    pub kp: f64,
    /// 1/s
    pub kv: f64,
    /// Per-axis clamp on the commanded acceleration, m/s².
    pub max_accel: f64,
    #[serde(default)]
    pub anchor: TrackingAnchor,
}

impl Default for TrackingGains {
    fn default() -> Self {
        Self {
            kp: 0.8,
            kv: 1.6,
            max_accel: 3.0,
            anchor: TrackingAnchor::default(),
        }
    }
}

/// PD pull of the (locally estimated) formation center toward the reference,
/// plus the reference acceleration as feed-forward.
///
/// Only the horizontal plane is tracked: node altitude is pinned to `h_c`,
/// so the vertical channel carries the reference acceleration alone.
pub fn expected_acceleration(reference: &ReferenceSample, center: &FormationCenter, gains: &TrackingGains) -> Vec3 {
    let a = reference.acceleration
        + horizontal(reference.position - center.position) * gains.kp
        + horizontal(reference.velocity - center.velocity) * gains.kv;
    a.map(|c| c.clamp(-gains.max_accel, gains.max_accel))
}
