//! Comparison strategies: a payload-leader scheme that places every robot at a
//! fixed offset from the payload, and a formation-keeping scheme that holds
//! template distances to perceived neighbors. Both assume every robot carries
//! an equal share of the payload weight.

use serde::{Deserialize, Serialize};

use crate::control::{expected_acceleration, LocalObservation, ReferenceSample, TrackingGains};
use crate::error::ControlError;
use crate::model::FormationCenter;
use crate::Vec3;

/// Desired robot offsets from the payload, one per template slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationTemplate {
    pub offsets: Vec<Vec3>,
}

impl FormationTemplate {
    /// Regular polygon of `n` slots at `radius`, `height` above the payload,
    /// first slot on +x.
    pub fn regular(n: usize, radius: f64, height: f64) -> Self {
        let offsets = (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                Vec3::new(radius * a.cos(), radius * a.sin(), height)
            })
            .collect();
        Self { offsets }
    }

    /// Template for cables of `length` hanging at `height` below the robots.
    pub fn for_cable(n: usize, length: f64, height: f64) -> Self {
        let radius = (length * length - height * height).max(0.0).sqrt();
        Self::regular(n, radius, height)
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn edge_length(&self, i: usize, j: usize) -> Option<f64> {
        Some((self.offsets.get(i)? - self.offsets.get(j)?).norm())
    }

    /// Average slot height above the payload.
    pub fn mean_height(&self) -> f64 {
        if self.offsets.is_empty() {
            return 0.0;
        }
        self.offsets.iter().map(|o| o.z).sum::<f64>() / self.offsets.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineGains {
    /// Position gain on the slot error, 1/s².
    pub kp: f64,
    /// Velocity gain on the slot error, 1/s.
    pub kv: f64,
    /// Inter-robot edge stiffness (formation), 1/s².
    pub edge_k: f64,
    /// Inter-robot edge damping (formation), 1/s.
    pub edge_c: f64,
    /// Payload-leader: close the loop on the measured payload position.
    pub load_feedback: bool,
    /// Payload-leader: gain of the payload-to-reference correction.
    pub load_gain: f64,
    /// Per-axis clamp on the PD part, m/s².
    pub max_accel: f64,
}

impl Default for BaselineGains {
    fn default() -> Self {
        Self {
            kp: 2.0,
            kv: 2.5,
            edge_k: 2.0,
            edge_c: 2.0,
            load_feedback: true,
            load_gain: 0.5,
            max_accel: 3.0,
        }
    }
}

/// Acceleration that cancels the cable force each robot would feel if the
/// payload weight were shared equally and the cable ran along `offset`.
fn equal_share_feed_forward(offset: &Vec3, payload_mass: f64, team: usize, robot_mass: f64, g: &Vec3) -> Vec3 {
    if offset.z <= 0.0 || team == 0 {
        return Vec3::zeros();
    }
    let share = payload_mass * g.norm() / team as f64;
    offset * (share / (offset.z * robot_mass))
}

fn clamp(a: Vec3, limit: f64) -> Vec3 {
    a.map(|c| c.clamp(-limit, limit))
}

/// Payload-leader command for robot `slot`.
///
/// The robot's desired position is the payload position plus its template
/// offset, nudged so the payload is steered toward the reference. With load
/// feedback off the offset is anchored to the reference directly.
#[allow(clippy::too_many_arguments)]
pub fn payload_leader_control(
    obs: &LocalObservation,
    slot: usize,
    team: usize,
    template: &FormationTemplate,
    payload_mass: f64,
    reference: &ReferenceSample,
    gains: &BaselineGains,
    gravity: &Vec3,
) -> Result<Vec3, ControlError> {
    if team != template.len() || slot >= template.len() {
        return Err(ControlError::MissingTemplate {
            template: template.len(),
            team: team.max(slot + 1),
        });
    }
    let offset = template.offsets[slot];
    let (anchor, anchor_vel) = if gains.load_feedback {
        let correction = (reference.position - obs.payload_position) * gains.load_gain;
        let correction_vel = (reference.velocity - obs.payload_velocity) * gains.load_gain;
        (obs.payload_position + correction, obs.payload_velocity + correction_vel)
    } else {
        (reference.position, reference.velocity)
    };
    let desired = anchor + offset;
    let pd = (desired - obs.robot.position) * gains.kp + (anchor_vel - obs.robot.velocity) * gains.kv;
    Ok(reference.acceleration
        + clamp(pd, gains.max_accel)
        + equal_share_feed_forward(&offset, payload_mass, team, obs.robot.mass, gravity))
}

/// Formation-keeping command for robot `slot`.
///
/// Perceived neighbors that own a template slot contribute a spring-damper on
/// the deviation of their distance from the template edge; the centroid of the
/// perceived robots tracks the reference horizontally; altitude is held at the
/// template height above the reference.
#[allow(clippy::too_many_arguments)]
pub fn formation_based_control(
    obs: &LocalObservation,
    slot: usize,
    template: &FormationTemplate,
    payload_mass: f64,
    reference: &ReferenceSample,
    tracking: &TrackingGains,
    gains: &BaselineGains,
    gravity: &Vec3,
) -> Vec3 {
    let x = obs.robot.position;
    let v = obs.robot.velocity;
    let mut edge = Vec3::zeros();
    for n in &obs.neighbors {
        let Some(rest) = template.edge_length(slot, n.id) else {
            continue;
        };
        let d = n.position - x;
        let l = d.norm();
        if l <= f64::EPSILON {
            continue;
        }
        let u = d / l;
        edge += u * (gains.edge_k * (l - rest) + gains.edge_c * u.dot(&(n.velocity - v)));
    }

    let count = 1.0 + obs.neighbors.len() as f64;
    let (sum_p, sum_v) = obs
        .neighbors
        .iter()
        .fold((x, v), |(p, w), n| (p + n.position, w + n.velocity));
    let center = FormationCenter {
        position: sum_p / count,
        velocity: sum_v / count,
    };
    let track = expected_acceleration(reference, &center, tracking);

    let height = template.offsets.get(slot).map_or(template.mean_height(), |o| o.z);
    let altitude = Vec3::new(
        0.0,
        0.0,
        gains.kp * (reference.position.z + height - x.z) + gains.kv * (reference.velocity.z - v.z),
    );
    let team = template.len().max(1);
    let ff = template.offsets.get(slot).map_or(Vec3::zeros(), |o| {
        equal_share_feed_forward(o, payload_mass, team, obs.robot.mass, gravity)
    });
    track + clamp(edge + altitude, gains.max_accel) + ff
}
