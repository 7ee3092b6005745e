//! Domain types shared by every controller, the virtual-node map, and the
//! perception-range connectivity gate.
//!
//! Coordinates are world-fixed with `z` pointing up. A virtual node sits on the
//! ray from the payload through its robot, extended (or shortened) to the common
//! node altitude `h_c`.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::Vec3;

/// Altitude separation below which the node map is singular.
pub const ALTITUDE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: usize,
    pub position: Vec3,
    pub velocity: Vec3,
    /// kg
    pub mass: f64,
    /// Maximum thrust magnitude, N.
    pub thrust_limit: f64,
    /// Unstretched cable length, m.
    pub cable_length: f64,
    pub attached: bool,
}

impl RobotState {
    pub fn is_valid(&self) -> bool {
        self.mass > 0.0
            && self.cable_length > 0.0
            && self.thrust_limit > 0.0
            && is_finite(&self.position)
            && is_finite(&self.velocity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualNode {
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationCenter {
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Binary perceptibility between robots. Symmetric with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityMatrix {
    n: usize,
    w: Vec<bool>,
}

impl ConnectivityMatrix {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            w: vec![false; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn connected(&self, i: usize, j: usize) -> bool {
        self.w[i * self.n + j]
    }

    /// Connection coefficient as a number (0 or 1).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if self.connected(i, j) {
            1.0
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        if i == j {
            return;
        }
        self.w[i * self.n + j] = on;
        self.w[j * self.n + i] = on;
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.connected(i, j))
    }

    /// Upper-triangle edge list, `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.connected(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut m = Self::empty(n);
        for &(i, j) in edges {
            m.set(i, j, true);
        }
        m
    }
}

/// Which sign the node-robot spring term carries in the control law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermSign {
    #[default]
    Plus,
    Minus,
}

impl TermSign {
    pub fn value(self) -> f64 {
        match self {
            TermSign::Plus => 1.0,
            TermSign::Minus => -1.0,
        }
    }
}

/// Spring, damper and friction coefficients of the dissipative law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissipativeGains {
    /// Node-node stiffness, N/m.
    pub k_ij: f64,
    /// Node-node damping, N·s/m.
    pub c_ij: f64,
    /// Node-robot stiffness, N/m.
    pub k_i: f64,
    /// Node-robot damping, N·s/m.
    pub c_i: f64,
    /// Node-to-center friction, N·s/m.
    pub f_c: f64,
    #[serde(default)]
    pub node_robot_sign: TermSign,
}

/// Calibrated once on the 4-robot convergence scenario, then frozen. The
/// node-robot spring carries each robot's share of the payload, so it is stiff
/// enough to keep the sag under load at a few centimetres.
impl Default for DissipativeGains {
    fn default() -> Self {
        Self {
            k_ij: 8.0,
            c_ij: 6.0,
            k_i: 400.0,
            c_i: 60.0,
            f_c: 4.0,
            node_robot_sign: TermSign::Plus,
        }
    }
}

/// Rest lengths captured at formation lock. Pair entries are `None` until the
/// pair has been measured (robots joining later get theirs at join time).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RestLengths {
    n: usize,
    pair: Vec<Option<f64>>,
    /// Node-robot rest length per robot.
    pub node_robot: Vec<f64>,
    /// Node-to-formation-center rest length per robot.
    pub center: Vec<Option<f64>>,
    /// Horizontal node-to-payload distance per robot, the center rest length
    /// while the robot perceives no neighbor.
    pub payload_axis: Vec<f64>,
}

impl RestLengths {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            pair: vec![None; n * n],
            node_robot: vec![0.0; n],
            center: vec![None; n],
            payload_axis: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn pair(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return Some(0.0);
        }
        self.pair[i * self.n + j]
    }

    pub fn set_pair(&mut self, i: usize, j: usize, value: f64) {
        self.pair[i * self.n + j] = Some(value);
        self.pair[j * self.n + i] = Some(value);
    }

    /// Grows the tables by one robot; existing entries are untouched.
    pub fn push_robot(&mut self) -> usize {
        let n = self.n + 1;
        let mut pair = vec![None; n * n];
        for i in 0..self.n {
            for j in 0..self.n {
                pair[i * n + j] = self.pair[i * self.n + j];
            }
        }
        self.pair = pair;
        self.n = n;
        self.node_robot.push(0.0);
        self.center.push(None);
        self.payload_axis.push(0.0);
        n - 1
    }
}

/// Everything the dissipative controller needs besides the observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub gains: DissipativeGains,
    /// Node altitude, m.
    pub h_c: f64,
    /// Perception range, m.
    pub perception_range: f64,
    pub rest: RestLengths,
}

pub fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Zeroes the vertical component.
#[inline]
pub fn horizontal(v: Vec3) -> Vec3 {
    Vec3::new(v.x, v.y, 0.0)
}

fn check_altitude(h_i: f64, h_other: f64) -> Result<(), ModelError> {
    if (h_i - h_other).abs() <= ALTITUDE_EPS {
        Err(ModelError::DegenerateAltitude {
            robot: None,
            robot_altitude: h_i,
            other_altitude: h_other,
            eps: ALTITUDE_EPS,
        })
    } else {
        Ok(())
    }
}

/// Position of the virtual node attached to a robot at `robot`, given the
/// payload at `load`.
pub fn virtual_node_position(robot: &Vec3, load: &Vec3, h_c: f64) -> Result<Vec3, ModelError> {
    check_altitude(robot.z, load.z)?;
    let scale = (h_c - robot.z) / (robot.z - load.z);
    let mut q = robot + (robot - load) * scale;
    // The map lands on h_c analytically; pin it so rounding never drifts.
    q.z = h_c;
    Ok(q)
}

/// Time derivative of [`virtual_node_position`] with `h_c` held constant.
pub fn virtual_node_velocity(
    robot: &Vec3,
    robot_vel: &Vec3,
    load: &Vec3,
    load_vel: &Vec3,
    h_c: f64,
) -> Result<Vec3, ModelError> {
    check_altitude(robot.z, load.z)?;
    let rel = robot - load;
    let rel_vel = robot_vel - load_vel;
    let dh = rel.z;
    let scale = (h_c - robot.z) / dh;
    // d/dt [(h_c - h_i) / (h_i - h_l)]
    let scale_rate = (-robot_vel.z * dh - (h_c - robot.z) * rel_vel.z) / (dh * dh);
    let mut v = robot_vel + rel_vel * scale + rel * scale_rate;
    v.z = 0.0;
    Ok(v)
}

pub fn virtual_node(
    robot: &Vec3,
    robot_vel: &Vec3,
    load: &Vec3,
    load_vel: &Vec3,
    h_c: f64,
) -> Result<VirtualNode, ModelError> {
    Ok(VirtualNode {
        position: virtual_node_position(robot, load, h_c)?,
        velocity: virtual_node_velocity(robot, robot_vel, load, load_vel, h_c)?,
    })
}

/// Ratio of the robot's height above the payload to the node's height above
/// the payload; scales the horizontal node terms onto the robot.
pub fn altitude_ratio(h_i: f64, h_load: f64, h_c: f64) -> Result<f64, ModelError> {
    check_altitude(h_c, h_load)?;
    Ok((h_load - h_i) / (h_load - h_c))
}

/// Hard perception gate: `w_ij = 1` iff both robots are alive and strictly
/// closer than `range`.
pub fn connectivity(positions: &[Vec3], range: f64, alive: &[bool]) -> ConnectivityMatrix {
    let n = positions.len();
    let mut m = ConnectivityMatrix::empty(n);
    let r2 = range * range;
    for i in 0..n {
        if !alive[i] {
            continue;
        }
        for j in (i + 1)..n {
            if alive[j] && (positions[i] - positions[j]).norm_squared() < r2 {
                m.set(i, j, true);
            }
        }
    }
    m
}

/// Gate with a release band: a link forms below `range` and only breaks once
/// the pair separates beyond `range + band`. With `band == 0` this is
/// [`connectivity`].
pub fn connectivity_with_hysteresis(
    previous: Option<&ConnectivityMatrix>,
    positions: &[Vec3],
    range: f64,
    band: f64,
    alive: &[bool],
) -> ConnectivityMatrix {
    let mut m = connectivity(positions, range, alive);
    if band <= 0.0 {
        return m;
    }
    let Some(prev) = previous else { return m };
    let release2 = (range + band) * (range + band);
    let n = positions.len().min(prev.len());
    for i in 0..n {
        for j in (i + 1)..n {
            if prev.connected(i, j) && alive[i] && alive[j] && (positions[i] - positions[j]).norm_squared() < release2 {
                m.set(i, j, true);
            }
        }
    }
    m
}
