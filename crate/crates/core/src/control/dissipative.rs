//! The dissipative node law.
//!
//! Each robot owns a virtual node at altitude `h_c`. Nodes are tied to their
//! perceived neighbors and to the locally estimated formation center by
//! spring-dampers that act in the horizontal plane only, and each node is tied
//! to its robot by a spring-damper along the cable line. The command is a
//! function of one robot's [`LocalObservation`] and nothing else.

use crate::control::LocalObservation;
use crate::error::ModelError;
use crate::model::{
    altitude_ratio, horizontal, virtual_node, ConnectivityMatrix, ControllerParams, FormationCenter, RestLengths,
    VirtualNode,
};
use crate::Vec3;

/// Distance below which the `1/l` and `1/l²` factors are evaluated at this
/// floor instead; every such substitution is counted.
pub const DISTANCE_EPS: f64 = 1e-4;
const COINCIDENT_NODE_EPS: f64 = 1e-6;

/// Nodes a robot can reconstruct from its observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedNodes {
    pub own: VirtualNode,
    /// `(neighbor id, node)`; neighbors at the payload altitude are skipped.
    pub neighbors: Vec<(usize, VirtualNode)>,
}

pub fn observed_nodes(obs: &LocalObservation, h_c: f64) -> Result<ObservedNodes, ModelError> {
    let own = virtual_node(
        &obs.robot.position,
        &obs.robot.velocity,
        &obs.payload_position,
        &obs.payload_velocity,
        h_c,
    )
    .map_err(|e| tag_robot(e, obs.robot.id))?;
    let neighbors = obs
        .neighbors
        .iter()
        .filter_map(|n| {
            virtual_node(
                &n.position,
                &n.velocity,
                &obs.payload_position,
                &obs.payload_velocity,
                h_c,
            )
            .ok()
            .map(|node| (n.id, node))
        })
        .collect();
    Ok(ObservedNodes { own, neighbors })
}

fn tag_robot(e: ModelError, id: usize) -> ModelError {
    match e {
        ModelError::DegenerateAltitude {
            robot_altitude,
            other_altitude,
            eps,
            ..
        } => ModelError::DegenerateAltitude {
            robot: Some(id),
            robot_altitude,
            other_altitude,
            eps,
        },
        other => other,
    }
}

impl ObservedNodes {
    /// Centroid of the own node and every perceived neighbor node.
    pub fn center(&self) -> FormationCenter {
        let count = 1.0 + self.neighbors.len() as f64;
        let (p, v) = self
            .neighbors
            .iter()
            .fold((self.own.position, self.own.velocity), |(p, v), (_, n)| {
                (p + n.position, v + n.velocity)
            });
        FormationCenter {
            position: p / count,
            velocity: v / count,
        }
    }
}

/// The payload fix lifted to the node altitude. In equilibrium the payload
/// hangs below the formation center, so a robot that perceives no neighbor
/// uses this as its center estimate.
pub fn payload_fix(obs: &LocalObservation, h_c: f64) -> FormationCenter {
    FormationCenter {
        position: Vec3::new(obs.payload_position.x, obs.payload_position.y, h_c),
        velocity: horizontal(obs.payload_velocity),
    }
}

/// Center the node law couples to: the node centroid when any neighbor is
/// perceived, the payload fix otherwise.
pub fn coupling_center(nodes: &ObservedNodes, obs: &LocalObservation, h_c: f64) -> FormationCenter {
    if nodes.neighbors.is_empty() {
        payload_fix(obs, h_c)
    } else {
        nodes.center()
    }
}

/// Formation center as seen by one robot.
pub fn formation_center_estimate(obs: &LocalObservation, h_c: f64) -> Result<FormationCenter, ModelError> {
    Ok(observed_nodes(obs, h_c)?.center())
}

/// Captures rest lengths from the formation at lock time. The node-to-center
/// rest length of robot `i` is measured to the center `i` itself would
/// estimate under `connectivity`; isolated robots get none.
pub fn rest_lengths_init(
    nodes: &[Vec3],
    robots: &[Vec3],
    payload: &Vec3,
    connectivity: &ConnectivityMatrix,
) -> Result<RestLengths, ModelError> {
    let n = nodes.len();
    assert_eq!(n, robots.len());
    let mut rest = RestLengths::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (nodes[i] - nodes[j]).norm();
            if d < COINCIDENT_NODE_EPS {
                return Err(ModelError::CoincidentNodes {
                    first: i,
                    second: j,
                    distance: d,
                });
            }
            rest.set_pair(i, j, d);
        }
        rest.node_robot[i] = (nodes[i] - robots[i]).norm();
        rest.payload_axis[i] = horizontal(nodes[i] - payload).norm();
        let nbrs: Vec<usize> = connectivity.neighbors(i).collect();
        if !nbrs.is_empty() {
            let c = nbrs.iter().fold(nodes[i], |acc, &j| acc + nodes[j]) / (1.0 + nbrs.len() as f64);
            rest.center[i] = Some((nodes[i] - c).norm());
        }
    }
    Ok(rest)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipativeOutput {
    /// Control force `u_i`, N.
    pub force: Vec3,
    /// Terms evaluated at the distance floor this tick.
    pub guarded: u32,
}

fn guarded_length(l: f64, guarded: &mut u32) -> f64 {
    if l <= DISTANCE_EPS {
        *guarded += 1;
        DISTANCE_EPS
    } else {
        l
    }
}

/// Evaluates the dissipative control force for one robot.
///
/// Terms, in order: horizontal node-node and node-center springs scaled by the
/// altitude ratio; node-robot spring along the cable line; friction of the node
/// against the center velocity; cable-tension cancellation; horizontal
/// node-node damping; node-robot damping; weight cancellation.
pub fn dissipative_control(
    obs: &LocalObservation,
    params: &ControllerParams,
    gravity: &Vec3,
) -> Result<DissipativeOutput, ModelError> {
    let id = obs.robot.id;
    let g = &params.gains;
    let nodes = observed_nodes(obs, params.h_c)?;
    let q = nodes.own.position;
    let q_dot = nodes.own.velocity;
    let x = obs.robot.position;
    let x_dot = obs.robot.velocity;
    let k_d = altitude_ratio(x.z, obs.payload_position.z, params.h_c).map_err(|e| tag_robot(e, id))?;
    let mut guarded = 0;

    let mut spring_sum = Vec3::zeros();
    let mut damping_sum = Vec3::zeros();
    let mut couple = |other: Vec3, other_vel: Vec3, rest: f64, guarded: &mut u32| {
        let d = q - other;
        let l = guarded_length(d.norm(), guarded);
        spring_sum += d * (1.0 - rest / l);
        damping_sum += d * (d.dot(&(q_dot - other_vel)) / (l * l));
    };
    for (j, node) in &nodes.neighbors {
        let rest = params.rest.pair(id, *j).unwrap_or((q - node.position).norm());
        couple(node.position, node.velocity, rest, &mut guarded);
    }
    let center = coupling_center(&nodes, obs, params.h_c);
    let center_rest = if nodes.neighbors.is_empty() {
        params.rest.payload_axis.get(id).copied()
    } else {
        params.rest.center[id]
    };
    if let Some(rest) = center_rest {
        couple(center.position, center.velocity, rest, &mut guarded);
    }

    let to_node = q - x;
    let l_i = guarded_length(to_node.norm(), &mut guarded);
    let rest_i = params.rest.node_robot[id];
    let node_robot_spring = to_node * (g.k_i * (1.0 - rest_i / l_i) * g.node_robot_sign.value());
    let node_robot_damping = to_node * (g.c_i * to_node.dot(&(q_dot - x_dot)) / (l_i * l_i));
    let friction = horizontal(q_dot - center.velocity) * (k_d * g.f_c);

    let force = -horizontal(spring_sum) * (k_d * g.k_ij) + node_robot_spring
        - friction
        - obs.tension
        - horizontal(damping_sum) * (k_d * g.c_ij)
        + node_robot_damping
        - gravity * obs.robot.mass;
    Ok(DissipativeOutput { force, guarded })
}

/// Converts a control force into the acceleration command handed to the
/// thrust allocator.
pub fn acceleration_command(a_expected: &Vec3, u: &Vec3, tension: &Vec3, mass: f64, gravity: &Vec3) -> Vec3 {
    a_expected + u / mass + tension / mass + gravity
}

/// Global state needed to test membership in the terminal set.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSnapshot {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub nodes: Vec<VirtualNode>,
    pub connectivity: ConnectivityMatrix,
    pub center_velocity: Vec3,
}

/// Sum of squared violations of the terminal-set conditions: neighbors keep
/// constant horizontal separation, every robot moves with the center, and no
/// robot moves along its node-robot line.
pub fn invariant_set_residual(s: &SystemSnapshot) -> f64 {
    let n = s.positions.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            if s.connectivity.connected(i, j) {
                let a = (s.velocities[i] - s.velocities[j]).dot(&horizontal(s.positions[i] - s.positions[j]));
                total += a * a;
            }
        }
        total += (s.velocities[i] - s.center_velocity).norm_squared();
        let c = (s.nodes[i].velocity - s.velocities[i]).dot(&(s.nodes[i].position - s.positions[i]));
        total += c * c;
    }
    total
}
