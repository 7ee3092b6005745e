//! The closed-loop runner.
//!
//! Every tick freezes the world, builds each robot's [`LocalObservation`]
//! through the perception gate, evaluates the selected controller, steps the
//! physics (with thrust saturation), applies due events and logs a
//! [`TraceRecord`] at the configured decimation. Runs are sequential and
//! fully determined by the scenario and its seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{
    acceleration_command, allocate_thrust, coupling_center, dissipative_control, expected_acceleration,
    formation_based_control, observed_nodes, payload_leader_control, rest_lengths_init, ControllerKind,
    FormationTemplate, LocalObservation, NeighborObservation, ReferenceSample, TrackingAnchor,
};
use crate::dynamics::{self, cable_tension, CableModel, StepOutput, WindParams, WindState, WorldParams};
use crate::error::{ModelError, RunError, RunFailure, ScenarioError};
use crate::metrics::{compute_metrics, RunMetrics, TrackingMode};
use crate::model::{
    connectivity_with_hysteresis, horizontal, virtual_node, ConnectivityMatrix, ControllerParams, FormationCenter,
    PayloadState, RobotState, VirtualNode,
};
use crate::scenario::{
    initial_nodes, sample_instance, EventKind, ReferenceTrajectory, ScenarioInstance, ScenarioSpec, TimedEvent,
};
use crate::trace::{
    AppliedEvent, Diagnostics, PayloadRecord, RobotRecord, Trace, TraceHeader, TraceRecord, SCHEMA_VERSION,
};
use crate::Vec3;

/// Lateral speed of a robot leaving the team, m/s.
pub const ESCAPE_SPEED: f64 = 2.0;
const ESCAPE_GAIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Departure {
    /// Unit horizontal direction away from the payload.
    pub direction: Vec3,
    pub altitude: f64,
}

/// Mutable state of a run that events may reshape.
#[derive(Debug, Clone)]
pub struct World {
    pub robots: Vec<RobotState>,
    pub payload: PayloadState,
    pub cables: Vec<CableModel>,
    pub alive: Vec<bool>,
    pub departing: Vec<Option<Departure>>,
    pub params: ControllerParams,
    pub payload_node_rest: Vec<Option<f64>>,
    pub connectivity: ConnectivityMatrix,
    pub wind: WindParams,
    pub hysteresis: f64,
}

impl World {
    /// Robots that take part in the formation.
    pub fn members(&self) -> Vec<bool> {
        self.robots
            .iter()
            .zip(&self.alive)
            .map(|(r, &a)| a && r.attached)
            .collect()
    }

    fn positions(&self) -> Vec<Vec3> {
        self.robots.iter().map(|r| r.position).collect()
    }

    pub fn refresh_connectivity(&mut self) {
        self.connectivity = connectivity_with_hysteresis(
            Some(&self.connectivity),
            &self.positions(),
            self.params.perception_range,
            self.hysteresis,
            &self.members(),
        );
    }

    /// Drops departing robots once no alive team member is within range.
    fn update_departures(&mut self) {
        let members = self.members();
        for i in 0..self.robots.len() {
            if self.departing[i].is_none() || !self.alive[i] {
                continue;
            }
            let p = self.robots[i].position;
            let near = (0..self.robots.len())
                .any(|j| j != i && members[j] && (self.robots[j].position - p).norm() <= self.params.perception_range);
            if !near {
                self.alive[i] = false;
            }
        }
    }
}

/// Applies one timed event to the world and returns a short description.
pub fn apply_event(event: &TimedEvent, world: &mut World) -> Result<String, ScenarioError> {
    match &event.kind {
        EventKind::Unplug { robot } => {
            let id = *robot;
            let ok = world.robots.get(id).is_some_and(|r| r.attached);
            if !ok {
                return Err(ScenarioError::EventTargetMissing {
                    time: event.time,
                    robot: id,
                });
            }
            let r = &mut world.robots[id];
            r.attached = false;
            let outward = horizontal(r.position - world.payload.position);
            let direction = if outward.norm() > 1e-9 {
                outward.normalize()
            } else {
                Vec3::new(1.0, 0.0, 0.0)
            };
            world.departing[id] = Some(Departure {
                direction,
                altitude: r.position.z,
            });
            Ok(format!("unplug robot {id}"))
        }
        EventKind::Join(j) => {
            let id = world.robots.len();
            let robot = RobotState {
                id,
                position: j.entry_position,
                velocity: Vec3::zeros(),
                mass: j.mass,
                thrust_limit: j.thrust_limit,
                cable_length: j.cable_length,
                attached: true,
            };
            let h_c = world.params.h_c;
            let load = world.payload.position;
            let own = crate::model::virtual_node_position(&robot.position, &load, h_c).map_err(|e| match e {
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
            })?;
            let template_cable = world.cables.first().copied().unwrap_or(CableModel {
                stiffness: 2000.0,
                damping: 50.0,
                rest_length: j.cable_length,
            });
            world.robots.push(robot);
            world.cables.push(CableModel {
                rest_length: j.cable_length,
                ..template_cable
            });
            world.alive.push(true);
            world.departing.push(None);
            world.payload_node_rest.push(Some((load - own).norm()));
            let rest = &mut world.params.rest;
            rest.push_robot();
            rest.node_robot[id] = (own - j.entry_position).norm();
            rest.payload_axis[id] = horizontal(own - load).norm();
            let mut grown = ConnectivityMatrix::empty(id + 1);
            for (a, b) in world.connectivity.edges() {
                grown.set(a, b, true);
            }
            world.connectivity = grown;
            world.refresh_connectivity();
            let mut sum = own;
            let mut count = 1.0;
            for k in 0..id {
                if !world.robots[k].attached {
                    continue;
                }
                let q = crate::model::virtual_node_position(&world.robots[k].position, &load, h_c)?;
                world.params.rest.set_pair(id, k, (own - q).norm());
                if world.connectivity.connected(id, k) {
                    sum += q;
                    count += 1.0;
                }
            }
            if count > 1.0 {
                world.params.rest.center[id] = Some((own - sum / count).norm());
            }
            Ok(format!("join robot {id}"))
        }
        EventKind::SetWind { wind } => {
            world.wind = *wind;
            Ok("set wind".into())
        }
    }
}

/// Everything a controller evaluation reads: the frozen snapshot of one tick.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub robots: Vec<RobotState>,
    pub payload: PayloadState,
    pub tensions: Vec<Vec3>,
    pub connectivity: ConnectivityMatrix,
}

pub fn observation(snapshot: &Snapshot, i: usize) -> LocalObservation {
    let neighbors = snapshot
        .connectivity
        .neighbors(i)
        .map(|j| {
            let r = &snapshot.robots[j];
            NeighborObservation {
                id: r.id,
                position: r.position,
                velocity: r.velocity,
            }
        })
        .collect();
    LocalObservation {
        robot: snapshot.robots[i].clone(),
        neighbors,
        payload_position: snapshot.payload.position,
        payload_velocity: snapshot.payload.velocity,
        tension: snapshot.tensions[i],
    }
}

/// Result of one controller evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    /// Acceleration the thrust must deliver together with gravity; the cable
    /// force is added by the physics on top of it.
    pub acceleration: Vec3,
    pub center_estimate: Option<FormationCenter>,
    pub guarded: u32,
}

/// Static inputs shared by every controller evaluation in a run.
#[derive(Debug, Clone)]
pub struct ControlContext<'a> {
    pub spec: &'a ScenarioSpec,
    pub template: &'a FormationTemplate,
    pub gravity: Vec3,
}

/// Runs the scenario's control law for one robot, then fits the command to
/// the robot's thrust limit with [`allocate_thrust`].
pub fn evaluate_controller(
    ctx: &ControlContext<'_>,
    params: &ControllerParams,
    obs: &LocalObservation,
    team: usize,
    reference: &ReferenceSample,
) -> Result<Command, RunFailure> {
    let mut c = control_law(ctx, params, obs, team, reference)?;
    c.acceleration = allocate_thrust(&c.acceleration, obs.robot.mass, obs.robot.thrust_limit, &ctx.gravity);
    Ok(c)
}

fn control_law(
    ctx: &ControlContext<'_>,
    params: &ControllerParams,
    obs: &LocalObservation,
    team: usize,
    reference: &ReferenceSample,
) -> Result<Command, RunFailure> {
    let spec = ctx.spec;
    match spec.controller {
        ControllerKind::Dissipative => {
            let out = dissipative_control(obs, params, &ctx.gravity)?;
            let center = coupling_center(&observed_nodes(obs, params.h_c)?, obs, params.h_c);
            let anchor = match spec.tracking.anchor {
                TrackingAnchor::Center => center,
                TrackingAnchor::Payload => FormationCenter {
                    position: obs.payload_position,
                    velocity: obs.payload_velocity,
                },
            };
            let a_exp = expected_acceleration(reference, &anchor, &spec.tracking);
            let a_cmd = acceleration_command(&a_exp, &out.force, &obs.tension, obs.robot.mass, &ctx.gravity);
            Ok(Command {
                acceleration: a_cmd,
                center_estimate: Some(center),
                guarded: out.guarded,
            })
        }
        ControllerKind::Leader => Ok(Command {
            acceleration: payload_leader_control(
                obs,
                obs.robot.id,
                team,
                ctx.template,
                spec.payload.mass,
                reference,
                &spec.baseline,
                &ctx.gravity,
            )?,
            center_estimate: None,
            guarded: 0,
        }),
        ControllerKind::Formation => Ok(Command {
            acceleration: formation_based_control(
                obs,
                obs.robot.id,
                ctx.template,
                spec.payload.mass,
                reference,
                &spec.tracking,
                &spec.baseline,
                &ctx.gravity,
            ),
            center_estimate: None,
            guarded: 0,
        }),
    }
}

fn escape_command(robot: &RobotState, dep: &Departure) -> Vec3 {
    let v_des = dep.direction * ESCAPE_SPEED;
    let hor = (v_des - horizontal(robot.velocity)) * ESCAPE_GAIN;
    let vert = ESCAPE_GAIN * (dep.altitude - robot.position.z) - ESCAPE_GAIN * robot.velocity.z;
    Vec3::new(hor.x, hor.y, vert)
}

/// Perturbs every robot outside `i`'s perception neighborhood, keeping it out
/// of range of `i`. Used by the information-firewall check.
fn scramble_outsiders(snapshot: &Snapshot, i: usize, range: f64, rng: &mut ChaCha8Rng) -> Snapshot {
    let mut s = snapshot.clone();
    let me = snapshot.robots[i].position;
    for j in 0..s.robots.len() {
        if j == i || snapshot.connectivity.connected(i, j) {
            continue;
        }
        let dir = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.2..0.2),
        );
        let dir = if dir.norm() > 1e-6 { dir.normalize() } else { Vec3::x() };
        let dist = range * rng.random_range(1.5..4.0);
        s.robots[j].position = me + dir * dist;
        s.robots[j].velocity = Vec3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-1.0..1.0),
        );
        s.tensions[j] = Vec3::new(
            rng.random_range(-9.0..9.0),
            rng.random_range(-9.0..9.0),
            -rng.random_range(0.0..30.0),
        );
    }
    s
}

/// Options that do not alter the dynamics.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// When set, every command is recomputed from a snapshot whose
    /// out-of-range robots are randomized (seeded by this value) and the
    /// twin command stream is kept alongside the real one.
    pub firewall_seed: Option<u64>,
    pub tracking_mode: TrackingMode,
}

/// Stepwise simulation handle.
#[derive(Clone)]
pub struct Simulation {
    spec: ScenarioSpec,
    instance: ScenarioInstance,
    trajectory: ReferenceTrajectory,
    template: FormationTemplate,
    world_params: WorldParams,
    world: World,
    wind: WindState,
    commands: Vec<Vec3>,
    estimates: Vec<Option<FormationCenter>>,
    guarded: u32,
    tick: u64,
    ticks: u64,
    next_event: usize,
    applied: Vec<AppliedEvent>,
    firewall: Option<ChaCha8Rng>,
    /// (real, twin) command bits per robot per control tick.
    pub command_stream: Vec<Vec<[u64; 3]>>,
    pub twin_stream: Vec<Vec<[u64; 3]>>,
}

fn bits(v: &Vec3) -> [u64; 3] {
    [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]
}

impl Simulation {
    pub fn new(spec: &ScenarioSpec, options: RunOptions) -> Result<Self, RunError> {
        let fail = |source: RunFailure| RunError {
            tick: 0,
            time: 0.0,
            source,
        };
        let instance = sample_instance(spec, spec.seed).map_err(|e| fail(e.into()))?;
        let nodes = initial_nodes(spec, &instance).map_err(|e| fail(e.into()))?;
        let positions: Vec<Vec3> = instance.robots.iter().map(|r| r.position).collect();
        let n = positions.len();
        let all = vec![true; n];
        let connectivity = crate::model::connectivity(&positions, spec.formation.perception_range, &all);
        let rest = rest_lengths_init(&nodes, &positions, &instance.payload.position, &connectivity)
            .map_err(|e| fail(e.into()))?;
        let payload_node_rest = nodes
            .iter()
            .map(|q| Some((instance.payload.position - q).norm()))
            .collect();
        let world = World {
            robots: instance.robots.clone(),
            payload: instance.payload.clone(),
            cables: instance.cables(spec),
            alive: all,
            departing: vec![None; n],
            params: ControllerParams {
                gains: spec.gains,
                h_c: spec.formation.h_c,
                perception_range: spec.formation.perception_range,
                rest,
            },
            payload_node_rest,
            connectivity,
            wind: spec.wind,
            hysteresis: spec.formation.hysteresis,
        };
        let mut events: Vec<TimedEvent> = spec.events.clone();
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut spec_sorted = spec.clone();
        spec_sorted.events = events;
        Ok(Self {
            trajectory: spec.trajectory(),
            template: spec.template(),
            world_params: WorldParams {
                gravity: spec.gravity_vector(),
                wind: spec.wind,
                dt: spec.dt,
                integrator: spec.integrator,
            },
            wind: instance.wind_state(),
            commands: vec![Vec3::zeros(); n],
            estimates: vec![None; n],
            guarded: 0,
            tick: 0,
            ticks: spec.ticks(),
            next_event: 0,
            applied: Vec::new(),
            firewall: options.firewall_seed.map(ChaCha8Rng::seed_from_u64),
            command_stream: Vec::new(),
            twin_stream: Vec::new(),
            world,
            instance,
            spec: spec_sorted,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.spec.dt
    }

    pub fn finished(&self) -> bool {
        self.tick >= self.ticks
    }

    fn err(&self, source: impl Into<RunFailure>) -> RunError {
        RunError {
            tick: self.tick,
            time: self.time(),
            source: source.into(),
        }
    }

    fn compute_commands(&mut self, snapshot: &Snapshot, reference: &ReferenceSample) -> Result<(), RunError> {
        let ctx = ControlContext {
            spec: &self.spec,
            template: &self.template,
            gravity: self.world_params.gravity,
        };
        let members = self.world.members();
        let team = members.iter().filter(|&&m| m).count();
        let n = snapshot.robots.len();
        self.guarded = 0;
        let mut real = Vec::with_capacity(n);
        let mut twin = Vec::with_capacity(n);
        for i in 0..n {
            let robot = &snapshot.robots[i];
            if robot.attached {
                let obs = observation(snapshot, i);
                let cmd =
                    evaluate_controller(&ctx, &self.world.params, &obs, team, reference).map_err(|e| self.err(e))?;
                self.commands[i] = cmd.acceleration;
                self.estimates[i] = cmd.center_estimate;
                self.guarded += cmd.guarded;
                if let Some(rng) = self.firewall.as_mut() {
                    let shadow = scramble_outsiders(snapshot, i, self.world.params.perception_range, rng);
                    // the gate is recomputed from the scrambled positions
                    let mut shadow = shadow;
                    let pos: Vec<Vec3> = shadow.robots.iter().map(|r| r.position).collect();
                    shadow.connectivity =
                        crate::model::connectivity(&pos, self.world.params.perception_range, &members);
                    let obs = observation(&shadow, i);
                    let cmd =
                        evaluate_controller(&ctx, &self.world.params, &obs, team, reference).map_err(|e| RunError {
                            tick: self.tick,
                            time: self.tick as f64 * self.spec.dt,
                            source: e,
                        })?;
                    twin.push(bits(&cmd.acceleration));
                    real.push(bits(&self.commands[i]));
                }
            } else {
                self.estimates[i] = None;
                self.commands[i] = match self.world.departing[i] {
                    Some(dep) => escape_command(robot, &dep),
                    None => Vec3::zeros(),
                };
            }
        }
        if self.firewall.is_some() {
            self.command_stream.push(real);
            self.twin_stream.push(twin);
        }
        Ok(())
    }

    fn record(
        &self,
        snapshot: &Snapshot,
        reference: ReferenceSample,
        step: &StepOutput,
    ) -> Result<TraceRecord, RunError> {
        let h_c = self.world.params.h_c;
        let load = &snapshot.payload;
        let mut robots = Vec::with_capacity(snapshot.robots.len());
        let mut node_sum = (Vec3::zeros(), Vec3::zeros(), 0usize);
        for (i, r) in snapshot.robots.iter().enumerate() {
            let node: Option<VirtualNode> = if r.attached {
                let q = virtual_node(&r.position, &r.velocity, &load.position, &load.velocity, h_c)
                    .map_err(|e| self.err(tag(e, r.id)))?;
                node_sum.0 += q.position;
                node_sum.1 += q.velocity;
                node_sum.2 += 1;
                Some(q)
            } else {
                None
            };
            robots.push(RobotRecord {
                id: r.id,
                mass: r.mass,
                position: r.position,
                velocity: r.velocity,
                command: self.commands[i],
                acceleration: step.accelerations[i],
                tension: step.tensions[i],
                alive: self.world.alive[i],
                attached: r.attached,
                node,
                center_estimate: self.estimates[i],
            });
        }
        let center = (node_sum.2 > 0).then(|| FormationCenter {
            position: node_sum.0 / node_sum.2 as f64,
            velocity: node_sum.1 / node_sum.2 as f64,
        });
        Ok(TraceRecord {
            schema_version: SCHEMA_VERSION,
            tick: self.tick,
            t: self.time(),
            robots,
            payload: PayloadRecord {
                position: load.position,
                velocity: load.velocity,
            },
            reference,
            center,
            edges: snapshot.connectivity.edges(),
            wind: step.air_velocity,
            diagnostics: Diagnostics {
                guarded: self.guarded,
                saturated: step.saturated.iter().filter(|&&s| s).count() as u32,
            },
        })
    }

    /// Advances one physics step; returns the record logged for it, if any.
    pub fn step(&mut self) -> Result<Option<TraceRecord>, RunError> {
        if self.finished() {
            return Ok(None);
        }
        let t = self.time();
        self.world.update_departures();
        self.world.refresh_connectivity();
        let tensions = self
            .world
            .robots
            .iter()
            .zip(&self.world.cables)
            .map(|(r, c)| {
                cable_tension(
                    &r.position,
                    &r.velocity,
                    &self.world.payload.position,
                    &self.world.payload.velocity,
                    c,
                    r.attached,
                )
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| self.err(e))?;
        let snapshot = Snapshot {
            robots: self.world.robots.clone(),
            payload: self.world.payload.clone(),
            tensions,
            connectivity: self.world.connectivity.clone(),
        };
        let reference = self.trajectory.at(t);
        if self.tick % self.spec.control_decimation as u64 == 0 {
            self.compute_commands(&snapshot, &reference)?;
        }

        self.world_params.wind = self.world.wind;
        let out = dynamics::step(
            &self.world_params,
            &mut self.world.robots,
            &mut self.world.payload,
            &self.commands,
            &self.world.cables,
            &mut self.wind,
        )
        .map_err(|e| self.err(e))?;

        let record = if self.tick % self.spec.log_decimation as u64 == 0 {
            Some(self.record(&snapshot, reference, &out)?)
        } else {
            None
        };

        self.tick += 1;
        let t_next = self.time();
        while let Some(ev) = self.spec.events.get(self.next_event) {
            if ev.time > t_next {
                break;
            }
            let ev = ev.clone();
            let description = apply_event(&ev, &mut self.world).map_err(|e| self.err(e))?;
            let n = self.world.robots.len();
            self.commands.resize(n, Vec3::zeros());
            self.estimates.resize(n, None);
            self.applied.push(AppliedEvent {
                tick: self.tick,
                t: t_next,
                description,
            });
            self.next_event += 1;
        }
        Ok(record)
    }

    pub fn into_trace(self, records: Vec<TraceRecord>) -> Trace {
        Trace {
            header: TraceHeader {
                schema_version: SCHEMA_VERSION,
                generator: format!("swarmlift {}", env!("CARGO_PKG_VERSION")),
                spec: self.spec,
                instance: self.instance,
                rest: self.world.params.rest,
                payload_node_rest: self.world.payload_node_rest,
                template: self.template,
                events: self.applied,
                ticks: self.ticks,
            },
            records,
        }
    }

    /// Runs to completion, collecting logged records.
    pub fn run_to_end(mut self) -> Result<(Trace, FirewallStreams), RunError> {
        let mut records = Vec::new();
        while !self.finished() {
            if let Some(r) = self.step()? {
                records.push(r);
            }
        }
        let streams = FirewallStreams {
            real: std::mem::take(&mut self.command_stream),
            twin: std::mem::take(&mut self.twin_stream),
        };
        Ok((self.into_trace(records), streams))
    }
}

fn tag(e: ModelError, id: usize) -> ModelError {
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

/// Command bit patterns from a firewall run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FirewallStreams {
    pub real: Vec<Vec<[u64; 3]>>,
    pub twin: Vec<Vec<[u64; 3]>>,
}

impl FirewallStreams {
    pub fn identical(&self) -> bool {
        self.real == self.twin
    }
}

/// Runs the scenario and returns its trace.
pub fn simulate(spec: &ScenarioSpec) -> Result<Trace, RunError> {
    Ok(Simulation::new(spec, RunOptions::default())?.run_to_end()?.0)
}

/// Runs the scenario and computes its metrics.
///
/// A run that logs no records (zero duration) has no metrics.
pub fn run(spec: &ScenarioSpec) -> Result<(Trace, Option<RunMetrics>), RunError> {
    let trace = simulate(spec)?;
    let metrics = compute_metrics(&trace, TrackingMode::default()).ok();
    Ok((trace, metrics))
}

/// Runs the scenario with the information-firewall twin evaluation enabled.
pub fn firewall_check(spec: &ScenarioSpec, perturbation_seed: u64) -> Result<FirewallStreams, RunError> {
    let options = RunOptions {
        firewall_seed: Some(perturbation_seed),
        ..RunOptions::default()
    };
    Ok(Simulation::new(spec, options)?.run_to_end()?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{presets, JoinSpec};

    fn short(name: &str, duration: f64) -> ScenarioSpec {
        let mut s = presets::get(name).unwrap();
        s.duration = duration;
        s.events.retain(|e| e.time <= duration);
        s
    }

    #[test]
    fn zero_duration_gives_header_only() {
        let trace = simulate(&short("converge-4", 0.0)).unwrap();
        assert!(trace.records.is_empty());
        assert_eq!(trace.header.ticks, 0);
    }

    #[test]
    fn records_follow_log_decimation() {
        let mut s = short("converge-4", 0.5);
        s.log_decimation = 50;
        let trace = simulate(&s).unwrap();
        assert_eq!(trace.records.len(), 10);
        assert!(trace.records.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn log_decimation_does_not_touch_dynamics() {
        let mut a = short("converge-4", 0.6);
        a.log_decimation = 1;
        let mut b = a.clone();
        b.log_decimation = 30;
        let ta = simulate(&a).unwrap();
        let tb = simulate(&b).unwrap();
        for rb in &tb.records {
            let ra = &ta.records[rb.tick as usize];
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn unplug_event_detaches_and_zeroes_tension() {
        let mut s = short("converge-4", 1.0);
        s.events = vec![TimedEvent {
            time: 0.5,
            kind: EventKind::Unplug { robot: 1 },
        }];
        s.log_decimation = 1;
        let trace = simulate(&s).unwrap();
        assert_eq!(trace.header.events.len(), 1);
        assert_eq!(trace.header.events[0].tick, 500);
        for r in trace.records.iter().filter(|r| r.t >= 0.5) {
            assert_eq!(r.robots[1].tension, Vec3::zeros());
            assert!(!r.robots[1].attached);
            assert!(r.edges.iter().all(|&(a, b)| a != 1 && b != 1));
        }
    }

    #[test]
    fn unplugging_missing_robot_fails() {
        let s = short("converge-4", 1.0);
        let mut sim = Simulation::new(&s, RunOptions::default()).unwrap();
        let ev = TimedEvent {
            time: 0.0,
            kind: EventKind::Unplug { robot: 7 },
        };
        let mut world = sim.world().clone();
        assert!(matches!(
            apply_event(&ev, &mut world),
            Err(ScenarioError::EventTargetMissing { robot: 7, .. })
        ));
        sim.step().unwrap();
    }

    #[test]
    fn join_grows_connectivity_and_keeps_rest_lengths() {
        let mut s = short("converge-4", 0.1);
        s.team.n_robots = 3;
        let sim = Simulation::new(&s, RunOptions::default()).unwrap();
        let mut world = sim.world().clone();
        let before = world.params.rest.clone();
        let ev = TimedEvent {
            time: 0.0,
            kind: EventKind::Join(JoinSpec {
                mass: 1.0,
                thrust_limit: 30.0,
                cable_length: 2.0,
                entry_position: Vec3::new(-1.0, -1.0, 11.5),
            }),
        };
        apply_event(&ev, &mut world).unwrap();
        assert_eq!(world.connectivity.len(), 4);
        assert_eq!(world.cables.len(), 4);
        assert_eq!(world.params.rest.len(), 4);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(world.params.rest.pair(i, j), before.pair(i, j));
            }
            assert!(world.params.rest.pair(i, 3).is_some());
        }
    }

    #[test]
    fn runs_are_repeatable() {
        let s = short("fig5b-capability", 0.3);
        let a = simulate(&s).unwrap();
        let b = simulate(&s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn firewall_streams_match_on_short_run() {
        let mut s = short("fig5d-r3", 0.2);
        s.log_decimation = 100;
        let streams = firewall_check(&s, 5).unwrap();
        assert!(!streams.real.is_empty());
        assert!(streams.identical());
    }

    #[test]
    fn absurd_gains_blow_up_with_tick() {
        let mut s = short("converge-4", 5.0);
        s.cable.stiffness = 1e9;
        let err = simulate(&s).unwrap_err();
        assert!(err.tick > 0);
    }
}
