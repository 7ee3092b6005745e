//! Declarative experiment descriptions.
//!
//! A [`ScenarioSpec`] is what a scenario file holds: team, cables, payload,
//! perception, gains, reference trajectory, timed events, wind and seed.
//! [`sample_instance`] turns it into concrete drawn values; all randomness
//! flows from the single seed through named substreams.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{BaselineGains, ControllerKind, FormationTemplate, ReferenceSample, TrackingGains};
use crate::dynamics::{CableModel, Integrator, WindParams, WindState, DEFAULT_GRAVITY};
use crate::error::{ScenarioError, Violation};
use crate::model::{virtual_node_position, DissipativeGains, PayloadState, RobotState};
use crate::Vec3;

/// Shortest cable the sampler accepts, m.
pub const MIN_CABLE_LENGTH: f64 = 0.1;

/// Independent random streams derived from the scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Substream {
    Cables = 1,
    Capabilities = 2,
    Wind = 3,
    InitialPerturbation = 4,
}

pub fn substream(seed: u64, stream: Substream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeamSpec {
    pub n_robots: usize,
    /// kg
    pub mass: f64,
    /// Thrust limit shared by the whole team, N.
    pub thrust_limit: f64,
    /// When set, each robot's thrust limit is drawn from `U(lo, hi)` N instead.
    pub capability: Option<[f64; 2]>,
}

impl Default for TeamSpec {
    fn default() -> Self {
        Self {
            n_robots: 4,
            mass: 1.0,
            thrust_limit: 30.0,
            capability: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CableSpec {
    /// m
    pub nominal_length: f64,
    /// Half-width `a` of the uniform length perturbation `U(-a, a)`, m.
    pub uncertainty: f64,
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
}

impl Default for CableSpec {
    fn default() -> Self {
        Self {
            nominal_length: 2.0,
            uncertainty: 0.0,
            stiffness: 2000.0,
            damping: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PayloadSpec {
    /// kg
    pub mass: f64,
}

impl Default for PayloadSpec {
    fn default() -> Self {
        Self { mass: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutKind {
    /// Nodes on a regular polygon.
    #[default]
    Ring,
    /// Nodes filling a disk on a sunflower spiral; cables sized so every robot
    /// starts at the same height.
    Disk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormationSpec {
    /// Node altitude `h_c`, m (absolute).
    pub h_c: f64,
    pub layout: LayoutKind,
    /// Radius of the initial node ring (or disk), m.
    pub node_radius: f64,
    /// Perception range `r`, m.
    pub perception_range: f64,
    /// Extra separation before an established link breaks, m.
    pub hysteresis: f64,
    /// Maximum horizontal displacement of each robot from the regular layout,
    /// applied before the formation locks, m.
    pub initial_jitter: f64,
    /// Maximum horizontal start speed of each robot, m/s.
    pub initial_speed: f64,
    /// Disk layout only: robot height above the payload, m.
    pub disk_height: f64,
}

impl Default for FormationSpec {
    fn default() -> Self {
        Self {
            h_c: 12.5,
            layout: LayoutKind::Ring,
            node_radius: 1.6,
            perception_range: 8.0,
            hysteresis: 0.0,
            initial_jitter: 0.0,
            initial_speed: 0.0,
            disk_height: 1.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSpec {
    /// Payload waypoints, m. The first one is the payload start position.
    pub waypoints: Vec<Vec3>,
    /// m/s
    pub cruise_speed: f64,
    /// m/s²
    pub max_accel: f64,
    /// Time spent at the first waypoint before departing, s.
    pub hold: f64,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            waypoints: vec![Vec3::new(0.0, 0.0, 10.0)],
            cruise_speed: 1.0,
            max_accel: 0.5,
            hold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSpec {
    /// Tracking statistics ignore records before this time, s.
    pub warmup: f64,
    /// Residual threshold used for convergence detection.
    pub convergence_tol: f64,
    /// The residual must stay below the threshold this long, s.
    pub convergence_window: f64,
}

impl Default for MetricsSpec {
    fn default() -> Self {
        Self {
            warmup: 5.0,
            convergence_tol: 1e-2,
            convergence_window: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JoinSpec {
    pub mass: f64,
    pub thrust_limit: f64,
    pub cable_length: f64,
    pub entry_position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EventKind {
    Unplug { robot: usize },
    Join(JoinSpec),
    SetWind { wind: WindParams },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    /// s
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub controller: ControllerKind,
    pub seed: u64,
    /// s
    pub duration: f64,
    /// s
    pub dt: f64,
    pub integrator: Integrator,
    /// Controllers run every this many physics steps.
    pub control_decimation: usize,
    /// A trace record is written every this many physics steps.
    pub log_decimation: usize,
    /// m/s², magnitude of gravity along -z.
    pub gravity: f64,
    pub team: TeamSpec,
    pub cable: CableSpec,
    pub payload: PayloadSpec,
    pub formation: FormationSpec,
    pub gains: DissipativeGains,
    pub tracking: TrackingGains,
    pub baseline: BaselineGains,
    pub reference: ReferenceSpec,
    pub wind: WindParams,
    pub events: Vec<TimedEvent>,
    pub metrics: MetricsSpec,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            controller: ControllerKind::Dissipative,
            seed: 0,
            duration: 60.0,
            dt: 1e-3,
            integrator: Integrator::SemiImplicitEuler,
            control_decimation: 1,
            log_decimation: 10,
            gravity: DEFAULT_GRAVITY,
            team: TeamSpec::default(),
            cable: CableSpec::default(),
            payload: PayloadSpec::default(),
            formation: FormationSpec::default(),
            gains: DissipativeGains::default(),
            tracking: TrackingGains::default(),
            baseline: BaselineGains::default(),
            reference: ReferenceSpec::default(),
            wind: WindParams::calm(),
            events: Vec::new(),
            metrics: MetricsSpec::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn gravity_vector(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, -self.gravity)
    }

    pub fn ticks(&self) -> u64 {
        if self.duration <= 0.0 {
            0
        } else {
            (self.duration / self.dt).round() as u64
        }
    }

    pub fn trajectory(&self) -> ReferenceTrajectory {
        ReferenceTrajectory::new(
            self.reference.waypoints.clone(),
            self.reference.cruise_speed,
            self.reference.max_accel,
            self.reference.hold,
        )
    }

    /// Payload start position.
    pub fn start(&self) -> Vec3 {
        self.reference.waypoints.first().copied().unwrap_or_else(Vec3::zeros)
    }

    /// Template the baselines hold: nominal cables reaching from the payload
    /// to the nominal robot positions of the initial layout.
    pub fn template(&self) -> FormationTemplate {
        let n = self.team.n_robots;
        let h = self.formation.h_c - self.start().z;
        let node_dist = (self.formation.node_radius.powi(2) + h * h).sqrt();
        let height = self.cable.nominal_length * h / node_dist;
        FormationTemplate::for_cable(n, self.cable.nominal_length, height)
    }

    /// Every violated key; empty when the spec is usable.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut need = |ok: bool, key: &str, msg: &str| {
            if !ok {
                v.push(Violation::new(key, msg));
            }
        };
        let pos = |x: f64| x > 0.0 && x.is_finite();
        let nonneg = |x: f64| x >= 0.0 && x.is_finite();
        need(self.team.n_robots >= 1, "team.n_robots", "must be at least 1");
        need(pos(self.team.mass), "team.mass", "must be > 0 kg");
        need(pos(self.team.thrust_limit), "team.thrust_limit", "must be > 0 N");
        if let Some([lo, hi]) = self.team.capability {
            need(
                pos(lo) && hi >= lo && hi.is_finite(),
                "team.capability",
                "must be [lo, hi] N with 0 < lo <= hi",
            );
        }
        need(
            self.duration >= 0.0 && self.duration.is_finite(),
            "duration",
            "must be >= 0 s",
        );
        need(pos(self.dt), "dt", "must be > 0 s");
        need(self.control_decimation >= 1, "control_decimation", "must be >= 1");
        need(self.log_decimation >= 1, "log_decimation", "must be >= 1");
        need(nonneg(self.gravity), "gravity", "must be >= 0 m/s²");
        need(pos(self.cable.nominal_length), "cable.nominal_length", "must be > 0 m");
        need(nonneg(self.cable.uncertainty), "cable.uncertainty", "must be >= 0 m");
        need(pos(self.cable.stiffness), "cable.stiffness", "must be > 0 N/m");
        need(nonneg(self.cable.damping), "cable.damping", "must be >= 0 N·s/m");
        need(pos(self.payload.mass), "payload.mass", "must be > 0 kg");
        need(
            pos(self.formation.perception_range),
            "formation.perception_range",
            "must be > 0 m",
        );
        need(
            nonneg(self.formation.hysteresis),
            "formation.hysteresis",
            "must be >= 0 m",
        );
        need(
            nonneg(self.formation.initial_jitter),
            "formation.initial_jitter",
            "must be >= 0 m",
        );
        need(
            nonneg(self.formation.initial_speed),
            "formation.initial_speed",
            "must be >= 0 m/s",
        );
        need(
            pos(self.formation.node_radius),
            "formation.node_radius",
            "must be > 0 m",
        );
        need(
            self.formation.h_c > self.start().z,
            "formation.h_c",
            "must lie above the payload start altitude",
        );
        if self.formation.layout == LayoutKind::Disk {
            need(
                pos(self.formation.disk_height) && self.formation.disk_height < self.formation.h_c - self.start().z,
                "formation.disk_height",
                "must be > 0 and below the node altitude",
            );
        }
        let g = &self.gains;
        for (key, val) in [
            ("gains.k_ij", g.k_ij),
            ("gains.c_ij", g.c_ij),
            ("gains.k_i", g.k_i),
            ("gains.c_i", g.c_i),
            ("gains.f_c", g.f_c),
        ] {
            need(nonneg(val), key, "must be >= 0");
        }
        need(nonneg(self.tracking.kp), "tracking.kp", "must be >= 0");
        need(nonneg(self.tracking.kv), "tracking.kv", "must be >= 0");
        need(pos(self.tracking.max_accel), "tracking.max_accel", "must be > 0 m/s²");
        need(
            !self.reference.waypoints.is_empty(),
            "reference.waypoints",
            "needs at least one waypoint",
        );
        need(
            pos(self.reference.cruise_speed),
            "reference.cruise_speed",
            "must be > 0 m/s",
        );
        need(pos(self.reference.max_accel), "reference.max_accel", "must be > 0 m/s²");
        need(nonneg(self.reference.hold), "reference.hold", "must be >= 0 s");
        need(nonneg(self.wind.gust_std), "wind.gust_std", "must be >= 0 m/s");
        need(
            pos(self.wind.correlation_time),
            "wind.correlation_time",
            "must be > 0 s",
        );
        need(nonneg(self.metrics.warmup), "metrics.warmup", "must be >= 0 s");
        need(
            pos(self.metrics.convergence_tol),
            "metrics.convergence_tol",
            "must be > 0",
        );
        need(
            nonneg(self.metrics.convergence_window),
            "metrics.convergence_window",
            "must be >= 0 s",
        );
        for (k, e) in self.events.iter().enumerate() {
            let key = format!("events[{k}]");
            need(
                e.time >= 0.0 && e.time <= self.duration,
                &format!("{key}.time"),
                "must lie within [0, duration]",
            );
            match &e.kind {
                EventKind::Unplug { robot } => {
                    let joined_before = self.events[..k]
                        .iter()
                        .filter(|p| matches!(p.kind, EventKind::Join(_)))
                        .count();
                    let unplugged_before = self.events[..k]
                        .iter()
                        .any(|p| matches!(p.kind, EventKind::Unplug { robot: r } if r == *robot));
                    need(
                        *robot < self.team.n_robots + joined_before && !unplugged_before,
                        &format!("{key}.robot"),
                        "must name an attached robot",
                    );
                }
                EventKind::Join(j) => {
                    need(pos(j.mass), &format!("{key}.mass"), "must be > 0 kg");
                    need(pos(j.thrust_limit), &format!("{key}.thrust_limit"), "must be > 0 N");
                    need(
                        j.cable_length > MIN_CABLE_LENGTH,
                        &format!("{key}.cable_length"),
                        "must exceed 0.1 m",
                    );
                }
                EventKind::SetWind { wind } => {
                    need(
                        nonneg(wind.gust_std),
                        &format!("{key}.wind.gust_std"),
                        "must be >= 0 m/s",
                    );
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(v))
        }
    }
}

/// Concrete values drawn for one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInstance {
    pub seed: u64,
    pub cable_lengths: Vec<f64>,
    pub thrust_limits: Vec<f64>,
    /// Start states; the formation locks on these positions.
    pub robots: Vec<RobotState>,
    pub payload: PayloadState,
}

impl ScenarioInstance {
    pub fn cables(&self, spec: &ScenarioSpec) -> Vec<CableModel> {
        self.cable_lengths
            .iter()
            .map(|&l| CableModel {
                stiffness: spec.cable.stiffness,
                damping: spec.cable.damping,
                rest_length: l,
            })
            .collect()
    }

    pub fn wind_state(&self) -> WindState {
        WindState::from_rng(substream(self.seed, Substream::Wind))
    }
}

/// Unit-circle angle of node `i` of `n` on a sunflower spiral.
fn disk_point(i: usize, n: usize, radius: f64) -> (f64, f64) {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let r = radius * ((i as f64 + 0.5) / n as f64).sqrt();
    let a = golden * i as f64;
    (r * a.cos(), r * a.sin())
}

/// Draws cable lengths, thrust limits and the initial layout.
///
/// Nodes lie on the configured ring (or disk) at `h_c`; each robot starts on
/// the line from the payload to its node, at its cable length from the
/// payload, then moves sideways by up to `initial_jitter` along the same cable
/// sphere so every cable starts exactly taut. Start velocities are horizontal
/// and at most `initial_speed`.
pub fn sample_instance(spec: &ScenarioSpec, seed: u64) -> Result<ScenarioInstance, ScenarioError> {
    spec.validate()?;
    let n = spec.team.n_robots;
    let start = spec.start();
    let h = spec.formation.h_c - start.z;

    let nodes: Vec<Vec3> = (0..n)
        .map(|i| {
            let (x, y) = match spec.formation.layout {
                LayoutKind::Ring => {
                    let a = std::f64::consts::TAU * i as f64 / n as f64;
                    if n == 1 {
                        (0.0, 0.0)
                    } else {
                        (
                            spec.formation.node_radius * a.cos(),
                            spec.formation.node_radius * a.sin(),
                        )
                    }
                }
                LayoutKind::Disk => disk_point(i, n, spec.formation.node_radius),
            };
            start + Vec3::new(x, y, h)
        })
        .collect();

    let mut cable_rng = substream(seed, Substream::Cables);
    let a = spec.cable.uncertainty;
    let cable_lengths = nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let base = match spec.formation.layout {
                LayoutKind::Ring => spec.cable.nominal_length,
                LayoutKind::Disk => {
                    let d = node - start;
                    let radial = (d.x * d.x + d.y * d.y).sqrt() * spec.formation.disk_height / h;
                    (radial * radial + spec.formation.disk_height.powi(2)).sqrt()
                }
            };
            let l = if a > 0.0 {
                base + cable_rng.random_range(-a..=a)
            } else {
                base
            };
            if l <= MIN_CABLE_LENGTH {
                Err(ScenarioError::InvalidSample {
                    robot: i,
                    length: l,
                    min: MIN_CABLE_LENGTH,
                })
            } else {
                Ok(l)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut cap_rng = substream(seed, Substream::Capabilities);
    let thrust_limits: Vec<f64> = (0..n)
        .map(|_| match spec.team.capability {
            Some([lo, hi]) if hi > lo => cap_rng.random_range(lo..=hi),
            Some([lo, _]) => lo,
            None => spec.team.thrust_limit,
        })
        .collect();

    let mut jitter_rng = substream(seed, Substream::InitialPerturbation);
    let robots = nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let mut p = start + (node - start).normalize() * cable_lengths[i];
            let jitter = spec.formation.initial_jitter;
            if jitter > 0.0 {
                let r = jitter * jitter_rng.random::<f64>().sqrt();
                let ang = jitter_rng.random_range(0.0..std::f64::consts::TAU);
                p += Vec3::new(r * ang.cos(), r * ang.sin(), 0.0);
                // back onto the cable sphere, keeping the robot above the payload
                p = start + (p - start).normalize() * cable_lengths[i];
            }
            let mut v = Vec3::zeros();
            let speed = spec.formation.initial_speed;
            if speed > 0.0 {
                let r = speed * jitter_rng.random::<f64>().sqrt();
                let ang = jitter_rng.random_range(0.0..std::f64::consts::TAU);
                v = Vec3::new(r * ang.cos(), r * ang.sin(), 0.0);
            }
            RobotState {
                id: i,
                position: p,
                velocity: v,
                mass: spec.team.mass,
                thrust_limit: thrust_limits[i],
                cable_length: cable_lengths[i],
                attached: true,
            }
        })
        .collect();

    Ok(ScenarioInstance {
        seed,
        cable_lengths,
        thrust_limits,
        robots,
        payload: PayloadState {
            position: start,
            velocity: Vec3::zeros(),
            mass: spec.payload.mass,
        },
    })
}

/// Node positions of the locked formation.
pub fn initial_nodes(spec: &ScenarioSpec, inst: &ScenarioInstance) -> Result<Vec<Vec3>, ScenarioError> {
    inst.robots
        .iter()
        .map(|r| virtual_node_position(&r.position, &inst.payload.position, spec.formation.h_c).map_err(Into::into))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Leg {
    from: Vec3,
    dir: Vec3,
    length: f64,
    peak_speed: f64,
    ramp_time: f64,
    duration: f64,
    start_time: f64,
}

/// Rest-to-rest trapezoidal-speed trajectory through the waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    waypoints: Vec<Vec3>,
    legs: Vec<Leg>,
    accel: f64,
    end_time: f64,
}

impl ReferenceTrajectory {
    pub fn new(waypoints: Vec<Vec3>, cruise_speed: f64, max_accel: f64, hold: f64) -> Self {
        let mut legs = Vec::new();
        let mut t = hold;
        for w in waypoints.windows(2) {
            let d = w[1] - w[0];
            let length = d.norm();
            if length <= 0.0 {
                continue;
            }
            let (peak_speed, ramp_time, duration) = if length >= cruise_speed * cruise_speed / max_accel {
                let ramp = cruise_speed / max_accel;
                (
                    cruise_speed,
                    ramp,
                    2.0 * ramp + (length - cruise_speed * ramp) / cruise_speed,
                )
            } else {
                let peak = (length * max_accel).sqrt();
                let ramp = peak / max_accel;
                (peak, ramp, 2.0 * ramp)
            };
            legs.push(Leg {
                from: w[0],
                dir: d / length,
                length,
                peak_speed,
                ramp_time,
                duration,
                start_time: t,
            });
            t += duration;
        }
        Self {
            waypoints,
            legs,
            accel: max_accel,
            end_time: t,
        }
    }

    /// Time at which the final waypoint is reached, s.
    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    pub fn at(&self, t: f64) -> ReferenceSample {
        let first = self.waypoints.first().copied().unwrap_or_else(Vec3::zeros);
        let Some(leg) = self.legs.iter().rev().find(|l| t >= l.start_time) else {
            return ReferenceSample {
                position: first,
                ..Default::default()
            };
        };
        let tau = t - leg.start_time;
        if tau >= leg.duration {
            return ReferenceSample {
                position: leg.from + leg.dir * leg.length,
                ..Default::default()
            };
        }
        let a = self.accel;
        let (s, v, acc) = if tau < leg.ramp_time {
            (0.5 * a * tau * tau, a * tau, a)
        } else if tau <= leg.duration - leg.ramp_time {
            let ramp_dist = 0.5 * a * leg.ramp_time * leg.ramp_time;
            (ramp_dist + leg.peak_speed * (tau - leg.ramp_time), leg.peak_speed, 0.0)
        } else {
            let rem = leg.duration - tau;
            (leg.length - 0.5 * a * rem * rem, a * rem, -a)
        };
        ReferenceSample {
            position: leg.from + leg.dir * s,
            velocity: leg.dir * v,
            acceleration: leg.dir * acc,
        }
    }
}

/// Reference position, velocity and acceleration at `t`.
pub fn reference_at(trajectory: &ReferenceTrajectory, t: f64) -> ReferenceSample {
    trajectory.at(t)
}

pub mod presets {
    //! Named scenarios reproducing the benchmark and flight experiments.

    use super::*;

    pub const NAMES: &[&str] = &[
        "converge-4",
        "fig5a-0",
        "fig5a-0.5",
        "fig5a-1.01",
        "fig5b-capability",
        "fig5c-3kg",
        "fig5c-5kg",
        "fig5c-8kg",
        "fig5d-r0.5",
        "fig5d-r3",
        "fig5d-r8",
        "fig6-unplug40s",
        "five-robot-5kg",
        "scale-100",
    ];

    /// Matrix panels: (panel, cells).
    pub const FIG5_PANELS: &[(&str, &[&str])] = &[
        ("A", &["fig5a-0", "fig5a-0.5", "fig5a-1.01"]),
        ("B", &["fig5a-0", "fig5b-capability"]),
        ("C", &["fig5c-3kg", "fig5c-5kg", "fig5c-8kg"]),
        ("D", &["fig5d-r0.5", "fig5d-r3", "fig5d-r8"]),
    ];

    pub fn get(name: &str) -> Result<ScenarioSpec, ScenarioError> {
        let mut s = match name {
            "converge-4" => converge4(),
            "fig5a-0" => fig5_nominal(),
            "fig5a-0.5" => with_uncertainty(0.5),
            "fig5a-1.01" => with_uncertainty(1.01),
            "fig5b-capability" => {
                let mut s = fig5_nominal();
                s.team.capability = Some([11.0, 19.0]);
                s
            }
            "fig5c-3kg" => with_load(3.0),
            "fig5c-5kg" => with_load(5.0),
            "fig5c-8kg" => with_load(8.0),
            "fig5d-r0.5" => with_range(0.5),
            "fig5d-r3" => with_range(3.0),
            "fig5d-r8" => with_range(8.0),
            "fig6-unplug40s" => fig6_unplug(),
            "five-robot-5kg" => five_robot(),
            "scale-100" => scale100(),
            other => return Err(ScenarioError::UnknownPreset(other.to_string())),
        };
        s.name = name.to_string();
        Ok(s)
    }

    /// Four equal robots holding a 4 kg payload at a fixed point.
    fn converge4() -> ScenarioSpec {
        ScenarioSpec {
            duration: 60.0,
            log_decimation: 10,
            team: TeamSpec {
                n_robots: 4,
                mass: 1.0,
                thrust_limit: 30.0,
                capability: None,
            },
            cable: CableSpec {
                nominal_length: 2.0,
                ..CableSpec::default()
            },
            payload: PayloadSpec { mass: 4.0 },
            formation: FormationSpec {
                h_c: 12.5,
                node_radius: 2.0,
                perception_range: 8.0,
                initial_speed: 0.3,
                ..FormationSpec::default()
            },
            reference: ReferenceSpec {
                waypoints: vec![Vec3::new(0.0, 0.0, 10.0)],
                ..ReferenceSpec::default()
            },
            ..ScenarioSpec::default()
        }
    }

    /// Six robots, 5 kg, 2.02 m cables, a 34 m level delivery leg at 1 m/s.
    fn fig5_nominal() -> ScenarioSpec {
        ScenarioSpec {
            duration: 50.0,
            log_decimation: 20,
            team: TeamSpec {
                n_robots: 6,
                mass: 0.3,
                thrust_limit: 20.0,
                capability: None,
            },
            cable: CableSpec {
                nominal_length: 2.02,
                ..CableSpec::default()
            },
            payload: PayloadSpec { mass: 5.0 },
            formation: FormationSpec {
                h_c: 17.5,
                node_radius: 2.0,
                perception_range: 8.0,
                initial_jitter: 0.05,
                ..FormationSpec::default()
            },
            reference: ReferenceSpec {
                waypoints: vec![Vec3::new(0.0, 0.0, 15.0), Vec3::new(34.0, 0.0, 15.0)],
                cruise_speed: 1.0,
                max_accel: 0.5,
                hold: 5.0,
            },
            metrics: MetricsSpec {
                warmup: 5.0,
                ..MetricsSpec::default()
            },
            ..ScenarioSpec::default()
        }
    }

    fn with_uncertainty(a: f64) -> ScenarioSpec {
        let mut s = fig5_nominal();
        s.cable.uncertainty = a;
        s
    }

    fn with_load(kg: f64) -> ScenarioSpec {
        let mut s = fig5_nominal();
        s.payload.mass = kg;
        s
    }

    fn with_range(r: f64) -> ScenarioSpec {
        let mut s = fig5_nominal();
        s.formation.perception_range = r;
        s
    }

    /// Four robots, 4 kg; robot 1 releases its cable at 40 s and leaves.
    fn fig6_unplug() -> ScenarioSpec {
        let mut s = converge4();
        s.duration = 80.0;
        s.events = vec![TimedEvent {
            time: 40.0,
            kind: EventKind::Unplug { robot: 1 },
        }];
        s
    }

    /// Five robots delivering 5 kg over 34 m in a Beaufort-4 breeze.
    fn five_robot() -> ScenarioSpec {
        let mut s = fig5_nominal();
        s.team = TeamSpec {
            n_robots: 5,
            mass: 1.0,
            thrust_limit: 30.0,
            capability: None,
        };
        s.payload.mass = 5.0;
        s.wind = WindParams::beaufort4();
        s
    }

    /// 100 robots on a disk under a 100 kg payload.
    fn scale100() -> ScenarioSpec {
        ScenarioSpec {
            duration: 30.0,
            log_decimation: 100,
            team: TeamSpec {
                n_robots: 100,
                mass: 1.0,
                thrust_limit: 30.0,
                capability: None,
            },
            payload: PayloadSpec { mass: 100.0 },
            formation: FormationSpec {
                h_c: 13.0,
                layout: LayoutKind::Disk,
                node_radius: 6.0,
                perception_range: 2.5,
                disk_height: 1.8,
                initial_jitter: 0.0,
                ..FormationSpec::default()
            },
            reference: ReferenceSpec {
                waypoints: vec![Vec3::new(0.0, 0.0, 10.0)],
                ..ReferenceSpec::default()
            },
            ..ScenarioSpec::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_uncertainty_keeps_nominal_cables() {
        let s = presets::get("fig5a-0").unwrap();
        let inst = sample_instance(&s, 3).unwrap();
        assert!(inst.cable_lengths.iter().all(|&l| l == 2.02));
    }

    #[test]
    fn wide_uncertainty_stays_in_range() {
        let s = presets::get("fig5a-1.01").unwrap();
        for seed in 0..50 {
            let inst = sample_instance(&s, seed).unwrap();
            for &l in &inst.cable_lengths {
                assert!((1.01 - 1e-12..=3.03 + 1e-12).contains(&l), "{l}");
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_seed_sensitive() {
        let s = presets::get("fig5b-capability").unwrap();
        assert_eq!(sample_instance(&s, 8).unwrap(), sample_instance(&s, 8).unwrap());
        assert_ne!(
            sample_instance(&s, 8).unwrap().thrust_limits,
            sample_instance(&s, 9).unwrap().thrust_limits
        );
        for &f in &sample_instance(&s, 8).unwrap().thrust_limits {
            assert!((11.0..=19.0).contains(&f));
        }
    }

    #[test]
    fn infeasible_cable_draw_is_rejected() {
        let mut s = presets::get("fig5a-0").unwrap();
        s.cable.nominal_length = 0.5;
        s.cable.uncertainty = 0.45;
        let failed = (0..40).any(|seed| matches!(sample_instance(&s, seed), Err(ScenarioError::InvalidSample { .. })));
        assert!(failed);
    }

    #[test]
    fn initial_cables_are_exactly_taut() {
        let s = presets::get("fig5a-1.01").unwrap();
        let inst = sample_instance(&s, 4).unwrap();
        for (r, l) in inst.robots.iter().zip(&inst.cable_lengths) {
            assert_relative_eq!((r.position - inst.payload.position).norm(), *l, epsilon = 1e-9);
            assert!(r.position.z < s.formation.h_c);
        }
    }

    #[test]
    fn reference_endpoints_and_cruise() {
        let traj = ReferenceTrajectory::new(
            vec![Vec3::new(0.0, 0.0, 15.0), Vec3::new(34.0, 0.0, 15.0)],
            1.0,
            0.5,
            0.0,
        );
        let r0 = traj.at(0.0);
        assert_eq!(r0.position, Vec3::new(0.0, 0.0, 15.0));
        assert_eq!(r0.velocity, Vec3::zeros());
        let mid = traj.at(traj.end_time() / 2.0);
        assert_relative_eq!(mid.velocity.norm(), 1.0, epsilon = 1e-12);
        let end = traj.at(traj.end_time());
        assert_relative_eq!(end.position, Vec3::new(34.0, 0.0, 15.0), epsilon = 1e-9);
        assert_eq!(end.velocity, Vec3::zeros());
        // 2 s ramps at each end: 34 m at 1 m/s plus 2 s
        assert_relative_eq!(traj.end_time(), 36.0, epsilon = 1e-12);
    }

    #[test]
    fn reference_is_c1_and_speed_bounded() {
        let traj = ReferenceTrajectory::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(3.0, 4.0, 0.0),
                Vec3::new(3.0, 4.2, 1.0),
            ],
            1.5,
            0.8,
            1.0,
        );
        let dt = 1e-4;
        let mut prev = traj.at(0.0);
        let mut t = dt;
        while t < traj.end_time() + 1.0 {
            let cur = traj.at(t);
            assert!(cur.velocity.norm() <= 1.5 + 1e-12);
            assert!((cur.velocity - prev.velocity).norm() <= 0.8 * dt + 1e-9);
            assert!((cur.position - prev.position).norm() <= 1.5 * dt + 1e-9);
            prev = cur;
            t += dt;
        }
    }

    #[test]
    fn every_preset_validates() {
        for name in presets::NAMES {
            let s = presets::get(name).unwrap();
            assert!(s.violations().is_empty(), "{name}: {:?}", s.violations());
            assert_eq!(&s.name, name);
        }
        assert!(matches!(presets::get("nope"), Err(ScenarioError::UnknownPreset(_))));
    }

    #[test]
    fn violations_name_every_bad_key() {
        let mut s = ScenarioSpec::default();
        s.team.mass = -1.0;
        s.dt = 0.0;
        s.events.push(TimedEvent {
            time: 1.0,
            kind: EventKind::Unplug { robot: 9 },
        });
        let keys: Vec<String> = s.violations().into_iter().map(|v| v.key).collect();
        assert_eq!(keys, vec!["team.mass", "dt", "events[0].robot"]);
    }

    #[test]
    fn toml_round_trip_and_unknown_controller() {
        let s = presets::get("fig6-unplug40s").unwrap();
        let back = ScenarioSpec::from_toml_str(&s.to_toml(), "mem").unwrap();
        assert_eq!(back, s);
        let err = ScenarioSpec::from_toml_str("controller = \"pid\"", "mem").unwrap_err();
        let msg = err.to_string();
        for name in ["dissipative", "formation", "leader"] {
            assert!(msg.contains(name), "{msg}");
        }
    }

    #[test]
    fn disk_layout_levels_every_robot() {
        let s = presets::get("scale-100").unwrap();
        let inst = sample_instance(&s, 0).unwrap();
        let z0 = inst.robots[0].position.z;
        for r in &inst.robots {
            assert_relative_eq!(r.position.z, z0, epsilon = 1e-9);
        }
    }
}
