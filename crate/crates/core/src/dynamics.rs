//! Rigid-body evolution of the robots and the payload.
//!
//! Robots and the payload are point masses. Cables are unilateral
//! spring-dampers: they pull when stretched past their rest length and exert
//! nothing when slack. Thrust is a bounded force; anything the controller asks
//! for beyond the limit is scaled back along the requested direction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{PayloadState, RobotState};
use crate::Vec3;

pub const DEFAULT_GRAVITY: f64 = 9.81;
/// Any position (m) or velocity (m/s) component beyond this aborts the run.
pub const BLOWUP_BOUND: f64 = 1e6;
const COINCIDENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CableModel {
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
    /// m
    pub rest_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindParams {
    /// Mean air velocity, m/s.
    #[serde(default = "Vec3::zeros")]
    pub mean: Vec3,
    /// Per-axis gust standard deviation, m/s.
    #[serde(default)]
    pub gust_std: f64,
    /// Gust correlation time, s.
    #[serde(default = "default_correlation_time")]
    pub correlation_time: f64,
    /// Linear drag coefficient for robots, N·s/m.
    #[serde(default = "default_robot_drag")]
    pub robot_drag: f64,
    /// Linear drag coefficient for the payload, N·s/m.
    #[serde(default = "default_payload_drag")]
    pub payload_drag: f64,
}

fn default_correlation_time() -> f64 {
    2.0
}
fn default_robot_drag() -> f64 {
    0.05
}
fn default_payload_drag() -> f64 {
    0.15
}

impl Default for WindParams {
    fn default() -> Self {
        Self::calm()
    }
}

impl WindParams {
    pub fn calm() -> Self {
        Self {
            mean: Vec3::zeros(),
            gust_std: 0.0,
            correlation_time: default_correlation_time(),
            robot_drag: default_robot_drag(),
            payload_drag: default_payload_drag(),
        }
    }

    /// Moderate breeze: 6.5 m/s mean along +x with 1.5 m/s gusts.
    pub fn beaufort4() -> Self {
        Self {
            mean: Vec3::new(6.5, 0.0, 0.0),
            gust_std: 1.5,
            ..Self::calm()
        }
    }

    pub fn is_calm(&self) -> bool {
        self.gust_std == 0.0 && self.mean == Vec3::zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    #[default]
    SemiImplicitEuler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub gravity: Vec3,
    pub wind: WindParams,
    /// s
    pub dt: f64,
    pub integrator: Integrator,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            gravity: Vec3::new(0.0, 0.0, -DEFAULT_GRAVITY),
            wind: WindParams::calm(),
            dt: 1e-3,
            integrator: Integrator::SemiImplicitEuler,
        }
    }
}

/// Gust generator: a per-axis first-order autoregressive process around the
/// mean wind. Owns its RNG so runs are reproducible from the seed alone.
#[derive(Debug, Clone)]
pub struct WindState {
    rng: ChaCha8Rng,
    gust: Vec3,
}

impl WindState {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            gust: Vec3::zeros(),
        }
    }

    pub fn from_rng(rng: ChaCha8Rng) -> Self {
        Self {
            rng,
            gust: Vec3::zeros(),
        }
    }

    /// Current air velocity, m/s.
    pub fn air_velocity(&self, params: &WindParams) -> Vec3 {
        params.mean + self.gust
    }

    /// Advances the gust by `dt` and returns the new air velocity.
    pub fn advance(&mut self, params: &WindParams, dt: f64) -> Vec3 {
        if params.gust_std > 0.0 {
            let phi = (-dt / params.correlation_time.max(dt)).exp();
            let sigma = params.gust_std * (1.0 - phi * phi).sqrt();
            for k in 0..3 {
                let xi: f64 = StandardNormal.sample(&mut self.rng);
                self.gust[k] = phi * self.gust[k] + sigma * xi;
            }
        } else {
            self.gust = Vec3::zeros();
        }
        self.air_velocity(params)
    }
}

/// Wind force on a robot at time `t` after advancing the gust process by `dt`.
/// The process is stationary, so `t` only fixes the sampling instant.
pub fn wind_force(_t: f64, dt: f64, params: &WindParams, state: &mut WindState) -> Vec3 {
    state.advance(params, dt) * params.robot_drag
}

/// Force on the robot from its cable; the payload receives the negation.
pub fn cable_tension(
    robot: &Vec3,
    robot_vel: &Vec3,
    load: &Vec3,
    load_vel: &Vec3,
    cable: &CableModel,
    attached: bool,
) -> Result<Vec3, ModelError> {
    if !attached {
        return Ok(Vec3::zeros());
    }
    let offset = load - robot;
    let d = offset.norm();
    if d <= COINCIDENT_EPS {
        return Err(ModelError::CoincidentPoints { distance: d });
    }
    let stretch = d - cable.rest_length;
    if stretch <= 0.0 {
        return Ok(Vec3::zeros());
    }
    let dir = offset / d;
    // separation rate: positive when the endpoints move apart
    let stretch_rate = dir.dot(&(load_vel - robot_vel));
    let magnitude = (cable.stiffness * stretch + cable.damping * stretch_rate).max(0.0);
    Ok(dir * magnitude)
}

/// Acceleration actually produced when the commanded acceleration `a_cmd`
/// (excluding cable and wind forces) needs more thrust than `thrust_limit`.
pub fn saturate_thrust(a_cmd: &Vec3, mass: f64, thrust_limit: f64, gravity: &Vec3) -> Vec3 {
    let required = (a_cmd - gravity) * mass;
    let norm = required.norm();
    if norm <= thrust_limit {
        *a_cmd
    } else {
        gravity + (a_cmd - gravity) * (thrust_limit / norm)
    }
}

/// Thrust vector realizing a (saturated) acceleration command.
pub fn thrust_for(a: &Vec3, mass: f64, gravity: &Vec3) -> Vec3 {
    (a - gravity) * mass
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Cable force on each robot, N.
    pub tensions: Vec<Vec3>,
    /// Total acceleration of each robot over the step, m/s².
    pub accelerations: Vec<Vec3>,
    /// Thrust-only acceleration after saturation, m/s².
    pub thrust_accelerations: Vec<Vec3>,
    pub saturated: Vec<bool>,
    pub air_velocity: Vec3,
}

struct Forces {
    tensions: Vec<Vec3>,
}

fn cable_forces(robots: &[RobotState], payload: &PayloadState, cables: &[CableModel]) -> Result<Forces, ModelError> {
    let tensions = robots
        .iter()
        .zip(cables)
        .map(|(r, c)| {
            cable_tension(
                &r.position,
                &r.velocity,
                &payload.position,
                &payload.velocity,
                c,
                r.attached,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Forces { tensions })
}

fn check_bounds(robots: &[RobotState], payload: &PayloadState) -> Result<(), ModelError> {
    let exceeds = |v: &Vec3| v.iter().any(|c| !c.is_finite() || c.abs() > BLOWUP_BOUND);
    for r in robots {
        if exceeds(&r.position) || exceeds(&r.velocity) {
            let magnitude = r.position.amax().max(r.velocity.amax());
            return Err(ModelError::NumericalBlowup {
                quantity: format!("robot {} state", r.id),
                magnitude,
            });
        }
    }
    if exceeds(&payload.position) || exceeds(&payload.velocity) {
        return Err(ModelError::NumericalBlowup {
            quantity: "payload state".into(),
            magnitude: payload.position.amax().max(payload.velocity.amax()),
        });
    }
    Ok(())
}

/// Advances robots and payload by one `world.dt`.
///
/// `commands` are acceleration commands in the thrust frame: the thrust
/// demanded is `m (a_cmd - g)`, and cable and wind forces act on top.
pub fn step(
    world: &WorldParams,
    robots: &mut [RobotState],
    payload: &mut PayloadState,
    commands: &[Vec3],
    cables: &[CableModel],
    wind: &mut WindState,
) -> Result<StepOutput, ModelError> {
    assert_eq!(robots.len(), commands.len());
    assert_eq!(robots.len(), cables.len());
    let g = world.gravity;
    let dt = world.dt;
    let air = wind.advance(&world.wind, dt);
    let robot_wind = air * world.wind.robot_drag;
    let payload_wind = air * world.wind.payload_drag;

    let thrust_acc: Vec<Vec3> = robots
        .iter()
        .zip(commands)
        .map(|(r, a)| saturate_thrust(a, r.mass, r.thrust_limit, &g))
        .collect();
    let saturated = robots
        .iter()
        .zip(commands)
        .map(|(r, a)| thrust_for(a, r.mass, &g).norm() > r.thrust_limit)
        .collect();

    let (tensions, accelerations) = match world.integrator {
        Integrator::SemiImplicitEuler => {
            let forces = cable_forces(robots, payload, cables)?;
            let mut accelerations = Vec::with_capacity(robots.len());
            let mut load_force = payload_wind;
            for ((r, t), a_thrust) in robots.iter_mut().zip(&forces.tensions).zip(&thrust_acc) {
                let a = a_thrust + (t + robot_wind) / r.mass;
                r.velocity += a * dt;
                r.position += r.velocity * dt;
                load_force -= t;
                accelerations.push(a);
            }
            let a_load = load_force / payload.mass + g;
            payload.velocity += a_load * dt;
            payload.position += payload.velocity * dt;
            (forces.tensions, accelerations)
        }
        Integrator::Rk4 => rk4(robots, payload, cables, &thrust_acc, robot_wind, payload_wind, &g, dt)?,
    };

    check_bounds(robots, payload)?;
    Ok(StepOutput {
        tensions,
        accelerations,
        thrust_accelerations: thrust_acc,
        saturated,
        air_velocity: air,
    })
}

/// Classical RK4 over the rigid-body state with thrust and wind held for the
/// step. Reported tensions and accelerations are those at the step start.
#[allow(clippy::too_many_arguments)]
fn rk4(
    robots: &mut [RobotState],
    payload: &mut PayloadState,
    cables: &[CableModel],
    thrust_acc: &[Vec3],
    robot_wind: Vec3,
    payload_wind: Vec3,
    g: &Vec3,
    dt: f64,
) -> Result<(Vec<Vec3>, Vec<Vec3>), ModelError> {
    type Deriv = (Vec<(Vec3, Vec3)>, (Vec3, Vec3), Vec<Vec3>);
    let deriv = |rs: &[RobotState], p: &PayloadState| -> Result<Deriv, ModelError> {
        let f = cable_forces(rs, p, cables)?;
        let mut load_force = payload_wind;
        let mut d = Vec::with_capacity(rs.len());
        for ((r, t), at) in rs.iter().zip(&f.tensions).zip(thrust_acc) {
            d.push((r.velocity, at + (t + robot_wind) / r.mass));
            load_force -= t;
        }
        Ok((d, (p.velocity, load_force / p.mass + g), f.tensions))
    };
    let shifted = |rs: &[RobotState], p: &PayloadState, k: &Deriv, h: f64| {
        let mut rs2 = rs.to_vec();
        for (r, (dx, dv)) in rs2.iter_mut().zip(&k.0) {
            r.position += dx * h;
            r.velocity += dv * h;
        }
        let mut p2 = p.clone();
        p2.position += k.1 .0 * h;
        p2.velocity += k.1 .1 * h;
        (rs2, p2)
    };

    let k1 = deriv(robots, payload)?;
    let (r2, p2) = shifted(robots, payload, &k1, dt / 2.0);
    let k2 = deriv(&r2, &p2)?;
    let (r3, p3) = shifted(robots, payload, &k2, dt / 2.0);
    let k3 = deriv(&r3, &p3)?;
    let (r4, p4) = shifted(robots, payload, &k3, dt);
    let k4 = deriv(&r4, &p4)?;

    let w = dt / 6.0;
    for (i, r) in robots.iter_mut().enumerate() {
        r.position += (k1.0[i].0 + k2.0[i].0 * 2.0 + k3.0[i].0 * 2.0 + k4.0[i].0) * w;
        r.velocity += (k1.0[i].1 + k2.0[i].1 * 2.0 + k3.0[i].1 * 2.0 + k4.0[i].1) * w;
    }
    payload.position += (k1.1 .0 + k2.1 .0 * 2.0 + k3.1 .0 * 2.0 + k4.1 .0) * w;
    payload.velocity += (k1.1 .1 + k2.1 .1 * 2.0 + k3.1 .1 * 2.0 + k4.1 .1) * w;

    let accelerations = k1.0.iter().map(|(_, a)| *a).collect();
    Ok((k1.2, accelerations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn g() -> Vec3 {
        Vec3::new(0.0, 0.0, -DEFAULT_GRAVITY)
    }

    fn cable(k: f64, c: f64, l: f64) -> CableModel {
        CableModel {
            stiffness: k,
            damping: c,
            rest_length: l,
        }
    }

    fn robot(pos: Vec3, mass: f64, thrust: f64, len: f64) -> RobotState {
        RobotState {
            id: 0,
            position: pos,
            velocity: Vec3::zeros(),
            mass,
            thrust_limit: thrust,
            cable_length: len,
            attached: true,
        }
    }

    #[test]
    fn slack_cable_is_silent() {
        let z = Vec3::zeros();
        let f = cable_tension(&Vec3::new(0.0, 0.0, 1.9), &z, &z, &z, &cable(500.0, 0.0, 2.0), true).unwrap();
        assert_eq!(f, z);
    }

    #[test]
    fn taut_cable_pulls_toward_load() {
        let z = Vec3::zeros();
        let f = cable_tension(&Vec3::new(0.0, 0.0, 2.1), &z, &z, &z, &cable(500.0, 0.0, 2.0), true).unwrap();
        assert_relative_eq!(f, Vec3::new(0.0, 0.0, -50.0), epsilon = 1e-9);
    }

    #[test]
    fn detached_cable_and_coincident_points() {
        let z = Vec3::zeros();
        let f = cable_tension(&Vec3::new(0.0, 0.0, 2.5), &z, &z, &z, &cable(500.0, 0.0, 2.0), false).unwrap();
        assert_eq!(f, z);
        let err = cable_tension(&z, &z, &z, &z, &cable(500.0, 0.0, 2.0), true).unwrap_err();
        assert!(matches!(err, ModelError::CoincidentPoints { .. }));
    }

    #[test]
    fn cable_damping_never_pushes() {
        // barely stretched but closing fast: spring + damper would be negative
        let f = cable_tension(
            &Vec3::new(0.0, 0.0, 2.001),
            &Vec3::new(0.0, 0.0, -5.0),
            &Vec3::zeros(),
            &Vec3::zeros(),
            &cable(500.0, 50.0, 2.0),
            true,
        )
        .unwrap();
        assert_eq!(f, Vec3::zeros());
    }

    #[test]
    fn saturation_examples() {
        let g = g();
        assert_eq!(saturate_thrust(&g, 1.0, 19.0, &g), g);

        let hover = saturate_thrust(&Vec3::zeros(), 1.0, 19.0, &g);
        assert_eq!(hover, Vec3::zeros());
        assert_relative_eq!(thrust_for(&hover, 1.0, &g).norm(), 9.81, epsilon = 1e-12);

        let sink = saturate_thrust(&Vec3::zeros(), 1.0, 9.0, &g);
        // g + (9/9.81)(-g): net downward 0.81 m/s²
        assert_relative_eq!(sink, Vec3::new(0.0, 0.0, -0.81), epsilon = 1e-12);
        assert_relative_eq!(thrust_for(&sink, 1.0, &g).norm(), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn free_fall_matches_closed_form() {
        let world = WorldParams::default();
        let mut robots = vec![robot(Vec3::new(0.0, 0.0, 100.0), 1.0, 20.0, 2.0)];
        robots[0].attached = false;
        let mut payload = PayloadState {
            position: Vec3::new(50.0, 0.0, 0.0),
            velocity: Vec3::zeros(),
            mass: 1.0,
        };
        let mut wind = WindState::new(1);
        let cables = [cable(2000.0, 50.0, 2.0)];
        let steps = 1000;
        for _ in 0..steps {
            step(&world, &mut robots, &mut payload, &[world.gravity], &cables, &mut wind).unwrap();
        }
        let t = steps as f64 * world.dt;
        let exact = 100.0 - 0.5 * DEFAULT_GRAVITY * t * t;
        // semi-implicit Euler overshoots by g·t·dt/2
        assert!((robots[0].position.z - exact).abs() <= DEFAULT_GRAVITY * t * world.dt);
        assert_relative_eq!(robots[0].velocity.z, -DEFAULT_GRAVITY * t, epsilon = 1e-9);
    }

    #[test]
    fn hovering_robot_carries_payload_weight() {
        // Robot pinned by a command that cancels gravity and the current cable
        // force; payload hangs 2 m below on a taut cable.
        let world = WorldParams::default();
        let c = cable(2000.0, 50.0, 2.0);
        let mut robots = vec![robot(Vec3::new(0.0, 0.0, 4.0), 1.0, 100.0, 2.0)];
        let mut payload = PayloadState {
            position: Vec3::new(0.0, 0.0, 2.0 - 9.81 / 2000.0),
            velocity: Vec3::zeros(),
            mass: 1.0,
        };
        let mut wind = WindState::new(3);
        let mut last = Vec3::zeros();
        for _ in 0..20_000 {
            let r = &robots[0];
            let t = cable_tension(&r.position, &r.velocity, &payload.position, &payload.velocity, &c, true).unwrap();
            let cmd = -t / r.mass - r.velocity;
            let out = step(&world, &mut robots, &mut payload, &[cmd], &[c], &mut wind).unwrap();
            last = out.tensions[0];
        }
        assert_relative_eq!(last.norm(), 9.81, epsilon = 1e-3);
    }

    #[test]
    fn stepping_is_deterministic() {
        let world = WorldParams {
            wind: WindParams::beaufort4(),
            ..WorldParams::default()
        };
        let run = || {
            let mut robots = vec![robot(Vec3::new(0.3, 0.0, 4.0), 1.0, 30.0, 2.0)];
            let mut payload = PayloadState {
                position: Vec3::new(0.0, 0.0, 2.0),
                velocity: Vec3::zeros(),
                mass: 2.0,
            };
            let mut wind = WindState::new(99);
            for _ in 0..500 {
                step(
                    &world,
                    &mut robots,
                    &mut payload,
                    &[Vec3::new(0.1, 0.0, 0.5)],
                    &[cable(2000.0, 50.0, 2.0)],
                    &mut wind,
                )
                .unwrap();
            }
            (robots, payload)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn calm_wind_is_zero() {
        let p = WindParams::calm();
        let mut s = WindState::new(5);
        for k in 0..100 {
            assert_eq!(wind_force(k as f64 * 0.01, 0.01, &p, &mut s), Vec3::zeros());
        }
    }

    #[test]
    fn wind_sequence_repeats_under_seed() {
        let p = WindParams::beaufort4();
        let mut a = WindState::new(11);
        let mut b = WindState::new(11);
        for k in 0..1000 {
            let t = k as f64 * 1e-3;
            assert_eq!(wind_force(t, 1e-3, &p, &mut a), wind_force(t, 1e-3, &p, &mut b));
        }
    }

    #[test]
    fn mean_wind_speed_matches_mean() {
        // Statistical oracle: the gust is zero-mean, so the time average of the
        // horizontal speed sits near |mean| (plus a small second-order bias).
        let p = WindParams {
            mean: Vec3::new(6.0, 0.0, 0.0),
            gust_std: 1.0,
            correlation_time: 0.5,
            ..WindParams::calm()
        };
        let mut s = WindState::new(2024);
        let steps = 10_000;
        let mut sum = 0.0;
        for _ in 0..steps {
            sum += s.advance(&p, 0.01).norm();
        }
        let avg = sum / steps as f64;
        assert!((avg - 6.0).abs() < 0.05 * 6.0, "average speed {avg}");
    }

    #[test]
    fn blowup_is_reported() {
        let world = WorldParams::default();
        let mut robots = vec![robot(Vec3::new(0.0, 0.0, 9.99e5), 1.0, 1e9, 2.0)];
        robots[0].attached = false;
        robots[0].velocity = Vec3::new(0.0, 0.0, 2e6);
        let mut payload = PayloadState {
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
            mass: 1.0,
        };
        let mut wind = WindState::new(0);
        let err = step(
            &world,
            &mut robots,
            &mut payload,
            &[Vec3::zeros()],
            &[cable(1.0, 0.0, 1.0)],
            &mut wind,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::NumericalBlowup { .. }));
    }

    #[test]
    fn rk4_and_euler_agree_on_smooth_motion() {
        let c = cable(2000.0, 50.0, 2.0);
        let run = |integrator| {
            let world = WorldParams {
                integrator,
                ..WorldParams::default()
            };
            let mut robots = vec![robot(Vec3::new(0.5, 0.0, 4.0), 1.0, 100.0, 2.0)];
            let mut payload = PayloadState {
                position: Vec3::new(0.0, 0.0, 2.0),
                velocity: Vec3::zeros(),
                mass: 1.0,
            };
            let mut wind = WindState::new(0);
            for _ in 0..1000 {
                step(
                    &world,
                    &mut robots,
                    &mut payload,
                    &[Vec3::new(0.0, 0.0, 9.81)],
                    &[c],
                    &mut wind,
                )
                .unwrap();
            }
            payload.position
        };
        let a = run(Integrator::SemiImplicitEuler);
        let b = run(Integrator::Rk4);
        assert!((a - b).norm() < 1e-2, "{a} vs {b}");
    }
}
