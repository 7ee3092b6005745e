//! Shared fixtures for the benchmarks.

use swarmlift::dynamics::cable_tension;
use swarmlift::scenario::presets;
use swarmlift::sim::{RunOptions, Simulation, Snapshot};
use swarmlift::Vec3;

/// A run of `n` robots advanced past its first second, so the formation has
/// engaged its cables and built its neighbor graph.
pub fn warmed(n: usize) -> Simulation {
    let mut spec = if n >= 50 {
        presets::get("scale-100").unwrap()
    } else {
        presets::get("fig5a-0").unwrap()
    };
    spec.team.n_robots = n;
    let mut sim = Simulation::new(&spec, RunOptions::default()).unwrap();
    while sim.time() < 1.0 {
        sim.step().unwrap();
    }
    sim
}

/// The tick snapshot the controllers would see for the run's current state.
pub fn snapshot(sim: &Simulation) -> Snapshot {
    let w = sim.world();
    let tensions = w
        .robots
        .iter()
        .zip(&w.cables)
        .map(|(r, c)| {
            cable_tension(
                &r.position,
                &r.velocity,
                &w.payload.position,
                &w.payload.velocity,
                c,
                r.attached,
            )
            .unwrap_or_else(|_| Vec3::zeros())
        })
        .collect();
    Snapshot {
        robots: w.robots.clone(),
        payload: w.payload.clone(),
        tensions,
        connectivity: w.connectivity.clone(),
    }
}
