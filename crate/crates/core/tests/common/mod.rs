//! Oracles shared by the property and acceptance suites.

#![allow(dead_code)]

use std::f64::consts::PI;

use hdt_core::control::{DroopParams, ServiceFlags};
use hdt_core::plant::{passive_steady_state, DutyPair, PlantParams, PlantState};
use hdt_core::sim::{self, ScenarioSpec, Simulation};

/// Relative RMS difference between the simulated load voltage and the
/// phasor solution over the last 0.02 s of a 0.1 s idle-converter run
/// started on the phasor trajectory.
pub fn passive_rms_error(params: PlantParams) -> f64 {
    let plant = params.derive().unwrap();
    let sol = passive_steady_state(&plant, 2.0 * PI * 50.0, 25000.0, 13.15).unwrap();
    let (i1, i2, i3, _) = sol.at(0.0);
    let spec = ScenarioSpec {
        flags: ServiceFlags::all_off(),
        frozen_duties: Some(DutyPair::default()),
        duration: 0.1,
        record_decimation: 1,
        initial_state: PlantState { i1, i2, i3, vc: 1900.0 },
        plant: params,
        ..ScenarioSpec::default()
    };
    let records = sim::run(&spec).unwrap();
    let (mut err, mut norm) = (0.0, 0.0);
    for r in records.iter().filter(|r| r.t >= 0.08) {
        let (_, _, _, v) = sol.at(2.0 * PI * 50.0 * r.t);
        for k in 0..3 {
            err += (r.v[k] - v[k]).powi(2);
            norm += v[k].powi(2);
        }
    }
    (err / norm).sqrt()
}

/// Mismatch between the change in stored energy and the trapezoidal
/// integral of source power minus losses over a 0.05 s closed-loop run,
/// as average power relative to P₀.
pub fn energy_residual(dt: f64) -> f64 {
    let spec = ScenarioSpec {
        dt,
        duration: 0.05,
        ..ScenarioSpec::default()
    };
    let mut sim = Simulation::new(&spec).unwrap();
    let plant = sim.plant().clone();
    let net = |sim: &Simulation| {
        let u = sim.exogenous().unwrap();
        plant.source_power(sim.state(), &u) - plant.dissipation(sim.state(), &u)
    };
    let e0 = plant.stored_energy(sim.state());
    let mut integral = 0.0;
    let mut prev = net(&sim);
    while !sim.is_finished() {
        sim.step().unwrap();
        let now = net(&sim);
        integral += 0.5 * (prev + now) * dt;
        prev = now;
    }
    let de = plant.stored_energy(sim.state()) - e0;
    (de - integral).abs() / spec.duration / DroopParams::default().p0
}
