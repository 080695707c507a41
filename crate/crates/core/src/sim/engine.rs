//! Fixed-step integration of the closed loop.

use serde::{Deserialize, Serialize};

use super::spec::{Event, EventKind, Integrator, Sampling, ScenarioSpec};
use crate::control::{
    ControlIntegrals, ControlOutput, ControlStates, Controller, Measurements, ServiceFlags,
    StepContext,
};
use crate::error::{Error, Result};
use crate::metrics::power_factor;
use crate::phasemath::{Dq0, Frame, PhaseAccumulator, RollingWindow, ThreePhase};
use crate::plant::{source_waveforms, DutyPair, ExogenousInputs, Plant, PlantState};

/// One recorded instant. `p` is the active power delivered to the load; `q`
/// and `pf` refer to the grid interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub t: f64,
    pub vin: ThreePhase,
    pub i1: ThreePhase,
    pub i2: ThreePhase,
    pub i3: ThreePhase,
    pub v: ThreePhase,
    pub v_dq0: Dq0,
    pub ibeta_dq0: Dq0,
    pub vc: f64,
    pub d1: ThreePhase,
    pub d2: ThreePhase,
    pub p: f64,
    pub q: f64,
    pub pf: Option<f64>,
    pub f: f64,
    pub p_star: f64,
    pub v_star: f64,
    /// Active power drawn at the grid interface; not part of the CSV schema.
    #[serde(default)]
    pub p_grid: f64,
}

/// The parts of a run that events may change.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub plant: Plant,
    pub vin_scale: f64,
    pub flags: ServiceFlags,
}

/// Applies every event due at `t` (within half a step) that lies at or after
/// `cursor`, and advances `cursor` past it. Returns the number applied.
pub fn apply_events(
    dynamics: &mut Dynamics,
    events: &[Event],
    cursor: &mut usize,
    t: f64,
    dt: f64,
) -> Result<usize> {
    let start = *cursor;
    while let Some(ev) = events.get(*cursor) {
        if ev.time > t + 0.5 * dt {
            break;
        }
        match &ev.action {
            EventKind::ScaleVin { factor } => dynamics.vin_scale *= factor,
            EventKind::SetLoadMatrices { r, l } => {
                let mut params = dynamics.plant.params.clone();
                params.r_load = *r;
                params.l_load = *l;
                dynamics.plant = params.derive()?;
            }
            EventKind::EnableService { service } => {
                let slot = dynamics.flags.slot(*service);
                if slot.is_none_or(|ta| ta > ev.time) {
                    *slot = Some(ev.time);
                }
            }
        }
        *cursor += 1;
    }
    Ok(*cursor - start)
}

/// A running simulation. Each instance owns all of its state.
#[derive(Debug, Clone)]
pub struct Simulation {
    spec: ScenarioSpec,
    dynamics: Dynamics,
    controller: Controller,
    state: PlantState,
    phase: PhaseAccumulator,
    window: RollingWindow,
    cursor: usize,
    step: u64,
    total: u64,
}

struct Stage {
    dx: PlantState,
    dz: ControlIntegrals,
}

impl Simulation {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let plant = spec.plant.derive()?;
        let f0 = spec.freq_profile.eval(0.0)?;
        Ok(Simulation {
            dynamics: Dynamics {
                plant,
                vin_scale: 1.0,
                flags: spec.flags,
            },
            controller: Controller::new(spec.gains, spec.references, spec.droop),
            state: spec.initial_state,
            phase: PhaseAccumulator::new(0.0, f0),
            window: RollingWindow::one_cycle(spec.droop.f0, spec.dt),
            cursor: 0,
            step: 0,
            total: spec.step_count(),
            spec: spec.clone(),
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.spec.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn total_steps(&self) -> u64 {
        self.total
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.total
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn theta(&self) -> f64 {
        self.phase.theta
    }

    pub fn plant(&self) -> &Plant {
        &self.dynamics.plant
    }

    pub fn flags(&self) -> &ServiceFlags {
        &self.dynamics.flags
    }

    pub fn vin_pk(&self) -> f64 {
        self.spec.sources.vin_pk * self.dynamics.vin_scale
    }

    pub fn integrals(&self) -> ControlIntegrals {
        self.controller.states.integrals()
    }

    /// Grid voltage, load current and frequency at the current time, with
    /// the events applied so far.
    pub fn exogenous(&self) -> Result<ExogenousInputs> {
        let f = self.spec.freq_profile.eval(self.time())?;
        Ok(self.inputs(&Frame::at(self.phase.theta), f))
    }

    fn inputs(&self, frame: &Frame, f: f64) -> ExogenousInputs {
        let (vin, iload) = source_waveforms(frame, self.vin_pk(), self.spec.sources.i_pk);
        ExogenousInputs { vin, iload, f }
    }

    fn evaluate(
        &self,
        states: &ControlStates,
        x: &PlantState,
        u: &ExogenousInputs,
        frame: Frame,
        ctx: &StepContext,
    ) -> ControlOutput {
        let m = Measurements::from_plant(&self.dynamics.plant, x, u, frame);
        self.controller.evaluate(states, &m, ctx, 0.0)
    }

    /// Closed-loop right-hand side at one integrator stage.
    fn stage(
        &self,
        x: &PlantState,
        z: &ControlIntegrals,
        theta: f64,
        f: f64,
        ctx: &StepContext,
        held: Option<&DutyPair>,
    ) -> Stage {
        let frame = Frame::at(theta);
        let u = self.inputs(&frame, f);
        let plant = &self.dynamics.plant;
        match held {
            Some(d) => Stage {
                dx: plant.derivative(x, &u, d),
                dz: ControlIntegrals::default(),
            },
            None => {
                let mut states = self.controller.states;
                states.set_integrals(z);
                let out = self.evaluate(&states, x, &u, frame, ctx);
                Stage {
                    dx: plant.derivative(x, &u, &out.duties),
                    dz: out.rates,
                }
            }
        }
    }

    /// Advances one step. Returns the record taken at the start of the step
    /// when the step index is a multiple of the decimation.
    pub fn step(&mut self) -> Result<Option<SampleRecord>> {
        let dt = self.spec.dt;
        let t = self.time();
        let f = self.spec.freq_profile.eval(t)?;
        let theta = self.phase.theta;
        let frame = Frame::at(theta);

        apply_events(&mut self.dynamics, &self.spec.events, &mut self.cursor, t, dt)?;
        let u = self.inputs(&frame, f);
        let m = Measurements::from_plant(&self.dynamics.plant, &self.state, &u, frame);
        let rms = self.window.push(frame.park(&m.i_beta).d)?;
        let ctx = StepContext {
            active: self.dynamics.flags.active_at(t, dt),
            i_beta_d_star: rms,
        };

        let continuous = self.spec.sampling == Sampling::Continuous;
        let mut out = if continuous {
            self.controller.evaluate(&self.controller.states, &m, &ctx, 0.0)
        } else {
            self.controller.step(&m, &ctx, dt)?
        };
        let frozen = self.spec.frozen_duties;
        if let Some(d) = frozen {
            out.duties = d;
        }
        let held = match (frozen, continuous) {
            (Some(d), _) => Some(d),
            (None, false) => Some(out.duties),
            (None, true) => None,
        };

        let record = self
            .step
            .is_multiple_of(self.spec.record_decimation)
            .then(|| self.record(t, f, &u, &m, &out));

        let w = 2.0 * std::f64::consts::PI * f;
        let x0 = self.state;
        let z0 = self.controller.states.integrals();
        let (x1, z1) = match self.spec.integrator {
            Integrator::Euler => {
                let k1 = self.stage(&x0, &z0, theta, f, &ctx, held.as_ref());
                (x0 + k1.dx * dt, z0 + k1.dz * dt)
            }
            Integrator::Rk4 => {
                let h = 0.5 * dt;
                let k1 = self.stage(&x0, &z0, theta, f, &ctx, held.as_ref());
                let k2 = self.stage(
                    &(x0 + k1.dx * h),
                    &(z0 + k1.dz * h),
                    theta + w * h,
                    f,
                    &ctx,
                    held.as_ref(),
                );
                let k3 = self.stage(
                    &(x0 + k2.dx * h),
                    &(z0 + k2.dz * h),
                    theta + w * h,
                    f,
                    &ctx,
                    held.as_ref(),
                );
                let k4 = self.stage(
                    &(x0 + k3.dx * dt),
                    &(z0 + k3.dz * dt),
                    theta + w * dt,
                    f,
                    &ctx,
                    held.as_ref(),
                );
                let s = dt / 6.0;
                (
                    x0 + (k1.dx + k2.dx * 2.0 + k3.dx * 2.0 + k4.dx) * s,
                    z0 + (k1.dz + k2.dz * 2.0 + k3.dz * 2.0 + k4.dz) * s,
                )
            }
        };

        self.phase.advance(f, dt)?;
        self.step += 1;
        self.state = x1;
        if held.is_none() {
            self.controller.states.set_integrals(&z1);
        }
        self.guard()?;
        Ok(record)
    }

    fn guard(&self) -> Result<()> {
        let limit = 2.0 * self.spec.references.vc_star;
        let reason = if !self.state.is_finite() {
            Some("non-finite plant state".to_owned())
        } else if !self.controller.states.integrals().is_finite() {
            Some("non-finite controller state".to_owned())
        } else if self.state.vc.abs() > limit {
            Some(format!("|vC| = {:.1} V exceeds {:.1} V", self.state.vc.abs(), limit))
        } else {
            None
        };
        match reason {
            Some(reason) => Err(Error::Divergence {
                step: self.step,
                time: self.time(),
                reason,
            }),
            None => Ok(()),
        }
    }

    fn record(
        &self,
        t: f64,
        f: f64,
        u: &ExogenousInputs,
        m: &Measurements,
        out: &ControlOutput,
    ) -> SampleRecord {
        let s = &out.signals;
        SampleRecord {
            t,
            vin: u.vin,
            i1: self.state.i1,
            i2: self.state.i2,
            i3: self.state.i3,
            v: m.v,
            v_dq0: s.v_dq,
            ibeta_dq0: s.i_beta_dq,
            vc: self.state.vc,
            d1: out.duties.d1,
            d2: out.duties.d2,
            p: s.p_load,
            q: s.q_grid,
            pf: power_factor(s.p_grid, s.q_grid),
            f,
            p_star: s.p_star,
            v_star: s.v_star,
            p_grid: s.p_grid,
        }
    }

    /// Runs to the end, handing each record to `sink`.
    pub fn run_with(&mut self, mut sink: impl FnMut(SampleRecord)) -> Result<()> {
        while !self.is_finished() {
            if let Some(r) = self.step()? {
                sink(r);
            }
        }
        Ok(())
    }
}

/// Result of a run that may have stopped early.
#[derive(Debug)]
pub struct RunOutcome {
    pub records: Vec<SampleRecord>,
    pub error: Option<Error>,
}

impl RunOutcome {
    pub fn completed(&self) -> bool {
        self.error.is_none()
    }

    pub fn into_result(self) -> Result<Vec<SampleRecord>> {
        match self.error {
            None => Ok(self.records),
            Some(e) => Err(e),
        }
    }
}

/// Runs a scenario, keeping the records produced before any failure.
pub fn run_partial(spec: &ScenarioSpec) -> RunOutcome {
    let mut records = Vec::new();
    let error = Simulation::new(spec)
        .and_then(|mut sim| {
            records.reserve((sim.total_steps() / spec.record_decimation + 1) as usize);
            sim.run_with(|r| records.push(r))
        })
        .err();
    RunOutcome { records, error }
}

pub fn run(spec: &ScenarioSpec) -> Result<Vec<SampleRecord>> {
    run_partial(spec).into_result()
}
