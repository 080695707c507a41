//! Composition of the outer service loops and the two inner duty loops into a
//! single evaluation per instant.

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use super::loops::{active_reactive_power, droop_power_ref, DroopParams};
use super::pi::{duty_law, DqPi, PiGains, PiState};
use crate::error::{Error, Result};
use crate::phasemath::{Dq0, Frame, ThreePhase};
use crate::plant::{DutyPair, ExogenousInputs, Plant, PlantState};

/// Gains of the six loops plus the balancing weight γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gains {
    pub voltage: PiGains,
    pub shunt_current: PiGains,
    pub dc_link: PiGains,
    pub power_factor: PiGains,
    pub frequency: PiGains,
    pub balancing: PiGains,
    pub gamma: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Gains {
            voltage: PiGains::new(0.0, 1633.0),
            shunt_current: PiGains::new(10.0, 8.0),
            dc_link: PiGains::new(0.14, 0.01),
            power_factor: PiGains::new(0.001, 0.005),
            frequency: PiGains::new(0.01, 20.0),
            balancing: PiGains::new(50.0, 1.0),
            gamma: 10.0,
        }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("voltage", self.voltage),
            ("shunt_current", self.shunt_current),
            ("dc_link", self.dc_link),
            ("power_factor", self.power_factor),
            ("frequency", self.frequency),
            ("balancing", self.balancing),
        ];
        for (name, g) in all {
            if !(g.kp.is_finite() && g.ki.is_finite()) {
                return Err(Error::invalid(format!("gains.{name}"), "must be finite"));
            }
            if g.ki < 0.0 {
                return Err(Error::invalid(format!("gains.{name}.ki"), "must be >= 0"));
            }
        }
        if !self.gamma.is_finite() {
            return Err(Error::invalid("gains.gamma", "must be finite"));
        }
        Ok(())
    }
}

/// Fixed setpoints. Dynamic references (i*₂d, P*, i*_βd) are computed each
/// evaluation and reported in [`ControlSignals`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct References {
    /// Load voltage d-axis reference when frequency regulation is off (V).
    pub v_star: f64,
    pub vc_star: f64,
    /// q-axis shunt current reference when neither power factor correction
    /// nor balancing is active (A).
    pub i2q_star: f64,
    pub i20_star: f64,
    /// Grid-side reactive power setpoint (var).
    pub qbar_star: f64,
}

impl Default for References {
    fn default() -> Self {
        References {
            v_star: 380.0,
            vc_star: 2000.0,
            i2q_star: 0.0,
            i20_star: 0.0,
            qbar_star: 0.0,
        }
    }
}

/// Per-service activation times in seconds; `None` keeps a service off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceFlags {
    pub voltage_regulation: Option<f64>,
    pub pf_correction: Option<f64>,
    pub frequency_regulation: Option<f64>,
    pub phase_balancing: Option<f64>,
}

impl Default for ServiceFlags {
    fn default() -> Self {
        ServiceFlags {
            voltage_regulation: Some(0.0),
            pf_correction: None,
            frequency_regulation: None,
            phase_balancing: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Service {
    VoltageRegulation,
    PfCorrection,
    FrequencyRegulation,
    PhaseBalancing,
}

impl ServiceFlags {
    pub fn all_off() -> Self {
        ServiceFlags {
            voltage_regulation: None,
            pf_correction: None,
            frequency_regulation: None,
            phase_balancing: None,
        }
    }

    pub fn get(&self, service: Service) -> Option<f64> {
        match service {
            Service::VoltageRegulation => self.voltage_regulation,
            Service::PfCorrection => self.pf_correction,
            Service::FrequencyRegulation => self.frequency_regulation,
            Service::PhaseBalancing => self.phase_balancing,
        }
    }

    pub fn slot(&mut self, service: Service) -> &mut Option<f64> {
        match service {
            Service::VoltageRegulation => &mut self.voltage_regulation,
            Service::PfCorrection => &mut self.pf_correction,
            Service::FrequencyRegulation => &mut self.frequency_regulation,
            Service::PhaseBalancing => &mut self.phase_balancing,
        }
    }

    /// Services active at time `t`; activation times within half a step count
    /// as reached.
    pub fn active_at(&self, t: f64, dt: f64) -> ActiveServices {
        let on = |x: Option<f64>| x.is_some_and(|ta| ta <= t + 0.5 * dt);
        ActiveServices {
            voltage_regulation: on(self.voltage_regulation),
            pf_correction: on(self.pf_correction),
            frequency_regulation: on(self.frequency_regulation),
            phase_balancing: on(self.phase_balancing),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActiveServices {
    pub voltage_regulation: bool,
    pub pf_correction: bool,
    pub frequency_regulation: bool,
    pub phase_balancing: bool,
}

/// Integrator contents of every loop, laid out for vector arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlIntegrals {
    pub vsc1: [f64; 3],
    pub vsc2: [f64; 3],
    pub dc_link: f64,
    pub power_factor: f64,
    pub frequency: f64,
    pub balancing: [f64; 3],
}

fn zip3(a: [f64; 3], b: [f64; 3], f: impl Fn(f64, f64) -> f64) -> [f64; 3] {
    [f(a[0], b[0]), f(a[1], b[1]), f(a[2], b[2])]
}

impl Add for ControlIntegrals {
    type Output = ControlIntegrals;
    fn add(self, rhs: ControlIntegrals) -> ControlIntegrals {
        ControlIntegrals {
            vsc1: zip3(self.vsc1, rhs.vsc1, |a, b| a + b),
            vsc2: zip3(self.vsc2, rhs.vsc2, |a, b| a + b),
            dc_link: self.dc_link + rhs.dc_link,
            power_factor: self.power_factor + rhs.power_factor,
            frequency: self.frequency + rhs.frequency,
            balancing: zip3(self.balancing, rhs.balancing, |a, b| a + b),
        }
    }
}

impl Mul<f64> for ControlIntegrals {
    type Output = ControlIntegrals;
    fn mul(self, k: f64) -> ControlIntegrals {
        ControlIntegrals {
            vsc1: self.vsc1.map(|x| x * k),
            vsc2: self.vsc2.map(|x| x * k),
            dc_link: self.dc_link * k,
            power_factor: self.power_factor * k,
            frequency: self.frequency * k,
            balancing: self.balancing.map(|x| x * k),
        }
    }
}

impl ControlIntegrals {
    pub fn is_finite(&self) -> bool {
        self.vsc1
            .iter()
            .chain(&self.vsc2)
            .chain(&self.balancing)
            .chain([self.dc_link, self.power_factor, self.frequency].iter())
            .all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.vsc1
            .iter()
            .chain(&self.vsc2)
            .chain(&self.balancing)
            .chain([self.dc_link, self.power_factor, self.frequency].iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// All PI states of the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlStates {
    pub vsc1: DqPi,
    pub vsc2: DqPi,
    pub dc_link: PiState,
    pub power_factor: PiState,
    pub frequency: PiState,
    pub balancing: DqPi,
}

impl ControlStates {
    pub fn new(gains: &Gains) -> Self {
        ControlStates {
            vsc1: DqPi::new(gains.voltage),
            vsc2: DqPi::new(gains.shunt_current),
            dc_link: PiState::new(gains.dc_link),
            power_factor: PiState::new(gains.power_factor),
            frequency: PiState::new(gains.frequency),
            balancing: DqPi::new(gains.balancing),
        }
    }

    pub fn integrals(&self) -> ControlIntegrals {
        ControlIntegrals {
            vsc1: self.vsc1.integrals(),
            vsc2: self.vsc2.integrals(),
            dc_link: self.dc_link.integral,
            power_factor: self.power_factor.integral,
            frequency: self.frequency.integral,
            balancing: self.balancing.integrals(),
        }
    }

    pub fn set_integrals(&mut self, x: &ControlIntegrals) {
        self.vsc1.set_integrals(x.vsc1);
        self.vsc2.set_integrals(x.vsc2);
        self.dc_link.integral = x.dc_link;
        self.power_factor.integral = x.power_factor;
        self.frequency.integral = x.frequency;
        self.balancing.set_integrals(x.balancing);
    }
}

/// Quantities the controller reads at one instant.
#[derive(Debug, Clone, Copy)]
pub struct Measurements {
    pub frame: Frame,
    pub f: f64,
    /// Load terminal voltage.
    pub v: ThreePhase,
    /// Grid-side injected current `−β·I₁`.
    pub i_beta: ThreePhase,
    pub i2: ThreePhase,
    pub i3: ThreePhase,
    pub vc: f64,
}

impl Measurements {
    pub fn from_plant(plant: &Plant, s: &PlantState, u: &ExogenousInputs, frame: Frame) -> Self {
        Measurements {
            frame,
            f: u.f,
            v: plant.load_voltage(s, u),
            i_beta: plant.grid_current(s),
            i2: s.i2,
            i3: s.i3,
            vc: s.vc,
        }
    }
}

/// Values held constant across one simulation step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepContext {
    pub active: ActiveServices,
    /// One-cycle RMS of the d-axis grid current.
    pub i_beta_d_star: f64,
}

/// Internal signals of one evaluation, kept for recording.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlSignals {
    pub v_dq: Dq0,
    pub i_beta_dq: Dq0,
    /// Active power delivered to the load (W).
    pub p_load: f64,
    /// Active power drawn at the grid interface (W).
    pub p_grid: f64,
    /// Reactive power drawn at the grid interface (var).
    pub q_grid: f64,
    pub p_star: f64,
    pub v_star: f64,
    pub i2d_star: f64,
    pub i2q_star: f64,
    pub i2_ref: Dq0,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub duties: DutyPair,
    /// Error signals to integrate, zero where a loop is inactive or frozen.
    pub rates: ControlIntegrals,
    pub signals: ControlSignals,
}

/// Controller configuration together with its PI states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controller {
    pub gains: Gains,
    pub refs: References,
    pub droop: DroopParams,
    pub states: ControlStates,
}

impl Controller {
    pub fn new(gains: Gains, refs: References, droop: DroopParams) -> Self {
        Controller {
            gains,
            refs,
            droop,
            states: ControlStates::new(&gains),
        }
    }

    /// Evaluates every loop at one instant.
    ///
    /// Order: frequency (droop + voltage setpoint), DC link, power factor,
    /// balancing, then the two duty loops. `lookahead` is `dt` for the
    /// sampled laws and zero for the continuous-time laws.
    pub fn evaluate(
        &self,
        states: &ControlStates,
        m: &Measurements,
        ctx: &StepContext,
        lookahead: f64,
    ) -> ControlOutput {
        let frame = &m.frame;
        let active = &ctx.active;
        let mut rates = ControlIntegrals::default();

        let v_dq = frame.park(&m.v);
        let i_beta_dq = frame.park(&m.i_beta);
        let load_dq = frame.park(&(m.i_beta + m.i2));
        let (p_load, _) = active_reactive_power(&v_dq, &load_dq);
        let (p_grid, q_grid) = active_reactive_power(&v_dq, &i_beta_dq);

        let p_star = droop_power_ref(m.f, &self.droop);
        let v_star = if active.frequency_regulation {
            let e = p_star - p_load;
            rates.frequency = e;
            self.droop.v0 + states.frequency.law(e, lookahead).output
        } else {
            self.refs.v_star
        };

        let e_dc = m.vc - self.refs.vc_star;
        rates.dc_link = e_dc;
        let i2d_star = states.dc_link.law(e_dc, lookahead).output;

        let i2q_star = if active.pf_correction {
            let e = self.refs.qbar_star - q_grid;
            rates.power_factor = e;
            frame.park(&m.i3).q + states.power_factor.law(e, lookahead).output
        } else {
            self.refs.i2q_star
        };

        let i2_ref = if active.phase_balancing {
            let e = i_beta_dq - Dq0::d_axis(ctx.i_beta_d_star);
            rates.balancing = e.to_array();
            states.balancing.output(e, lookahead) + Dq0::d_axis(self.gains.gamma * i2d_star)
        } else {
            Dq0::new(i2d_star, i2q_star, self.refs.i20_star)
        };

        let d1 = if active.voltage_regulation {
            let e = v_dq - Dq0::d_axis(v_star);
            let (duty, mask) = duty_law(frame, e, &states.vsc1, lookahead);
            rates.vsc1 = masked(e, mask);
            duty
        } else {
            ThreePhase::ZERO
        };

        let e2 = i2_ref - frame.park(&m.i2);
        let (d2, mask) = duty_law(frame, e2, &states.vsc2, lookahead);
        rates.vsc2 = masked(e2, mask);

        ControlOutput {
            duties: DutyPair { d1, d2 },
            rates,
            signals: ControlSignals {
                v_dq,
                i_beta_dq,
                p_load,
                p_grid,
                q_grid,
                p_star,
                v_star,
                i2d_star,
                i2q_star,
                i2_ref,
            },
        }
    }

    /// Sampled controller update: evaluates all loops with the current
    /// errors folded into the integral terms, then commits the integrals.
    pub fn step(&mut self, m: &Measurements, ctx: &StepContext, dt: f64) -> Result<ControlOutput> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", "time step must be positive"));
        }
        if !(m.v.is_finite() && m.i_beta.is_finite() && m.i2.is_finite() && m.vc.is_finite()) {
            return Err(Error::NonFinite("controller measurements"));
        }
        let out = self.evaluate(&self.states, m, ctx, dt);
        let next = self.states.integrals() + out.rates * dt;
        self.states.set_integrals(&next);
        Ok(out)
    }
}

fn masked(e: Dq0, mask: [bool; 3]) -> [f64; 3] {
    let e = e.to_array();
    [
        if mask[0] { e[0] } else { 0.0 },
        if mask[1] { e[1] } else { 0.0 },
        if mask[2] { e[2] } else { 0.0 },
    ]
}
