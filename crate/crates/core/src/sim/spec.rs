//! Scenario description: everything a run needs, serializable as JSON.

use serde::{Deserialize, Serialize};

use super::profile::FrequencyProfile;
use crate::control::{DroopParams, Gains, References, Service, ServiceFlags};
use crate::error::{Error, Result};
use crate::plant::{validate_load, DutyPair, PlantParams, PlantState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

/// How the controller is sampled relative to the plant integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Control laws are evaluated at every integrator stage, with the PI
    /// integrals carried as extra states.
    #[default]
    Continuous,
    /// Controller runs once per step; duties are held over the step.
    ZeroOrderHold,
}

/// Peak amplitudes of the grid voltage and the load current source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sources {
    pub vin_pk: f64,
    pub i_pk: f64,
}

impl Default for Sources {
    fn default() -> Self {
        Sources {
            vin_pk: 25000.0,
            i_pk: 13.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventKind {
    /// Multiplies the grid voltage amplitude.
    ScaleVin { factor: f64 },
    SetLoadMatrices {
        r: [[f64; 3]; 3],
        l: [[f64; 3]; 3],
    },
    EnableService { service: Service },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub time: f64,
    pub action: EventKind,
}

impl Event {
    pub fn new(time: f64, action: EventKind) -> Self {
        Event { time, action }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub name: String,
    pub duration: f64,
    pub dt: f64,
    pub initial_state: PlantState,
    pub events: Vec<Event>,
    pub flags: ServiceFlags,
    pub freq_profile: FrequencyProfile,
    pub plant: PlantParams,
    pub gains: Gains,
    pub references: References,
    pub droop: DroopParams,
    pub sources: Sources,
    pub record_decimation: u64,
    pub integrator: Integrator,
    pub sampling: Sampling,
    /// Bypasses the controller and applies these duties for the whole run.
    pub frozen_duties: Option<DutyPair>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            name: "custom".to_owned(),
            duration: 0.2,
            dt: 2e-5,
            initial_state: PlantState::with_vc(1900.0),
            events: Vec::new(),
            flags: ServiceFlags::default(),
            freq_profile: FrequencyProfile::default(),
            plant: PlantParams::default(),
            gains: Gains::default(),
            references: References::default(),
            droop: DroopParams::default(),
            sources: Sources::default(),
            record_decimation: 10,
            integrator: Integrator::default(),
            sampling: Sampling::default(),
            frozen_duties: None,
        }
    }
}

/// Prefixes the field of a validation error with `scope`.
fn scoped<T>(scope: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidParameter { field, reason } => Error::InvalidParameter {
            field: format!("{scope}.{field}"),
            reason,
        },
        Error::NonFinite(what) | Error::Singular(what) | Error::Empty(what) => {
            Error::invalid(scope, what)
        }
        other => other,
    })
}

fn finite_positive(x: f64, field: &str) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and > 0, got {x}")))
    }
}

impl ScenarioSpec {
    /// Number of integration steps, `ceil(duration / dt)`, tolerant of
    /// round-off in the quotient.
    pub fn step_count(&self) -> u64 {
        let x = self.duration / self.dt;
        let r = x.round();
        if (x - r).abs() <= 1e-9 * r.max(1.0) {
            r as u64
        } else {
            x.ceil() as u64
        }
    }

    /// Checks every invariant; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        finite_positive(self.duration, "duration")?;
        finite_positive(self.dt, "dt")?;
        if self.dt > self.duration {
            return Err(Error::invalid("dt", "must not exceed duration"));
        }
        if self.record_decimation == 0 {
            return Err(Error::invalid("record_decimation", "must be >= 1"));
        }
        if !self.initial_state.is_finite() {
            return Err(Error::invalid("initial_state", "must be finite"));
        }
        scoped("plant", self.plant.derive().map(|_| ()))?;
        scoped("gains", self.gains.validate().map(|_| ()))?;
        scoped("droop", self.droop.validate())?;
        scoped("freq_profile", self.freq_profile.validate())?;
        finite_positive(self.references.vc_star, "references.vc_star")?;
        for (name, x) in [
            ("references.v_star", self.references.v_star),
            ("references.i2q_star", self.references.i2q_star),
            ("references.i20_star", self.references.i20_star),
            ("references.qbar_star", self.references.qbar_star),
            ("sources.vin_pk", self.sources.vin_pk),
            ("sources.i_pk", self.sources.i_pk),
        ] {
            if !x.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        for s in [
            Service::VoltageRegulation,
            Service::PfCorrection,
            Service::FrequencyRegulation,
            Service::PhaseBalancing,
        ] {
            if let Some(t) = self.flags.get(s) {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(Error::invalid(
                        format!("flags.{}", service_name(s)),
                        "activation time must be finite and >= 0",
                    ));
                }
            }
        }
        if let Some(d) = &self.frozen_duties {
            if !d.in_range() {
                return Err(Error::invalid("frozen_duties", "components must lie in [-1, 1]"));
            }
        }
        let mut last = f64::NEG_INFINITY;
        for (k, ev) in self.events.iter().enumerate() {
            let here = format!("events[{k}]");
            if !(ev.time.is_finite() && (0.0..=self.duration).contains(&ev.time)) {
                return Err(Error::invalid(
                    format!("{here}.time"),
                    format!("{} outside [0, duration]", ev.time),
                ));
            }
            if ev.time < last {
                return Err(Error::invalid(format!("{here}.time"), "events must be sorted by time"));
            }
            last = ev.time;
            match &ev.action {
                EventKind::ScaleVin { factor } => {
                    finite_positive(*factor, &format!("{here}.action.factor"))?
                }
                EventKind::SetLoadMatrices { r, l } => {
                    scoped(&format!("{here}.action"), validate_load(r, l))?
                }
                EventKind::EnableService { .. } => {}
            }
        }
        Ok(())
    }
}

pub fn service_name(s: Service) -> &'static str {
    match s {
        Service::VoltageRegulation => "voltage_regulation",
        Service::PfCorrection => "pf_correction",
        Service::FrequencyRegulation => "frequency_regulation",
        Service::PhaseBalancing => "phase_balancing",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ScenarioSpec::default().validate().unwrap();
        assert_eq!(ScenarioSpec::default().step_count(), 10_000);
    }

    #[test]
    fn step_count_rounds_up_partial_steps() {
        let spec = ScenarioSpec {
            duration: 1e-4 + 1e-6,
            ..ScenarioSpec::default()
        };
        assert_eq!(spec.step_count(), 6);
    }

    #[test]
    fn validation_names_the_field() {
        let spec = ScenarioSpec {
            events: vec![
                Event::new(0.1, EventKind::ScaleVin { factor: 1.1 }),
                Event::new(0.05, EventKind::ScaleVin { factor: 1.1 }),
            ],
            ..ScenarioSpec::default()
        };
        let msg = spec.validate().unwrap_err().to_string();
        assert!(msg.contains("events[1].time"), "{msg}");

        let spec = ScenarioSpec {
            events: vec![Event::new(0.1, EventKind::ScaleVin { factor: -1.0 })],
            ..ScenarioSpec::default()
        };
        let msg = spec.validate().unwrap_err().to_string();
        assert!(msg.contains("events[0].action.factor"), "{msg}");

        let mut spec = ScenarioSpec::default();
        spec.plant.c = 0.0;
        let msg = spec.validate().unwrap_err().to_string();
        assert!(msg.contains("plant.c"), "{msg}");

        let spec = ScenarioSpec {
            record_decimation: 0,
            ..ScenarioSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
