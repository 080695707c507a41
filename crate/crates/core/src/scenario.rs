//! Scenario presets and JSON configuration.

use std::path::Path;

use crate::control::ServiceFlags;
use crate::error::{Error, Result};
use crate::metrics::PRESETS;
use crate::plant::{PlantParams, PlantState};
use crate::sim::{Event, EventKind, FrequencyProfile, ScenarioSpec};

/// Load resistance with a 50% reduction on phase c and small couplings (Ω).
pub const UNBALANCED_R: [[f64; 3]; 3] = [[10.0, 0.1, 0.2], [0.1, 10.0, 0.15], [0.2, 0.15, 5.0]];

/// Load inductance with small asymmetric couplings (H).
pub const UNBALANCED_L: [[f64; 3]; 3] = [
    [8.3e-2, 1.6e-4, 2.5e-4],
    [1.6e-4, 8.3e-2, 8.3e-5],
    [2.5e-4, 8.3e-5, 8.3e-2],
];

fn unbalanced_plant() -> PlantParams {
    PlantParams {
        r_load: UNBALANCED_R,
        l_load: UNBALANCED_L,
        ..PlantParams::default()
    }
}

/// Voltage-regulation preset with a grid-voltage step of `factor` at 0.1 s.
pub fn voltage_regulation(factor: f64) -> ScenarioSpec {
    ScenarioSpec {
        name: "voltage_regulation".into(),
        events: vec![Event::new(0.1, EventKind::ScaleVin { factor })],
        ..ScenarioSpec::default()
    }
}

pub fn preset(name: &str) -> Result<ScenarioSpec> {
    let base = ScenarioSpec {
        name: name.to_owned(),
        ..ScenarioSpec::default()
    };
    let spec = match name {
        "voltage_regulation" => voltage_regulation(1.1),
        "pf_correction" => ScenarioSpec {
            initial_state: PlantState::with_vc(2000.0),
            flags: ServiceFlags {
                pf_correction: Some(0.1),
                ..ServiceFlags::default()
            },
            ..base
        },
        "phase_balancing" => ScenarioSpec {
            plant: unbalanced_plant(),
            flags: ServiceFlags {
                phase_balancing: Some(0.1),
                ..ServiceFlags::default()
            },
            ..base
        },
        "frequency_regulation" => ScenarioSpec {
            duration: 15.0,
            initial_state: PlantState::with_vc(2000.0),
            freq_profile: FrequencyProfile::LinearRamp {
                f_start: 50.1,
                f_end: 49.7,
                t_start: 0.0,
                t_end: 15.0,
            },
            flags: ServiceFlags {
                frequency_regulation: Some(0.0),
                ..ServiceFlags::default()
            },
            record_decimation: 100,
            ..base
        },
        "simultaneous" => ScenarioSpec {
            duration: 15.0,
            initial_state: PlantState::with_vc(2000.0),
            plant: unbalanced_plant(),
            freq_profile: FrequencyProfile::LinearRamp {
                f_start: 49.9,
                f_end: 50.1,
                t_start: 0.0,
                t_end: 15.0,
            },
            flags: ServiceFlags {
                voltage_regulation: Some(0.0),
                frequency_regulation: Some(0.0),
                pf_correction: Some(0.1),
                phase_balancing: Some(0.1),
            },
            record_decimation: 100,
            ..base
        },
        other => return Err(Error::UnknownScenario(other.to_owned())),
    };
    Ok(spec)
}

pub fn preset_names() -> &'static [&'static str] {
    &PRESETS
}

/// Parses and validates a JSON scenario. Unspecified fields take their
/// defaults; unknown keys are rejected. Errors carry the offending path.
pub fn parse_config_str(json: &str) -> Result<ScenarioSpec> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let spec: ScenarioSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config {
            path,
            message: e.into_inner().to_string(),
        }
    })?;
    spec.validate().map_err(|e| match e {
        Error::InvalidParameter { field, reason } => Error::Config {
            path: field,
            message: reason,
        },
        other => Error::Config {
            path: ".".into(),
            message: other.to_string(),
        },
    })?;
    Ok(spec)
}

pub fn parse_config_file(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Config {
        path: path.as_ref().display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text)
}

/// Accepts either a preset name or a path to a JSON file.
pub fn parse_config(source: &str) -> Result<ScenarioSpec> {
    if PRESETS.contains(&source) {
        preset(source)
    } else {
        parse_config_file(source)
    }
}

pub fn to_json(spec: &ScenarioSpec) -> Result<String> {
    Ok(serde_json::to_string_pretty(spec)?)
}
