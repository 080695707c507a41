//! PI building block, inner duty loops, outer service loops and their
//! orchestration.

mod controller;
mod loops;
mod pi;

pub use controller::{
    ActiveServices, ControlIntegrals, ControlOutput, ControlSignals, ControlStates, Controller,
    Gains, Measurements, References, Service, ServiceFlags, StepContext,
};
pub use loops::{
    active_reactive_power, balancing_ref, dc_link_ref, droop_power_ref, freq_voltage_ref,
    pf_correction_ref, vsc1_duty, vsc2_duty, DroopParams,
};
pub use pi::{DqPi, PiGains, PiState, Saturation};
