//! Scenario description, frequency profiles and the fixed-step engine.

mod engine;
mod profile;
mod spec;

pub use engine::{apply_events, run, run_partial, Dynamics, RunOutcome, SampleRecord, Simulation};
pub use profile::{FrequencyProfile, F_RANGE};
pub use spec::{service_name, Event, EventKind, Integrator, Sampling, ScenarioSpec, Sources};
