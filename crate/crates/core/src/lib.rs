//! Simulation of a hybrid distribution transformer: a line-frequency
//! transformer augmented with back-to-back converters in series-shunt
//! connection, driven by cascaded PI loops.

pub mod batch;
pub mod control;
pub mod error;
pub mod metrics;
pub mod output;
pub mod phasemath;
pub mod plant;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
