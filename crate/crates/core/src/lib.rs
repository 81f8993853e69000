//! Rider posture detection from wearable accelerometers in moving vehicles.
//!
//! Two approaches are provided. The subtraction pipeline removes a
//! vehicle-held phone's acceleration from the wearable's ([`signal`],
//! [`evalkit::fuse`]). The tilt detector thresholds the gravity component
//! of the wearable's forward axis ([`posture`]). The [`simulator`] produces
//! synthetic rides to evaluate both, and [`evalkit`] scores the results.

// Guards of the form `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod evalkit;
pub mod posture;
pub mod sensor_model;
pub mod signal;
pub mod simulator;
mod svg;

pub use posture::{detect, DetectorConfig, PostureEvent};
pub use sensor_model::{Sample, SensorSpec, Trace};
pub use signal::{FilterSpec, ResidualStats};
pub use simulator::ScenarioSpec;
