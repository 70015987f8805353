//! Data-driven synthesis and simulation of event-triggered controllers.
//!
//! The crate takes a finite batch of input/state samples collected from a
//! linear plant, designs a stabilizing state feedback plus an event-triggering
//! rule directly from those samples (no identification step), and simulates
//! the resulting closed loop with exact event localization.
//!
//! Pipeline: [`dataset`] acquires and validates experiment data, [`lmi`]
//! solves the semidefinite feasibility problems, [`synthesis`] turns data
//! into controller gains, triggering parameters, and inter-event time
//! bounds, [`triggers`] evaluates the triggering rules, and [`sim`]
//! integrates the closed loop between events.

pub mod dataset;
pub mod lmi;
pub mod par;
pub mod sim;
pub mod synthesis;
pub mod triggers;

pub use dataset::{DataMatrices, DisturbanceModel, PlantModel};
pub use synthesis::ControllerDesign;
pub use triggers::TriggerSpec;
