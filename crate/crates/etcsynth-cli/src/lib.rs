//! Pipeline front end for data-driven event-triggered controller
//! synthesis: configuration parsing, the acquire / design / simulate /
//! verify stages, bundled end-to-end scenarios, and the on-disk report
//! formats. The `etcsynth` binary is a thin argument parser over
//! [`commands`].

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
