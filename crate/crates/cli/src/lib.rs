//! Experiment driver library behind the `lipnet` binary: sweep
//! configuration, dataset resolution, CSV-emitting drivers, and the small
//! statistics helpers their checks use.

pub mod commands;
pub mod config;
pub mod csvfmt;
pub mod datasrc;
pub mod stats;
pub mod sweep;
