//! Experiment harness for the `gcg` solvers: config parsing, data loading,
//! solver dispatch and trace and summary emission.

pub mod commands;
pub mod config;
pub mod data;
pub mod report;
pub mod tasks;
