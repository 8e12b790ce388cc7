//! Configuration loading, scenario execution, the gap-matrix report, and
//! state persistence.

pub mod config;
pub mod persist;
pub mod report;
pub mod scenario;
