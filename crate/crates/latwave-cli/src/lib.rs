//! Configuration, orchestration and reporting for `latwave` runs.
pub mod config;
pub mod pipeline;
pub mod report;
