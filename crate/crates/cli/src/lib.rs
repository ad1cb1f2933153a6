//! Support library for the `volbreak` binary: data ingestion, study-config
//! parsing, and reports.

pub mod config;
pub mod data;
pub mod report;
