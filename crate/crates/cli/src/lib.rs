//! Command-line experiments over exact and learned commute-time distances.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
