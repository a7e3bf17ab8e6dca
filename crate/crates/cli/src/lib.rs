//! File formats, run configuration and pipeline commands around
//! `paradox-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod io;
