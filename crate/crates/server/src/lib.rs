//! HTTP service and command line for the `stc` engine.

pub mod api;
pub mod cli;
pub mod workspace;
