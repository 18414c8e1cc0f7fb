//! Command-line entry point and HTTP server for the tone-shift pipeline.

pub mod app;
pub mod server;
