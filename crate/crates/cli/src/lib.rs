pub mod artifacts;
pub mod config;
pub mod pipeline;
pub mod plot;
pub mod tables;
