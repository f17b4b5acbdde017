pub mod artifacts;
pub mod config;
pub mod stages;
pub mod synth;
