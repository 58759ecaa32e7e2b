//! Experiment harness for Fourier Analysis Networks: config files, the
//! training runner, CSV/SVG reports and the preset catalog.

pub mod checks;
pub mod config;
pub mod presets;
pub mod report;
pub mod runner;

pub use fan_core;
