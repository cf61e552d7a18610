//! Library side of the `rte` command: configuration, experiment runs,
//! image export and the oracle verification table.

pub mod config;
pub mod experiment;
pub mod render;
pub mod verify;

pub use config::{ExperimentConfig, Overrides};
pub use experiment::{run_experiment, Manifest};
pub use render::render_pgm;
