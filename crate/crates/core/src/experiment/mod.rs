//! Experiment configuration and checkpoint persistence.

mod checkpoint;
mod config;

pub use checkpoint::{checkpoint_dir, checkpoint_name, load_checkpoint, load_policy, save_checkpoint};
pub use config::{
    apply_override, resolve_alias, ActuatorSpec, ExperimentConfig, Init, Network, OptimizerSpec, OutputSpec, PolicySpec,
    OVERRIDE_ALIASES,
};
