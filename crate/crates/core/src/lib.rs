//! Co-design of feedback policies and actuator layouts for stochastic PDEs.
//!
//! The crate is organised bottom-up: [`field`] holds grids, fields and
//! cylindrical noise; [`systems`] the time steppers; [`actuation`] the
//! actuator footprints; [`policy`] the networks; [`optimizer`] the
//! importance-weighted loss, its gradients and the training loop; and
//! [`experiment`] configuration, checkpoints and reports.

pub mod actuation;
pub mod error;
pub mod experiment;
pub mod field;
pub mod linalg;
pub mod optimizer;
pub mod policy;
pub mod rng;
pub mod systems;

pub use actuation::{influence, ActuatorDesign, InfluenceMatrix};
pub use error::{Result, StsoError};
pub use experiment::ExperimentConfig;
pub use field::{inner_product, Field, Grid, NoiseIncrement, StateVector};
pub use optimizer::{CostSpec, GradientMode, IterationRecord, TrainConfig, Trainer, TrainerState};
pub use policy::{Architecture, Policy};
pub use rng::{Purpose, StreamKey};
pub use systems::{build_system, rollout, Dynamics, SystemConfig, SystemKind, Trajectory};
