//! Importance-weighted loss, its gradients, and the training loop.

mod adam;
mod cost;
mod loss;
mod trainer;

pub use adam::{AdamHyper, AdamState};
pub use cost::{CompiledCost, CostSpec, Region};
pub use loss::{
    batch_stats, compute_loss, compute_n, compute_p, frozen_loss, gibbs_weights, importance_cost, loss_gradients,
    loss_sensitivities, Batch, GradientMode, LossGradients, RolloutStats,
};
pub use trainer::{evaluate, Evaluation, IterationRecord, LearningRates, TrainConfig, Trainer, TrainerState};
