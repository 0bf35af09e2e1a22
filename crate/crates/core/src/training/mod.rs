//! Loss, optimizer, learning-rate control and the cross-validation harness.

mod loss;
mod optim;
mod trainer;

pub use loss::{composite_loss, LossParts};
pub use optim::{adam_step, AdamState, EarlyStopping, PlateauScheduler, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use trainer::{evaluate_loss, kfold_split, train, EpochRecord, Fold, TrainConfig, TrainHistory, TrainOutcome};
