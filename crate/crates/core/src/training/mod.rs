//! Objective, backpropagation, optimizer, training loop and gradient checking.

mod adadelta;
mod backward;
mod gradcheck;
mod loss;
mod trainer;

pub use adadelta::{adadelta_update, AdaDelta, LrSchedule};
pub use backward::{backward, backward_scaled, GradientSet};
pub use gradcheck::{grad_check, Fault, GradCheckOptions, GradCheckReport, TensorReport};
pub use loss::{masked_mse_loss, mse_loss};
pub use trainer::{
    evaluate_loss, item_gradient, train, BatchItem, BestSnapshot, EpochRecord, GradientEngine,
    Sequential, TrainConfig, TrainOutcome, TrainState, Utterance,
};
