//! Adam optimization and the fit / evaluate loops.

mod adam;
mod fit;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use fit::{epochs_csv, evaluate, fit, predict, EpochReport, TrainConfig, EPOCHS_HEADER};
