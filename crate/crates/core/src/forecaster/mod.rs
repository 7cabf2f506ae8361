//! Multiscale recurrent-convolutional encoder-forecaster.

pub mod checkpoint;
mod model;
mod spec;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{persistence_baseline, Forecaster, ForwardCache};
pub use spec::{ForecasterSpec, DEEP_CHANNELS};
pub use train::{split_loss, train, train_step, LrSchedule, TrainConfig, TrainLog};
