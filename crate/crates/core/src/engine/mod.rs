//! Losses, training and exploitation of the embedding + head model, and
//! the persistence baseline.

mod evaluate;
mod loss;
mod model;
mod train;

pub use evaluate::{evaluate_split, persistence_split, smart_persistence};
pub use loss::{pinball_grad, pinball_loss, sample_loss};
pub use model::{crossover_counts, crossover_rate, exploit, timing_probe, ForecastBatch, ModelConfig, SqrModel, TimingReport};
pub use train::{
    fit, forecast_split, train, train_with_log, validation_crps, EpochLog, EpochModel, FitConfig, TauSampling,
    TrainConfig, TrainReport,
};
