//! Alternating updates of the feature extractor, classifier, discriminator
//! and generator, with validation-based checkpoint selection.

pub mod config;
pub mod run;
pub mod sampling;

pub use config::{OptimizerSet, Players, TrainConfig};
pub use run::{
    evaluate, fit, fit_split, generate, split_for_training, train, train_epoch, write_run_log, BestCheckpoint, EpochLosses,
    EpochRecord, FitOutcome, RunState, Step,
};
pub use sampling::{assign_fake_labels, assign_uniform_labels, batch_indices, frequencies, latent_batch};
