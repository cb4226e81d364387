//! Embedding model, optimizer, training loop and checkpoints.

mod adam;
mod checkpoint;
mod config;
mod params;
mod train;

pub use adam::Adam;
pub use checkpoint::{config_hash, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub(crate) use config::parse;
pub use config::{TrainingConfig, Variant};
pub use params::{forward_embed, Backbone, BackboneGrads, DenseLayer, EmbedCache, ModelParams};
pub use train::{
    backbone_gradients, embed, step_backbone, step_clothes_classifier, train, train_on, train_variant,
    BackboneObjective, BackboneStepGrads, EpochMetrics, StepLosses, TrainLog, TrainState, TrainingSet,
};
