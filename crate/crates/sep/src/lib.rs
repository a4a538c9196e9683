//! A micro-scale two-stage binaural separator: a learned filterbank with
//! temporal-convolution masking, an optional enhancement pass, and an
//! optional per-frame direction-of-arrival head. Gradients are exact and
//! hand-derived; training uses Adam.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod features;
mod layers;
pub mod loss;
pub mod model;
pub mod params;
pub mod train;

pub use config::{ModelConfig, TrainConfig, DOA_CLASSES};
pub use error::{Error, Result};
pub use features::{compute_spatial_features, SpatialFeatures};
pub use loss::{capped_snr, class_azimuth, doa_ce_loss, doa_class, pit_loss, SNR_CAP_DB};
pub use model::{doa_logits, forward, loss, loss_and_grad, separate, Example, Forward, Objective};
pub use params::{Layout, Params};
pub use data::{load_examples, load_scene, select_scenes, toy_examples, Strategy};
pub use train::{mean_loss, mean_pit_snr, train_micro, Adam, History, HistoryRow, TrainOutcome};
