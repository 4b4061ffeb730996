//! Two-stage cross-learning: stage 1 fits encoder and decoder to camera
//! skeletons, stage 2 trains the recurrent classifier on the (frozen or
//! fine-tuned) encoder. Also the radar-only baseline, evaluation artifacts
//! and the run comparison table.

mod data;
mod eval;
mod train;

pub use data::{
    preprocess_dataset, AccessLog, Dataset, DatasetReader, Modality, ProcessedManifest, Recording,
};
pub use eval::{checkpoint_digest, compare_runs, curves_csv, evaluate, EvalReport};
pub use train::{
    balanced_batches, classifier_loss, encode_dataset, predict, reconstruction_mse,
    retain_prefixes, train_autoencoder, train_classifier, train_unimodal_baseline, EpochStats,
    LossParts, Regime, TrainConfig, TrainedModel, AUTOENCODER_PREFIXES, CLASSIFIER_PREFIXES,
};
