//! Objective scoring of generated spectrograms.

pub mod adapters;
mod cer;
pub mod classifier;
mod fd;
mod pipeline;

pub use adapters::{CommandEmbeddingProvider, CommandTranscriber, EmbeddingProvider, ExternalCommand, Transcriber};
pub use cer::{cer, levenshtein};
pub use classifier::{
    argmax, holdout_split, records_tensor, train_digit_classifier, ClassifierConfig, ClassifierReport, DigitClassifier,
};
pub use fd::{activation_stats, frechet_distance, ActivationStats, NEG_EIGEN_TOLERANCE};
pub use pipeline::{
    evaluate_cer, evaluate_cer_audio, evaluate_fd, percentile, rows_to_mels, CacheSource, CerRecord, CerReport,
    ClassSummary, FdEvaluator, FeatureSource, GeneratorSource, MelSource, DEFAULT_FD_SAMPLES,
};
