//! Recurrent frame classifier: rest or one of four note kinds per 23ms frame,
//! from an audio-feature window and the preceding note history.

mod config;
mod decode;
mod file;
mod instances;
mod lstm;
mod params;
mod train;

pub use config::{ModelConfig, TrainConfig, CLASS_COUNT};
pub(crate) use decode::validate_region;
pub use decode::{argmax_class, decode_region, predict_region, DecodedRegion, Region};
pub use file::{load_model, read_model, save_model, write_model, ModelFileError, MODEL_MAGIC};
pub use instances::{make_training_instances, ModelInput, TrainingInstance};
pub use params::ModelParams;
pub use train::{train, SequenceModel, Trained};

use thiserror::Error;

use crate::chart::ChartError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{what}: expected {expected} values, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("class {0} is outside 0..5")]
    InvalidClass(u8),
    #[error("tensor {0} contains a non-finite value")]
    NonFiniteParameter(&'static str),
    #[error("training data is empty")]
    EmptyData,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("features for {song_id} are {feature_rows}x{feature_cols}, chart has {chart_frames} frames of 40 bands")]
    Misaligned {
        song_id: String,
        feature_rows: usize,
        feature_cols: usize,
        chart_frames: usize,
    },
    #[error("frame range {start}..{end} exceeds {frames} frames")]
    FrameRange {
        start: usize,
        end: usize,
        frames: usize,
    },
    #[error("region [{start_ms}, {end_ms}] is invalid for a {duration_ms}ms chart")]
    InvalidRegion {
        start_ms: u64,
        end_ms: u64,
        duration_ms: u64,
    },
    #[error("region [{0}, {1}] contains no frame")]
    EmptyRegion(u64, u64),
    #[error(transparent)]
    Chart(#[from] ChartError),
}
