//! Chart domain model: notes, timing grid, 23ms frame quantization and
//! pattern-based quality metrics.

mod frames;
mod model;
mod patterns;
mod timing;

pub use frames::{
    frame_count, notes_to_frame_sequence, quantize_to_frame, FrameSequence, FRAME_MS,
};
pub use model::{Chart, Note, NoteKind, Provenance};
pub use patterns::{
    extract_patterns, note_accuracy, overall_pattern_score, PatternSet, PATTERN_UNIVERSE,
    PATTERN_WINDOW,
};
pub use timing::{snap_to_tick, TimingGrid, TICK_DIVISION};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("negative time {0}ms")]
    NegativeTime(i64),
    #[error("bpm must be positive and finite, got {0}")]
    InvalidBpm(f64),
    #[error("chart duration must be positive")]
    EmptyDuration,
    #[error("unknown note kind {0:?}")]
    UnknownKind(String),
    #[error("frame label {0} is outside 0..=4")]
    InvalidLabel(u8),
    #[error(
        "note at {time_ms}ms lies beyond the chart end ({duration_ms}ms, last frame {last_frame})"
    )]
    OutOfRange {
        time_ms: u64,
        duration_ms: u64,
        last_frame: usize,
    },
    #[error("two notes quantize to frame {frame}")]
    Collision { frame: usize },
    #[error("sequence has {0} frames, at least 8 are required")]
    TooShort(usize),
    #[error("sequence lengths differ: {predicted} vs {reference}")]
    LengthMismatch { predicted: usize, reference: usize },
}
