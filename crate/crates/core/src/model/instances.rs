use std::ops::Range;
use std::sync::Arc;

use super::config::ModelConfig;
use super::ModelError;
use crate::chart::Chart;
use crate::ingest::{FeatureMatrix, BAND_COUNT};
use crate::scalar::Scalar;

/// One frame's model input: the audio window (`steps x 40`, row-major) and
/// the classes of the preceding `history_len` frames, oldest first. `None`
/// marks positions before frame 0 and encodes as an all-zero one-hot.
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a, T> {
    pub audio: &'a [T],
    pub history: &'a [Option<u8>],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInstance<T> {
    pub audio: Vec<T>,
    pub history: Vec<Option<u8>>,
    pub target: u8,
    pub designer_id: Arc<str>,
}

impl<T: Scalar> TrainingInstance<T> {
    pub fn input(&self) -> ModelInput<'_, T> {
        ModelInput {
            audio: &self.audio,
            history: &self.history,
        }
    }

    /// Expanded one-hot history, `history_len x 5`.
    pub fn history_one_hot(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.history.len() * 5];
        for (j, h) in self.history.iter().enumerate() {
            if let Some(c) = h {
                out[j * 5 + *c as usize] = T::one();
            }
        }
        out
    }
}

pub(crate) fn check_alignment<T: Scalar>(
    chart: &Chart,
    features: &FeatureMatrix<T>,
) -> Result<(), ModelError> {
    if features.cols() != BAND_COUNT || features.rows() != chart.frame_count() {
        return Err(ModelError::Misaligned {
            song_id: chart.song_id().to_string(),
            feature_rows: features.rows(),
            feature_cols: features.cols(),
            chart_frames: chart.frame_count(),
        });
    }
    Ok(())
}

/// Audio rows `frame - ctx ..= frame + ctx`, zero outside the song.
pub(crate) fn audio_window<T: Scalar>(
    features: &FeatureMatrix<T>,
    frame: usize,
    ctx: usize,
    out: &mut Vec<T>,
) {
    out.clear();
    let rows = features.rows() as i64;
    for r in frame as i64 - ctx as i64..=frame as i64 + ctx as i64 {
        if r >= 0 && r < rows {
            out.extend_from_slice(features.row(r as usize));
        } else {
            out.extend(std::iter::repeat_n(T::zero(), features.cols()));
        }
    }
}

/// Classes of frames `frame - len .. frame`, `None` before frame 0.
pub(crate) fn history_window(labels: &[u8], frame: usize, len: usize, out: &mut Vec<Option<u8>>) {
    out.clear();
    out.extend(
        (frame as i64 - len as i64..frame as i64).map(|f| (f >= 0).then(|| labels[f as usize])),
    );
}

/// One instance per frame in `frames`, targets and history from the chart's own labels.
pub fn make_training_instances<T: Scalar>(
    config: &ModelConfig,
    chart: &Chart,
    features: &FeatureMatrix<T>,
    frames: Range<usize>,
    designer_id: &str,
) -> Result<Vec<TrainingInstance<T>>, ModelError> {
    config.validate()?;
    check_alignment(chart, features)?;
    if frames.start > frames.end || frames.end > chart.frame_count() {
        return Err(ModelError::FrameRange {
            start: frames.start,
            end: frames.end,
            frames: chart.frame_count(),
        });
    }
    let labels = chart.to_frame_sequence();
    let labels = labels.labels();
    let designer: Arc<str> = Arc::from(designer_id);
    Ok(frames
        .map(|f| {
            let mut audio = Vec::with_capacity(config.audio_len());
            audio_window(features, f, config.audio_context, &mut audio);
            let mut history = Vec::with_capacity(config.history_len);
            history_window(labels, f, config.history_len, &mut history);
            TrainingInstance {
                audio,
                history,
                target: labels[f],
                designer_id: designer.clone(),
            }
        })
        .collect())
}
