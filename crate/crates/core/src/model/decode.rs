use std::collections::HashSet;
use std::ops::Range;

use super::config::CLASS_COUNT;
use super::instances::{audio_window, check_alignment, history_window, ModelInput};
use super::train::SequenceModel;
use super::ModelError;
use crate::chart::{Chart, Note, NoteKind, Provenance, TimingGrid, FRAME_MS};
use crate::ingest::FeatureMatrix;
use crate::scalar::Scalar;

/// Inclusive time span `[start_ms, end_ms]` selected for the AI to fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Region {
    pub start_ms: u64,
    pub end_ms: u64,
}

impl Region {
    pub fn new(start_ms: u64, end_ms: u64) -> Self {
        Region { start_ms, end_ms }
    }

    pub fn contains(&self, time_ms: u64) -> bool {
        (self.start_ms..=self.end_ms).contains(&time_ms)
    }

    /// Frames whose centre time lies in the region, clipped to the chart.
    pub fn frames(&self, frame_count: usize) -> Range<usize> {
        let first = self.start_ms.div_ceil(FRAME_MS) as usize;
        let last = ((self.end_ms / FRAME_MS) as usize + 1).min(frame_count);
        first..last.max(first)
    }
}

/// Frame labels produced for a region, before snapping to ticks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedRegion {
    pub frames: Range<usize>,
    pub labels: Vec<u8>,
}

/// Index of the largest probability; ties go to the lower class, so rest wins any tie it is part of.
pub fn argmax_class<T: Scalar>(probs: &[T; CLASS_COUNT]) -> u8 {
    let mut best = 0;
    for k in 1..CLASS_COUNT {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    best as u8
}

pub(crate) fn validate_region(chart: &Chart, region: Region) -> Result<Range<usize>, ModelError> {
    if region.start_ms >= region.end_ms || region.end_ms > chart.duration_ms() {
        return Err(ModelError::InvalidRegion {
            start_ms: region.start_ms,
            end_ms: region.end_ms,
            duration_ms: chart.duration_ms(),
        });
    }
    let frames = region.frames(chart.frame_count());
    if frames.is_empty() {
        return Err(ModelError::EmptyRegion(region.start_ms, region.end_ms));
    }
    Ok(frames)
}

/// Greedy left-to-right decoding of the region's frames.
///
/// History comes from the chart before the region and from already decoded
/// frames inside it; chart notes inside the region are ignored.
pub fn decode_region<T: Scalar, M: SequenceModel<T>>(
    model: &M,
    features: &FeatureMatrix<T>,
    chart: &Chart,
    region: Region,
) -> Result<DecodedRegion, ModelError> {
    check_alignment(chart, features)?;
    let frames = validate_region(chart, region)?;
    let cfg = *model.config();
    let mut labels = chart.to_frame_sequence().labels().to_vec();
    labels[frames.clone()].iter_mut().for_each(|l| *l = 0);
    let mut audio = Vec::with_capacity(cfg.audio_len());
    let mut history = Vec::with_capacity(cfg.history_len);
    for f in frames.clone() {
        audio_window(features, f, cfg.audio_context, &mut audio);
        history_window(&labels, f, cfg.history_len, &mut history);
        let probs = model.predict(ModelInput {
            audio: &audio,
            history: &history,
        })?;
        labels[f] = argmax_class(&probs);
    }
    Ok(DecodedRegion {
        labels: labels[frames.clone()].to_vec(),
        frames,
    })
}

/// Decodes the region and turns the labels into snapped AI notes.
///
/// Each note is moved to its nearest 1/16-beat tick. Notes whose tick falls
/// outside the region, repeats an earlier note's tick, or lands in a frame
/// already taken (by an earlier emitted note or a chart note outside the
/// region) are dropped.
pub fn predict_region<T: Scalar, M: SequenceModel<T>>(
    model: &M,
    features: &FeatureMatrix<T>,
    chart: &Chart,
    region: Region,
    grid: &TimingGrid,
) -> Result<Vec<Note>, ModelError> {
    let decoded = decode_region(model, features, chart, region)?;
    Ok(snap_decoded(&decoded, chart, region, grid))
}

pub(crate) fn snap_decoded(
    decoded: &DecodedRegion,
    chart: &Chart,
    region: Region,
    grid: &TimingGrid,
) -> Vec<Note> {
    let mut occupied: HashSet<usize> = chart
        .notes()
        .iter()
        .filter(|n| !region.contains(n.time_ms))
        .map(Note::frame)
        .collect();
    let mut notes: Vec<Note> = Vec::new();
    for (f, &label) in decoded.frames.clone().zip(&decoded.labels) {
        let Some(kind) = NoteKind::from_class(label).expect("decoded labels are classes") else {
            continue;
        };
        let Some(t) = grid.snap_within((f as u64 * FRAME_MS) as i64, chart.duration_ms()) else {
            continue;
        };
        if !region.contains(t) || notes.last().is_some_and(|n| n.time_ms >= t) {
            continue;
        }
        let note = Note::new(t, kind, Provenance::Ai);
        if note.frame() < chart.frame_count() && occupied.insert(note.frame()) {
            notes.push(note);
        }
    }
    notes
}
