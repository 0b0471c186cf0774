use std::collections::BTreeSet;

use super::frames::FrameSequence;
use super::ChartError;

/// Window length, in frames, of one rhythmic pattern (184ms).
pub const PATTERN_WINDOW: usize = 8;
/// Number of distinct binary onset patterns of length [`PATTERN_WINDOW`].
pub const PATTERN_UNIVERSE: usize = 1 << PATTERN_WINDOW;

/// Distinct 8-frame onset patterns. The earliest frame is the most
/// significant bit, so `[1,0,0,0,1,0,0,0]` is `0b1000_1000`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PatternSet {
    patterns: BTreeSet<u8>,
}

impl PatternSet {
    pub fn patterns(&self) -> &BTreeSet<u8> {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn contains(&self, pattern: u8) -> bool {
        self.patterns.contains(&pattern)
    }
}

/// Slides a stride-1 window over the binarized sequence and collects the
/// distinct patterns.
pub fn extract_patterns(seq: &FrameSequence) -> Result<PatternSet, ChartError> {
    if seq.len() < PATTERN_WINDOW {
        return Err(ChartError::TooShort(seq.len()));
    }
    let mut patterns = BTreeSet::new();
    let mut window: u8 = 0;
    for (i, onset) in seq.onsets().enumerate() {
        window = (window << 1) | onset as u8;
        if i + 1 >= PATTERN_WINDOW {
            patterns.insert(window);
        }
    }
    Ok(PatternSet { patterns })
}

/// Percentage of the 256 possible onset patterns present in the sequence.
pub fn overall_pattern_score(seq: &FrameSequence) -> Result<f64, ChartError> {
    Ok(extract_patterns(seq)?.len() as f64 / PATTERN_UNIVERSE as f64 * 100.0)
}

/// Fraction of frames whose class labels agree exactly.
pub fn note_accuracy(
    predicted: &FrameSequence,
    reference: &FrameSequence,
) -> Result<f64, ChartError> {
    if predicted.len() != reference.len() {
        return Err(ChartError::LengthMismatch {
            predicted: predicted.len(),
            reference: reference.len(),
        });
    }
    if predicted.is_empty() {
        return Ok(1.0);
    }
    let hits = predicted
        .labels()
        .iter()
        .zip(reference.labels())
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}
