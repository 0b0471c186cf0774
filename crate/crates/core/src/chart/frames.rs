use super::model::{Chart, Note, NoteKind, Provenance};
use super::ChartError;

/// Width of one model frame in milliseconds.
pub const FRAME_MS: u64 = 23;

/// Nearest frame index for a time, ties rounding up.
pub fn quantize_to_frame(time_ms: i64) -> Result<usize, ChartError> {
    if time_ms < 0 {
        return Err(ChartError::NegativeTime(time_ms));
    }
    // floor(t / 23 + 1/2) in integer arithmetic
    let t = time_ms as u64;
    Ok(((2 * t + FRAME_MS) / (2 * FRAME_MS)) as usize)
}

/// Number of frames covering `duration_ms`, including a final partial frame.
pub fn frame_count(duration_ms: u64) -> usize {
    duration_ms.div_ceil(FRAME_MS) as usize
}

/// Per-frame class labels: 0 = rest, 1..=4 = [`NoteKind::class`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FrameSequence {
    labels: Vec<u8>,
}

impl FrameSequence {
    pub fn new(labels: Vec<u8>) -> Result<Self, ChartError> {
        if let Some(&bad) = labels.iter().find(|&&l| l > 4) {
            return Err(ChartError::InvalidLabel(bad));
        }
        Ok(FrameSequence { labels })
    }

    pub fn rest(len: usize) -> Self {
        FrameSequence {
            labels: vec![0; len],
        }
    }

    pub fn from_chart(chart: &Chart) -> Self {
        let mut labels = vec![0u8; chart.frame_count()];
        // Chart guarantees in-range, collision-free frames.
        for note in chart.notes() {
            labels[note.frame()] = note.kind.class();
        }
        FrameSequence { labels }
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rebuilds notes at each non-rest frame's center time (`frame * 23ms`).
    pub fn to_notes(&self, provenance: Provenance) -> Vec<Note> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(f, &l)| {
                NoteKind::from_class(l)
                    .expect("labels validated")
                    .map(|kind| Note::new(f as u64 * FRAME_MS, kind, provenance))
            })
            .collect()
    }

    /// Onset mask: 1 where any note is present.
    pub fn onsets(&self) -> impl Iterator<Item = bool> + '_ {
        self.labels.iter().map(|&l| l != 0)
    }
}

/// Frame sequence of a chart, with the collision check made explicit.
///
/// `Chart` already enforces one note per frame, so this only fails for note
/// lists that bypass it.
pub fn notes_to_frame_sequence(
    notes: &[Note],
    duration_ms: u64,
) -> Result<FrameSequence, ChartError> {
    let mut labels = vec![0u8; frame_count(duration_ms)];
    for note in notes {
        let f = note.frame();
        let slot = labels.get_mut(f).ok_or(ChartError::OutOfRange {
            time_ms: note.time_ms,
            duration_ms,
            last_frame: frame_count(duration_ms).saturating_sub(1),
        })?;
        if *slot != 0 {
            return Err(ChartError::Collision { frame: f });
        }
        *slot = note.kind.class();
    }
    Ok(FrameSequence { labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_to_frame(0), Ok(0));
        assert_eq!(quantize_to_frame(23), Ok(1));
        // 34 / 23 = 1.478
        assert_eq!(quantize_to_frame(34), Ok(1));
        // 35 / 23 = 1.52
        assert_eq!(quantize_to_frame(35), Ok(2));
        assert_eq!(quantize_to_frame(11), Ok(0));
        assert_eq!(quantize_to_frame(12), Ok(1));
        assert_eq!(quantize_to_frame(-1), Err(ChartError::NegativeTime(-1)));
    }

    #[test]
    fn frame_counts() {
        assert_eq!(frame_count(230), 10);
        assert_eq!(frame_count(46), 2);
        assert_eq!(frame_count(69), 3);
        assert_eq!(frame_count(1000), 44);
        assert_eq!(frame_count(120_000), 5218);
    }

    fn chart(duration: u64, notes: &[(u64, NoteKind)]) -> Chart {
        Chart::new(
            "t",
            120.0,
            0,
            duration,
            notes
                .iter()
                .map(|&(t, k)| Note::new(t, k, Provenance::Human))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn chart_to_frames_examples() {
        assert_eq!(chart(230, &[]).to_frame_sequence().labels(), &[0; 10]);
        assert_eq!(
            chart(46, &[(0, NoteKind::Don)])
                .to_frame_sequence()
                .labels(),
            &[1, 0]
        );
        assert_eq!(
            chart(69, &[(0, NoteKind::Don), (46, NoteKind::Kat)])
                .to_frame_sequence()
                .labels(),
            &[1, 0, 2]
        );
    }

    #[test]
    fn raw_note_collisions_name_the_frame() {
        let notes = [
            Note::new(46, NoteKind::Don, Provenance::Human),
            Note::new(50, NoteKind::Kat, Provenance::Ai),
        ];
        assert_eq!(
            notes_to_frame_sequence(&notes, 100),
            Err(ChartError::Collision { frame: 2 })
        );
    }

    #[test]
    fn labels_are_validated() {
        assert_eq!(
            FrameSequence::new(vec![0, 5]),
            Err(ChartError::InvalidLabel(5))
        );
    }

    proptest! {
        #[test]
        fn quantize_is_monotone(a in 0i64..1_000_000, b in 0i64..1_000_000) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize_to_frame(lo).unwrap() <= quantize_to_frame(hi).unwrap());
        }

        #[test]
        fn note_time_within_half_frame_of_center(t in 0u64..1_000_000) {
            let f = quantize_to_frame(t as i64).unwrap() as f64;
            prop_assert!((f * 23.0 - t as f64).abs() <= 11.5);
        }

        #[test]
        fn reconstruction_requantizes_identically(
            labels in proptest::collection::vec(0u8..5, 1..200)
        ) {
            let seq = FrameSequence::new(labels).unwrap();
            let duration = seq.len() as u64 * FRAME_MS;
            let rebuilt = Chart::new("p", 120.0, 0, duration, seq.to_notes(Provenance::Human)).unwrap();
            prop_assert_eq!(rebuilt.to_frame_sequence(), seq);
        }
    }
}
