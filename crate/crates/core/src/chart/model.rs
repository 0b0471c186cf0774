use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::frames::{frame_count, quantize_to_frame, FrameSequence};
use super::timing::TimingGrid;
use super::ChartError;

/// The four playable Taiko objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteKind {
    Don,
    Kat,
    BigDon,
    BigKat,
}

impl NoteKind {
    pub const ALL: [NoteKind; 4] = [
        NoteKind::Don,
        NoteKind::Kat,
        NoteKind::BigDon,
        NoteKind::BigKat,
    ];

    /// Frame class of this kind; 0 is reserved for rest.
    pub fn class(self) -> u8 {
        match self {
            NoteKind::Don => 1,
            NoteKind::Kat => 2,
            NoteKind::BigDon => 3,
            NoteKind::BigKat => 4,
        }
    }

    /// Inverse of [`NoteKind::class`]. Rest (0) has no kind.
    pub fn from_class(class: u8) -> Result<Option<NoteKind>, ChartError> {
        match class {
            0 => Ok(None),
            1 => Ok(Some(NoteKind::Don)),
            2 => Ok(Some(NoteKind::Kat)),
            3 => Ok(Some(NoteKind::BigDon)),
            4 => Ok(Some(NoteKind::BigKat)),
            other => Err(ChartError::InvalidLabel(other)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NoteKind::Don => "don",
            NoteKind::Kat => "kat",
            NoteKind::BigDon => "big_don",
            NoteKind::BigKat => "big_kat",
        }
    }
}

impl fmt::Display for NoteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoteKind {
    type Err = ChartError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NoteKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ChartError::UnknownKind(s.to_string()))
    }
}

/// Which agent placed a note.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Human,
    Ai,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub time_ms: u64,
    pub kind: NoteKind,
    pub provenance: Provenance,
}

impl Note {
    pub fn new(time_ms: u64, kind: NoteKind, provenance: Provenance) -> Self {
        Note {
            time_ms,
            kind,
            provenance,
        }
    }

    pub fn frame(&self) -> usize {
        quantize_to_frame(self.time_ms as i64).expect("u64 times are non-negative")
    }
}

/// A song's note chart with constant-BPM timing.
///
/// Notes are kept sorted by time and no two notes share a 23ms frame.
/// Every note must quantize to a frame inside `0..frame_count()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    song_id: String,
    bpm: f64,
    offset_ms: i64,
    duration_ms: u64,
    notes: Vec<Note>,
}

impl Chart {
    pub fn new(
        song_id: impl Into<String>,
        bpm: f64,
        offset_ms: i64,
        duration_ms: u64,
        mut notes: Vec<Note>,
    ) -> Result<Self, ChartError> {
        if !(bpm.is_finite() && bpm > 0.0) {
            return Err(ChartError::InvalidBpm(bpm));
        }
        if duration_ms == 0 {
            return Err(ChartError::EmptyDuration);
        }
        notes.sort_by_key(|n| n.time_ms);
        let mut chart = Chart {
            song_id: song_id.into(),
            bpm,
            offset_ms,
            duration_ms,
            notes: Vec::with_capacity(notes.len()),
        };
        let mut last_frame = None;
        for note in notes {
            let frame = chart.check_in_range(&note)?;
            if last_frame == Some(frame) {
                return Err(ChartError::Collision { frame });
            }
            last_frame = Some(frame);
            chart.notes.push(note);
        }
        Ok(chart)
    }

    pub fn empty(
        song_id: impl Into<String>,
        bpm: f64,
        offset_ms: i64,
        duration_ms: u64,
    ) -> Result<Self, ChartError> {
        Chart::new(song_id, bpm, offset_ms, duration_ms, Vec::new())
    }

    pub fn song_id(&self) -> &str {
        &self.song_id
    }

    pub fn bpm(&self) -> f64 {
        self.bpm
    }

    pub fn offset_ms(&self) -> i64 {
        self.offset_ms
    }

    pub fn duration_ms(&self) -> u64 {
        self.duration_ms
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn frame_count(&self) -> usize {
        frame_count(self.duration_ms)
    }

    pub fn grid(&self) -> TimingGrid {
        TimingGrid::new(self.bpm, self.offset_ms).expect("chart bpm validated at construction")
    }

    fn check_in_range(&self, note: &Note) -> Result<usize, ChartError> {
        let frame = note.frame();
        if note.time_ms > self.duration_ms || frame >= self.frame_count() {
            return Err(ChartError::OutOfRange {
                time_ms: note.time_ms,
                duration_ms: self.duration_ms,
                last_frame: self.frame_count() - 1,
            });
        }
        Ok(frame)
    }

    /// Position of the note occupying `frame`, if any.
    fn position_of_frame(&self, frame: usize) -> Result<usize, usize> {
        self.notes.binary_search_by_key(&frame, Note::frame)
    }

    pub fn note_at_frame(&self, frame: usize) -> Option<&Note> {
        self.position_of_frame(frame).ok().map(|i| &self.notes[i])
    }

    /// Inserts a note, rejecting it if its frame is occupied or out of range.
    pub fn insert(&mut self, note: Note) -> Result<(), ChartError> {
        let frame = self.check_in_range(&note)?;
        match self.position_of_frame(frame) {
            Ok(_) => Err(ChartError::Collision { frame }),
            Err(pos) => {
                self.notes.insert(pos, note);
                Ok(())
            }
        }
    }

    pub fn remove_at_frame(&mut self, frame: usize) -> Option<Note> {
        self.position_of_frame(frame)
            .ok()
            .map(|i| self.notes.remove(i))
    }

    /// Removes every note with `start_ms <= time_ms <= end_ms`, returning them in order.
    pub fn remove_in_range(&mut self, start_ms: u64, end_ms: u64) -> Vec<Note> {
        let (removed, kept): (Vec<Note>, Vec<Note>) = self
            .notes
            .iter()
            .partition(|n| n.time_ms >= start_ms && n.time_ms <= end_ms);
        self.notes = kept;
        removed
    }

    pub fn to_frame_sequence(&self) -> FrameSequence {
        FrameSequence::from_chart(self)
    }

    /// Same timing metadata, no notes.
    pub fn cleared(&self) -> Chart {
        Chart {
            notes: Vec::new(),
            ..self.clone()
        }
    }
}
