//! Session event log.
//!
//! On disk the log is JSON lines: a header object, then one event per line
//! in the order the events happened.
//!
//! ```text
//! {"format":"kiai-session-log","version":1,"session_id":"7-first-0",...}
//! {"t_ms":1000,"kind":"place","requested_ms":47,"time_ms":63,"note_kind":"don","accepted":true,"occupied_frame":null}
//! {"t_ms":2000,"kind":"pass_to_ai","region":{"start_ms":0,"end_ms":4000},"edited_span":[3,3],"instances":1}
//! {"t_ms":2000,"kind":"retrain","k_after":1,"buffer_size_at_trigger":1,"epoch_losses":[1.6],"wall_time_ms":3,"error":null}
//! {"t_ms":2000,"kind":"ai_fill","region":{"start_ms":0,"end_ms":4000},"cleared":[],"notes":[...]}
//! {"t_ms":5000,"kind":"finish"}
//! ```

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapt::StrategyKind;
use crate::chart::{quantize_to_frame, Note, NoteKind, Provenance};
use crate::model::{ModelConfig, Region, TrainConfig};

use super::Leg;

pub const LOG_FORMAT: &str = "kiai-session-log";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub session_id: String,
    pub study_id: u64,
    pub leg: Leg,
    pub song_id: String,
    pub strategy: StrategyKind,
    pub delta: usize,
    pub train: TrainConfig,
    pub model: ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    /// A human placement; rejected ones are logged too.
    Place {
        requested_ms: u64,
        time_ms: u64,
        note_kind: NoteKind,
        accepted: bool,
        occupied_frame: Option<usize>,
    },
    /// `removed` is `None` for a delete on an empty frame.
    Delete {
        time_ms: u64,
        frame: usize,
        removed: Option<Note>,
    },
    PassToAi {
        region: Region,
        edited_span: Option<(usize, usize)>,
        instances: usize,
    },
    Retrain {
        k_after: usize,
        buffer_size_at_trigger: usize,
        epoch_losses: Vec<f64>,
        wall_time_ms: u64,
        error: Option<String>,
    },
    AiFill {
        region: Region,
        cleared: Vec<Note>,
        notes: Vec<Note>,
    },
    Finish,
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Place { .. } => "place",
            Event::Delete { .. } => "delete",
            Event::PassToAi { .. } => "pass_to_ai",
            Event::Retrain { .. } => "retrain",
            Event::AiFill { .. } => "ai_fill",
            Event::Finish => "finish",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub t_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub header: LogHeader,
    pub events: Vec<LogEvent>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log i/o: {0}")]
    Io(#[from] io::Error),
    #[error("log line {line}: {source}")]
    Syntax {
        line: usize,
        source: serde_json::Error,
    },
    #[error("log header: format {0:?} version {1} not supported")]
    Header(String, u32),
    #[error("log is empty")]
    Empty,
    #[error("event {index}: {reason}")]
    Malformed { index: usize, reason: String },
}

impl SessionLog {
    pub fn new(header: LogHeader) -> Self {
        SessionLog {
            header,
            events: Vec::new(),
        }
    }

    pub fn header_line(&self) -> String {
        serde_json::to_string(&self.header).expect("headers serialize")
    }

    pub fn event_line(event: &LogEvent) -> String {
        serde_json::to_string(event).expect("events serialize")
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.header_line())?;
        for e in &self.events {
            writeln!(out, "{}", Self::event_line(e))?;
        }
        out.flush()
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, LogError> {
        let mut lines = input
            .lines()
            .enumerate()
            .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let (_, first) = lines.next().ok_or(LogError::Empty)?;
        let header: LogHeader =
            serde_json::from_str(&first?).map_err(|source| LogError::Syntax { line: 1, source })?;
        if header.format != LOG_FORMAT || header.version != LOG_VERSION {
            return Err(LogError::Header(header.format, header.version));
        }
        let mut events = Vec::new();
        for (i, line) in lines {
            let event = serde_json::from_str(&line?).map_err(|source| LogError::Syntax {
                line: i + 1,
                source,
            })?;
            events.push(event);
        }
        Ok(SessionLog { header, events })
    }

    pub fn parse(text: &str) -> Result<Self, LogError> {
        Self::read_from(text.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogStatistics {
    pub time_spent_ms: u64,
    pub time_spent_mins: f64,
    pub end_turn_count: usize,
    pub human_notes_placed: usize,
    pub human_notes_kept: usize,
    /// Absent when the agent placed nothing.
    pub human_notes_kept_pct: Option<f64>,
    pub ai_notes_placed: usize,
    pub ai_notes_kept: usize,
    pub ai_notes_kept_pct: Option<f64>,
}

fn pct(kept: usize, placed: usize) -> Option<f64> {
    (placed > 0).then(|| kept as f64 / placed as f64 * 100.0)
}

/// Replays the note bookkeeping of an event stream.
///
/// A note counts as kept if it was placed and later neither deleted nor
/// cleared by an AI fill. The stream is checked for consistency on the way:
/// timestamps must not decrease, removals must hit live notes of the stated
/// provenance, accepted placements must land on free frames, and nothing may
/// follow `finish`.
pub fn compute_log_statistics(events: &[LogEvent]) -> Result<LogStatistics, LogError> {
    let mut live: HashMap<usize, Provenance> = HashMap::new();
    let mut placed = [0usize; 2];
    let mut removed = [0usize; 2];
    let mut turns = 0;
    let mut last_t = None;
    let mut finished = false;
    let slot = |p: Provenance| match p {
        Provenance::Human => 0,
        Provenance::Ai => 1,
    };

    for (index, e) in events.iter().enumerate() {
        let bad = |reason: String| LogError::Malformed { index, reason };
        if finished {
            return Err(bad("event after finish".into()));
        }
        if last_t.is_some_and(|t| e.t_ms < t) {
            return Err(bad(format!("timestamp {} goes backwards", e.t_ms)));
        }
        last_t = Some(e.t_ms);
        let frame_of = |t: u64| quantize_to_frame(t as i64).map_err(|err| bad(err.to_string()));
        match &e.event {
            Event::Place {
                time_ms,
                accepted: true,
                ..
            } => {
                let f = frame_of(*time_ms)?;
                if live.insert(f, Provenance::Human).is_some() {
                    return Err(bad(format!("accepted placement on occupied frame {f}")));
                }
                placed[0] += 1;
            }
            Event::Place {
                accepted: false, ..
            } => {}
            Event::Delete {
                removed: Some(note),
                frame,
                ..
            } => {
                if note.frame() != *frame {
                    return Err(bad(format!("deleted note is not in frame {frame}")));
                }
                if live.remove(frame) != Some(note.provenance) {
                    return Err(bad(format!(
                        "no live {:?} note in frame {frame}",
                        note.provenance
                    )));
                }
                removed[slot(note.provenance)] += 1;
            }
            Event::Delete {
                removed: None,
                frame,
                ..
            } => {
                if live.contains_key(frame) {
                    return Err(bad(format!("empty delete on occupied frame {frame}")));
                }
            }
            Event::PassToAi { .. } => turns += 1,
            Event::Retrain { .. } => {}
            Event::AiFill { cleared, notes, .. } => {
                for n in cleared {
                    if live.remove(&n.frame()) != Some(n.provenance) {
                        return Err(bad(format!(
                            "cleared note in frame {} was not live",
                            n.frame()
                        )));
                    }
                    removed[slot(n.provenance)] += 1;
                }
                for n in notes {
                    if n.provenance != Provenance::Ai {
                        return Err(bad("ai fill contains a human note".into()));
                    }
                    if live.insert(n.frame(), Provenance::Ai).is_some() {
                        return Err(bad(format!("ai note on occupied frame {}", n.frame())));
                    }
                    placed[1] += 1;
                }
            }
            Event::Finish => finished = true,
        }
    }

    let time_spent_ms = match (events.first(), events.last()) {
        (Some(a), Some(b)) => b.t_ms - a.t_ms,
        _ => 0,
    };
    let kept = [placed[0] - removed[0], placed[1] - removed[1]];
    Ok(LogStatistics {
        time_spent_ms,
        time_spent_mins: time_spent_ms as f64 / 60_000.0,
        end_turn_count: turns,
        human_notes_placed: placed[0],
        human_notes_kept: kept[0],
        human_notes_kept_pct: pct(kept[0], placed[0]),
        ai_notes_placed: placed[1],
        ai_notes_kept: kept[1],
        ai_notes_kept_pct: pct(kept[1], placed[1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(t_ms: u64, event: Event) -> LogEvent {
        LogEvent { t_ms, event }
    }

    fn place(t: u64, time_ms: u64) -> LogEvent {
        at(
            t,
            Event::Place {
                requested_ms: time_ms,
                time_ms,
                note_kind: NoteKind::Don,
                accepted: true,
                occupied_frame: None,
            },
        )
    }

    fn delete(t: u64, note: Note) -> LogEvent {
        at(
            t,
            Event::Delete {
                time_ms: note.time_ms,
                frame: note.frame(),
                removed: Some(note),
            },
        )
    }

    fn ai(time_ms: u64) -> Note {
        Note::new(time_ms, NoteKind::Kat, Provenance::Ai)
    }

    fn fill(t: u64, notes: Vec<Note>) -> LogEvent {
        at(
            t,
            Event::AiFill {
                region: Region::new(0, 10_000),
                cleared: vec![],
                notes,
            },
        )
    }

    #[test]
    fn empty_log() {
        let s = compute_log_statistics(&[]).unwrap();
        assert_eq!(
            (
                s.time_spent_ms,
                s.end_turn_count,
                s.human_notes_placed,
                s.ai_notes_placed
            ),
            (0, 0, 0, 0)
        );
        assert_eq!(s.human_notes_kept_pct, None);
        assert_eq!(s.ai_notes_kept_pct, None);
    }

    #[test]
    fn ai_places_four_human_deletes_one() {
        let notes: Vec<Note> = [1000, 2000, 3000, 4000].into_iter().map(ai).collect();
        let events = vec![
            at(
                0,
                Event::PassToAi {
                    region: Region::new(0, 10_000),
                    edited_span: None,
                    instances: 0,
                },
            ),
            fill(0, notes.clone()),
            delete(60_000, notes[2]),
        ];
        let s = compute_log_statistics(&events).unwrap();
        assert_eq!(s.ai_notes_kept_pct, Some(75.0));
        assert_eq!(s.end_turn_count, 1);
        assert_eq!(s.time_spent_mins, 1.0);
    }

    #[test]
    fn place_delete_replace_counts_twice() {
        let n = Note::new(500, NoteKind::Don, Provenance::Human);
        let s = compute_log_statistics(&[place(0, 500), delete(1, n), place(2, 500)]).unwrap();
        assert_eq!((s.human_notes_placed, s.human_notes_kept), (2, 1));
        assert_eq!(s.human_notes_kept_pct, Some(50.0));
    }

    #[test]
    fn cleared_notes_are_not_kept() {
        let events = vec![
            place(0, 92),
            place(1, 184),
            at(
                2,
                Event::AiFill {
                    region: Region::new(0, 100),
                    cleared: vec![Note::new(92, NoteKind::Don, Provenance::Human)],
                    notes: vec![ai(46)],
                },
            ),
        ];
        let s = compute_log_statistics(&events).unwrap();
        assert_eq!(s.human_notes_kept_pct, Some(50.0));
        assert_eq!(s.ai_notes_kept_pct, Some(100.0));
    }

    #[test]
    fn malformed_streams_name_the_event() {
        let n = Note::new(500, NoteKind::Don, Provenance::Human);
        let cases: Vec<(Vec<LogEvent>, usize)> = vec![
            (vec![place(5, 0), place(4, 100)], 1),
            (vec![place(0, 0), delete(1, n)], 1),
            (vec![place(0, 500), place(1, 505)], 1),
            (vec![at(0, Event::Finish), place(1, 0)], 1),
            (vec![place(0, 500), fill(1, vec![ai(500)])], 1),
        ];
        for (events, expected) in cases {
            match compute_log_statistics(&events) {
                Err(LogError::Malformed { index, .. }) => assert_eq!(index, expected, "{events:?}"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let header = LogHeader {
            format: LOG_FORMAT.into(),
            version: LOG_VERSION,
            session_id: "s".into(),
            study_id: 3,
            leg: Leg::Second,
            song_id: "a".into(),
            strategy: StrategyKind::Threshold,
            delta: 4,
            train: TrainConfig::default(),
            model: ModelConfig::default(),
        };
        let mut log = SessionLog::new(header);
        log.events.push(place(0, 63));
        log.events.push(at(
            9,
            Event::Retrain {
                k_after: 1,
                buffer_size_at_trigger: 4,
                epoch_losses: vec![0.1 + 0.2, 1.0 / 3.0],
                wall_time_ms: 2,
                error: None,
            },
        ));
        log.events.push(at(10, Event::Finish));
        let text = log.to_text();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(3).unwrap().contains("\"kind\":\"finish\""));
        assert_eq!(SessionLog::parse(&text).unwrap(), log);
        let broken = text.replacen("\"t_ms\":9", "\"t_ms\":\"x\"", 1);
        assert!(matches!(
            SessionLog::parse(&broken),
            Err(LogError::Syntax { line: 3, .. })
        ));
    }
}
