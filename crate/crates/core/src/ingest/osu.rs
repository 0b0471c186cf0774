//! Reader for the Taiko subset of the community `.osu` text format.
//!
//! Only circles are kept. Hitsound bits pick the kind: whistle (2) or
//! clap (8) make a kat, otherwise a don; finish (4) promotes either to its
//! big variant. Timing comes from the first uninherited timing point.

use std::collections::HashSet;

use thiserror::Error;

use crate::chart::{quantize_to_frame, Chart, ChartError, Note, NoteKind, Provenance};

/// Silence appended after the last hit object when deriving a chart duration.
pub const OSU_TAIL_MS: u64 = 1000;

const TYPE_CIRCLE: u32 = 1;
const HITSOUND_WHISTLE: u32 = 2;
const HITSOUND_FINISH: u32 = 4;
const HITSOUND_CLAP: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OsuErrorKind {
    MissingSection(&'static str),
    NotTaiko(String),
    NoTimingPoint,
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OsuError {
    #[error("line {line}: {kind}")]
    Line { line: usize, kind: OsuErrorKind },
    #[error("{0}")]
    Document(OsuErrorKind),
    #[error("invalid chart: {0}")]
    Chart(#[from] ChartError),
}

impl std::fmt::Display for OsuErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OsuErrorKind::MissingSection(s) => write!(f, "missing [{s}] section"),
            OsuErrorKind::NotTaiko(mode) => write!(f, "not a Taiko beatmap (Mode: {mode})"),
            OsuErrorKind::NoTimingPoint => f.write_str("no uninherited timing point"),
            OsuErrorKind::Malformed(msg) => f.write_str(msg),
        }
    }
}

impl OsuError {
    /// 1-based line number of the offending line, when there is one.
    pub fn line(&self) -> Option<usize> {
        match self {
            OsuError::Line { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OsuHitObject {
    pub time_ms: u64,
    pub kind: NoteKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsuTaikoBeatmap {
    pub title: String,
    pub beatmap_id: Option<i64>,
    pub bpm: f64,
    pub offset_ms: i64,
    /// Retained circles, in time order, at most one per frame.
    pub hit_objects: Vec<OsuHitObject>,
    /// Sliders, spinners and other non-circle objects.
    pub skipped_objects: usize,
    /// Circles dropped because an earlier circle occupied the same frame.
    pub dropped_collisions: usize,
    /// Latest time touched by any hit object, including skipped ones.
    pub last_object_ms: u64,
}

#[derive(PartialEq, Clone, Copy)]
enum Section {
    Preamble,
    General,
    Metadata,
    TimingPoints,
    HitObjects,
    Other,
}

fn malformed(line: usize, msg: impl Into<String>) -> OsuError {
    OsuError::Line {
        line,
        kind: OsuErrorKind::Malformed(msg.into()),
    }
}

fn parse_num<T: std::str::FromStr>(field: &str, what: &str, line: usize) -> Result<T, OsuError> {
    field
        .trim()
        .parse()
        .map_err(|_| malformed(line, format!("invalid {what} {field:?}")))
}

fn kind_from_hitsound(hitsound: u32) -> NoteKind {
    let rim = hitsound & (HITSOUND_WHISTLE | HITSOUND_CLAP) != 0;
    let big = hitsound & HITSOUND_FINISH != 0;
    match (rim, big) {
        (false, false) => NoteKind::Don,
        (true, false) => NoteKind::Kat,
        (false, true) => NoteKind::BigDon,
        (true, true) => NoteKind::BigKat,
    }
}

impl OsuTaikoBeatmap {
    pub fn parse(document: &str) -> Result<Self, OsuError> {
        let mut section = Section::Preamble;
        let mut seen = HashSet::new();
        let mut mode: Option<(String, usize)> = None;
        let mut title = String::new();
        let mut beatmap_id = None;
        let mut timing: Option<(f64, i64)> = None;
        let mut raw_objects: Vec<(u64, NoteKind)> = Vec::new();
        let mut skipped_objects = 0;
        let mut last_object_ms = 0u64;

        for (idx, raw) in document.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_start_matches('\u{feff}').trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = match &line[1..line.len() - 1] {
                    "General" => Section::General,
                    "Metadata" => Section::Metadata,
                    "TimingPoints" => Section::TimingPoints,
                    "HitObjects" => Section::HitObjects,
                    _ => Section::Other,
                };
                seen.insert(line[1..line.len() - 1].to_string());
                continue;
            }
            match section {
                Section::Preamble => {
                    if !line.starts_with("osu file format") {
                        return Err(malformed(line_no, "expected \"osu file format vN\" header"));
                    }
                }
                Section::General | Section::Metadata => {
                    let (key, value) = line
                        .split_once(':')
                        .ok_or_else(|| malformed(line_no, "expected \"Key: Value\""))?;
                    let value = value.trim();
                    match (section, key.trim()) {
                        (Section::General, "Mode") => mode = Some((value.to_string(), line_no)),
                        (Section::Metadata, "Title") => title = value.to_string(),
                        (Section::Metadata, "BeatmapID") => {
                            beatmap_id = Some(parse_num(value, "BeatmapID", line_no)?)
                        }
                        _ => {}
                    }
                }
                Section::TimingPoints => {
                    let fields: Vec<&str> = line.split(',').collect();
                    if fields.len() < 2 {
                        return Err(malformed(
                            line_no,
                            "timing point needs at least time,beatLength",
                        ));
                    }
                    let time: f64 = parse_num(fields[0], "timing point time", line_no)?;
                    let beat_length: f64 = parse_num(fields[1], "beat length", line_no)?;
                    let uninherited = match fields.get(6) {
                        Some(f) => parse_num::<i32>(f, "uninherited flag", line_no)? == 1,
                        None => beat_length > 0.0,
                    };
                    if uninherited && timing.is_none() {
                        if !(beat_length.is_finite() && beat_length > 0.0) {
                            return Err(malformed(
                                line_no,
                                format!("beat length {beat_length} must be positive"),
                            ));
                        }
                        timing = Some((60_000.0 / beat_length, time.round() as i64));
                    }
                }
                Section::HitObjects => {
                    let fields: Vec<&str> = line.split(',').collect();
                    if fields.len() < 5 {
                        return Err(malformed(
                            line_no,
                            "hit object needs x,y,time,type,hitSound",
                        ));
                    }
                    let time: i64 = parse_num(fields[2], "hit object time", line_no)?;
                    if time < 0 {
                        return Err(malformed(
                            line_no,
                            format!("negative hit object time {time}"),
                        ));
                    }
                    let obj_type: u32 = parse_num(fields[3], "hit object type", line_no)?;
                    let hitsound: u32 = parse_num(fields[4], "hitsound", line_no)?;
                    let time = time as u64;
                    // spinner end time is field 5; slider length is not resolvable without slider velocity
                    let end = if obj_type & 8 != 0 {
                        fields
                            .get(5)
                            .and_then(|f| f.trim().parse::<u64>().ok())
                            .unwrap_or(time)
                    } else {
                        time
                    };
                    last_object_ms = last_object_ms.max(end);
                    if obj_type & TYPE_CIRCLE != 0 {
                        raw_objects.push((time, kind_from_hitsound(hitsound)));
                    } else {
                        skipped_objects += 1;
                    }
                }
                Section::Other => {}
            }
        }

        for required in ["General", "TimingPoints", "HitObjects"] {
            if !seen.contains(required) {
                return Err(OsuError::Document(OsuErrorKind::MissingSection(required)));
            }
        }
        match mode {
            Some((m, _)) if m == "1" => {}
            Some((m, line)) => {
                return Err(OsuError::Line {
                    line,
                    kind: OsuErrorKind::NotTaiko(m),
                })
            }
            None => return Err(OsuError::Document(OsuErrorKind::NotTaiko("0".into()))),
        }
        let (bpm, offset_ms) = timing.ok_or(OsuError::Document(OsuErrorKind::NoTimingPoint))?;

        raw_objects.sort_by_key(|&(t, _)| t);
        let mut hit_objects = Vec::with_capacity(raw_objects.len());
        let mut occupied = HashSet::new();
        let mut dropped_collisions = 0;
        for (time_ms, kind) in raw_objects {
            let frame = quantize_to_frame(time_ms as i64)?;
            if occupied.insert(frame) {
                hit_objects.push(OsuHitObject { time_ms, kind });
            } else {
                dropped_collisions += 1;
            }
        }

        Ok(OsuTaikoBeatmap {
            title,
            beatmap_id,
            bpm,
            offset_ms,
            hit_objects,
            skipped_objects,
            dropped_collisions,
            last_object_ms,
        })
    }

    pub fn song_id(&self) -> String {
        match self.beatmap_id {
            Some(id) if id > 0 => format!("osu-{id}"),
            _ => self.title.clone(),
        }
    }

    /// Converts to a chart. Without an explicit duration the chart ends
    /// [`OSU_TAIL_MS`] after the last hit object.
    pub fn to_chart(&self, duration_ms: Option<u64>) -> Result<Chart, ChartError> {
        let duration = duration_ms.unwrap_or(self.last_object_ms + OSU_TAIL_MS);
        let notes = self
            .hit_objects
            .iter()
            .map(|h| Note::new(h.time_ms, h.kind, Provenance::Human))
            .collect();
        Chart::new(self.song_id(), self.bpm, self.offset_ms, duration, notes)
    }
}

/// Parses a Taiko `.osu` document straight into a chart.
pub fn parse_osu(document: &str) -> Result<Chart, OsuError> {
    Ok(OsuTaikoBeatmap::parse(document)?.to_chart(None)?)
}
