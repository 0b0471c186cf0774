//! Native chart document (JSON).
//!
//! ```json
//! {
//!   "format": "kiai-chart",
//!   "version": 1,
//!   "song_id": "osu-42",
//!   "bpm": 120.0,
//!   "offset_ms": 500,
//!   "duration_ms": 4000,
//!   "notes": [{ "time_ms": 1000, "kind": "don", "provenance": "human" }]
//! }
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{Chart, ChartError, Note, NoteKind, Provenance};

pub const CHART_FORMAT: &str = "kiai-chart";
pub const CHART_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ChartFileError {
    #[error("chart document: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("chart document: field `format` must be \"{CHART_FORMAT}\", got {0:?}")]
    Format(String),
    #[error("chart document: unsupported version {0}")]
    Version(u32),
    #[error("chart document: {0}")]
    Invalid(#[from] ChartError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteRecord {
    pub time_ms: u64,
    pub kind: NoteKind,
    pub provenance: Provenance,
}

/// Serde view of a chart; also embedded in protocol snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartDocument {
    pub format: String,
    pub version: u32,
    pub song_id: String,
    pub bpm: f64,
    pub offset_ms: i64,
    pub duration_ms: u64,
    pub notes: Vec<NoteRecord>,
}

impl From<&Chart> for ChartDocument {
    fn from(chart: &Chart) -> Self {
        ChartDocument {
            format: CHART_FORMAT.to_string(),
            version: CHART_VERSION,
            song_id: chart.song_id().to_string(),
            bpm: chart.bpm(),
            offset_ms: chart.offset_ms(),
            duration_ms: chart.duration_ms(),
            notes: chart
                .notes()
                .iter()
                .map(|n| NoteRecord {
                    time_ms: n.time_ms,
                    kind: n.kind,
                    provenance: n.provenance,
                })
                .collect(),
        }
    }
}

impl TryFrom<ChartDocument> for Chart {
    type Error = ChartFileError;

    fn try_from(doc: ChartDocument) -> Result<Self, Self::Error> {
        if doc.format != CHART_FORMAT {
            return Err(ChartFileError::Format(doc.format));
        }
        if doc.version != CHART_VERSION {
            return Err(ChartFileError::Version(doc.version));
        }
        let notes = doc
            .notes
            .into_iter()
            .map(|r| Note::new(r.time_ms, r.kind, r.provenance))
            .collect();
        Ok(Chart::new(
            doc.song_id,
            doc.bpm,
            doc.offset_ms,
            doc.duration_ms,
            notes,
        )?)
    }
}

pub fn serialize_chart(chart: &Chart) -> String {
    let mut text = serde_json::to_string_pretty(&ChartDocument::from(chart))
        .expect("chart documents always serialize");
    text.push('\n');
    text
}

pub fn parse_chart(text: &str) -> Result<Chart, ChartFileError> {
    let doc: ChartDocument = serde_json::from_str(text)?;
    Chart::try_from(doc)
}
