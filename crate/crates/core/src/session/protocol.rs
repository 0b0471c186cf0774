//! Wire protocol, version 1.
//!
//! Every message is a JSON object `{version, type, session_id, payload}`.
//! Requests:
//!
//! | type             | payload                       | needs session_id |
//! |------------------|-------------------------------|------------------|
//! | `create_session` | `{study_id, leg}`             | no               |
//! | `place`          | `{time_ms, kind}`             | yes              |
//! | `delete`         | `{time_ms}`                   | yes              |
//! | `pass_to_ai`     | `{start_ms, end_ms}`          | yes              |
//! | `snapshot`       | `{}`                          | yes              |
//! | `finish`         | `{}`                          | yes              |
//!
//! Replies are `session_created`, `edit_ack`, `ai_fill`, `snapshot`,
//! `finished` or `error`; each carries the authoritative chart where the
//! chart may have changed.

use serde::{Deserialize, Serialize};

use super::{EditAck, Leg, MetricsReport, Phase, SongInfo};
use crate::chart::{Note, NoteKind};
use crate::ingest::ChartDocument;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub version: u32,
    #[serde(default)]
    pub session_id: Option<String>,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Command {
    CreateSession { study_id: u64, leg: Leg },
    Place { time_ms: u64, kind: NoteKind },
    Delete { time_ms: u64 },
    PassToAi { start_ms: u64, end_ms: u64 },
    Snapshot {},
    Finish {},
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CreateSession { .. } => "create_session",
            Command::Place { .. } => "place",
            Command::Delete { .. } => "delete",
            Command::PassToAi { .. } => "pass_to_ai",
            Command::Snapshot {} => "snapshot",
            Command::Finish {} => "finish",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub version: u32,
    #[serde(default)]
    pub session_id: Option<String>,
    #[serde(flatten)]
    pub reply: Reply,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    UnsupportedVersion,
    UnknownSession,
    WrongPhase,
    OutOfRange,
    InvalidRegion,
    Persistence,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Reply {
    SessionCreated {
        leg: Leg,
        song: SongInfo,
        chart: ChartDocument,
    },
    EditAck {
        ack: EditAck,
        chart: ChartDocument,
    },
    AiFill {
        notes: Vec<Note>,
        cleared: Vec<Note>,
        retrains: usize,
        retrain_error: Option<String>,
        chart: ChartDocument,
    },
    Snapshot {
        phase: Phase,
        chart: ChartDocument,
    },
    Finished {
        metrics: MetricsReport,
        chart_path: String,
        log_path: String,
        metrics_path: String,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

impl Response {
    pub fn new(session_id: Option<String>, reply: Reply) -> Self {
        Response {
            version: PROTOCOL_VERSION,
            session_id,
            reply,
        }
    }

    pub fn error(session_id: Option<String>, code: ErrorCode, message: impl Into<String>) -> Self {
        Response::new(
            session_id,
            Reply::Error {
                code,
                message: message.into(),
            },
        )
    }
}
