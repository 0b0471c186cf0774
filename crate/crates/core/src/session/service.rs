use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use super::protocol::{Command, ErrorCode, Reply, Request, Response, PROTOCOL_VERSION};
use super::{
    create_session, finalize_session, Clock, Session, SessionError, SessionLog, SongLibrary,
    StudyConfig,
};
use crate::ingest::ChartDocument;
use crate::model::{load_model, ModelParams, Region};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub base_model_path: PathBuf,
    pub out_dir: PathBuf,
    pub study: StudyConfig,
}

struct Entry<T: Scalar> {
    session: Session<T>,
    /// Events already appended to the on-disk log.
    flushed: usize,
}

/// Request dispatcher shared by every transport.
///
/// Sessions are independent; commands for one session run one at a time in
/// arrival order while other sessions keep going.
pub struct Service<T: Scalar> {
    cfg: ServiceConfig,
    songs: SongLibrary<T>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Entry<T>>>>>,
    next_id: AtomicU64,
    clock: Arc<dyn Clock>,
}

fn code_of(e: &SessionError) -> ErrorCode {
    match e {
        SessionError::WrongPhase { .. } => ErrorCode::WrongPhase,
        SessionError::TimeOutOfRange { .. } => ErrorCode::OutOfRange,
        SessionError::Region(_) => ErrorCode::InvalidRegion,
        SessionError::UnknownSong(_)
        | SessionError::BaseModel(_)
        | SessionError::SongFile { .. } => ErrorCode::Internal,
        SessionError::Io { .. } => ErrorCode::Persistence,
        _ => ErrorCode::Internal,
    }
}

impl<T: Scalar> Service<T> {
    /// Checks up front that the base model loads and both study songs exist.
    pub fn new(
        cfg: ServiceConfig,
        songs: SongLibrary<T>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, SessionError> {
        let _: ModelParams<T> = load_model(&cfg.base_model_path)?;
        for id in &cfg.study.songs {
            songs.get(id)?;
        }
        fs::create_dir_all(&cfg.out_dir).map_err(|source| SessionError::Io {
            path: cfg.out_dir.clone(),
            source,
        })?;
        Ok(Service {
            cfg,
            songs,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(0),
            clock,
        })
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .lock()
            .expect("session map lock")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    /// Parses a JSON request and returns the JSON reply.
    pub fn handle_json(&self, text: &str) -> String {
        let response = match serde_json::from_str::<Request>(text) {
            Ok(req) => self.handle(req),
            Err(e) => Response::error(None, ErrorCode::BadRequest, e.to_string()),
        };
        serde_json::to_string(&response).expect("responses serialize")
    }

    pub fn handle(&self, req: Request) -> Response {
        if req.version != PROTOCOL_VERSION {
            return Response::error(
                req.session_id,
                ErrorCode::UnsupportedVersion,
                format!(
                    "protocol version {} is not supported; use {PROTOCOL_VERSION}",
                    req.version
                ),
            );
        }
        if let Command::CreateSession { study_id, leg } = req.command {
            return self.create(study_id, leg);
        }
        let Some(id) = req.session_id.clone() else {
            return Response::error(
                None,
                ErrorCode::BadRequest,
                format!("{} needs a session_id", req.command.name()),
            );
        };
        let entry = self
            .sessions
            .lock()
            .expect("session map lock")
            .get(&id)
            .cloned();
        let Some(entry) = entry else {
            return Response::error(
                Some(id.clone()),
                ErrorCode::UnknownSession,
                format!("no session {id:?}"),
            );
        };
        let mut entry = entry.lock().expect("session lock");
        let finishing = matches!(req.command, Command::Finish {});
        let reply = self.dispatch(&mut entry.session, req.command);
        if finishing && reply.is_ok() {
            // finalize_session rewrote the whole log file
            entry.flushed = entry.session.log().events.len();
        }
        let reply = match (reply, self.flush(&mut entry)) {
            (Ok(reply), Ok(())) => reply,
            (Err(e), _) => Reply::Error {
                code: code_of(&e),
                message: e.to_string(),
            },
            (Ok(_), Err(e)) => Reply::Error {
                code: ErrorCode::Persistence,
                message: format!("applied, but the log could not be written: {e}"),
            },
        };
        Response::new(Some(id), reply)
    }

    fn create(&self, study_id: u64, leg: super::Leg) -> Response {
        let n = self.next_id.fetch_add(1, Ordering::SeqCst);
        let id = format!("{study_id}-{leg}-{n}");
        let session = match create_session(
            &self.cfg.study,
            study_id,
            leg,
            &id,
            &self.cfg.base_model_path,
            &self.songs,
            self.clock.clone(),
        ) {
            Ok(s) => s,
            Err(e) => return Response::error(None, code_of(&e), e.to_string()),
        };
        let reply = Reply::SessionCreated {
            leg,
            song: session.song().info.clone(),
            chart: ChartDocument::from(session.chart()),
        };
        let mut entry = Entry {
            session,
            flushed: 0,
        };
        let path = self.log_path(&id);
        let header = format!("{}\n", entry.session.log().header_line());
        if let Err(e) = fs::write(&path, header).and_then(|_| self.flush(&mut entry)) {
            return Response::error(
                None,
                ErrorCode::Persistence,
                format!("{}: {e}", path.display()),
            );
        }
        self.sessions
            .lock()
            .expect("session map lock")
            .insert(id.clone(), Arc::new(Mutex::new(entry)));
        Response::new(Some(id), reply)
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.cfg.out_dir.join(format!("{id}.log.jsonl"))
    }

    fn flush(&self, entry: &mut Entry<T>) -> std::io::Result<()> {
        let events = &entry.session.log().events;
        if entry.flushed == events.len() {
            return Ok(());
        }
        let mut file = OpenOptions::new()
            .append(true)
            .open(self.log_path(entry.session.id()))?;
        let mut text = String::new();
        for e in &events[entry.flushed..] {
            text.push_str(&SessionLog::event_line(e));
            text.push('\n');
        }
        file.write_all(text.as_bytes())?;
        entry.flushed = events.len();
        Ok(())
    }

    fn dispatch(&self, session: &mut Session<T>, command: Command) -> Result<Reply, SessionError> {
        Ok(match command {
            Command::CreateSession { .. } => unreachable!("handled before dispatch"),
            Command::Place { time_ms, kind } => Reply::EditAck {
                ack: session.place(time_ms, kind)?,
                chart: ChartDocument::from(session.chart()),
            },
            Command::Delete { time_ms } => Reply::EditAck {
                ack: session.delete(time_ms)?,
                chart: ChartDocument::from(session.chart()),
            },
            Command::PassToAi { start_ms, end_ms } => {
                let turn = session.pass_to_ai(Region::new(start_ms, end_ms))?;
                Reply::AiFill {
                    notes: turn.notes,
                    cleared: turn.cleared,
                    retrains: turn.retrains.len(),
                    retrain_error: turn.retrain_error,
                    chart: ChartDocument::from(session.chart()),
                }
            }
            Command::Snapshot {} => Reply::Snapshot {
                phase: session.phase(),
                chart: ChartDocument::from(session.chart()),
            },
            Command::Finish {} => {
                let done = finalize_session(session, &self.cfg.out_dir)?;
                Reply::Finished {
                    metrics: done.metrics,
                    chart_path: done.chart_path.display().to_string(),
                    log_path: done.log_path.display().to_string(),
                    metrics_path: done.metrics_path.display().to_string(),
                }
            }
        })
    }
}
