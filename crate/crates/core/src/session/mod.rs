//! Co-editing sessions: the human edits, passes a region to the AI, the
//! model adapts to the edits and fills the region.

mod log;
pub mod protocol;
mod replay;
mod service;
mod study;

pub use log::{
    compute_log_statistics, Event, LogError, LogEvent, LogHeader, LogStatistics, SessionLog,
    LOG_FORMAT, LOG_VERSION,
};
pub use replay::{replay, ReplayError};
pub use service::{Service, ServiceConfig};
pub use study::{Condition, StudyConfig};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapt::{AdaptError, AdaptationState, RetrainEvent, StrategyKind};
use crate::chart::{
    frame_count, overall_pattern_score, quantize_to_frame, Chart, ChartError, Note, NoteKind,
    Provenance,
};
use crate::ingest::{load_features, serialize_chart, FeatureFileError, FeatureMatrix, BAND_COUNT};
use crate::model::{
    load_model, make_training_instances, predict_region, validate_region, ModelError,
    ModelFileError, ModelParams, Region, TrainConfig,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leg {
    First,
    Second,
}

impl fmt::Display for Leg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Leg::First => "first",
            Leg::Second => "second",
        })
    }
}

impl FromStr for Leg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first" => Ok(Leg::First),
            "second" => Ok(Leg::Second),
            other => Err(format!("unknown leg {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Editing,
    AiTurn,
    Finished,
}

/// Millisecond wall clock; injectable so logs can be replayed exactly.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    }
}

#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{op} is not allowed while the session is {phase:?}")]
    WrongPhase { op: &'static str, phase: Phase },
    #[error("time {time_ms}ms is outside the {duration_ms}ms song")]
    TimeOutOfRange { time_ms: u64, duration_ms: u64 },
    #[error("region: {0}")]
    Region(ModelError),
    #[error("unknown song {0:?}")]
    UnknownSong(String),
    #[error("song file {path}: {reason}")]
    SongFile { path: PathBuf, reason: String },
    #[error("base model: {0}")]
    BaseModel(#[from] ModelFileError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Timing metadata of a study song; stored as `<song_id>.song.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongInfo {
    pub song_id: String,
    pub bpm: f64,
    pub offset_ms: i64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone)]
pub struct Song<T> {
    pub info: SongInfo,
    pub features: Arc<FeatureMatrix<T>>,
}

impl<T: Scalar> Song<T> {
    pub fn new(info: SongInfo, features: FeatureMatrix<T>) -> Result<Self, SessionError> {
        Chart::empty(&info.song_id, info.bpm, info.offset_ms, info.duration_ms)?;
        let frames = frame_count(info.duration_ms);
        if features.rows() != frames || features.cols() != BAND_COUNT {
            return Err(ModelError::Misaligned {
                song_id: info.song_id.clone(),
                feature_rows: features.rows(),
                feature_cols: features.cols(),
                chart_frames: frames,
            }
            .into());
        }
        Ok(Song {
            info,
            features: Arc::new(features),
        })
    }

    pub fn empty_chart(&self) -> Chart {
        Chart::empty(
            &self.info.song_id,
            self.info.bpm,
            self.info.offset_ms,
            self.info.duration_ms,
        )
        .expect("validated in Song::new")
    }
}

/// Songs available to sessions, keyed by id.
#[derive(Debug, Clone, Default)]
pub struct SongLibrary<T> {
    songs: BTreeMap<String, Song<T>>,
}

impl<T: Scalar> SongLibrary<T> {
    pub fn new() -> Self {
        SongLibrary {
            songs: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, song: Song<T>) {
        self.songs.insert(song.info.song_id.clone(), song);
    }

    pub fn get(&self, song_id: &str) -> Result<&Song<T>, SessionError> {
        self.songs
            .get(song_id)
            .ok_or_else(|| SessionError::UnknownSong(song_id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.songs.keys().map(String::as_str)
    }

    /// Loads every `<id>.song.json` in `dir` with its `<id>.features` file.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, SessionError> {
        let dir = dir.as_ref();
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| SessionError::Io { path, source }
        };
        let mut lib = SongLibrary::new();
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".song.json"))
            .collect();
        entries.sort();
        for path in entries {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let info: SongInfo =
                serde_json::from_str(&text).map_err(|e| SessionError::SongFile {
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
            let feat_path = dir.join(format!("{}.features", info.song_id));
            let features = load_features(&feat_path).map_err(|e: FeatureFileError| {
                SessionError::SongFile {
                    path: feat_path.clone(),
                    reason: e.to_string(),
                }
            })?;
            lib.insert(Song::new(info, features)?);
        }
        Ok(lib)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSetup {
    pub session_id: String,
    pub study_id: u64,
    pub leg: Leg,
    pub strategy: StrategyKind,
    pub delta: usize,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit {
    Place { time_ms: u64, kind: NoteKind },
    Delete { time_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum EditAck {
    Placed {
        note: Note,
    },
    /// The snapped tick's frame already holds a note.
    Rejected {
        time_ms: u64,
        occupied_frame: usize,
    },
    Deleted {
        note: Note,
    },
    /// Nothing in the frame; the session is unchanged.
    NoOp {
        frame: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AiTurn {
    pub instances_added: usize,
    pub retrains: Vec<RetrainEvent>,
    /// Set when a retrain failed; the fill then used the previous model.
    pub retrain_error: Option<String>,
    pub cleared: Vec<Note>,
    pub notes: Vec<Note>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub session_id: String,
    pub study_id: u64,
    pub leg: Leg,
    pub song_id: String,
    pub strategy: StrategyKind,
    #[serde(flatten)]
    pub statistics: LogStatistics,
    pub retrain_count: usize,
    pub final_note_count: usize,
    /// Absent for songs shorter than one pattern window.
    pub overall_pattern_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalizedSession {
    pub chart_path: PathBuf,
    pub log_path: PathBuf,
    pub metrics_path: PathBuf,
    pub metrics: MetricsReport,
}

pub struct Session<T: Scalar> {
    setup: SessionSetup,
    song: Song<T>,
    chart: Chart,
    model: ModelParams<T>,
    adaptation: AdaptationState<T>,
    log: SessionLog,
    phase: Phase,
    /// Frames touched by human edits since the last pass, as (first, last).
    edited: Option<(usize, usize)>,
    clock: Arc<dyn Clock>,
}

impl<T: Scalar> fmt::Debug for Session<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("setup", &self.setup)
            .field("phase", &self.phase)
            .field("notes", &self.chart.notes().len())
            .field("retrain_count", &self.adaptation.retrain_count())
            .finish()
    }
}

impl<T: Scalar> Session<T> {
    pub fn new(
        setup: SessionSetup,
        base: ModelParams<T>,
        song: Song<T>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, SessionError> {
        let adaptation = AdaptationState::new(setup.strategy, setup.delta, setup.train)?;
        let header = LogHeader {
            format: LOG_FORMAT.to_string(),
            version: LOG_VERSION,
            session_id: setup.session_id.clone(),
            study_id: setup.study_id,
            leg: setup.leg,
            song_id: song.info.song_id.clone(),
            strategy: setup.strategy,
            delta: setup.delta,
            train: setup.train,
            model: *base.config(),
        };
        Ok(Session {
            chart: song.empty_chart(),
            log: SessionLog::new(header),
            setup,
            song,
            model: base,
            adaptation,
            phase: Phase::Editing,
            edited: None,
            clock,
        })
    }

    pub fn id(&self) -> &str {
        &self.setup.session_id
    }

    pub fn setup(&self) -> &SessionSetup {
        &self.setup
    }

    pub fn song(&self) -> &Song<T> {
        &self.song
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn model(&self) -> &ModelParams<T> {
        &self.model
    }

    pub fn adaptation(&self) -> &AdaptationState<T> {
        &self.adaptation
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn strategy(&self) -> StrategyKind {
        self.setup.strategy
    }

    pub fn edited_span(&self) -> Option<(usize, usize)> {
        self.edited
    }

    fn designer_id(&self) -> String {
        format!("study-{}", self.setup.study_id)
    }

    fn expect_editing(&self, op: &'static str) -> Result<(), SessionError> {
        if self.phase != Phase::Editing {
            return Err(SessionError::WrongPhase {
                op,
                phase: self.phase,
            });
        }
        Ok(())
    }

    fn check_time(&self, time_ms: u64) -> Result<(), SessionError> {
        if time_ms > self.chart.duration_ms() {
            return Err(SessionError::TimeOutOfRange {
                time_ms,
                duration_ms: self.chart.duration_ms(),
            });
        }
        Ok(())
    }

    fn mark_edited(&mut self, frame: usize) {
        self.edited = Some(match self.edited {
            None => (frame, frame),
            Some((a, b)) => (a.min(frame), b.max(frame)),
        });
    }

    fn push(&mut self, t_ms: u64, event: Event) {
        self.log.events.push(LogEvent { t_ms, event });
    }

    pub fn apply_edit(&mut self, edit: Edit) -> Result<EditAck, SessionError> {
        match edit {
            Edit::Place { time_ms, kind } => self.place(time_ms, kind),
            Edit::Delete { time_ms } => self.delete(time_ms),
        }
    }

    /// Places a human note at the tick nearest `time_ms`.
    pub fn place(&mut self, time_ms: u64, kind: NoteKind) -> Result<EditAck, SessionError> {
        self.expect_editing("place")?;
        self.check_time(time_ms)?;
        let t = self.clock.now_ms();
        let snapped = self
            .chart
            .grid()
            .snap_within(time_ms as i64, self.chart.duration_ms())
            .ok_or(SessionError::TimeOutOfRange {
                time_ms,
                duration_ms: self.chart.duration_ms(),
            })?;
        let note = Note::new(snapped, kind, Provenance::Human);
        let (ack, accepted, occupied_frame) = match self.chart.insert(note) {
            Ok(()) => (EditAck::Placed { note }, true, None),
            Err(ChartError::Collision { frame }) => (
                EditAck::Rejected {
                    time_ms: snapped,
                    occupied_frame: frame,
                },
                false,
                Some(frame),
            ),
            Err(e) => return Err(e.into()),
        };
        if accepted {
            self.mark_edited(note.frame());
        }
        self.push(
            t,
            Event::Place {
                requested_ms: time_ms,
                time_ms: snapped,
                note_kind: kind,
                accepted,
                occupied_frame,
            },
        );
        Ok(ack)
    }

    /// Removes whichever note occupies the frame enclosing `time_ms`.
    pub fn delete(&mut self, time_ms: u64) -> Result<EditAck, SessionError> {
        self.expect_editing("delete")?;
        self.check_time(time_ms)?;
        let t = self.clock.now_ms();
        let frame = quantize_to_frame(time_ms as i64)?;
        let removed = self.chart.remove_at_frame(frame);
        if removed.is_some() {
            self.mark_edited(frame);
        }
        self.push(
            t,
            Event::Delete {
                time_ms,
                frame,
                removed,
            },
        );
        Ok(match removed {
            Some(note) => EditAck::Deleted { note },
            None => EditAck::NoOp { frame },
        })
    }

    /// Ends the human turn: adapts on the edited span, then fills `region`.
    pub fn pass_to_ai(&mut self, region: Region) -> Result<AiTurn, SessionError> {
        self.expect_editing("pass_to_ai")?;
        validate_region(&self.chart, region).map_err(SessionError::Region)?;
        let t = self.clock.now_ms();
        self.phase = Phase::AiTurn;

        let instances = match self.edited {
            Some((a, b)) => make_training_instances(
                self.model.config(),
                &self.chart,
                &self.song.features,
                a..b + 1,
                &self.designer_id(),
            )?,
            None => Vec::new(),
        };
        let instances_added = instances.len();
        self.push(
            t,
            Event::PassToAi {
                region,
                edited_span: self.edited,
                instances: instances_added,
            },
        );

        let (retrains, retrain_error) = match self.adaptation.add_instances(instances, &self.model)
        {
            Ok((model, events)) => {
                self.model = model;
                self.edited = None;
                (events, None)
            }
            Err(err) => {
                let buffer_size = match &err {
                    AdaptError::Retrain { buffer_size, .. } => *buffer_size,
                    _ => self.adaptation.buffer().len() + instances_added,
                };
                self.push(
                    t,
                    Event::Retrain {
                        k_after: self.adaptation.retrain_count(),
                        buffer_size_at_trigger: buffer_size,
                        epoch_losses: Vec::new(),
                        wall_time_ms: 0,
                        error: Some(err.to_string()),
                    },
                );
                (Vec::new(), Some(err.to_string()))
            }
        };
        for r in &retrains {
            self.push(
                t,
                Event::Retrain {
                    k_after: r.k_after,
                    buffer_size_at_trigger: r.buffer_size_at_trigger,
                    epoch_losses: r.epoch_losses.clone(),
                    wall_time_ms: r.wall_time_ms,
                    error: None,
                },
            );
        }

        let mut chart = self.chart.clone();
        let cleared = chart.remove_in_range(region.start_ms, region.end_ms);
        let notes = match predict_region(
            &self.model,
            &self.song.features,
            &chart,
            region,
            &chart.grid(),
        ) {
            Ok(notes) => notes,
            Err(e) => {
                self.phase = Phase::Editing;
                return Err(e.into());
            }
        };
        for n in &notes {
            chart
                .insert(*n)
                .expect("predicted notes occupy free frames");
        }
        self.chart = chart;
        self.push(
            t,
            Event::AiFill {
                region,
                cleared: cleared.clone(),
                notes: notes.clone(),
            },
        );
        self.phase = Phase::Editing;
        Ok(AiTurn {
            instances_added,
            retrains,
            retrain_error,
            cleared,
            notes,
        })
    }

    /// Closes the session; a second call is a no-op.
    pub fn finish(&mut self) {
        if self.phase != Phase::Finished {
            let t = self.clock.now_ms();
            self.push(t, Event::Finish);
            self.phase = Phase::Finished;
        }
    }

    pub fn statistics(&self) -> Result<LogStatistics, LogError> {
        compute_log_statistics(&self.log.events)
    }

    pub fn metrics(&self) -> Result<MetricsReport, LogError> {
        Ok(MetricsReport {
            session_id: self.setup.session_id.clone(),
            study_id: self.setup.study_id,
            leg: self.setup.leg,
            song_id: self.song.info.song_id.clone(),
            strategy: self.setup.strategy,
            statistics: self.statistics()?,
            retrain_count: self.adaptation.retrain_count(),
            final_note_count: self.chart.notes().len(),
            overall_pattern_score: overall_pattern_score(&self.chart.to_frame_sequence()).ok(),
        })
    }
}

/// Creates a session for one leg of a study with a fresh base-model replica.
pub fn create_session<T: Scalar>(
    study: &StudyConfig,
    study_id: u64,
    leg: Leg,
    session_id: impl Into<String>,
    base_model_path: impl AsRef<Path>,
    songs: &SongLibrary<T>,
    clock: Arc<dyn Clock>,
) -> Result<Session<T>, SessionError> {
    let condition = study.assign(study_id, leg);
    let song = songs.get(&condition.song_id)?.clone();
    let base = load_model(base_model_path)?;
    Session::new(
        SessionSetup {
            session_id: session_id.into(),
            study_id,
            leg,
            strategy: condition.strategy,
            delta: study.delta,
            train: study.train,
        },
        base,
        song,
        clock,
    )
}

/// Finishes the session and writes `<id>.chart.json`, `<id>.log.jsonl` and
/// `<id>.metrics.json` into `out_dir`. On failure the session keeps its state.
pub fn finalize_session<T: Scalar>(
    session: &mut Session<T>,
    out_dir: impl AsRef<Path>,
) -> Result<FinalizedSession, SessionError> {
    session.finish();
    let out_dir = out_dir.as_ref();
    let metrics = session.metrics().map_err(|e| SessionError::Io {
        path: out_dir.to_path_buf(),
        source: io::Error::new(io::ErrorKind::InvalidData, e.to_string()),
    })?;
    let write = |name: String, contents: String| -> Result<PathBuf, SessionError> {
        let path = out_dir.join(name);
        fs::write(&path, contents).map_err(|source| SessionError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    };
    fs::create_dir_all(out_dir).map_err(|source| SessionError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let id = session.id().to_string();
    let chart_path = write(format!("{id}.chart.json"), serialize_chart(session.chart()))?;
    let log_path = write(format!("{id}.log.jsonl"), session.log().to_text())?;
    let mut metrics_text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    metrics_text.push('\n');
    let metrics_path = write(format!("{id}.metrics.json"), metrics_text)?;
    Ok(FinalizedSession {
        chart_path,
        log_path,
        metrics_path,
        metrics,
    })
}
