use std::sync::Arc;

use thiserror::Error;

use super::log::{Event, LogEvent, SessionLog};
use super::{ManualClock, Session, SessionError, SessionSetup, Song};
use crate::model::ModelParams;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log was recorded on song {logged:?}, replay was given {given:?}")]
    Song { logged: String, given: String },
    #[error("log was recorded with a different model configuration")]
    ModelConfig,
    #[error("event {index}: {source}")]
    Command { index: usize, source: SessionError },
    #[error("event {index} differs on replay: logged {logged}, replayed {replayed}")]
    Diverged {
        index: usize,
        logged: String,
        replayed: String,
    },
    #[error("replay produced {replayed} events, log has {logged}")]
    Length { logged: usize, replayed: usize },
    #[error(transparent)]
    Setup(#[from] SessionError),
}

/// Retrain timing is the only field allowed to differ between runs.
fn normalized(e: &LogEvent) -> LogEvent {
    let mut e = e.clone();
    if let Event::Retrain { wall_time_ms, .. } = &mut e.event {
        *wall_time_ms = 0;
    }
    e
}

/// Re-issues the human commands of `log` against a fresh session and checks
/// every derived event (retrains and AI fills) against the recording.
///
/// `base` must be the base model the session started from.
pub fn replay<T: Scalar>(
    log: &SessionLog,
    base: ModelParams<T>,
    song: Song<T>,
) -> Result<Session<T>, ReplayError> {
    let h = &log.header;
    if h.song_id != song.info.song_id {
        return Err(ReplayError::Song {
            logged: h.song_id.clone(),
            given: song.info.song_id.clone(),
        });
    }
    if &h.model != base.config() {
        return Err(ReplayError::ModelConfig);
    }
    let clock = Arc::new(ManualClock::new(0));
    let mut session = Session::new(
        SessionSetup {
            session_id: h.session_id.clone(),
            study_id: h.study_id,
            leg: h.leg,
            strategy: h.strategy,
            delta: h.delta,
            train: h.train,
        },
        base,
        song,
        clock.clone(),
    )?;
    for (index, e) in log.events.iter().enumerate() {
        clock.set(e.t_ms);
        let result = match &e.event {
            Event::Place {
                requested_ms,
                note_kind,
                ..
            } => session.place(*requested_ms, *note_kind).map(drop),
            Event::Delete { time_ms, .. } => session.delete(*time_ms).map(drop),
            Event::PassToAi { region, .. } => session.pass_to_ai(*region).map(drop),
            Event::Finish => {
                session.finish();
                Ok(())
            }
            Event::Retrain { .. } | Event::AiFill { .. } => continue,
        };
        result.map_err(|source| ReplayError::Command { index, source })?;
    }
    let replayed = &session.log().events;
    for (index, (a, b)) in log.events.iter().zip(replayed).enumerate() {
        let (a, b) = (normalized(a), normalized(b));
        if a != b {
            return Err(ReplayError::Diverged {
                index,
                logged: SessionLog::event_line(&a),
                replayed: SessionLog::event_line(&b),
            });
        }
    }
    if replayed.len() != log.events.len() {
        return Err(ReplayError::Length {
            logged: log.events.len(),
            replayed: replayed.len(),
        });
    }
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{session, song, tiny_model};
    use super::*;
    use crate::adapt::StrategyKind;
    use crate::chart::NoteKind;
    use crate::ingest::serialize_chart;
    use crate::model::Region;

    fn scripted(strategy: StrategyKind) -> Session<f32> {
        let mut s = session(strategy, 4);
        s.place(0, NoteKind::Don).unwrap();
        s.place(125, NoteKind::Kat).unwrap();
        s.place(130, NoteKind::Kat).unwrap();
        s.pass_to_ai(Region::new(200, 1500)).unwrap();
        s.delete(250).unwrap();
        s.delete(1600).unwrap();
        s.place(1700, NoteKind::BigDon).unwrap();
        s.pass_to_ai(Region::new(1800, 3999)).unwrap();
        s.finish();
        s
    }

    #[test]
    fn replay_reproduces_the_chart_bytes() {
        for strategy in [
            StrategyKind::Threshold,
            StrategyKind::Naive,
            StrategyKind::Static,
        ] {
            let original = scripted(strategy);
            let log = SessionLog::parse(&original.log().to_text()).unwrap();
            let again = replay(&log, tiny_model(), song("a", 4000)).unwrap();
            assert_eq!(
                serialize_chart(again.chart()),
                serialize_chart(original.chart())
            );
            assert_eq!(
                again.adaptation().retrain_count(),
                original.adaptation().retrain_count()
            );
        }
    }

    #[test]
    fn mismatched_inputs_are_refused() {
        let original = scripted(StrategyKind::Naive);
        let mut cfg = *tiny_model().config();
        cfg.hidden_size = 5;
        let other = ModelParams::init(cfg).unwrap();
        assert!(matches!(
            replay(original.log(), other, song("a", 4000)),
            Err(ReplayError::ModelConfig)
        ));
        assert!(matches!(
            replay(original.log(), tiny_model(), song("b", 4000)),
            Err(ReplayError::Song { .. })
        ));
    }

    #[test]
    fn tampered_fill_is_reported() {
        let original = scripted(StrategyKind::Static);
        let mut log = original.log().clone();
        let idx = log
            .events
            .iter()
            .position(|e| matches!(e.event, Event::AiFill { .. }))
            .unwrap();
        if let Event::AiFill { region, .. } = &mut log.events[idx].event {
            region.end_ms += 1;
        }
        assert!(
            matches!(replay(&log, tiny_model(), song("a", 4000)), Err(ReplayError::Diverged { index, .. }) if index == idx)
        );
    }
}
