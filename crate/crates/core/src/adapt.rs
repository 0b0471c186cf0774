//! Designer adaptation: when the session model retrains on designer data.
//!
//! * `Threshold` retrains whenever `|D_r| >= delta * (k + 1)`, where `D_r`
//!   is the retraining buffer and `k` the number of retrains so far. The
//!   inequality is evaluated per instance, so a batch that crosses several
//!   thresholds fires several retrains, each on the buffer as it stood when
//!   its threshold was reached.
//! * `Naive` retrains on the whole buffer after every call that adds data.
//! * `Static` collects data but never retrains.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    load_model, ModelError, ModelFileError, ModelParams, SequenceModel, TrainConfig,
    TrainingInstance,
};
use crate::scalar::Scalar;

/// Retraining threshold used when none is configured.
pub const DEFAULT_DELTA: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Threshold,
    Naive,
    Static,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Threshold => "threshold",
            StrategyKind::Naive => "naive",
            StrategyKind::Static => "static",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "threshold" => Ok(StrategyKind::Threshold),
            "naive" => Ok(StrategyKind::Naive),
            "static" => Ok(StrategyKind::Static),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainEvent {
    /// Retrain count after this event.
    pub k_after: usize,
    /// Buffer size when the event fired; also the number of instances trained on.
    pub buffer_size_at_trigger: usize,
    pub epoch_losses: Vec<f64>,
    pub wall_time_ms: u64,
}

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("instance {index} does not fit the model: {source}")]
    Incompatible { index: usize, source: ModelError },
    #[error("retrain at buffer size {buffer_size} failed: {source}")]
    Retrain {
        buffer_size: usize,
        /// Retrains that completed in the same call before the failure; they
        /// were rolled back along with the buffer.
        discarded: Vec<RetrainEvent>,
        source: ModelError,
    },
    #[error("delta must be positive")]
    ZeroDelta,
    #[error("cannot load base model: {0}")]
    BaseModel(#[from] ModelFileError),
}

#[derive(Debug, Clone)]
pub struct AdaptationState<T> {
    strategy: StrategyKind,
    delta: usize,
    buffer: Vec<TrainingInstance<T>>,
    retrain_count: usize,
    train_cfg: TrainConfig,
    /// Buffer length at the last retrain (naive strategy bookkeeping).
    trained_len: usize,
}

impl<T: Scalar> AdaptationState<T> {
    pub fn new(
        strategy: StrategyKind,
        delta: usize,
        train_cfg: TrainConfig,
    ) -> Result<Self, AdaptError> {
        if delta == 0 {
            return Err(AdaptError::ZeroDelta);
        }
        train_cfg
            .validate()
            .map_err(|source| AdaptError::Incompatible { index: 0, source })?;
        Ok(AdaptationState {
            strategy,
            delta,
            buffer: Vec::new(),
            retrain_count: 0,
            train_cfg,
            trained_len: 0,
        })
    }

    pub fn strategy(&self) -> StrategyKind {
        self.strategy
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn retrain_count(&self) -> usize {
        self.retrain_count
    }

    pub fn buffer(&self) -> &[TrainingInstance<T>] {
        &self.buffer
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.train_cfg
    }

    /// Buffer size at which the threshold strategy next fires.
    pub fn next_trigger(&self) -> usize {
        self.delta * (self.retrain_count + 1)
    }

    pub fn should_retrain(&self) -> bool {
        match self.strategy {
            StrategyKind::Threshold => self.buffer.len() >= self.next_trigger(),
            StrategyKind::Naive => self.buffer.len() > self.trained_len,
            StrategyKind::Static => false,
        }
    }

    /// Appends `new` to the buffer in order and fires every retrain it makes due.
    ///
    /// Returns the model to use from now on and the retrains that ran. On a
    /// training failure the buffer, retrain count and model are all left as
    /// they were before the call.
    pub fn add_instances<M: SequenceModel<T>>(
        &mut self,
        new: Vec<TrainingInstance<T>>,
        model: &M,
    ) -> Result<(M, Vec<RetrainEvent>), AdaptError> {
        let cfg = model.config();
        for (index, inst) in new.iter().enumerate() {
            if inst.audio.len() != cfg.audio_len() || inst.history.len() != cfg.history_len {
                return Err(AdaptError::Incompatible {
                    index,
                    source: ModelError::Dimension {
                        what: "training instance",
                        expected: cfg.audio_len() + cfg.history_len,
                        actual: inst.audio.len() + inst.history.len(),
                    },
                });
            }
        }
        let added = !new.is_empty();
        let saved = (self.buffer.len(), self.retrain_count, self.trained_len);
        self.buffer.extend(new);

        let mut current = model.clone();
        let mut events = Vec::new();
        let outcome = loop {
            let size = match self.strategy {
                StrategyKind::Static => break Ok(()),
                StrategyKind::Naive if !(added && self.should_retrain()) => break Ok(()),
                StrategyKind::Naive => self.buffer.len(),
                StrategyKind::Threshold if !self.should_retrain() => break Ok(()),
                StrategyKind::Threshold => self.next_trigger(),
            };
            let started = Instant::now();
            match current.fit(&self.buffer[..size], &self.train_cfg) {
                Ok(trained) => {
                    current = trained.model;
                    self.retrain_count += 1;
                    self.trained_len = size;
                    events.push(RetrainEvent {
                        k_after: self.retrain_count,
                        buffer_size_at_trigger: size,
                        epoch_losses: trained.epoch_losses,
                        wall_time_ms: started.elapsed().as_millis() as u64,
                    });
                    if self.strategy == StrategyKind::Naive {
                        break Ok(());
                    }
                }
                Err(source) => break Err((size, source)),
            }
        };
        match outcome {
            Ok(()) => Ok((current, events)),
            Err((buffer_size, source)) => {
                self.buffer.truncate(saved.0);
                self.retrain_count = saved.1;
                self.trained_len = saved.2;
                Err(AdaptError::Retrain {
                    buffer_size,
                    discarded: events,
                    source,
                })
            }
        }
    }

    /// Empties the buffer and zeroes the retrain count, optionally switching strategy.
    pub fn reset_with(&mut self, strategy: Option<StrategyKind>) {
        self.buffer.clear();
        self.retrain_count = 0;
        self.trained_len = 0;
        if let Some(s) = strategy {
            self.strategy = s;
        }
    }

    /// Loads the base model and resets; on a load error nothing changes.
    pub fn reset(
        &mut self,
        base_model_path: impl AsRef<Path>,
        strategy: Option<StrategyKind>,
    ) -> Result<ModelParams<T>, AdaptError> {
        let model = load_model(base_model_path)?;
        self.reset_with(strategy);
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};

    use super::*;
    use crate::model::{ModelConfig, ModelInput, Trained, CLASS_COUNT};

    /// Records the size of every training set it is fitted on.
    #[derive(Clone)]
    struct Recorder {
        cfg: ModelConfig,
        fits: Arc<Mutex<Vec<usize>>>,
        fail_at: Option<usize>,
        generation: usize,
    }

    impl Recorder {
        fn new() -> Self {
            Recorder {
                cfg: ModelConfig {
                    hidden_size: 1,
                    audio_context: 1,
                    history_len: 1,
                    ..ModelConfig::default()
                },
                fits: Arc::default(),
                fail_at: None,
                generation: 0,
            }
        }
    }

    impl SequenceModel<f32> for Recorder {
        fn config(&self) -> &ModelConfig {
            &self.cfg
        }
        fn predict(&self, _: ModelInput<'_, f32>) -> Result<[f32; CLASS_COUNT], ModelError> {
            Ok([1.0, 0.0, 0.0, 0.0, 0.0])
        }
        fn fit(
            &self,
            data: &[TrainingInstance<f32>],
            _: &TrainConfig,
        ) -> Result<Trained<Self>, ModelError> {
            if Some(data.len()) == self.fail_at {
                return Err(ModelError::NonFiniteLoss { epoch: 0, batch: 0 });
            }
            self.fits.lock().unwrap().push(data.len());
            Ok(Trained {
                model: Recorder {
                    generation: self.generation + 1,
                    ..self.clone()
                },
                epoch_losses: vec![1.0],
            })
        }
    }

    static COUNTER: AtomicUsize = AtomicUsize::new(0);

    fn inst() -> TrainingInstance<f32> {
        let id = COUNTER.fetch_add(1, Ordering::Relaxed);
        TrainingInstance {
            audio: vec![id as f32; 3 * 40],
            history: vec![None],
            target: 0,
            designer_id: Arc::from("d"),
        }
    }

    fn batch(n: usize) -> Vec<TrainingInstance<f32>> {
        (0..n).map(|_| inst()).collect()
    }

    fn state(strategy: StrategyKind, delta: usize) -> AdaptationState<f32> {
        AdaptationState::new(strategy, delta, TrainConfig::default()).unwrap()
    }

    #[test]
    fn should_retrain_examples() {
        let model = Recorder::new();
        let mut s = state(StrategyKind::Threshold, DEFAULT_DELTA);
        s.buffer.extend(batch(DEFAULT_DELTA));
        assert!(s.should_retrain());

        let mut s = state(StrategyKind::Threshold, 4);
        s.add_instances(batch(4), &model).unwrap();
        assert_eq!(s.retrain_count(), 1);
        s.add_instances(batch(3), &model).unwrap();
        assert_eq!(s.buffer().len(), 7);
        assert!(!s.should_retrain(), "7 < 8");

        let mut s = state(StrategyKind::Static, 1);
        s.add_instances(batch(50), &model).unwrap();
        assert!(!s.should_retrain());
    }

    #[test]
    fn one_at_a_time_fires_at_multiples_of_delta() {
        let model = Recorder::new();
        let mut s = state(StrategyKind::Threshold, 4);
        let mut fired_at = Vec::new();
        let mut m = model.clone();
        for _ in 0..13 {
            let (next, events) = s.add_instances(batch(1), &m).unwrap();
            m = next;
            fired_at.extend(events.iter().map(|e| (e.buffer_size_at_trigger, e.k_after)));
        }
        assert_eq!(fired_at, vec![(4, 1), (8, 2), (12, 3)]);
        assert_eq!(*model.fits.lock().unwrap(), vec![4, 8, 12]);
        assert_eq!(m.generation, 3);
    }

    #[test]
    fn one_batch_can_cross_several_thresholds() {
        let model = Recorder::new();
        let mut s = state(StrategyKind::Threshold, 4);
        let (_, events) = s.add_instances(batch(9), &model).unwrap();
        assert_eq!(
            events
                .iter()
                .map(|e| e.buffer_size_at_trigger)
                .collect::<Vec<_>>(),
            vec![4, 8]
        );
        assert_eq!(s.retrain_count(), 2);
        assert!(s.buffer().len() < s.next_trigger());
    }

    #[test]
    fn naive_retrains_once_per_call_on_everything() {
        let model = Recorder::new();
        let mut s = state(StrategyKind::Naive, DEFAULT_DELTA);
        for _ in 0..3 {
            s.add_instances(batch(1), &model).unwrap();
        }
        assert_eq!(*model.fits.lock().unwrap(), vec![1, 2, 3]);
        let (_, events) = s.add_instances(Vec::new(), &model).unwrap();
        assert!(events.is_empty());
        s.add_instances(batch(5), &model).unwrap();
        assert_eq!(*model.fits.lock().unwrap(), vec![1, 2, 3, 8]);
    }

    #[test]
    fn static_never_retrains() {
        let model = Recorder::new();
        let mut s = state(StrategyKind::Static, 1);
        let (m, events) = s.add_instances(batch(10), &model).unwrap();
        assert!(events.is_empty());
        assert_eq!(m.generation, 0);
        assert!(model.fits.lock().unwrap().is_empty());
    }

    #[test]
    fn failed_retrain_rolls_everything_back() {
        let mut model = Recorder::new();
        model.fail_at = Some(8);
        let mut s = state(StrategyKind::Threshold, 4);
        s.add_instances(batch(2), &model).unwrap();
        let Err(err) = s.add_instances(batch(7), &model) else {
            panic!("retrain should fail")
        };
        match err {
            AdaptError::Retrain {
                buffer_size,
                discarded,
                ..
            } => {
                assert_eq!(buffer_size, 8);
                assert_eq!(discarded.len(), 1);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(s.buffer().len(), 2);
        assert_eq!(s.retrain_count(), 0);
        // once the cause is gone the trigger fires again
        model.fail_at = None;
        let (_, events) = s.add_instances(batch(7), &model).unwrap();
        assert_eq!(events.len(), 2);
    }

    #[test]
    fn insertion_order_is_kept() {
        let model = Recorder::new();
        let mut s = state(StrategyKind::Static, 1);
        let b = batch(5);
        let ids: Vec<f32> = b.iter().map(|i| i.audio[0]).collect();
        s.add_instances(b, &model).unwrap();
        assert_eq!(
            s.buffer().iter().map(|i| i.audio[0]).collect::<Vec<_>>(),
            ids
        );
    }

    #[test]
    fn incompatible_instances_change_nothing() {
        let model = Recorder::new();
        let mut s = state(StrategyKind::Threshold, 1);
        let mut b = batch(3);
        b[2].history.push(None);
        assert!(matches!(
            s.add_instances(b, &model),
            Err(AdaptError::Incompatible { index: 2, .. })
        ));
        assert!(s.buffer().is_empty());
    }

    #[test]
    fn reset_clears_and_switches() {
        let model = Recorder::new();
        let mut s = state(StrategyKind::Threshold, 2);
        s.add_instances(batch(5), &model).unwrap();
        assert!(s
            .reset("/nonexistent/base.model", Some(StrategyKind::Naive))
            .is_err());
        assert_eq!(s.buffer().len(), 5);
        assert_eq!(s.strategy(), StrategyKind::Threshold);
        s.reset_with(Some(StrategyKind::Naive));
        assert_eq!(
            (s.buffer().len(), s.retrain_count(), s.strategy()),
            (0, 0, StrategyKind::Naive)
        );
    }

    #[test]
    fn zero_delta_rejected() {
        assert!(matches!(
            AdaptationState::<f32>::new(StrategyKind::Threshold, 0, TrainConfig::default()),
            Err(AdaptError::ZeroDelta)
        ));
    }
}
