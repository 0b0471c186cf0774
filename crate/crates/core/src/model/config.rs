use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::ingest::BAND_COUNT;

/// Number of per-frame classes: rest plus the four note kinds.
pub const CLASS_COUNT: usize = 5;

/// Architecture of the frame classifier: a single recurrent cell running over
/// the audio window, whose final state is joined with the one-hot note
/// history before the output projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub layers: usize,
    /// Frames of audio on each side of the target frame.
    pub audio_context: usize,
    /// Previous frame classes fed as one-hot vectors.
    pub history_len: usize,
    pub class_count: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_size: 64,
            layers: 1,
            audio_context: 8,
            history_len: 16,
            class_count: CLASS_COUNT,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidConfig(msg.to_string()));
        if self.hidden_size == 0 {
            return bad("hidden_size must be positive");
        }
        if self.layers != 1 {
            return bad("only a single recurrent layer is supported");
        }
        if self.audio_context == 0 {
            return bad("audio_context must be positive");
        }
        if self.history_len == 0 {
            return bad("history_len must be positive");
        }
        if self.class_count != CLASS_COUNT {
            return bad("class_count is fixed at 5");
        }
        Ok(())
    }

    /// Recurrent steps per instance (the audio window length).
    pub fn steps(&self) -> usize {
        2 * self.audio_context + 1
    }

    pub fn input_size(&self) -> usize {
        BAND_COUNT
    }

    pub fn audio_len(&self) -> usize {
        self.steps() * BAND_COUNT
    }

    pub fn gate_size(&self) -> usize {
        4 * self.hidden_size
    }

    /// Width of the output projection input: final hidden state plus history one-hots.
    pub fn head_size(&self) -> usize {
        self.hidden_size + self.history_len * CLASS_COUNT
    }

    /// `(name, rows, cols)` of every tensor, in storage order.
    pub fn tensor_shapes(&self) -> [(&'static str, usize, usize); 5] {
        [
            ("w_input", self.gate_size(), self.input_size()),
            ("w_recurrent", self.gate_size(), self.hidden_size),
            ("b_gates", self.gate_size(), 1),
            ("w_out", CLASS_COUNT, self.head_size()),
            ("b_out", CLASS_COUNT, 1),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensor_shapes().iter().map(|(_, r, c)| r * c).sum()
    }
}

/// Mini-batch gradient descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 5,
            batch_size: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::InvalidConfig(
                "epochs and batch size must be positive".into(),
            ));
        }
        Ok(())
    }
}
