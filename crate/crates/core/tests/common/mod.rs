//! Independent reference implementations shared by the integration tests.

use std::sync::{Arc, Mutex};

use kiai_core::chart::{frame_count, Chart, Note, NoteKind, Provenance};
use kiai_core::ingest::FeatureMatrix;
use kiai_core::model::{
    ModelConfig, ModelError, ModelInput, ModelParams, SequenceModel, TrainConfig, Trained,
    TrainingInstance, CLASS_COUNT,
};
use nalgebra::{DMatrix, DVector};

/// Feeds instances one at a time and fires whenever `|D| >= delta * (k + 1)`.
/// Returns the buffer size at every firing.
pub fn brute_force_firings(delta: usize, batches: &[usize]) -> Vec<usize> {
    let mut size = 0;
    let mut fired = Vec::new();
    for &b in batches {
        for _ in 0..b {
            size += 1;
            while size >= delta * (fired.len() + 1) {
                fired.push(delta * (fired.len() + 1));
            }
        }
    }
    fired
}

/// Straight-line recurrent cell and softmax head written against nalgebra.
pub fn forward_oracle(model: &ModelParams<f64>, input: ModelInput<'_, f64>) -> [f64; CLASS_COUNT] {
    let cfg = model.config();
    let h = cfg.hidden_size;
    let [(_, wi), (_, wr), (_, bg), (_, wo), (_, bo)] = model.tensors();
    let w_in = DMatrix::from_row_slice(4 * h, 40, wi);
    let w_rec = DMatrix::from_row_slice(4 * h, h, wr);
    let b = DVector::from_column_slice(bg);
    let w_out = DMatrix::from_row_slice(CLASS_COUNT, cfg.head_size(), wo);
    let b_out = DVector::from_column_slice(bo);

    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut hs = DVector::zeros(h);
    let mut cs = DVector::zeros(h);
    for x in input.audio.chunks(40) {
        let z = &w_in * DVector::from_column_slice(x) + &w_rec * &hs + &b;
        let i = z.rows(0, h).map(sig);
        let f = z.rows(h, h).map(sig);
        let g = z.rows(2 * h, h).map(f64::tanh);
        let o = z.rows(3 * h, h).map(sig);
        cs = f.component_mul(&cs) + i.component_mul(&g);
        hs = o.component_mul(&cs.map(f64::tanh));
    }
    let mut head = DVector::zeros(cfg.head_size());
    head.rows_mut(0, h).copy_from(&hs);
    for (j, c) in input.history.iter().enumerate() {
        if let Some(c) = c {
            head[h + j * CLASS_COUNT + *c as usize] = 1.0;
        }
    }
    let logits = &w_out * head + b_out;
    let max = logits.max();
    let e = logits.map(|l| (l - max).exp());
    let sum = e.sum();
    std::array::from_fn(|k| e[k] / sum)
}

/// `‖g_analytic − g_numeric‖ / (‖g_analytic‖ + ‖g_numeric‖)` with central differences.
pub fn gradient_relative_error(
    model: &ModelParams<f64>,
    data: &[TrainingInstance<f64>],
    step: f64,
) -> f64 {
    let (_, grad) = model.loss_and_gradient(data).unwrap();
    let analytic: Vec<f64> = grad
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter().copied())
        .collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut probe = model.clone();
    for t in 0..5 {
        let len = probe.tensors()[t].1.len();
        for i in 0..len {
            let orig = probe.tensors()[t].1[i];
            probe.tensors_mut()[t].1[i] = orig + step;
            let up = probe.mean_loss(data).unwrap();
            probe.tensors_mut()[t].1[i] = orig - step;
            let down = probe.mean_loss(data).unwrap();
            probe.tensors_mut()[t].1[i] = orig;
            numeric.push((up - down) / (2.0 * step));
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / (norm(&analytic) + norm(&numeric)).max(f64::MIN_POSITIVE)
}

/// Tries all 256 candidate patterns against every window position.
pub fn pattern_score_oracle(labels: &[u8]) -> f64 {
    let onsets: Vec<bool> = labels.iter().map(|&l| l != 0).collect();
    let mut present = 0;
    for p in 0..256u32 {
        let bits: Vec<bool> = (0..8).map(|b| p >> (7 - b) & 1 == 1).collect();
        if onsets.windows(8).any(|w| w == bits.as_slice()) {
            present += 1;
        }
    }
    present as f64 * 100.0 / 256.0
}

/// Deterministic pseudo-audio: integer hash of (row, band) scaled into [0, 1).
pub fn synthetic_features(frames: usize, salt: u64) -> FeatureMatrix<f32> {
    let data = (0..frames * 40)
        .map(|i| {
            let mut x = (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
                ^ salt.wrapping_mul(0xBF58_476D_1CE4_E5B9);
            x ^= x >> 31;
            (x % 1000) as f32 / 1000.0
        })
        .collect();
    FeatureMatrix::new(frames, 40, data, 8000).unwrap()
}

/// A chart with a note every `every` frames, kinds cycling through `kinds`.
pub fn patterned_chart(song_id: &str, duration_ms: u64, every: usize, kinds: &[NoteKind]) -> Chart {
    let frames = frame_count(duration_ms);
    let notes = (0..frames)
        .step_by(every)
        .enumerate()
        .map(|(i, f)| Note::new(f as u64 * 23, kinds[i % kinds.len()], Provenance::Human))
        .collect();
    Chart::new(song_id, 120.0, 0, duration_ms, notes).unwrap()
}

/// Model stand-in that trains instantly and records every training-set size.
#[derive(Clone)]
pub struct FitRecorder {
    pub cfg: ModelConfig,
    pub fits: Arc<Mutex<Vec<usize>>>,
}

impl FitRecorder {
    pub fn new() -> Self {
        FitRecorder {
            cfg: ModelConfig {
                hidden_size: 1,
                audio_context: 1,
                history_len: 1,
                ..ModelConfig::default()
            },
            fits: Arc::default(),
        }
    }

    pub fn instance(&self) -> TrainingInstance<f32> {
        TrainingInstance {
            audio: vec![0.0; self.cfg.audio_len()],
            history: vec![None; self.cfg.history_len],
            target: 0,
            designer_id: Arc::from("d"),
        }
    }
}

impl SequenceModel<f32> for FitRecorder {
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
        self.fits.lock().unwrap().push(data.len());
        Ok(Trained {
            model: self.clone(),
            epoch_losses: vec![0.0],
        })
    }
}

/// Pseudo-song with onsets: each onset frame lights one of four 10-band
/// blocks (its timbre). Returns the features and `(frame, timbre)` per onset.
pub fn timbre_song(
    frames: usize,
    every: usize,
    seed: u64,
) -> (FeatureMatrix<f32>, Vec<(usize, usize)>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<f32> = (0..frames * 40).map(|_| rng.gen_range(0.0..0.1)).collect();
    let mut onsets = Vec::new();
    for f in (0..frames).step_by(every) {
        let timbre = rng.gen_range(0..4);
        for b in timbre * 10..timbre * 10 + 10 {
            data[f * 40 + b] = 1.0;
        }
        onsets.push((f, timbre));
    }
    (FeatureMatrix::new(frames, 40, data, 8000).unwrap(), onsets)
}

/// Chart of a designer who writes `style[timbre]` on every onset.
pub fn styled_chart(
    song_id: &str,
    duration_ms: u64,
    onsets: &[(usize, usize)],
    style: [NoteKind; 4],
) -> Chart {
    let notes = onsets
        .iter()
        .map(|&(f, t)| Note::new(f as u64 * 23, style[t], Provenance::Human))
        .collect();
    Chart::new(song_id, 120.0, 0, duration_ms, notes).unwrap()
}
