#[allow(dead_code)]
mod common;

use std::sync::Arc;

use kiai_core::chart::{Chart, Note, NoteKind, Provenance};
use kiai_core::model::{
    decode_region, ModelConfig, ModelInput, ModelParams, Region, TrainingInstance,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(hidden: usize, ctx: usize, hist: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        hidden_size: hidden,
        audio_context: ctx,
        history_len: hist,
        seed,
        ..ModelConfig::default()
    }
}

fn random_instance(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> TrainingInstance<f64> {
    TrainingInstance {
        audio: (0..cfg.audio_len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
        history: (0..cfg.history_len)
            .map(|_| rng.gen_bool(0.7).then(|| rng.gen_range(0..5)))
            .collect(),
        target: rng.gen_range(0..5),
        designer_id: Arc::from("oracle"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_matches_the_matrix_oracle(seed in 0u64..10_000, hidden in 1usize..6, ctx in 1usize..3, hist in 1usize..4) {
        let c = cfg(hidden, ctx, hist, seed);
        let model = ModelParams::<f64>::init(c).unwrap();
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xabc), &c);
        let got = model.forward(inst.input()).unwrap();
        let want = common::forward_oracle(&model, inst.input());
        for k in 0..5 {
            prop_assert!((got[k] - want[k]).abs() < 1e-12, "class {}: {} vs {}", k, got[k], want[k]);
        }
        prop_assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    for seed in 0..4 {
        let c = cfg(4, 1, 3, seed);
        let model = ModelParams::<f64>::init(c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let data: Vec<_> = (0..3).map(|_| random_instance(&mut rng, &c)).collect();
        let err = common::gradient_relative_error(&model, &data, 1e-5);
        assert!(err < 1e-6, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn f32_forward_tracks_f64() {
    let c = cfg(6, 2, 4, 3);
    let model = ModelParams::<f64>::init(c).unwrap();
    let narrow = model.cast::<f32>();
    let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(5), &c);
    let audio: Vec<f32> = inst.audio.iter().map(|&x| x as f32).collect();
    let wide = model.forward(inst.input()).unwrap();
    let low = narrow
        .forward(ModelInput {
            audio: &audio,
            history: &inst.history,
        })
        .unwrap();
    for k in 0..5 {
        assert!((wide[k] - low[k] as f64).abs() < 1e-5);
    }
}

#[test]
fn decoding_ignores_notes_inside_the_region_and_audio_beyond_reach() {
    let c = cfg(5, 2, 6, 9);
    let model = ModelParams::<f32>::init(c).unwrap();
    let duration = 3000;
    let features = common::synthetic_features(kiai_core::chart::frame_count(duration), 4);
    let empty = Chart::empty("s", 120.0, 0, duration).unwrap();
    let region = Region::new(500, 1500);
    let base = decode_region(&model, &features, &empty, region).unwrap();

    let inside: Vec<Note> = [600, 900, 1200]
        .iter()
        .map(|&t| Note::new(t, NoteKind::Kat, Provenance::Human))
        .collect();
    let cluttered = Chart::new("s", 120.0, 0, duration, inside).unwrap();
    assert_eq!(
        decode_region(&model, &features, &cluttered, region).unwrap(),
        base
    );

    // rows past the last region frame plus the audio context cannot be seen
    let last = base.frames.end - 1;
    let mut data = features.data().to_vec();
    for v in &mut data[(last + c.audio_context + 1) * 40..] {
        *v = 1e3;
    }
    let altered = kiai_core::ingest::FeatureMatrix::new(features.rows(), 40, data, 8000).unwrap();
    assert_eq!(
        decode_region(&model, &features, &empty, region).unwrap(),
        decode_region(&model, &altered, &empty, region).unwrap()
    );
}
