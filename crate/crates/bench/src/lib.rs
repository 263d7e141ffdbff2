//! Fixtures shared by the benchmarks.

use cvxattn_core::{
    synth_generate, train, Dataset, GestureKind, ModelBundle, Preset, SynthConfig, TrainConfig,
};

/// Synthetic dataset matching `preset`'s window length.
pub fn dataset(preset: Preset) -> Dataset {
    let kind = if preset.frames() == 10 {
        GestureKind::Tap
    } else {
        GestureKind::Swipe
    };
    synth_generate(&SynthConfig {
        kind,
        seed: 11,
        ..SynthConfig::default()
    })
    .expect("valid synth config")
}

/// Model trained briefly on [`dataset`]; enough for timing inference.
pub fn model(preset: Preset, ds: &Dataset) -> ModelBundle {
    let cfg = TrainConfig {
        epochs: 5,
        ..preset.config()
    };
    train(ds, &cfg).expect("training succeeds").0
}
