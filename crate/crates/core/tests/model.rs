//! Inference against a from-scratch reimplementation, bundle round trips and
//! parameter accounting.

use cvxattn_core::model::{deserialize, serialize, HEADER_LEN};
use cvxattn_core::trainer::{train, Preset, TrainConfig};
use cvxattn_core::{
    param_count, predict, synth_generate, Dataset, GestureKind, LossKind, Mat, ModelBundle,
    Precision, SynthConfig,
};
use std::sync::OnceLock;

fn tap_data() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| {
        synth_generate(&SynthConfig {
            kind: GestureKind::Tap,
            seed: 11,
            ..SynthConfig::default()
        })
        .unwrap()
    })
}

fn tap_model() -> &'static ModelBundle {
    static M: OnceLock<ModelBundle> = OnceLock::new();
    M.get_or_init(|| train(tap_data(), &Preset::TapAppxB.config()).unwrap().0)
}

/// Sort-free simplex projection by bisection on the threshold.
fn simplex_bisect(s: &[f64]) -> Vec<f64> {
    let mass = |theta: f64| s.iter().map(|v| (v - theta).max(0.0)).sum::<f64>();
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (max - 1.0, max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    s.iter().map(|v| (v - 0.5 * (lo + hi)).max(0.0)).collect()
}

/// Naive nested-loop inference straight from the model definition.
fn naive_scores(x: &Mat, b: &ModelBundle) -> Vec<f64> {
    let (c, t) = x.shape();
    let mean = b.norm_stats.mean();
    let std = b.norm_stats.std();
    let z = |ch: usize, f: usize| (x[(ch, f)] - mean[ch]) / std[ch];
    // Electrode order NW, NE, SW, SE plus vertical and horizontal contrasts.
    let mut rows: Vec<Vec<f64>> = (0..c)
        .map(|ch| (0..t).map(|f| z(ch, f)).collect())
        .collect();
    rows.push(
        (0..t)
            .map(|f| 0.5 * (z(0, f) + z(1, f) - z(2, f) - z(3, f)))
            .collect(),
    );
    rows.push(
        (0..t)
            .map(|f| 0.5 * (z(1, f) + z(3, f) - z(0, f) - z(2, f)))
            .collect(),
    );

    let patches = b.spec.patches;
    let fpp = t / patches;
    let m = b.rff.dim();
    let w = b.rff.w();
    let bias = b.rff.b();
    let mut q = vec![vec![0.0; m]; patches];
    for (p, qp) in q.iter_mut().enumerate() {
        let mut v = Vec::new();
        for f in p * fpp..(p + 1) * fpp {
            for row in &rows {
                v.push(row[f]);
            }
        }
        for j in 0..m {
            let mut arg = bias[j];
            for (d, &vd) in v.iter().enumerate() {
                arg += vd * w[(d, j)];
            }
            qp[j] = (2.0 / m as f64).sqrt() * arg.cos();
        }
    }

    let k_classes = b.weights.classes();
    (0..k_classes)
        .map(|k| {
            let s: Vec<f64> = (0..patches)
                .map(|p| {
                    let a = b.weights.block(k, p);
                    (0..m).map(|j| q[p][j] * a[j]).sum::<f64>() / (m as f64).sqrt()
                })
                .collect();
            let alpha = simplex_bisect(&s);
            (m as f64).sqrt() * alpha.iter().zip(&s).map(|(a, v)| a * v).sum::<f64>()
        })
        .collect()
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |best, k| if v[k] > v[best] { k } else { best })
}

#[test]
fn predict_agrees_with_naive_loops() {
    let ds = tap_data();
    let model = tap_model();
    let mut agree = 0;
    let mut max_gap: f64 = 0.0;
    for s in &ds.samples {
        let fast = predict(&s.x, model).unwrap();
        let slow = naive_scores(&s.x, model);
        for (a, b) in fast.scores.iter().zip(&slow) {
            max_gap = max_gap.max((a - b).abs());
        }
        if fast.label == argmax(&slow) {
            agree += 1;
        }
    }
    let rate = agree as f64 / ds.len() as f64;
    assert!(rate >= 0.99, "label agreement {rate}");
    assert!(max_gap <= 1e-9, "score gap {max_gap}");
}

#[test]
fn bundle_round_trip_is_exact() {
    let model = tap_model();
    let bytes = serialize(model, Precision::F64).unwrap();
    let back = deserialize(&bytes).unwrap();
    assert_eq!(&back, model);
    for s in tap_data().samples.iter().take(50) {
        assert_eq!(predict(&s.x, &back).unwrap(), predict(&s.x, model).unwrap());
    }
    assert_eq!(serialize(&back, Precision::F64).unwrap(), bytes);
}

#[test]
fn compact_export_keeps_every_label() {
    let model = tap_model();
    let compact = deserialize(&serialize(model, Precision::F32).unwrap()).unwrap();
    let changed = tap_data()
        .samples
        .iter()
        .filter(|s| predict(&s.x, &compact).unwrap().label != predict(&s.x, model).unwrap().label)
        .count();
    assert_eq!(changed, 0);
}

#[test]
fn bundles_fit_in_seven_kib() {
    for preset in Preset::ALL {
        let cfg = TrainConfig {
            epochs: 1,
            ..preset.config()
        };
        let ds = synth_generate(&SynthConfig {
            kind: if preset.frames() == 10 {
                GestureKind::Tap
            } else {
                GestureKind::Swipe
            },
            samples_per_class: 4,
            ..SynthConfig::default()
        })
        .unwrap();
        let (model, _) = train(&ds, &cfg).unwrap();
        let pc = param_count(&model);
        let expected = HEADER_LEN + 4 * (2 * model.input_channels + pc.total());
        let bytes = serialize(&model, Precision::F32).unwrap();
        assert_eq!(bytes.len(), expected, "{preset}");
        assert!(bytes.len() <= 7168, "{preset}: {} bytes", bytes.len());
    }
}

#[test]
fn parameter_counts() {
    let counts = |preset: Preset| {
        let c = preset.config();
        let trainable = c.classes * c.patches * c.m;
        // Six feature rows per frame after the differential expansion.
        let patch_dim = 6 * c.frames / c.patches;
        (trainable, patch_dim * c.m + c.m)
    };
    assert_eq!(counts(Preset::Tap), (120, 21));
    assert_eq!(counts(Preset::Tap).0 + counts(Preset::Tap).1, 141);
    assert_eq!(counts(Preset::TapAppxB).0, 360);
    assert_eq!(counts(Preset::SwipeAppxB).0, 360);

    let pc = param_count(tap_model());
    assert_eq!(pc.trainable, 360);
    assert_eq!(pc.fixed, 6 * 9 + 9);
}

#[test]
fn corrupted_bundles_rejected() {
    let bytes = serialize(tap_model(), Precision::F64).unwrap();
    assert!(deserialize(&bytes[..bytes.len() - 1]).is_err());
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(deserialize(&bad_magic).is_err());
    let mut bad_version = bytes.clone();
    bad_version[4] = 99;
    assert!(deserialize(&bad_version).is_err());
    let mut extra = bytes;
    extra.push(0);
    assert!(deserialize(&extra).is_err());
}

#[test]
fn loss_kind_survives_round_trip() {
    let cfg = TrainConfig {
        loss: LossKind::Squared,
        epochs: 2,
        ..Preset::Tap.config()
    };
    let (model, _) = train(tap_data(), &cfg).unwrap();
    let back = deserialize(&serialize(&model, Precision::F32).unwrap()).unwrap();
    assert_eq!(back.loss_kind, LossKind::Squared);
    assert!(back.trained);
}

#[test]
fn wrong_input_shape_rejected() {
    let x = Mat::zeros(4, 11);
    assert!(predict(&x, tap_model()).is_err());
}
