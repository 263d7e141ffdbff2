//! Projected mini-batch gradient descent, plus k-fold and split evaluation.
//!
//! Every epoch runs `B` mini-batches sampled with replacement, each followed
//! by a plain gradient step on `A`, and ends with one projection of the
//! `(K*P) x m` reshape onto the nuclear-norm ball of radius `R`.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{zscore_fit, Dataset, NormStats};
use crate::error::{Error, Result};
use crate::features::{rff_init, FrameLayout, PatchFeatures, PatchSpec};
use crate::losses::{accumulate_sample_gradient, loss, LossKind};
use crate::model::{argmax, forward, ModelBundle, WeightTensor};
use crate::numkernel::{gauss_sample, Mat, RngStream};
use crate::projections::nuclear_ball_project;

// Substream offsets; keep them stable so models stay reproducible.
const RFF_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const BATCH_STREAM: u64 = 3;
const PARTITION_STREAM: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Nuclear-norm radius `R`.
    pub radius: f64,
    /// Random feature dimension.
    pub m: usize,
    /// RBF kernel width.
    pub gamma: f64,
    /// Learning rate.
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub loss: LossKind,
    pub seed: u64,
    pub classes: usize,
    /// Electrode channels in the raw gesture.
    pub channels: usize,
    pub frames: usize,
    pub patches: usize,
    pub layout: FrameLayout,
    /// Standard deviation of the initial weights.
    #[serde(default = "default_init_stddev")]
    pub init_stddev: f64,
    /// Tuning-record field carried by the tuned presets; stored, never read.
    #[serde(default)]
    pub variance_meta: Option<u32>,
}

fn default_init_stddev() -> f64 {
    0.01
}

impl TrainConfig {
    pub fn spec(&self) -> Result<PatchSpec> {
        let channels = self.layout.feature_channels(self.channels)?;
        PatchSpec::new(channels, self.frames, self.patches)
    }

    pub fn validate(&self) -> Result<()> {
        let reals = [self.radius, self.gamma, self.eta, self.init_stddev];
        if reals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("train config"));
        }
        if !(self.radius > 0.0) || !(self.gamma > 0.0) || !(self.eta > 0.0) {
            return Err(Error::invalid("radius, gamma and eta must be > 0"));
        }
        if self.init_stddev < 0.0 {
            return Err(Error::invalid("init_stddev must be >= 0"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.batches_per_epoch == 0 || self.m == 0 {
            return Err(Error::invalid(
                "epochs, batch_size, batches_per_epoch and m must be >= 1",
            ));
        }
        if self.classes < 2 {
            return Err(Error::invalid("at least two classes are required"));
        }
        self.spec()?;
        Ok(())
    }
}

/// Named hyperparameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Default sizing: `m = 3`, `R = 10`, `gamma = 1`, `eta = 0.01`, batch 32.
    Tap,
    Swipe,
    /// Tuned tap configuration (`m = 9`).
    TapAppxB,
    /// Tuned swipe configuration (`m = 3`).
    SwipeAppxB,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Tap,
        Preset::Swipe,
        Preset::TapAppxB,
        Preset::SwipeAppxB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Tap => "tap",
            Preset::Swipe => "swipe",
            Preset::TapAppxB => "tap-appxB",
            Preset::SwipeAppxB => "swipe-appxB",
        }
    }

    /// Gesture window length the preset expects.
    pub fn frames(self) -> usize {
        match self {
            Preset::Tap | Preset::TapAppxB => 10,
            Preset::Swipe | Preset::SwipeAppxB => 30,
        }
    }

    pub fn config(self) -> TrainConfig {
        let frames = self.frames();
        let base = TrainConfig {
            radius: 10.0,
            m: 3,
            gamma: 1.0,
            eta: 0.01,
            epochs: 100,
            batch_size: 32,
            batches_per_epoch: 128,
            loss: LossKind::Hinge,
            seed: 0,
            classes: 4,
            channels: 4,
            frames,
            patches: frames,
            layout: FrameLayout::ElectrodeDifferentials,
            init_stddev: default_init_stddev(),
            variance_meta: None,
        };
        match self {
            Preset::Tap | Preset::Swipe => base,
            Preset::TapAppxB => TrainConfig {
                radius: 5.158,
                m: 9,
                gamma: 0.789,
                eta: 0.0297,
                epochs: 200,
                batch_size: 16,
                variance_meta: Some(50),
                ..base
            },
            Preset::SwipeAppxB => TrainConfig {
                radius: 10.770,
                m: 3,
                gamma: 0.135,
                eta: 0.0703,
                epochs: 300,
                batch_size: 16,
                variance_meta: Some(30),
                ..base
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown preset `{s}` (expected tap, swipe, tap-appxB or swipe-appxB)"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub nuclear_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub final_nuclear_norm: f64,
    /// First epoch that classified the whole training set correctly.
    pub epochs_to_convergence: Option<usize>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.accuracy)
    }

    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.loss)
    }
}

fn check_dataset(ds: &Dataset, cfg: &TrainConfig) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Empty("training set"));
    }
    ds.validate()?;
    if ds.classes() != cfg.classes {
        return Err(Error::Dataset(format!(
            "dataset has {} classes, config expects {}",
            ds.classes(),
            cfg.classes
        )));
    }
    if let Some(missing) = ds.class_counts().iter().position(|&c| c == 0) {
        return Err(Error::Dataset(format!(
            "class `{}` has no training samples",
            ds.class_names[missing]
        )));
    }
    if (ds.channels(), ds.frames()) != (cfg.channels, cfg.frames) {
        return Err(Error::Dataset(format!(
            "gestures are {}x{}, config expects {}x{}",
            ds.channels(),
            ds.frames(),
            cfg.channels,
            cfg.frames
        )));
    }
    Ok(())
}

/// Training-set loss and accuracy under `a`.
fn training_metrics(
    kind: LossKind,
    features: &[PatchFeatures],
    labels: &[usize],
    a: &WeightTensor,
) -> Result<(f64, f64)> {
    let mut f = Mat::zeros(labels.len(), a.classes());
    let mut correct = 0usize;
    for (i, q) in features.iter().enumerate() {
        let out = forward(q, a)?;
        if argmax(&out.class_scores) == labels[i] {
            correct += 1;
        }
        f.row_mut(i).copy_from_slice(&out.class_scores);
    }
    Ok((
        loss(kind, &f, labels)?,
        correct as f64 / labels.len() as f64,
    ))
}

/// Trains a model on every sample of `ds`.
///
/// Normalization statistics are fitted on `ds` only; callers evaluating on
/// held-out data must pass the training portion alone.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<(ModelBundle, TrainReport)> {
    let started = Instant::now();
    cfg.validate()?;
    check_dataset(ds, cfg)?;
    let spec = cfg.spec()?;
    let root = RngStream::new(cfg.seed);

    let norm_stats = if ds.samples.len() >= 2 {
        zscore_fit(&ds.samples)?
    } else {
        NormStats::identity(cfg.channels)
    };
    let rff = rff_init(&spec, cfg.m, cfg.gamma, &mut root.derive(RFF_STREAM))?;
    let init = gauss_sample(
        &mut root.derive(INIT_STREAM),
        cfg.classes * cfg.patches * cfg.m,
        0.0,
        cfg.init_stddev,
    )?;
    let mut bundle = ModelBundle {
        rff,
        weights: WeightTensor::from_vec(cfg.classes, cfg.patches, cfg.m, init)?,
        spec,
        input_channels: cfg.channels,
        layout: cfg.layout,
        norm_stats,
        loss_kind: cfg.loss,
        trained: false,
    };
    bundle.validate()?;

    // The feature map is fixed, so features are computed once.
    let features: Vec<PatchFeatures> = ds
        .samples
        .iter()
        .map(|s| bundle.features(&s.x))
        .collect::<Result<_>>()?;
    let labels = ds.labels();

    let mut batches = root.derive(BATCH_STREAM);
    let mut a = bundle.weights.clone();
    let weight = 1.0 / cfg.batch_size as f64;
    let mut grad = WeightTensor::zeros(cfg.classes, cfg.patches, cfg.m);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut converged = None;
    for epoch in 1..=cfg.epochs {
        for _ in 0..cfg.batches_per_epoch {
            grad.as_mut_slice().fill(0.0);
            for _ in 0..cfg.batch_size {
                let i = batches.below(features.len());
                let out = forward(&features[i], &a)?;
                accumulate_sample_gradient(
                    cfg.loss,
                    &features[i],
                    out.alpha.as_mat(),
                    &out.class_scores,
                    labels[i],
                    weight,
                    &mut grad,
                );
            }
            a.axpy(-cfg.eta, &grad);
        }
        if !a.as_slice().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(
                "weights during training (learning rate too high?)",
            ));
        }
        let projected = nuclear_ball_project(&a.to_matrix(), cfg.radius)?;
        a = WeightTensor::from_matrix(cfg.classes, projected)?;

        let (epoch_loss, accuracy) = training_metrics(cfg.loss, &features, &labels, &a)?;
        let nuclear_norm = a.nuclear_norm()?;
        log::debug!(
            "epoch {epoch}: loss {epoch_loss:.6} accuracy {accuracy:.4} nuclear {nuclear_norm:.6}"
        );
        if converged.is_none() && accuracy == 1.0 {
            converged = Some(epoch);
        }
        records.push(EpochRecord {
            epoch,
            loss: epoch_loss,
            accuracy,
            nuclear_norm,
        });
    }

    bundle.weights = a;
    bundle.trained = true;
    let report = TrainReport {
        final_nuclear_norm: records.last().map_or(0.0, |r| r.nuclear_norm),
        epochs: records,
        epochs_to_convergence: converged,
        wall_time: started.elapsed(),
    };
    Ok((bundle, report))
}

/// Accuracy, macro-F1 and confusion counts (`confusion[true][predicted]`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<u64>>,
}

pub fn evaluate(bundle: &ModelBundle, ds: &Dataset) -> Result<Metrics> {
    if ds.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let k = bundle.classes();
    let mut confusion = vec![vec![0u64; k]; k];
    for s in &ds.samples {
        if s.label >= k {
            return Err(Error::invalid(format!(
                "label {} out of range for {k} classes",
                s.label
            )));
        }
        let pred = crate::model::predict(&s.x, bundle)?;
        confusion[s.label][pred.label] += 1;
    }
    let correct: u64 = (0..k).map(|i| confusion[i][i]).sum();
    Ok(Metrics {
        accuracy: correct as f64 / ds.len() as f64,
        macro_f1: macro_f1(&confusion)?,
        confusion,
    })
}

/// Unweighted mean over classes of per-class F1; a class with zero
/// precision and recall contributes 0.
pub fn macro_f1(confusion: &[Vec<u64>]) -> Result<f64> {
    let k = confusion.len();
    if k == 0 || confusion.iter().any(|r| r.len() != k) {
        return Err(Error::invalid(
            "confusion matrix must be square and non-empty",
        ));
    }
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(Error::invalid("confusion matrix has no counts"));
    }
    let mut sum = 0.0;
    for c in 0..k {
        let tp = confusion[c][c] as f64;
        let predicted: u64 = confusion.iter().map(|r| r[c]).sum();
        let actual: u64 = confusion[c].iter().sum();
        let p = if predicted > 0 {
            tp / predicted as f64
        } else {
            0.0
        };
        let r = if actual > 0 { tp / actual as f64 } else { 0.0 };
        if p + r > 0.0 {
            sum += 2.0 * p * r / (p + r);
        }
    }
    Ok(sum / k as f64)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-class indices, shuffled by `rng`.
fn shuffled_by_class(ds: &Dataset, rng: &mut RngStream) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); ds.classes()];
    for (i, s) in ds.samples.iter().enumerate() {
        by_class[s.label].push(i);
    }
    for idx in &mut by_class {
        rng.shuffle(idx);
    }
    by_class
}

/// Stratified assignment of sample indices to `folds` folds: each class is
/// shuffled and dealt round-robin, continuing where the previous class
/// stopped so fold totals stay balanced too.
pub fn stratified_folds(ds: &Dataset, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    for (c, &n) in ds.class_counts().iter().enumerate() {
        if n < folds {
            return Err(Error::Dataset(format!(
                "class `{}` has {n} samples, fewer than {folds} folds",
                ds.class_names[c]
            )));
        }
    }
    let mut rng = RngStream::new(seed).derive(PARTITION_STREAM);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for idx in shuffled_by_class(ds, &mut rng) {
        for i in idx {
            out[next].push(i);
            next = (next + 1) % folds;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KFoldReport {
    pub fold_accuracy: Vec<f64>,
    pub fold_macro_f1: Vec<f64>,
    pub mean_accuracy: f64,
    /// Population standard deviation.
    pub std_accuracy: f64,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
    pub epochs_to_convergence: Vec<Option<usize>>,
}

/// Stratified k-fold cross-validation. Fold `i` trains from scratch with
/// seed `cfg.seed + i`; folds run in parallel when `parallel` is set.
pub fn kfold_evaluate(
    ds: &Dataset,
    cfg: &TrainConfig,
    folds: usize,
    parallel: bool,
) -> Result<KFoldReport> {
    cfg.validate()?;
    let partition = stratified_folds(ds, folds, cfg.seed)?;
    let run = |fold: usize| -> Result<(Metrics, Option<usize>)> {
        let held_out = &partition[fold];
        let train_idx: Vec<usize> = (0..ds.len())
            .filter(|i| held_out.binary_search(i).is_err())
            .collect();
        let fold_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(fold as u64),
            ..cfg.clone()
        };
        let (bundle, report) = train(&ds.subset(&train_idx), &fold_cfg)?;
        Ok((
            evaluate(&bundle, &ds.subset(held_out))?,
            report.epochs_to_convergence,
        ))
    };
    let results: Vec<(Metrics, Option<usize>)> = if parallel {
        (0..folds).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..folds).map(run).collect::<Result<_>>()?
    };
    let fold_accuracy: Vec<f64> = results.iter().map(|(m, _)| m.accuracy).collect();
    let fold_macro_f1: Vec<f64> = results.iter().map(|(m, _)| m.macro_f1).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&fold_accuracy);
    let (mean_macro_f1, std_macro_f1) = mean_std(&fold_macro_f1);
    Ok(KFoldReport {
        epochs_to_convergence: results.iter().map(|(_, e)| *e).collect(),
        fold_accuracy,
        fold_macro_f1,
        mean_accuracy,
        std_accuracy,
        mean_macro_f1,
        std_macro_f1,
    })
}

/// Index sets of a stratified train/validation/test split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per class: `round(0.6 n)` train, `round(0.2 n)` validation, rest test.
pub fn stratified_split(ds: &Dataset, seed: u64) -> Result<SplitIndices> {
    for (c, &n) in ds.class_counts().iter().enumerate() {
        if n < 5 {
            return Err(Error::Dataset(format!(
                "class `{}` has {n} samples; a 60/20/20 split needs at least 5",
                ds.class_names[c]
            )));
        }
    }
    if ds.classes() < 2 {
        return Err(Error::Dataset("a split needs at least two classes".into()));
    }
    let mut rng = RngStream::new(seed).derive(PARTITION_STREAM);
    let mut split = SplitIndices {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for idx in shuffled_by_class(ds, &mut rng) {
        let n = idx.len() as f64;
        let n_train = (0.6 * n).round() as usize;
        let n_val = (0.2 * n).round() as usize;
        split.train.extend_from_slice(&idx[..n_train]);
        split
            .validation
            .extend_from_slice(&idx[n_train..n_train + n_val]);
        split.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitReport {
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub validation: Metrics,
    pub test: Metrics,
}

/// 60/20/20 stratified split; trains on the train portion only.
pub fn split_evaluate(ds: &Dataset, cfg: &TrainConfig) -> Result<SplitReport> {
    cfg.validate()?;
    let split = stratified_split(ds, cfg.seed)?;
    let (bundle, _) = train(&ds.subset(&split.train), cfg)?;
    Ok(SplitReport {
        train_size: split.train.len(),
        validation_size: split.validation.len(),
        test_size: split.test.len(),
        validation: evaluate(&bundle, &ds.subset(&split.validation))?,
        test: evaluate(&bundle, &ds.subset(&split.test))?,
    })
}
