//! Gesture data: containers, the preprocessing pipeline, the synthetic
//! generator and the CSV format.
//!
//! Processing order is fixed: segment, drift removal, (wavelet denoising slot,
//! a no-op here), smoothing, z-score normalization. Datasets carry the set of
//! stages already applied so a stage cannot run twice or out of order.

mod csvio;
mod synth;

pub use csvio::{load_csv, load_dataset, meta_path, save_csv, save_dataset, DatasetMeta};
pub use synth::{
    synth_generate, synth_stream, GestureKind, InjectedGesture, SynthConfig, ELECTRODES,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Mat;

/// Default direction classes, in label order.
pub const DIRECTION_CLASSES: [&str; 4] = ["north", "south", "east", "west"];

/// Sampling rate of the sensor front end.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 250.0;

pub const SEGMENT_WINDOW_MS: f64 = 200.0;
pub const ONSET_FACTOR: f64 = 2.5;
pub const OFFSET_FACTOR: f64 = 1.5;
pub const OFFSET_HOLD_MS: f64 = 100.0;
pub const POST_OFFSET_BUFFER_FRAMES: usize = 5;
pub const DRIFT_WINDOW_MS: f64 = 200.0;

/// Standard deviations below this are treated as constant channels.
pub const MIN_STDDEV: f64 = 1e-8;

/// Frames covered by `ms` milliseconds at `rate` Hz (at least one).
pub fn ms_to_frames(ms: f64, rate: f64) -> usize {
    ((ms * rate / 1000.0).round() as usize).max(1)
}

/// Continuous multichannel capture (`channels x N`).
#[derive(Clone, Debug, PartialEq)]
pub struct RawStream {
    pub sample_rate: f64,
    pub samples: Mat,
}

impl RawStream {
    pub fn new(sample_rate: f64, samples: Mat) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::invalid(format!(
                "sample rate must be > 0, got {sample_rate}"
            )));
        }
        if samples.cols() == 0 || samples.rows() == 0 {
            return Err(Error::Empty("raw stream"));
        }
        Ok(RawStream {
            sample_rate,
            samples,
        })
    }

    pub fn channels(&self) -> usize {
        self.samples.rows()
    }

    pub fn len(&self) -> usize {
        self.samples.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.cols() == 0
    }
}

/// One segmented gesture.
#[derive(Clone, Debug, PartialEq)]
pub struct GestureSample {
    /// `channels x frames`.
    pub x: Mat,
    /// 0-based class index.
    pub label: usize,
    pub id: String,
}

/// Processing stages in their mandatory order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Segment,
    RemoveDrift,
    Denoise,
    Smooth,
    Normalize,
}

/// Stages already applied to a dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineState {
    pub segmented: bool,
    pub drift_removed: bool,
    pub denoised: bool,
    pub smoothed: bool,
    pub normalized: bool,
}

impl PipelineState {
    fn flag(&self, stage: Stage) -> bool {
        match stage {
            Stage::Segment => self.segmented,
            Stage::RemoveDrift => self.drift_removed,
            Stage::Denoise => self.denoised,
            Stage::Smooth => self.smoothed,
            Stage::Normalize => self.normalized,
        }
    }

    fn set(&mut self, stage: Stage) {
        match stage {
            Stage::Segment => self.segmented = true,
            Stage::RemoveDrift => self.drift_removed = true,
            Stage::Denoise => self.denoised = true,
            Stage::Smooth => self.smoothed = true,
            Stage::Normalize => self.normalized = true,
        }
    }

    fn latest(&self) -> Option<Stage> {
        [
            Stage::Normalize,
            Stage::Smooth,
            Stage::Denoise,
            Stage::RemoveDrift,
            Stage::Segment,
        ]
        .into_iter()
        .find(|&s| self.flag(s))
    }

    /// Fails if `stage` was already applied or a later stage already ran.
    pub fn check_can_apply(&self, stage: Stage) -> Result<()> {
        if self.flag(stage) {
            return Err(Error::Dataset(format!(
                "stage {stage:?} was already applied"
            )));
        }
        if let Some(latest) = self.latest() {
            if latest > stage {
                return Err(Error::Dataset(format!(
                    "stage {stage:?} cannot run after {latest:?}"
                )));
            }
        }
        Ok(())
    }
}

/// A labelled collection of equally shaped gestures.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<GestureSample>,
    pub class_names: Vec<String>,
    pub sample_rate: f64,
    pub pipeline: PipelineState,
}

impl Dataset {
    pub fn new(samples: Vec<GestureSample>, class_names: Vec<String>) -> Result<Self> {
        let ds = Dataset {
            samples,
            class_names,
            sample_rate: DEFAULT_SAMPLE_RATE_HZ,
            pipeline: PipelineState {
                segmented: true,
                ..PipelineState::default()
            },
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.samples.first() else {
            return Ok(());
        };
        let shape = first.x.shape();
        for s in &self.samples {
            if s.x.shape() != shape {
                return Err(Error::Dataset(format!(
                    "gesture `{}` is {:?}, expected {:?}",
                    s.id,
                    s.x.shape(),
                    shape
                )));
            }
            if s.label >= self.class_names.len() {
                return Err(Error::Dataset(format!(
                    "gesture `{}` has label {} but only {} classes",
                    s.id,
                    s.label,
                    self.class_names.len()
                )));
            }
            if !s.x.is_finite() {
                return Err(Error::NonFinite("gesture data"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn channels(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.rows())
    }

    pub fn frames(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.cols())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// New dataset over the given sample indices.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            class_names: self.class_names.clone(),
            sample_rate: self.sample_rate,
            pipeline: self.pipeline,
        }
    }

    fn map_stage(&mut self, stage: Stage, f: impl Fn(&Mat) -> Result<Mat>) -> Result<()> {
        self.pipeline.check_can_apply(stage)?;
        for s in &mut self.samples {
            s.x = f(&s.x)?;
        }
        self.pipeline.set(stage);
        Ok(())
    }

    pub fn remove_drift(&mut self, window_frames: usize) -> Result<()> {
        self.map_stage(Stage::RemoveDrift, |x| remove_drift(x, window_frames))
    }

    /// Wavelet denoising slot. Synthetic data carries no textile noise to
    /// remove, so the stage only records that it ran.
    pub fn denoise(&mut self) -> Result<()> {
        self.map_stage(Stage::Denoise, |x| Ok(x.clone()))
    }

    pub fn smooth(&mut self) -> Result<()> {
        self.map_stage(Stage::Smooth, smooth)
    }

    pub fn normalize(&mut self, stats: &NormStats) -> Result<()> {
        self.map_stage(Stage::Normalize, |x| stats.apply(x))
    }
}

/// Span of stream frames `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.start..self.end).contains(&frame)
    }
}

/// Mean over channels of the population variance of frames `[start, end)`.
fn window_variance(x: &Mat, start: usize, end: usize) -> f64 {
    let n = (end - start) as f64;
    let mut total = 0.0;
    for c in 0..x.rows() {
        let row = &x.row(c)[start..end];
        let mean = row.iter().sum::<f64>() / n;
        total += row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    }
    total / x.rows() as f64
}

/// Detects gesture spans by variance thresholds.
///
/// The baseline is the variance of the first `window_ms` of the stream. A
/// gesture starts at the first frame whose trailing-window variance exceeds
/// 2.5x baseline and ends once the variance has stayed within 1.5x baseline
/// for 100 ms; the span is then extended by a 5-frame buffer.
pub fn segment(stream: &RawStream, window_ms: f64) -> Result<Vec<Span>> {
    let x = &stream.samples;
    let n = x.cols();
    let w = ms_to_frames(window_ms, stream.sample_rate);
    if n < w {
        return Err(Error::invalid(format!(
            "stream of {n} frames is shorter than the {w}-frame baseline window"
        )));
    }
    let hold = ms_to_frames(OFFSET_HOLD_MS, stream.sample_rate);
    let baseline = window_variance(x, 0, w);
    let onset = ONSET_FACTOR * baseline;
    let offset = OFFSET_FACTOR * baseline;

    // var[i] is the variance of the window ending at frame i.
    let var: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 < w {
                0.0
            } else {
                window_variance(x, i + 1 - w, i + 1)
            }
        })
        .collect();

    let mut spans = Vec::new();
    let mut i = w;
    while i < n {
        if var[i] <= onset {
            i += 1;
            continue;
        }
        let start = i;
        let mut j = i + 1;
        let mut end = n;
        while j < n {
            if var[j] <= offset {
                let quiet_until = (j + hold).min(n);
                if let Some(loud) = (j..quiet_until).find(|&t| var[t] > offset) {
                    j = loud + 1;
                    continue;
                }
                end = (j + POST_OFFSET_BUFFER_FRAMES).min(n);
                break;
            }
            j += 1;
        }
        spans.push(Span { start, end });
        i = end.max(start + 1);
    }
    Ok(spans)
}

/// Subtracts from every frame the mean of the trailing window (the available
/// prefix near the start), per channel.
pub fn remove_drift(x: &Mat, window_frames: usize) -> Result<Mat> {
    if window_frames == 0 {
        return Err(Error::invalid("drift window must be at least one frame"));
    }
    let mut out = Mat::zeros(x.rows(), x.cols());
    for c in 0..x.rows() {
        let row = x.row(c);
        let mut sum = 0.0;
        for t in 0..row.len() {
            sum += row[t];
            if t >= window_frames {
                sum -= row[t - window_frames];
            }
            let count = (t + 1).min(window_frames) as f64;
            out[(c, t)] = row[t] - sum / count;
        }
    }
    Ok(out)
}

/// Centered 3-frame moving average; edge frames average their two available
/// frames.
pub fn smooth(x: &Mat) -> Result<Mat> {
    if x.cols() == 0 {
        return Err(Error::Empty("smoothing input"));
    }
    let t = x.cols();
    let mut out = Mat::zeros(x.rows(), t);
    for c in 0..x.rows() {
        let row = x.row(c);
        for i in 0..t {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(t - 1);
            let window = &row[lo..=hi];
            out[(c, i)] = window.iter().sum::<f64>() / window.len() as f64;
        }
    }
    Ok(out)
}

/// Cuts a `frames`-wide window centred on the highest-energy frame of `span`.
pub fn extract_window(x: &Mat, span: Span, frames: usize) -> Result<Mat> {
    if frames == 0 || frames > x.cols() {
        return Err(Error::invalid(format!(
            "cannot cut {frames} frames from a {}-frame signal",
            x.cols()
        )));
    }
    let span_end = span.end.min(x.cols());
    if span.start >= span_end {
        return Err(Error::invalid("empty span"));
    }
    let energy = |t: usize| (0..x.rows()).map(|c| x[(c, t)] * x[(c, t)]).sum::<f64>();
    let mut peak = span.start;
    for t in span.start..span_end {
        if energy(t) > energy(peak) {
            peak = t;
        }
    }
    let start = peak.saturating_sub(frames / 2).min(x.cols() - frames);
    let mut out = Mat::zeros(x.rows(), frames);
    for c in 0..x.rows() {
        out.row_mut(c)
            .copy_from_slice(&x.row(c)[start..start + frames]);
    }
    Ok(out)
}

/// Runs segmentation, drift removal, the denoising slot and smoothing on a
/// stream, and cuts one `frames`-wide gesture per detected span. Normalization
/// is left to training, which fits it on the training split only.
pub fn preprocess_stream(stream: &RawStream, frames: usize) -> Result<Vec<(Span, Mat)>> {
    let spans = segment(stream, SEGMENT_WINDOW_MS)?;
    let drift_window = ms_to_frames(DRIFT_WINDOW_MS, stream.sample_rate);
    let cleaned = smooth(&remove_drift(&stream.samples, drift_window)?)?;
    spans
        .into_iter()
        .map(|span| Ok((span, extract_window(&cleaned, span, frames)?)))
        .collect()
}

/// Per-channel z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl NormStats {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::shape("NormStats", mean.len(), std.len()));
        }
        if mean.iter().chain(&std).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("normalization stats"));
        }
        if std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("normalization stddev must be > 0"));
        }
        Ok(NormStats { mean, std })
    }

    pub fn identity(channels: usize) -> Self {
        NormStats {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn apply(&self, x: &Mat) -> Result<Mat> {
        zscore_apply(x, self)
    }
}

/// Fits per-channel mean and population stddev over every frame of every
/// sample. Constant channels get stddev 1 and a warning.
pub fn zscore_fit(samples: &[GestureSample]) -> Result<NormStats> {
    if samples.len() < 2 {
        return Err(Error::invalid(format!(
            "z-score fit needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let channels = samples[0].x.rows();
    if samples.iter().any(|s| s.x.rows() != channels) {
        return Err(Error::Dataset("samples disagree on channel count".into()));
    }
    let mut mean = vec![0.0; channels];
    let mut count = 0usize;
    for s in samples {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += s.x.row(c).iter().sum::<f64>();
        }
        count += s.x.cols();
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0; channels];
    for s in samples {
        for (c, v) in var.iter_mut().enumerate() {
            *v +=
                s.x.row(c)
                    .iter()
                    .map(|x| (x - mean[c]).powi(2))
                    .sum::<f64>();
        }
    }
    let std = var
        .iter()
        .enumerate()
        .map(|(c, v)| {
            let sd = (v / count as f64).sqrt();
            if sd < MIN_STDDEV {
                log::warn!("channel {c} is constant (stddev {sd:e}); using stddev 1");
                1.0
            } else {
                sd
            }
        })
        .collect();
    NormStats::new(mean, std)
}

pub fn zscore_apply(x: &Mat, stats: &NormStats) -> Result<Mat> {
    if x.rows() != stats.channels() {
        return Err(Error::shape("zscore_apply", stats.channels(), x.rows()));
    }
    let mut out = x.clone();
    for c in 0..x.rows() {
        let (m, s) = (stats.mean[c], stats.std[c]);
        out.row_mut(c).iter_mut().for_each(|v| *v = (*v - m) / s);
    }
    Ok(out)
}
