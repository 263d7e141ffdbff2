//! Parametric tap/swipe generator.
//!
//! Four electrodes sit at the corners of the unit square. A tap is a Gaussian
//! pulse in time whose per-electrode gain falls off with the distance between
//! the touch point (a mid-edge anchor for each class) and the electrode. A
//! swipe moves the touch point through the sensor along the class direction
//! under a Gaussian contact envelope, so electrodes on the leading side peak
//! later than those on the trailing side.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    Dataset, GestureSample, PipelineState, RawStream, DEFAULT_SAMPLE_RATE_HZ, DIRECTION_CLASSES,
};
use crate::error::{Error, Result};
use crate::numkernel::{Mat, RngStream};

/// Electrode positions in channel order: NW, NE, SW, SE.
pub const ELECTRODES: [(f64, f64); 4] = [(0.0, 1.0), (1.0, 1.0), (0.0, 0.0), (1.0, 0.0)];

/// Unit direction per class, matching [`DIRECTION_CLASSES`].
const DIRECTIONS: [(f64, f64); 4] = [(0.0, 1.0), (0.0, -1.0), (1.0, 0.0), (-1.0, 0.0)];

const CENTER: (f64, f64) = (0.5, 0.5);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GestureKind {
    #[default]
    Tap,
    Swipe,
}

impl GestureKind {
    /// Gesture window length used by the presets.
    pub fn default_frames(self) -> usize {
        match self {
            GestureKind::Tap => 10,
            GestureKind::Swipe => 30,
        }
    }
}

impl fmt::Display for GestureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GestureKind::Tap => "tap",
            GestureKind::Swipe => "swipe",
        })
    }
}

impl FromStr for GestureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tap" => Ok(GestureKind::Tap),
            "swipe" => Ok(GestureKind::Swipe),
            other => Err(Error::invalid(format!(
                "unknown gesture kind `{other}` (expected tap or swipe)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub kind: GestureKind,
    pub samples_per_class: usize,
    pub noise_stddev: f64,
    /// Peak pulse height on the electrodes nearest the touch point.
    pub amplitude: f64,
    /// Linear drift added per frame.
    pub drift_rate: f64,
    pub seed: u64,
    /// Frames per gesture; `None` uses the kind's default.
    pub frames: Option<usize>,
    /// Resting capacitance level.
    pub baseline: f64,
    /// Distance from the sensor centre to each class anchor (0.5 = mid-edge).
    pub anchor_offset: f64,
    /// Distance at which an electrode's gain halves.
    pub falloff: f64,
    /// Tap pulse width in frames; swipes use a quarter of the window.
    pub pulse_width: f64,
    /// Peak position jitter in frames (uniform, +-).
    pub jitter_frames: f64,
    /// Per-gesture multiplicative gain spread (uniform in 1 +- spread).
    pub gain_spread: f64,
    /// Touch-point jitter in unit-square coordinates.
    pub position_jitter: f64,
    /// Round to 12-bit levels over `[0, 2 * (baseline + amplitude)]`.
    pub quantize_12bit: bool,
    pub sample_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            kind: GestureKind::Tap,
            samples_per_class: 100,
            noise_stddev: 0.05,
            amplitude: 1.0,
            drift_rate: 0.0,
            seed: 0,
            frames: None,
            baseline: 1.0,
            anchor_offset: 0.5,
            falloff: 0.5,
            pulse_width: 2.5,
            jitter_frames: 0.25,
            gain_spread: 0.05,
            position_jitter: 0.02,
            quantize_12bit: false,
            sample_rate: DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

impl SynthConfig {
    pub fn new(kind: GestureKind) -> Self {
        SynthConfig {
            kind,
            ..SynthConfig::default()
        }
    }

    pub fn frames(&self) -> usize {
        self.frames.unwrap_or_else(|| self.kind.default_frames())
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.noise_stddev,
            self.amplitude,
            self.drift_rate,
            self.baseline,
            self.anchor_offset,
            self.falloff,
            self.pulse_width,
            self.jitter_frames,
            self.gain_spread,
            self.position_jitter,
            self.sample_rate,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("synth config"));
        }
        if self.noise_stddev < 0.0 {
            return Err(Error::invalid("noise_stddev must be >= 0"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::invalid("samples_per_class must be >= 1"));
        }
        if self.frames() < 3 {
            return Err(Error::invalid("gestures need at least 3 frames"));
        }
        if !(self.falloff > 0.0) || !(self.pulse_width > 0.0) || !(self.sample_rate > 0.0) {
            return Err(Error::invalid(
                "falloff, pulse_width and sample_rate must be > 0",
            ));
        }
        if self.jitter_frames < 0.0 || self.position_jitter < 0.0 {
            return Err(Error::invalid("jitter must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.gain_spread) {
            return Err(Error::invalid("gain_spread must lie in [0, 1)"));
        }
        Ok(())
    }

    fn gain(&self, touch: (f64, f64), electrode: (f64, f64)) -> f64 {
        let d2 = (touch.0 - electrode.0).powi(2) + (touch.1 - electrode.1).powi(2);
        1.0 / (1.0 + d2 / (self.falloff * self.falloff))
    }

    /// Gain normalizer so the electrodes nearest an anchor reach `amplitude`.
    fn gain_scale(&self) -> f64 {
        let anchor = (CENTER.0, CENTER.1 + self.anchor_offset);
        1.0 / self.gain(anchor, ELECTRODES[0])
    }

    fn quantize(&self, v: f64) -> f64 {
        if !self.quantize_12bit {
            return v;
        }
        let full = 2.0 * (self.baseline + self.amplitude);
        let levels = 4095.0;
        (v.clamp(0.0, full) / full * levels).round() * full / levels
    }

    /// Noise-free gesture for `class`, with per-gesture variation drawn from `rng`.
    fn clean_gesture(&self, class: usize, frames: usize, rng: &mut RngStream) -> Mat {
        let dir = DIRECTIONS[class];
        let scale = self.gain_scale() * self.amplitude;
        let gain = 1.0 + self.gain_spread * (2.0 * rng.next_f64() - 1.0);
        let centre = frames as f64 / 2.0 + self.jitter_frames * (2.0 * rng.next_f64() - 1.0);
        let jx = self.position_jitter * (2.0 * rng.next_f64() - 1.0);
        let jy = self.position_jitter * (2.0 * rng.next_f64() - 1.0);

        let mut x = Mat::zeros(ELECTRODES.len(), frames);
        for t in 0..frames {
            let tf = t as f64;
            let (touch, envelope) = match self.kind {
                GestureKind::Tap => {
                    let touch = (
                        CENTER.0 + self.anchor_offset * dir.0 + jx,
                        CENTER.1 + self.anchor_offset * dir.1 + jy,
                    );
                    let z = (tf - centre) / self.pulse_width;
                    (touch, (-0.5 * z * z).exp())
                }
                GestureKind::Swipe => {
                    // The touch point crosses the opposite anchor one envelope
                    // width before the peak and the class anchor one width after.
                    let z = (tf - centre) / (frames as f64 / 4.0);
                    let along = self.anchor_offset * z;
                    let touch = (CENTER.0 + along * dir.0 + jx, CENTER.1 + along * dir.1 + jy);
                    (touch, (-0.5 * z * z).exp())
                }
            };
            for (c, &e) in ELECTRODES.iter().enumerate() {
                x[(c, t)] = scale * gain * envelope * self.gain(touch, e);
            }
        }
        x
    }

    fn finish_frame(&self, clean: f64, t: usize, rng: &mut RngStream) -> f64 {
        let mut v = self.baseline + clean + self.drift_rate * t as f64;
        if self.noise_stddev > 0.0 {
            v += self.noise_stddev * rng.next_normal();
        }
        self.quantize(v)
    }
}

/// Generates a balanced dataset, classes interleaved, ids `<kind>-NNNN`.
pub fn synth_generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let frames = config.frames();
    let mut rng = RngStream::new(config.seed);
    let classes = DIRECTION_CLASSES.len();
    let mut samples = Vec::with_capacity(config.samples_per_class * classes);
    for i in 0..config.samples_per_class {
        for class in 0..classes {
            let mut x = config.clean_gesture(class, frames, &mut rng);
            for c in 0..x.rows() {
                for t in 0..frames {
                    x[(c, t)] = config.finish_frame(x[(c, t)], t, &mut rng);
                }
            }
            samples.push(GestureSample {
                x,
                label: class,
                id: format!("{}-{:04}", config.kind, i * classes + class),
            });
        }
    }
    Ok(Dataset {
        samples,
        class_names: DIRECTION_CLASSES.iter().map(|s| s.to_string()).collect(),
        sample_rate: config.sample_rate,
        pipeline: PipelineState {
            segmented: true,
            ..PipelineState::default()
        },
    })
}

/// Ground truth for a gesture embedded in a synthetic stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InjectedGesture {
    pub label: usize,
    pub start: usize,
    /// Frame of maximal summed electrode signal.
    pub peak: usize,
}

/// Continuous stream holding `count` gestures with `gap` idle frames before
/// each one and after the last. Labels cycle through the classes.
pub fn synth_stream(
    config: &SynthConfig,
    count: usize,
    gap: usize,
) -> Result<(RawStream, Vec<InjectedGesture>)> {
    config.validate()?;
    let frames = config.frames();
    let n = count * (gap + frames) + gap;
    let mut rng = RngStream::new(config.seed);
    let mut clean = Mat::zeros(ELECTRODES.len(), n);
    let mut truth = Vec::with_capacity(count);
    for g in 0..count {
        let label = g % DIRECTION_CLASSES.len();
        let start = gap + g * (gap + frames);
        let x = config.clean_gesture(label, frames, &mut rng);
        let mut peak = 0;
        let mut best = f64::NEG_INFINITY;
        for t in 0..frames {
            let total: f64 = (0..x.rows()).map(|c| x[(c, t)]).sum();
            if total > best {
                best = total;
                peak = t;
            }
            for c in 0..x.rows() {
                clean[(c, start + t)] = x[(c, t)];
            }
        }
        truth.push(InjectedGesture {
            label,
            start,
            peak: start + peak,
        });
    }
    let mut x = clean;
    for c in 0..x.rows() {
        for t in 0..n {
            x[(c, t)] = config.finish_frame(x[(c, t)], t, &mut rng);
        }
    }
    Ok((RawStream::new(config.sample_rate, x)?, truth))
}
