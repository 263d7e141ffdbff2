//! Temporal patches and the random Fourier feature map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{gauss_sample, uniform_sample, Mat, RngStream};

/// Shape of a model input (`channels x frames`) and its split into equal,
/// non-overlapping temporal patches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub channels: usize,
    pub frames: usize,
    pub patches: usize,
}

impl PatchSpec {
    pub fn new(channels: usize, frames: usize, patches: usize) -> Result<Self> {
        let spec = PatchSpec {
            channels,
            frames,
            patches,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.frames == 0 || self.patches == 0 {
            return Err(Error::invalid(format!(
                "patch spec dimensions must be positive: {self:?}"
            )));
        }
        if self.frames % self.patches != 0 {
            return Err(Error::invalid(format!(
                "{} frames do not split into {} equal patches",
                self.frames, self.patches
            )));
        }
        Ok(())
    }

    pub fn frames_per_patch(&self) -> usize {
        self.frames / self.patches
    }

    /// Length of one flattened patch, `C * T / P`.
    pub fn patch_dim(&self) -> usize {
        self.channels * self.frames_per_patch()
    }
}

/// How raw electrode frames become model input frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameLayout {
    /// Model input is the (normalized) electrode matrix itself.
    #[default]
    Raw,
    /// Four corner electrodes ordered NW, NE, SW, SE, followed by two
    /// differential rows: mean north minus mean south, and mean east minus
    /// mean west. Six values per frame.
    ElectrodeDifferentials,
}

impl FrameLayout {
    /// Rows of the model input produced from `input_channels` electrode rows.
    pub fn feature_channels(self, input_channels: usize) -> Result<usize> {
        match self {
            FrameLayout::Raw => Ok(input_channels),
            FrameLayout::ElectrodeDifferentials if input_channels == 4 => Ok(6),
            FrameLayout::ElectrodeDifferentials => Err(Error::invalid(format!(
                "electrode differentials need 4 corner channels, got {input_channels}"
            ))),
        }
    }

    pub fn expand(self, x: &Mat) -> Result<Mat> {
        let out_rows = self.feature_channels(x.rows())?;
        match self {
            FrameLayout::Raw => Ok(x.clone()),
            FrameLayout::ElectrodeDifferentials => {
                let t = x.cols();
                let mut out = Mat::zeros(out_rows, t);
                for f in 0..t {
                    let (nw, ne, sw, se) = (x[(0, f)], x[(1, f)], x[(2, f)], x[(3, f)]);
                    for c in 0..4 {
                        out[(c, f)] = x[(c, f)];
                    }
                    // Halved so the rows stay on the electrode scale.
                    out[(4, f)] = 0.5 * ((nw + ne) - (sw + se));
                    out[(5, f)] = 0.5 * ((ne + se) - (nw + sw));
                }
                Ok(out)
            }
        }
    }
}

/// Splits `x` (`C x T`) into `P` flattened patches.
///
/// Within a patch, frames are in temporal order and each frame contributes its
/// channels in order, i.e. element `f * C + c` is channel `c` of local frame `f`.
pub fn patchify(x: &Mat, spec: &PatchSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    if x.shape() != (spec.channels, spec.frames) {
        return Err(Error::shape(
            "patchify",
            format!("{}x{}", spec.channels, spec.frames),
            format!("{}x{}", x.rows(), x.cols()),
        ));
    }
    let fpp = spec.frames_per_patch();
    Ok((0..spec.patches)
        .map(|p| {
            let mut patch = Vec::with_capacity(spec.patch_dim());
            for t in p * fpp..(p + 1) * fpp {
                for c in 0..spec.channels {
                    patch.push(x[(c, t)]);
                }
            }
            patch
        })
        .collect())
}

/// Inverse of [`patchify`].
pub fn unpatchify(patches: &[Vec<f64>], spec: &PatchSpec) -> Result<Mat> {
    spec.validate()?;
    if patches.len() != spec.patches || patches.iter().any(|p| p.len() != spec.patch_dim()) {
        return Err(Error::shape(
            "unpatchify",
            format!("{} patches of length {}", spec.patches, spec.patch_dim()),
            format!("{} patches", patches.len()),
        ));
    }
    let fpp = spec.frames_per_patch();
    let mut x = Mat::zeros(spec.channels, spec.frames);
    for (p, patch) in patches.iter().enumerate() {
        for f in 0..fpp {
            for c in 0..spec.channels {
                x[(c, p * fpp + f)] = patch[f * spec.channels + c];
            }
        }
    }
    Ok(x)
}

/// Fixed random feature map `phi(x) = sqrt(2/m) cos(x W + b)` approximating
/// the kernel `exp(-gamma ||x - y||^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RffMap {
    /// `patch_dim x m`, entries drawn from N(0, 2 gamma).
    w: Mat,
    /// Phases drawn from Uniform[0, 2 pi).
    b: Vec<f64>,
    gamma: f64,
}

impl RffMap {
    /// Assembles a map from explicit parameters (used by deserialization and tests).
    pub fn from_parts(w: Mat, b: Vec<f64>, gamma: f64) -> Result<Self> {
        if w.cols() != b.len() {
            return Err(Error::shape(
                "RffMap",
                format!("b of length {}", w.cols()),
                b.len(),
            ));
        }
        if w.cols() == 0 || w.rows() == 0 {
            return Err(Error::Empty("RffMap"));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be > 0, got {gamma}")));
        }
        if !w.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("RffMap parameters"));
        }
        Ok(RffMap { w, b, gamma })
    }

    pub fn w(&self) -> &Mat {
        &self.w
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn patch_dim(&self) -> usize {
        self.w.rows()
    }

    /// Maps a single flattened patch to its `m` features.
    pub fn map_patch(&self, x: &[f64], out: &mut [f64]) {
        let m = self.dim();
        let scale = (2.0 / m as f64).sqrt();
        out.copy_from_slice(&self.b);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &wij) in out.iter_mut().zip(self.w.row(i)) {
                *o += xi * wij;
            }
        }
        for o in out.iter_mut() {
            *o = scale * o.cos();
        }
    }
}

/// Samples a feature map for patches of `spec`.
pub fn rff_init(spec: &PatchSpec, m: usize, gamma: f64, rng: &mut RngStream) -> Result<RffMap> {
    spec.validate()?;
    if m == 0 {
        return Err(Error::invalid("feature dimension m must be >= 1"));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!("gamma must be > 0, got {gamma}")));
    }
    let d = spec.patch_dim();
    let w = gauss_sample(rng, d * m, 0.0, (2.0 * gamma).sqrt())?;
    let b = uniform_sample(rng, m, 0.0, std::f64::consts::TAU)?;
    RffMap::from_parts(Mat::from_vec(d, m, w)?, b, gamma)
}

/// Feature matrix `Q` of one sample: `P x m`, row `p` is `phi(x_p)`.
pub type PatchFeatures = Mat;

pub fn rff_transform(patches: &[Vec<f64>], map: &RffMap) -> Result<PatchFeatures> {
    let m = map.dim();
    let mut q = Mat::zeros(patches.len(), m);
    for (p, patch) in patches.iter().enumerate() {
        if patch.len() != map.patch_dim() {
            return Err(Error::shape("rff_transform", map.patch_dim(), patch.len()));
        }
        map.map_patch(patch, q.row_mut(p));
    }
    if !q.is_finite() {
        return Err(Error::NonFinite("rff_transform output"));
    }
    Ok(q)
}

/// `patchify` followed by `rff_transform`.
pub fn features_of(x: &Mat, spec: &PatchSpec, map: &RffMap) -> Result<PatchFeatures> {
    rff_transform(&patchify(x, spec)?, map)
}
