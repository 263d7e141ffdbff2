//! The convexified attention classifier.
//!
//! For one sample with patch features `Q` (`P x m`) and weights `A`
//! (`K x P x m`):
//!
//! * scores `s_kp = <Q_p, A_kp> / sqrt(m)`
//! * attention `alpha_k = proj_simplex(s_k)`
//! * class score `f_k = sum_p alpha_kp <Q_p, A_kp> = sqrt(m) <alpha_k, s_k>`
//!
//! Attention reuses `A`, so the only trainable object is the weight tensor.

mod bundle;

pub use bundle::{deserialize, serialize, Precision, FORMAT_VERSION, HEADER_LEN, MAGIC};

use crate::dataio::NormStats;
use crate::error::{Error, Result};
use crate::features::{features_of, FrameLayout, PatchFeatures, PatchSpec, RffMap};
use crate::losses::LossKind;
use crate::numkernel::Mat;
use crate::projections::{simplex_project_rows, SimplexVector};

/// Trainable weights indexed `[class][patch][feature]`, stored so that the
/// flat buffer is exactly the row-major `(K*P) x m` reshape.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTensor {
    classes: usize,
    patches: usize,
    dim: usize,
    data: Vec<f64>,
}

impl WeightTensor {
    pub fn zeros(classes: usize, patches: usize, dim: usize) -> Self {
        WeightTensor {
            classes,
            patches,
            dim,
            data: vec![0.0; classes * patches * dim],
        }
    }

    pub fn from_vec(classes: usize, patches: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != classes * patches * dim {
            return Err(Error::shape(
                "WeightTensor",
                format!("{classes}x{patches}x{dim}"),
                data.len(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight tensor"));
        }
        Ok(WeightTensor {
            classes,
            patches,
            dim,
            data,
        })
    }

    /// Rebuilds from the `(K*P) x m` matrix view.
    pub fn from_matrix(classes: usize, m: Mat) -> Result<Self> {
        if classes == 0 || m.rows() % classes != 0 {
            return Err(Error::shape("WeightTensor::from_matrix", classes, m.rows()));
        }
        let patches = m.rows() / classes;
        let dim = m.cols();
        WeightTensor::from_vec(classes, patches, dim, m.into_vec())
    }

    /// The `(K*P) x m` reshape on which the nuclear norm is taken.
    pub fn to_matrix(&self) -> Mat {
        Mat::from_vec(self.classes * self.patches, self.dim, self.data.clone())
            .expect("weight tensor is finite and consistently shaped")
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `A_{k,p}`, length `m`.
    #[inline]
    pub fn block(&self, k: usize, p: usize) -> &[f64] {
        let start = (k * self.patches + p) * self.dim;
        &self.data[start..start + self.dim]
    }

    #[inline]
    pub fn block_mut(&mut self, k: usize, p: usize) -> &mut [f64] {
        let start = (k * self.patches + p) * self.dim;
        &mut self.data[start..start + self.dim]
    }

    pub fn nuclear_norm(&self) -> Result<f64> {
        self.to_matrix().nuclear_norm()
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &WeightTensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scaled(&self, c: f64) -> WeightTensor {
        WeightTensor {
            data: self.data.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

/// Per-class attention over patches; each row lies on the simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights(Mat);

impl AttentionWeights {
    /// Validates each row as a simplex point.
    pub fn new(rows: Vec<SimplexVector>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(SimplexVector::into_inner).collect();
        Ok(AttentionWeights(Mat::from_rows(&rows)?))
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn row(&self, k: usize) -> &[f64] {
        self.0.row(k)
    }

    pub fn classes(&self) -> usize {
        self.0.rows()
    }
}

fn check_shapes(q: &PatchFeatures, a: &WeightTensor) -> Result<()> {
    if q.shape() != (a.patches, a.dim) {
        return Err(Error::shape(
            "features vs weights",
            format!("{}x{}", a.patches, a.dim),
            format!("{}x{}", q.rows(), q.cols()),
        ));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Alignment scores `s` (`K x P`).
pub fn attention_scores(q: &PatchFeatures, a: &WeightTensor) -> Result<Mat> {
    check_shapes(q, a)?;
    let inv_sqrt_m = 1.0 / (a.dim as f64).sqrt();
    let mut s = Mat::zeros(a.classes, a.patches);
    for k in 0..a.classes {
        for p in 0..a.patches {
            s[(k, p)] = inv_sqrt_m * dot(q.row(p), a.block(k, p));
        }
    }
    Ok(s)
}

/// Row-wise simplex projection of the scores.
pub fn attention_weights(s: &Mat) -> Result<AttentionWeights> {
    if s.rows() == 0 || s.cols() == 0 {
        return Err(Error::Empty("attention scores"));
    }
    if !s.is_finite() {
        return Err(Error::NonFinite("attention scores"));
    }
    let mut alpha = s.clone();
    let width = s.cols();
    simplex_project_rows(alpha.as_mut_slice(), width);
    Ok(AttentionWeights(alpha))
}

/// Attended features `Q~_k = sum_p alpha_kp Q_p` (`K x m`).
pub fn attend(q: &PatchFeatures, alpha: &AttentionWeights) -> Result<Mat> {
    let a = alpha.as_mat();
    if a.cols() != q.rows() {
        return Err(Error::shape(
            "attend",
            format!("{} patches", a.cols()),
            q.rows(),
        ));
    }
    let mut out = Mat::zeros(a.rows(), q.cols());
    for k in 0..a.rows() {
        for p in 0..q.rows() {
            let w = a[(k, p)];
            if w == 0.0 {
                continue;
            }
            for (o, &v) in out.row_mut(k).iter_mut().zip(q.row(p)) {
                *o += w * v;
            }
        }
    }
    Ok(out)
}

/// `f_k = sum_p alpha_kp <Q_p, A_kp>` for a given (possibly frozen) attention.
pub fn scores_with_attention(
    q: &PatchFeatures,
    a: &WeightTensor,
    alpha: &AttentionWeights,
) -> Result<Vec<f64>> {
    check_shapes(q, a)?;
    if alpha.as_mat().shape() != (a.classes, a.patches) {
        return Err(Error::shape(
            "attention vs weights",
            format!("{}x{}", a.classes, a.patches),
            format!("{:?}", alpha.as_mat().shape()),
        ));
    }
    Ok((0..a.classes)
        .map(|k| {
            (0..a.patches)
                .map(|p| alpha.as_mat()[(k, p)] * dot(q.row(p), a.block(k, p)))
                .sum()
        })
        .collect())
}

/// Everything computed by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub scores: Mat,
    pub alpha: AttentionWeights,
    pub class_scores: Vec<f64>,
}

pub fn forward(q: &PatchFeatures, a: &WeightTensor) -> Result<Forward> {
    let scores = attention_scores(q, a)?;
    let alpha = attention_weights(&scores)?;
    let sqrt_m = (a.dim as f64).sqrt();
    // f_k = sqrt(m) <alpha_k, s_k> is the same quantity without recomputing dots.
    let class_scores = (0..a.classes)
        .map(|k| sqrt_m * dot(alpha.row(k), scores.row(k)))
        .collect();
    Ok(Forward {
        scores,
        alpha,
        class_scores,
    })
}

/// Class scores with attention recomputed from `A`.
pub fn class_scores(q: &PatchFeatures, a: &WeightTensor) -> Result<Vec<f64>> {
    Ok(forward(q, a)?.class_scores)
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(f: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in f.iter().enumerate().skip(1) {
        if v > f[best] {
            best = k;
        }
    }
    best
}

/// Serializable classifier: fixed feature map, trained weights, input
/// normalization and shape metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub rff: RffMap,
    pub weights: WeightTensor,
    /// Shape of the model input after frame expansion.
    pub spec: PatchSpec,
    /// Electrode channels consumed by [`predict`].
    pub input_channels: usize,
    pub layout: FrameLayout,
    pub norm_stats: NormStats,
    pub loss_kind: LossKind,
    pub trained: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub trainable: usize,
    pub fixed: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.trainable + self.fixed
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

impl ModelBundle {
    pub fn classes(&self) -> usize {
        self.weights.classes()
    }

    /// Checks that spec, feature map, weights and normalization agree.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let feat_channels = self.layout.feature_channels(self.input_channels)?;
        if feat_channels != self.spec.channels {
            return Err(Error::shape(
                "bundle channels",
                feat_channels,
                self.spec.channels,
            ));
        }
        if self.rff.patch_dim() != self.spec.patch_dim() {
            return Err(Error::shape(
                "bundle rff patch_dim",
                self.spec.patch_dim(),
                self.rff.patch_dim(),
            ));
        }
        if self.weights.patches() != self.spec.patches || self.weights.dim() != self.rff.dim() {
            return Err(Error::shape(
                "bundle weights",
                format!("Kx{}x{}", self.spec.patches, self.rff.dim()),
                format!(
                    "{}x{}x{}",
                    self.weights.classes(),
                    self.weights.patches(),
                    self.weights.dim()
                ),
            ));
        }
        if self.classes() < 2 {
            return Err(Error::invalid("a classifier needs at least two classes"));
        }
        if self.norm_stats.channels() != self.input_channels {
            return Err(Error::shape(
                "bundle norm stats",
                self.input_channels,
                self.norm_stats.channels(),
            ));
        }
        Ok(())
    }

    /// Raw gesture (`input_channels x T`) to patch features.
    pub fn features(&self, x: &Mat) -> Result<PatchFeatures> {
        if x.shape() != (self.input_channels, self.spec.frames) {
            return Err(Error::shape(
                "predict input",
                format!("{}x{}", self.input_channels, self.spec.frames),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
        let normalized = self.norm_stats.apply(x)?;
        let expanded = self.layout.expand(&normalized)?;
        features_of(&expanded, &self.spec, &self.rff)
    }
}

/// Classifies one raw segmented gesture.
pub fn predict(x: &Mat, bundle: &ModelBundle) -> Result<Prediction> {
    let q = bundle.features(x)?;
    let scores = class_scores(&q, &bundle.weights)?;
    Ok(Prediction {
        label: argmax(&scores),
        scores,
    })
}

/// Trainable weights `K*P*m`; fixed feature map `patch_dim*m + m`.
pub fn param_count(bundle: &ModelBundle) -> ParamCount {
    ParamCount {
        trainable: bundle.weights.len(),
        fixed: bundle.rff.patch_dim() * bundle.rff.dim() + bundle.rff.dim(),
    }
}
