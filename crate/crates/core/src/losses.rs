//! Multi-class hinge and squared losses over class scores, and their
//! (sub)gradients with respect to the weight tensor.
//!
//! Gradients hold the attention weights fixed: with `alpha` frozen the class
//! score `f_k = sum_p alpha_kp <Q_p, A_kp>` is linear in `A`, so block
//! `(k, p)` of `df_k/dA` is `alpha_kp * Q_p`. The trainer recomputes `alpha`
//! for every mini-batch.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::PatchFeatures;
use crate::model::{AttentionWeights, WeightTensor};
use crate::numkernel::Mat;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Hinge,
    Squared,
}

impl LossKind {
    pub fn code(self) -> u8 {
        match self {
            LossKind::Hinge => 0,
            LossKind::Squared => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LossKind::Hinge),
            1 => Some(LossKind::Squared),
            _ => None,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Hinge => "hinge",
            LossKind::Squared => "squared",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinge" => Ok(LossKind::Hinge),
            "squared" => Ok(LossKind::Squared),
            other => Err(Error::invalid(format!(
                "unknown loss `{other}` (expected hinge or squared)"
            ))),
        }
    }
}

/// Feature matrices with their labels (0-based class indices).
#[derive(Clone, Debug)]
pub struct Batch {
    pub features: Vec<PatchFeatures>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Batch {
    pub fn new(features: Vec<PatchFeatures>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::shape("Batch", features.len(), labels.len()));
        }
        if features.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Batch {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One-hot target rows for the squared loss.
    pub fn onehot(&self) -> Mat {
        onehot(&self.labels, self.classes)
    }
}

pub fn onehot(labels: &[usize], classes: usize) -> Mat {
    let mut y = Mat::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        y[(i, l)] = 1.0;
    }
    y
}

fn check_scores(f: &Mat, labels: &[usize]) -> Result<()> {
    if f.rows() != labels.len() {
        return Err(Error::shape(
            "loss",
            format!("{} score rows", labels.len()),
            f.rows(),
        ));
    }
    if f.rows() == 0 {
        return Err(Error::Empty("loss input"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= f.cols()) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {} classes",
            f.cols()
        )));
    }
    Ok(())
}

/// Index of the highest-scoring class other than `label`; lowest index wins ties.
pub(crate) fn best_rival(f: &[f64], label: usize) -> usize {
    let mut best = usize::MAX;
    for (k, &v) in f.iter().enumerate() {
        if k != label && (best == usize::MAX || v > f[best]) {
            best = k;
        }
    }
    best
}

/// `max(0, 1 - f_y + max_{k != y} f_k)` for one sample.
pub(crate) fn hinge_margin(f: &[f64], label: usize) -> f64 {
    1.0 - f[label] + f[best_rival(f, label)]
}

/// Mean multi-class hinge loss over rows of `f` (`n x K`).
pub fn hinge_loss(f: &Mat, labels: &[usize]) -> Result<f64> {
    check_scores(f, labels)?;
    if f.cols() < 2 {
        return Err(Error::invalid("hinge loss needs at least two classes"));
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| hinge_margin(f.row(i), y).max(0.0))
        .sum();
    Ok(total / labels.len() as f64)
}

/// Mean squared error against one-hot targets `y` (`n x K`).
pub fn squared_loss(f: &Mat, y: &Mat) -> Result<f64> {
    if f.shape() != y.shape() {
        return Err(Error::shape(
            "squared_loss",
            format!("{:?}", y.shape()),
            format!("{:?}", f.shape()),
        ));
    }
    if f.rows() == 0 {
        return Err(Error::Empty("loss input"));
    }
    let total: f64 = f
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    Ok(total / f.rows() as f64)
}

pub fn loss(kind: LossKind, f: &Mat, labels: &[usize]) -> Result<f64> {
    match kind {
        LossKind::Hinge => hinge_loss(f, labels),
        LossKind::Squared => squared_loss(f, &onehot(labels, f.cols())),
    }
}

/// Adds `weight * d loss_i / dA` for one sample into `grad`.
///
/// `q` is `P x m`, `alpha` and `f` come from the sample's forward pass.
pub(crate) fn accumulate_sample_gradient(
    kind: LossKind,
    q: &Mat,
    alpha: &Mat,
    f: &[f64],
    label: usize,
    weight: f64,
    grad: &mut WeightTensor,
) {
    match kind {
        LossKind::Hinge => {
            let rival = best_rival(f, label);
            // Zero margin picks the zero subgradient.
            if 1.0 - f[label] + f[rival] > 0.0 {
                add_weighted_features(grad, rival, q, alpha, weight);
                add_weighted_features(grad, label, q, alpha, -weight);
            }
        }
        LossKind::Squared => {
            for (k, &fk) in f.iter().enumerate() {
                let target = if k == label { 1.0 } else { 0.0 };
                let c = 2.0 * (fk - target) * weight;
                if c != 0.0 {
                    add_weighted_features(grad, k, q, alpha, c);
                }
            }
        }
    }
}

fn add_weighted_features(grad: &mut WeightTensor, k: usize, q: &Mat, alpha: &Mat, c: f64) {
    for p in 0..q.rows() {
        let a = alpha[(k, p)] * c;
        if a == 0.0 {
            continue;
        }
        for (g, &qv) in grad.block_mut(k, p).iter_mut().zip(q.row(p)) {
            *g += a * qv;
        }
    }
}

fn check_fixed_attention(
    batch: &Batch,
    a: &WeightTensor,
    alpha: &[AttentionWeights],
) -> Result<()> {
    if alpha.len() != batch.len() {
        return Err(Error::shape("gradient attention", batch.len(), alpha.len()));
    }
    if a.classes() != batch.classes {
        return Err(Error::shape("gradient weights", batch.classes, a.classes()));
    }
    for (q, al) in batch.features.iter().zip(alpha) {
        if q.shape() != (a.patches(), a.dim()) {
            return Err(Error::shape(
                "gradient features",
                format!("{}x{}", a.patches(), a.dim()),
                format!("{}x{}", q.rows(), q.cols()),
            ));
        }
        if al.as_mat().shape() != (a.classes(), a.patches()) {
            return Err(Error::shape(
                "gradient attention",
                format!("{}x{}", a.classes(), a.patches()),
                format!("{:?}", al.as_mat().shape()),
            ));
        }
    }
    Ok(())
}

fn fixed_attention_gradient(
    kind: LossKind,
    batch: &Batch,
    a: &WeightTensor,
    alpha: &[AttentionWeights],
) -> Result<WeightTensor> {
    check_fixed_attention(batch, a, alpha)?;
    let mut grad = WeightTensor::zeros(a.classes(), a.patches(), a.dim());
    let w = 1.0 / batch.len() as f64;
    for ((q, al), &y) in batch.features.iter().zip(alpha).zip(&batch.labels) {
        let f = crate::model::scores_with_attention(q, a, al)?;
        accumulate_sample_gradient(kind, q, al.as_mat(), &f, y, w, &mut grad);
    }
    Ok(grad)
}

/// Subgradient of the mean hinge loss with the per-sample attention held fixed.
pub fn hinge_subgradient(
    batch: &Batch,
    a: &WeightTensor,
    alpha: &[AttentionWeights],
) -> Result<WeightTensor> {
    if batch.classes < 2 {
        return Err(Error::invalid("hinge loss needs at least two classes"));
    }
    fixed_attention_gradient(LossKind::Hinge, batch, a, alpha)
}

/// Gradient of the mean squared loss with the per-sample attention held fixed.
pub fn squared_gradient(
    batch: &Batch,
    a: &WeightTensor,
    alpha: &[AttentionWeights],
) -> Result<WeightTensor> {
    fixed_attention_gradient(LossKind::Squared, batch, a, alpha)
}
