//! Self-reporting checks of the convexity claims: the perturbed-weights
//! midpoint test, nonexpansiveness of the simplex projection, and the
//! softmax counterexample.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::PatchFeatures;
use crate::losses::{loss, LossKind};
use crate::model::{forward, ModelBundle, WeightTensor};
use crate::numkernel::{Mat, RngStream};
use crate::projections::{simplex_project, softmax_ref, squared_distance_to_simplex};

/// Slack allowed on the midpoint inequality.
pub const CONVEXITY_TOL: f64 = 1e-6;
/// Slack allowed on the Lipschitz ratio.
pub const LIPSCHITZ_TOL: f64 = 1e-9;
/// Pairs closer than this are skipped by the Lipschitz sweep.
pub const MIN_PAIR_DISTANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvexityTrialReport {
    pub loss_kind: LossKind,
    pub noise_stddev: f64,
    pub trials: usize,
    pub satisfied: usize,
    /// Mean of `L(mid) - L(A1)/2 - L(A2)/2`; negative means strictly satisfied.
    pub mean_violation: f64,
    pub max_violation: f64,
    pub violations: Vec<f64>,
}

impl ConvexityTrialReport {
    pub fn passed(&self) -> bool {
        self.satisfied == self.trials
    }
}

/// Mean loss over `features` with attention recomputed from `a`.
pub fn pipeline_loss(
    kind: LossKind,
    features: &[PatchFeatures],
    labels: &[usize],
    a: &WeightTensor,
) -> Result<f64> {
    let mut f = Mat::zeros(features.len(), a.classes());
    for (i, q) in features.iter().enumerate() {
        f.row_mut(i).copy_from_slice(&forward(q, a)?.class_scores);
    }
    loss(kind, &f, labels)
}

fn perturbed(a: &WeightTensor, stddev: f64, rng: &mut RngStream) -> WeightTensor {
    let mut out = a.clone();
    for v in out.as_mut_slice() {
        *v += stddev * rng.next_normal();
    }
    out
}

/// Midpoint convexity protocol around a trained model.
///
/// Each trial draws `A1 = A + N(0, s^2)` and `A2 = A + N(0, s^2)` from the
/// trial's own substream of `seed` and compares the loss at the midpoint with
/// the average of the endpoint losses on `(xs, labels)`.
pub fn convexity_check(
    bundle: &ModelBundle,
    xs: &[Mat],
    labels: &[usize],
    kind: LossKind,
    trials: usize,
    noise_stddev: f64,
    seed: u64,
) -> Result<ConvexityTrialReport> {
    if !bundle.trained {
        return Err(Error::invalid("convexity check needs a trained model"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    if xs.is_empty() {
        return Err(Error::Empty("convexity test set"));
    }
    if xs.len() != labels.len() {
        return Err(Error::shape("convexity test set", xs.len(), labels.len()));
    }
    if !(noise_stddev >= 0.0) || !noise_stddev.is_finite() {
        return Err(Error::invalid("noise stddev must be finite and >= 0"));
    }
    let features: Vec<PatchFeatures> = xs
        .iter()
        .map(|x| bundle.features(x))
        .collect::<Result<_>>()?;
    let root = RngStream::new(seed);
    let violations: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = root.derive(t as u64);
            let a1 = perturbed(&bundle.weights, noise_stddev, &mut rng);
            let a2 = perturbed(&bundle.weights, noise_stddev, &mut rng);
            let mut mid = a1.scaled(0.5);
            mid.axpy(0.5, &a2);
            let l1 = pipeline_loss(kind, &features, labels, &a1)?;
            let l2 = pipeline_loss(kind, &features, labels, &a2)?;
            let lm = pipeline_loss(kind, &features, labels, &mid)?;
            Ok(lm - 0.5 * l1 - 0.5 * l2)
        })
        .collect::<Result<_>>()?;
    let satisfied = violations.iter().filter(|&&v| v <= CONVEXITY_TOL).count();
    Ok(ConvexityTrialReport {
        loss_kind: kind,
        noise_stddev,
        trials,
        satisfied,
        mean_violation: violations.iter().sum::<f64>() / trials as f64,
        max_violation: violations.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        violations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonexpansivenessReport {
    pub pairs: usize,
    pub dim: usize,
    pub skipped: usize,
    /// Largest `||Pv - Pw|| / ||v - w||`.
    pub max_ratio: f64,
    /// Largest `||Pv - Pw||^2 - <Pv - Pw, v - w>`; firm nonexpansiveness
    /// says this is <= 0.
    pub max_firm_gap: f64,
}

impl NonexpansivenessReport {
    pub fn passed(&self) -> bool {
        self.max_ratio <= 1.0 + LIPSCHITZ_TOL && self.max_firm_gap <= LIPSCHITZ_TOL
    }
}

/// `(ratio, firm_gap)` for one pair; `ratio` is `None` when the inputs
/// coincide to within [`MIN_PAIR_DISTANCE`].
pub fn pair_check(v: &[f64], w: &[f64]) -> Result<(Option<f64>, f64)> {
    if v.len() != w.len() {
        return Err(Error::shape("pair_check", v.len(), w.len()));
    }
    let pv = simplex_project(v)?;
    let pw = simplex_project(w)?;
    let mut dp2 = 0.0;
    let mut dx2 = 0.0;
    let mut inner = 0.0;
    for i in 0..v.len() {
        let dp = pv.values()[i] - pw.values()[i];
        let dx = v[i] - w[i];
        dp2 += dp * dp;
        dx2 += dx * dx;
        inner += dp * dx;
    }
    let dx = dx2.sqrt();
    let ratio = (dx >= MIN_PAIR_DISTANCE).then(|| dp2.sqrt() / dx);
    Ok((ratio, dp2 - inner))
}

/// Random-pair sweep of the Lipschitz and firm inequalities in dimension
/// `dim`, with entries drawn from `N(0, scale^2)`.
pub fn nonexpansiveness_sweep(
    pairs: usize,
    dim: usize,
    scale: f64,
    seed: u64,
) -> Result<NonexpansivenessReport> {
    if pairs == 0 || dim == 0 {
        return Err(Error::invalid("pairs and dim must be >= 1"));
    }
    let mut rng = RngStream::new(seed);
    let mut report = NonexpansivenessReport {
        pairs,
        dim,
        skipped: 0,
        max_ratio: 0.0,
        max_firm_gap: f64::NEG_INFINITY,
    };
    for _ in 0..pairs {
        let v: Vec<f64> = (0..dim).map(|_| scale * rng.next_normal()).collect();
        let w: Vec<f64> = (0..dim).map(|_| scale * rng.next_normal()).collect();
        let (ratio, gap) = pair_check(&v, &w)?;
        match ratio {
            Some(r) => report.max_ratio = report.max_ratio.max(r),
            None => report.skipped += 1,
        }
        report.max_firm_gap = report.max_firm_gap.max(gap);
    }
    Ok(report)
}

/// Both sides of Jensen's inequality for softmax at `(0,0)`, `(2,0)` and
/// their midpoint `(1,0)`, alongside the same test for the squared distance
/// to the simplex.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SoftmaxCounterexample {
    pub softmax_at_midpoint: Vec<f64>,
    pub averaged_softmax: Vec<f64>,
    /// True when `softmax(mid) <= average` fails in some component.
    pub softmax_convexity_fails: bool,
    pub distance_at_midpoint: f64,
    pub averaged_distance: f64,
    pub distance_convexity_holds: bool,
}

impl SoftmaxCounterexample {
    pub fn passed(&self) -> bool {
        (self.softmax_at_midpoint[0] - 0.731).abs() <= 1e-3
            && (self.averaged_softmax[0] - 0.691).abs() <= 1e-3
            && self.softmax_convexity_fails
            && self.distance_convexity_holds
    }
}

pub fn softmax_counterexample() -> Result<SoftmaxCounterexample> {
    let a = [0.0, 0.0];
    let b = [2.0, 0.0];
    let mid = [1.0, 0.0];
    let sm = softmax_ref(&mid)?;
    let (sa, sb) = (softmax_ref(&a)?, softmax_ref(&b)?);
    let avg: Vec<f64> = sa.iter().zip(&sb).map(|(x, y)| 0.5 * x + 0.5 * y).collect();
    let fails = sm.iter().zip(&avg).any(|(m, v)| m > v);
    let dm = squared_distance_to_simplex(&mid)?;
    let davg = 0.5 * squared_distance_to_simplex(&a)? + 0.5 * squared_distance_to_simplex(&b)?;
    Ok(SoftmaxCounterexample {
        softmax_at_midpoint: sm,
        averaged_softmax: avg,
        softmax_convexity_fails: fails,
        distance_at_midpoint: dm,
        averaged_distance: davg,
        distance_convexity_holds: dm <= davg + 1e-15,
    })
}
