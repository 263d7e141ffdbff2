//! Euclidean projections used by the classifier.
//!
//! The simplex projection is the sort-and-threshold construction: sort the
//! input descending, find the largest prefix whose shifted entries stay
//! positive, and subtract the resulting threshold. The same routine, scaled to
//! an arbitrary radius, projects nonnegative singular values onto an L1 ball,
//! which gives the nuclear-norm ball projection.

use crate::error::{Error, Result};
use crate::numkernel::{reconstruct, svd_thin, Mat};

/// A point on the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub const SUM_TOL: f64 = 1e-9;
    pub const NONNEG_TOL: f64 = 1e-12;

    /// Validates membership of the simplex.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("simplex vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("simplex vector"));
        }
        if values.iter().any(|&v| v < -Self::NONNEG_TOL) {
            return Err(Error::invalid("simplex vector has a negative entry"));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::invalid(format!("simplex vector sums to {sum}")));
        }
        Ok(SimplexVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for SimplexVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_finite(s: &[f64], what: &'static str) -> Result<()> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// Threshold `theta` such that `sum(max(s - theta, 0)) == radius`.
///
/// Ties in the sort are broken by original index; the threshold depends only on
/// the sorted values so the order among equal entries does not matter.
fn simplex_threshold(s: &[f64], radius: f64) -> f64 {
    let mut u = s.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut rho_cumsum = u[0];
    let mut rho = 1usize;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let k = (j + 1) as f64;
        if uj - (cumsum - radius) / k > 0.0 {
            rho = j + 1;
            rho_cumsum = cumsum;
        }
    }
    (rho_cumsum - radius) / rho as f64
}

/// Euclidean projection onto the probability simplex.
pub fn simplex_project(s: &[f64]) -> Result<SimplexVector> {
    if s.is_empty() {
        return Err(Error::Empty("simplex_project input"));
    }
    check_finite(s, "simplex_project input")?;
    let theta = simplex_threshold(s, 1.0);
    Ok(SimplexVector(
        s.iter().map(|&v| (v - theta).max(0.0)).collect(),
    ))
}

/// Projects each row of `s` (row-major, `rows x width`) onto the simplex in place.
pub(crate) fn simplex_project_rows(s: &mut [f64], width: usize) {
    for row in s.chunks_exact_mut(width) {
        let theta = simplex_threshold(row, 1.0);
        for v in row.iter_mut() {
            *v = (*v - theta).max(0.0);
        }
    }
}

/// `||s - proj(s)||^2`. Half of this has gradient `s - proj(s)`.
pub fn squared_distance_to_simplex(s: &[f64]) -> Result<f64> {
    let p = simplex_project(s)?;
    Ok(s.iter()
        .zip(p.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Gradient of `0.5 * squared_distance_to_simplex` at `s`.
pub fn half_squared_distance_gradient(s: &[f64]) -> Result<Vec<f64>> {
    let p = simplex_project(s)?;
    Ok(s.iter().zip(p.values()).map(|(a, b)| a - b).collect())
}

/// Projection of a nonnegative vector onto `{x : ||x||_1 <= radius}`.
///
/// Inputs already inside the ball are returned unchanged; otherwise the
/// simplex threshold scaled to `radius` is applied, which keeps every entry
/// nonnegative.
pub fn l1_ball_project_nonneg(sigma: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!(
            "L1 radius must be > 0, got {radius}"
        )));
    }
    check_finite(sigma, "l1_ball_project_nonneg input")?;
    if let Some(neg) = sigma.iter().find(|&&v| v < 0.0) {
        return Err(Error::invalid(format!(
            "l1_ball_project_nonneg needs nonnegative entries, found {neg}"
        )));
    }
    let total: f64 = sigma.iter().sum();
    if total <= radius {
        return Ok(sigma.to_vec());
    }
    let theta = simplex_threshold(sigma, radius);
    Ok(sigma.iter().map(|&v| (v - theta).max(0.0)).collect())
}

/// Projection onto the nuclear-norm ball `{A : ||A||_* <= radius}` in the
/// Frobenius metric.
pub fn nuclear_ball_project(a: &Mat, radius: f64) -> Result<Mat> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!(
            "nuclear radius must be > 0, got {radius}"
        )));
    }
    let svd = svd_thin(a)?;
    let total: f64 = svd.sigma.iter().sum();
    if total <= radius {
        // Covers A = 0 as well.
        return Ok(a.clone());
    }
    let shrunk = l1_ball_project_nonneg(&svd.sigma, radius)?;
    Ok(reconstruct(&svd.u, &shrunk, &svd.v))
}

/// Max-subtracted softmax. Kept only as the non-convex reference that the
/// simplex projection replaces.
pub fn softmax_ref(s: &[f64]) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Err(Error::Empty("softmax input"));
    }
    check_finite(s, "softmax input")?;
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}
