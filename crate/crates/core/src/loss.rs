//! Squared loss composed with a transform, and its derivatives.
//!
//! For a single sample the loss is `l(z) = (g(z) - y)^2` with `z = w·x`.
//! Its derivative in `z` is `2 (g(z) - y) g'(z)` and the gradient in `w` is
//! that derivative times `x`. Dataset totals are summed in ascending sample
//! order; past [`SEQUENTIAL_LIMIT`] samples the sum switches to a fixed
//! pairwise split so results do not depend on scheduling.

use std::ops::Range;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::transform::TransformKind;

/// Largest sample count summed strictly left to right.
pub const SEQUENTIAL_LIMIT: usize = 10_000;

/// A weight vector paired with an output transform; predicts `g(w·x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    weights: Vec<f64>,
    transform: TransformKind,
}

impl Model {
    pub fn new(weights: Vec<f64>, transform: TransformKind) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::param("weights", "must not be empty"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::param("weights", "must be finite"));
        }
        Ok(Self { weights, transform })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn transform(&self) -> &TransformKind {
        &self.transform
    }

    /// `w·x`.
    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.weights.len(), x.len())?;
        Ok(dot(&self.weights, x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.transform.evaluate(self.linear_predictor(x)?))
    }

    fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        check_dim(self.weights.len(), ds.n_features())
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn loss_z(t: &TransformKind, z: f64, y: f64) -> f64 {
    let r = t.evaluate(z) - y;
    r * r
}

pub fn dloss_dz(t: &TransformKind, z: f64, y: f64) -> f64 {
    2.0 * (t.evaluate(z) - y) * t.derivative(z)
}

/// `l'' g'^2 + l' g''` with `l'' = 2` and `l' = 2 (g - y)`; negative values
/// mark points where the composed loss is locally concave in `z`.
pub fn psd_condition_value(t: &TransformKind, z: f64, y: f64) -> Result<f64> {
    let g2 = t.second_derivative(z)?;
    let g1 = t.derivative(z);
    Ok(2.0 * g1 * g1 + 2.0 * (t.evaluate(z) - y) * g2)
}

pub fn sample_gradient(m: &Model, x: &[f64], y: f64) -> Result<Vec<f64>> {
    let z = m.linear_predictor(x)?;
    let s = dloss_dz(&m.transform, z, y);
    Ok(x.iter().map(|xi| s * xi).collect())
}

pub fn total_loss(m: &Model, ds: &Dataset) -> Result<f64> {
    m.check_dataset(ds)?;
    Ok(loss_at(&m.transform, &m.weights, ds))
}

pub fn total_gradient(m: &Model, ds: &Dataset) -> Result<Vec<f64>> {
    m.check_dataset(ds)?;
    Ok(gradient_at(&m.transform, &m.weights, ds))
}

/// Unchecked total loss; `w.len()` must equal `ds.n_features()`.
pub(crate) fn loss_at(t: &TransformKind, w: &[f64], ds: &Dataset) -> f64 {
    let mut out = [0.0];
    accumulate(0..ds.n_samples(), &mut out, &|i, acc: &mut [f64]| {
        acc[0] += loss_z(t, dot(w, ds.row(i)), ds.targets()[i]);
    });
    out[0]
}

pub(crate) fn gradient_at(t: &TransformKind, w: &[f64], ds: &Dataset) -> Vec<f64> {
    let mut out = vec![0.0; ds.n_features()];
    accumulate(0..ds.n_samples(), &mut out, &|i, acc: &mut [f64]| {
        let x = ds.row(i);
        let s = dloss_dz(t, dot(w, x), ds.targets()[i]);
        for (a, xi) in acc.iter_mut().zip(x) {
            *a += s * xi;
        }
    });
    out
}

/// Adds the contribution of every index in `range` into `out`, left to
/// right for short ranges and by a fixed binary split otherwise.
pub(crate) fn accumulate<F>(range: Range<usize>, out: &mut [f64], add: &F)
where
    F: Fn(usize, &mut [f64]),
{
    if range.len() <= SEQUENTIAL_LIMIT {
        for i in range {
            add(i, out);
        }
        return;
    }
    let mid = range.start + range.len() / 2;
    accumulate(range.start..mid, out, add);
    let mut right = vec![0.0; out.len()];
    accumulate(mid..range.end, &mut right, add);
    for (o, r) in out.iter_mut().zip(right) {
        *o += r;
    }
}
