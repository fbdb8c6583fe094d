use crate::error::{Error, Result};

/// An immutable design matrix (rows are samples) with one target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    targets: Vec<f64>,
    n_features: usize,
}

impl Dataset {
    /// Builds a dataset from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::InvalidDataset(format!(
                "row {i} has {} features, expected {d}",
                r.len()
            )));
        }
        Self::from_row_major(rows.concat(), targets, d)
    }

    /// Builds a dataset from a row-major feature buffer of `targets.len() * n_features` values.
    pub fn from_row_major(features: Vec<f64>, targets: Vec<f64>, n_features: usize) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidDataset("at least one sample is required".into()));
        }
        if n_features == 0 {
            return Err(Error::InvalidDataset("at least one feature is required".into()));
        }
        if features.len() != targets.len() * n_features {
            return Err(Error::DimensionMismatch {
                expected: targets.len() * n_features,
                found: features.len(),
            });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "feature at row {}, column {} is not finite",
                i / n_features,
                i % n_features
            )));
        }
        if let Some(i) = targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("target at row {i} is not finite")));
        }
        Ok(Self {
            features,
            targets,
            n_features,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features)
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Row-major feature buffer.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn max_abs_target(&self) -> f64 {
        self.targets.iter().fold(0.0, |m, y| m.max(y.abs()))
    }

    /// Number of targets with `|y| > bound`.
    pub fn targets_outside(&self, bound: f64) -> usize {
        self.targets.iter().filter(|y| y.abs() > bound).count()
    }

    /// Euclidean norm of each feature column.
    pub fn column_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.n_features];
        for row in self.rows() {
            for (s, v) in sq.iter_mut().zip(row) {
                *s += v * v;
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }
}
