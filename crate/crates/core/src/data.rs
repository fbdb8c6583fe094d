//! Dataset ingestion, synthetic generation and target-bound estimation.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::dot;
use crate::transform::TransformKind;

/// Which CSV column holds the targets.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetColumn {
    #[default]
    Last,
    Name(String),
    /// Zero-based column index.
    Index(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    CsvPath(PathBuf),
    Synthetic(SynthSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub source: DataSource,
    pub target_column: TargetColumn,
    pub has_header: bool,
    pub add_bias: bool,
    pub standardize: bool,
}

impl DatasetSpec {
    pub fn csv(path: impl Into<PathBuf>) -> Self {
        Self {
            source: DataSource::CsvPath(path.into()),
            target_column: TargetColumn::Last,
            has_header: true,
            add_bias: true,
            standardize: false,
        }
    }

    pub fn synthetic(spec: SynthSpec) -> Self {
        Self {
            source: DataSource::Synthetic(spec),
            ..Self::csv(PathBuf::new())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub true_weights: Option<Vec<f64>>,
    /// Standard deviation of Gaussian noise added to `w·x` before the transform.
    pub noise_std: f64,
    pub transform: TransformKind,
    pub seed: u64,
}

/// Per-column affine map to zero mean and unit (population) variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    fn fit(rows: &[Vec<f64>], names: &[String]) -> Result<Self> {
        let d = names.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.into_iter().map(|s| (s / n).sqrt()).collect();
        if let Some(j) = std.iter().position(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::InvalidDataset(format!(
                "column `{}` is constant and cannot be standardized",
                names[j]
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }
}

/// A parsed numeric CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(reader: impl Read, has_header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut names: Vec<String> = if has_header {
            rdr.headers()
                .map_err(csv_error)?
                .iter()
                .map(str::to_string)
                .collect()
        } else {
            Vec::new()
        };
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(csv_error)?;
            if names.is_empty() {
                names = (0..record.len()).map(|j| format!("column {j}")).collect();
            }
            let line = record.position().map_or(0, |p| p.line());
            let row = record
                .iter()
                .enumerate()
                .map(|(j, cell)| {
                    cell.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::NonNumericCell {
                            row: line,
                            column: names[j].clone(),
                            value: cell.to_string(),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { names, rows })
    }

    pub fn open(path: &Path, has_header: bool) -> Result<Self> {
        Self::read(File::open(path)?, has_header)
    }

    pub fn column_index(&self, target: &TargetColumn) -> Result<usize> {
        match target {
            TargetColumn::Last if !self.names.is_empty() => Ok(self.names.len() - 1),
            TargetColumn::Last => Err(Error::MissingTargetColumn("last".into())),
            TargetColumn::Name(n) => self
                .names
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::MissingTargetColumn(n.clone())),
            TargetColumn::Index(i) if *i < self.names.len() => Ok(*i),
            TargetColumn::Index(i) => Err(Error::MissingTargetColumn(i.to_string())),
        }
    }

    /// Splits off column `target`, returning `(features, targets, feature names)`.
    pub fn split(self, target: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<String>) {
        let mut names = self.names;
        names.remove(target);
        let mut targets = Vec::with_capacity(self.rows.len());
        let features = self
            .rows
            .into_iter()
            .map(|mut r| {
                targets.push(r.remove(target));
                r
            })
            .collect();
        (features, targets, names)
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::CsvParse {
        line,
        message: e.to_string(),
    }
}

/// A loaded dataset together with the preprocessing applied to its features.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub feature_names: Vec<String>,
    pub standardization: Option<Standardization>,
    pub add_bias: bool,
}

/// Applies optional standardization, then an optional trailing bias column.
pub fn preprocess(rows: &mut [Vec<f64>], standardization: Option<&Standardization>, add_bias: bool) {
    for r in rows.iter_mut() {
        if let Some(s) = standardization {
            s.apply(r);
        }
        if add_bias {
            r.push(1.0);
        }
    }
}

pub fn load(spec: &DatasetSpec) -> Result<LoadedData> {
    let (mut rows, targets, mut names) = match &spec.source {
        DataSource::CsvPath(path) => {
            let table = Table::open(path, spec.has_header)?;
            let target = table.column_index(&spec.target_column)?;
            table.split(target)
        }
        DataSource::Synthetic(synth) => {
            let (ds, _) = generate_synthetic(synth)?;
            let rows = ds.rows().map(<[f64]>::to_vec).collect();
            let names = (1..=ds.n_features()).map(|j| format!("x{j}")).collect();
            (rows, ds.targets().to_vec(), names)
        }
    };
    if rows.is_empty() {
        return Err(Error::InvalidDataset("no data rows".into()));
    }
    if names.is_empty() && !spec.add_bias {
        return Err(Error::InvalidDataset("no feature columns".into()));
    }
    let standardization = if spec.standardize {
        Some(Standardization::fit(&rows, &names)?)
    } else {
        None
    };
    preprocess(&mut rows, standardization.as_ref(), spec.add_bias);
    if spec.add_bias {
        names.push("bias".into());
    }
    let dataset = Dataset::from_rows(&rows, targets)?;
    Ok(LoadedData {
        dataset,
        feature_names: names,
        standardization,
        add_bias: spec.add_bias,
    })
}

/// Loads a dataset as described by `spec`; the target column is removed from
/// the features.
pub fn load_csv(spec: &DatasetSpec) -> Result<Dataset> {
    Ok(load(spec)?.dataset)
}

/// Draws `x ~ U[-1, 1]^d` and sets `y = g(w·x + ε)`, `ε ~ N(0, noise_std²)`.
/// Random weights, when not supplied, are drawn from `U[-1, 1]^d` first.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(Dataset, Vec<f64>)> {
    if spec.n_samples == 0 {
        return Err(Error::param("n_samples", "must be positive"));
    }
    if spec.n_features == 0 {
        return Err(Error::param("n_features", "must be positive"));
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(Error::param("noise_std", "must be nonnegative and finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights = match &spec.true_weights {
        Some(w) if w.len() != spec.n_features => {
            return Err(Error::DimensionMismatch {
                expected: spec.n_features,
                found: w.len(),
            })
        }
        Some(w) => w.clone(),
        None => (0..spec.n_features)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect(),
    };
    let features: Vec<f64> = (0..spec.n_samples * spec.n_features)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::param("noise_std", e.to_string()))?;
    let targets = features
        .chunks_exact(spec.n_features)
        .map(|x| {
            let mut z = dot(&weights, x);
            if spec.noise_std > 0.0 {
                z += noise.sample(&mut rng);
            }
            spec.transform.evaluate(z)
        })
        .collect();
    let ds = Dataset::from_row_major(features, targets, spec.n_features)?;
    Ok((ds, weights))
}

/// `margin * max |y|`, or `margin` when every target is zero.
pub fn estimate_target_bound(ds: &Dataset, margin: f64) -> Result<f64> {
    if !(margin >= 1.0 && margin.is_finite()) {
        return Err(Error::param(
            "margin",
            format!("must be at least 1, got {margin}"),
        ));
    }
    let max = ds.max_abs_target();
    Ok(if max == 0.0 { margin } else { margin * max })
}

/// Writes `x1..xd,target` with shortest round-trip number formatting.
pub fn write_csv(ds: &Dataset, mut out: impl Write) -> Result<()> {
    let header: Vec<String> = (1..=ds.n_features())
        .map(|j| format!("x{j}"))
        .chain(std::iter::once("target".to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (x, y) in ds.rows().zip(ds.targets()) {
        let mut line = String::new();
        for v in x {
            line.push_str(&format!("{v},"));
        }
        line.push_str(&format!("{y}"));
        writeln!(out, "{line}")?;
    }
    Ok(())
}
