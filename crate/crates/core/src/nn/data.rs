//! Dataset specifications, synthetic generators and labeled batches.
//!
//! Synthetic kinds are fully reproducible from their seed. Generator
//! constants (noise levels, center ranges) are fixed here rather than
//! exposed, so a spec serializes to the same data everywhere.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::idx;
use crate::rng::{rng_for, SALT_CENTERS, SALT_DATA_TEST, SALT_DATA_TRAIN, SALT_EVAL, SALT_PROBE};

const BLOB_CENTER_RANGE: f64 = 2.0;
const BLOB_STD: f64 = 1.8;
const MOONS_NOISE: f64 = 0.3;
const CIRCLES_NOISE: f64 = 0.08;
const CIRCLES_INNER_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    GaussianBlobs,
    TwoMoons,
    ConcentricCircles,
    TwoValleyRegression,
    IdxFiles,
}

/// Declarative dataset description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub input_dim: usize,
    pub n_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

/// Supervision targets: class labels or regression values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Labels(Vec<usize>),
    Values(Matrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels(l) => l.len(),
            Targets::Values(v) => v.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Targets {
        match self {
            Targets::Labels(l) => Targets::Labels(indices.iter().map(|&i| l[i]).collect()),
            Targets::Values(v) => Targets::Values(v.select_rows(indices)),
        }
    }

    /// One-hot encode labels into `n_classes` columns; values pass through.
    pub fn to_values(&self, n_classes: usize) -> Matrix {
        match self {
            Targets::Values(v) => v.clone(),
            Targets::Labels(l) => {
                let mut m = Matrix::zeros(l.len(), n_classes);
                for (i, &c) in l.iter().enumerate() {
                    m.set(i, c, 1.0);
                }
                m
            }
        }
    }
}

/// A batch of inputs with matching targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBatch {
    pub inputs: Matrix,
    pub targets: Targets,
}

impl LabeledBatch {
    pub fn new(inputs: Matrix, targets: Targets) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs vs {} targets",
                inputs.rows(),
                targets.len()
            )));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> LabeledBatch {
        LabeledBatch {
            inputs: self.inputs.select_rows(indices),
            targets: self.targets.select(indices),
        }
    }

    /// Seeded subset of `size` rows (all rows when `size >= len`).
    pub fn seeded_subset(&self, size: usize, seed: u64, salt: u64) -> LabeledBatch {
        if size >= self.len() {
            return self.clone();
        }
        let mut rng = rng_for(seed, salt);
        let mut indices: Vec<usize> = (0..self.len()).collect();
        // partial Fisher-Yates: the first `size` entries form the sample
        for i in 0..size {
            let j = rng.random_range(i..indices.len());
            indices.swap(i, j);
        }
        indices.truncate(size);
        indices.sort_unstable();
        self.select(&indices)
    }
}

/// Train and test splits instantiated from a spec.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: LabeledBatch,
    pub test: LabeledBatch,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::InvalidConfig("n_train and n_test must be positive".into()));
        }
        if self.input_dim == 0 || self.n_classes == 0 {
            return Err(Error::InvalidConfig("input_dim and n_classes must be positive".into()));
        }
        match self.kind {
            DatasetKind::TwoMoons | DatasetKind::ConcentricCircles => {
                if self.input_dim != 2 {
                    return Err(Error::InvalidConfig(format!(
                        "{:?} is a 2-d dataset, got input_dim {}",
                        self.kind, self.input_dim
                    )));
                }
                if self.n_classes != 2 {
                    return Err(Error::InvalidConfig(format!(
                        "{:?} has 2 classes, got {}",
                        self.kind, self.n_classes
                    )));
                }
            }
            DatasetKind::TwoValleyRegression => {
                if self.input_dim != 1 {
                    return Err(Error::InvalidConfig(
                        "two-valley-regression is 1-dimensional".into(),
                    ));
                }
            }
            DatasetKind::IdxFiles => {
                if self.path.is_none() {
                    return Err(Error::InvalidConfig("idx-files requires a path".into()));
                }
            }
            DatasetKind::GaussianBlobs => {}
        }
        Ok(())
    }

    /// Generate (or load) the train/test splits.
    pub fn instantiate(&self) -> Result<DataSplits> {
        self.validate()?;
        match self.kind {
            DatasetKind::GaussianBlobs => Ok(DataSplits {
                train: self.blobs(self.n_train, SALT_DATA_TRAIN)?,
                test: self.blobs(self.n_test, SALT_DATA_TEST)?,
            }),
            DatasetKind::TwoMoons => Ok(DataSplits {
                train: self.moons(self.n_train, SALT_DATA_TRAIN)?,
                test: self.moons(self.n_test, SALT_DATA_TEST)?,
            }),
            DatasetKind::ConcentricCircles => Ok(DataSplits {
                train: self.circles(self.n_train, SALT_DATA_TRAIN)?,
                test: self.circles(self.n_test, SALT_DATA_TEST)?,
            }),
            DatasetKind::TwoValleyRegression => Ok(DataSplits {
                train: self.two_valley(self.n_train, SALT_DATA_TRAIN)?,
                test: self.two_valley(self.n_test, SALT_DATA_TEST)?,
            }),
            DatasetKind::IdxFiles => {
                let dir = self.path.as_ref().unwrap();
                let mut train = idx::load_idx(
                    &dir.join("train-images-idx3-ubyte"),
                    &dir.join("train-labels-idx1-ubyte"),
                )?;
                let mut test = idx::load_idx(
                    &dir.join("t10k-images-idx3-ubyte"),
                    &dir.join("t10k-labels-idx1-ubyte"),
                )?;
                train = truncate(train, self.n_train);
                test = truncate(test, self.n_test);
                Ok(DataSplits { train, test })
            }
        }
    }

    /// Centers are drawn sequentially from the seed's center stream, so a
    /// spec with fewer classes sees a prefix of the centers of a spec with
    /// more classes (used by the transfer experiments: the target task is a
    /// subset of the source blobs).
    fn blob_centers(&self, count: usize) -> Vec<Vec<f64>> {
        let mut rng = rng_for(self.seed, SALT_CENTERS);
        (0..count)
            .map(|_| {
                (0..self.input_dim)
                    .map(|_| rng.random_range(-BLOB_CENTER_RANGE..BLOB_CENTER_RANGE))
                    .collect()
            })
            .collect()
    }

    fn blobs(&self, n: usize, salt: u64) -> Result<LabeledBatch> {
        let centers = self.blob_centers(self.n_classes);
        let mut rng = rng_for(self.seed, salt);
        let mut inputs = Matrix::zeros(n, self.input_dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % self.n_classes;
            for d in 0..self.input_dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                inputs.set(i, d, centers[c][d] + BLOB_STD * z);
            }
            labels.push(c);
        }
        LabeledBatch::new(inputs, Targets::Labels(labels))
    }

    fn moons(&self, n: usize, salt: u64) -> Result<LabeledBatch> {
        let mut rng = rng_for(self.seed, salt);
        let mut inputs = Matrix::zeros(n, 2);
        let mut labels = Vec::with_capacity(n);
        let n0 = n / 2;
        for i in 0..n {
            let t: f64 = rng.random_range(0.0..PI);
            let (mut x, mut y, c) = if i < n0 {
                (t.cos(), t.sin(), 0)
            } else {
                (1.0 - t.cos(), 0.5 - t.sin(), 1)
            };
            let nx: f64 = StandardNormal.sample(&mut rng);
            let ny: f64 = StandardNormal.sample(&mut rng);
            x += MOONS_NOISE * nx;
            y += MOONS_NOISE * ny;
            inputs.set(i, 0, x);
            inputs.set(i, 1, y);
            labels.push(c);
        }
        LabeledBatch::new(inputs, Targets::Labels(labels))
    }

    fn circles(&self, n: usize, salt: u64) -> Result<LabeledBatch> {
        let mut rng = rng_for(self.seed, salt);
        let mut inputs = Matrix::zeros(n, 2);
        let mut labels = Vec::with_capacity(n);
        let n0 = n / 2;
        for i in 0..n {
            let t: f64 = rng.random_range(0.0..2.0 * PI);
            let (r, c) = if i < n0 { (1.0, 0) } else { (CIRCLES_INNER_RADIUS, 1) };
            let nx: f64 = StandardNormal.sample(&mut rng);
            let ny: f64 = StandardNormal.sample(&mut rng);
            inputs.set(i, 0, r * t.cos() + CIRCLES_NOISE * nx);
            inputs.set(i, 1, r * t.sin() + CIRCLES_NOISE * ny);
            labels.push(c);
        }
        LabeledBatch::new(inputs, Targets::Labels(labels))
    }

    /// 1-d regression `y = tanh(x)` on `x ~ U[-2, 2]`. With a 1-hidden-unit
    /// tanh network this loss surface has two sign-symmetric valleys.
    fn two_valley(&self, n: usize, salt: u64) -> Result<LabeledBatch> {
        let mut rng = rng_for(self.seed, salt);
        let mut inputs = Matrix::zeros(n, 1);
        let mut values = Matrix::zeros(n, 1);
        for i in 0..n {
            let x: f64 = rng.random_range(-2.0..2.0);
            inputs.set(i, 0, x);
            values.set(i, 0, x.tanh());
        }
        LabeledBatch::new(inputs, Targets::Values(values))
    }

    /// Fixed held-out evaluation batch used by homotopy barrier scans and
    /// landscape sampling: a seeded subset of the test split.
    pub fn eval_batch(&self, size: usize) -> Result<LabeledBatch> {
        let splits = self.instantiate()?;
        Ok(splits.test.seeded_subset(size, self.seed, SALT_EVAL))
    }

    /// Fixed probe input set for representation snapshots: a seeded subset
    /// of the test split (inputs only).
    pub fn probe_set(&self, size: usize) -> Result<Matrix> {
        let splits = self.instantiate()?;
        Ok(splits.test.seeded_subset(size, self.seed, SALT_PROBE).inputs)
    }
}

fn truncate(batch: LabeledBatch, n: usize) -> LabeledBatch {
    if batch.len() <= n {
        return batch;
    }
    let indices: Vec<usize> = (0..n).collect();
    batch.select(&indices)
}
