//! Loss landscape sampling around a converged configuration.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::arch::NetworkArch;
use crate::nn::data::LabeledBatch;
use crate::nn::net::loss;
use crate::nn::params::ParamVector;
use crate::nn::train::DIVERGENCE_THRESHOLD;
use crate::rng::{rng_for, SALT_LANDSCAPE};

/// Perturbation offsets around a center with their evaluated losses.
/// Non-finite losses are clamped to a sentinel and counted in `flagged`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandscapeSample {
    /// `n_samples x n_params` perturbation offsets (center-relative).
    pub offsets: Matrix,
    /// Loss at `center + offsets[i]` on the evaluation batch.
    pub losses: Vec<f64>,
    /// Loss at the center itself.
    pub center_loss: f64,
    pub radius: f64,
    pub seed: u64,
    /// Count of non-finite losses clamped to the sentinel.
    pub flagged: usize,
}

impl LandscapeSample {
    /// Assemble a sample directly from points and losses (analytic fixtures
    /// and file-loaded clouds).
    pub fn from_parts(offsets: Matrix, losses: Vec<f64>) -> Self {
        let center_loss = losses.iter().cloned().fold(f64::INFINITY, f64::min);
        Self { offsets, losses, center_loss, radius: 0.0, seed: 0, flagged: 0 }
    }

    pub fn len(&self) -> usize {
        self.offsets.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows of the offset matrix as owned points.
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.offsets.iter_rows().take(self.len()).map(|r| r.to_vec()).collect()
    }
}

/// Sample `n_samples` isotropic Gaussian offsets of scale `radius` around
/// `center` and evaluate each point's loss on the fixed evaluation batch.
/// Deterministic given `seed`.
pub fn sample_landscape(
    arch: &NetworkArch,
    center: &ParamVector,
    radius: f64,
    n_samples: usize,
    seed: u64,
    eval_batch: &LabeledBatch,
) -> Result<LandscapeSample> {
    if n_samples < 2 {
        return Err(Error::InvalidConfig("n_samples must be >= 2".into()));
    }
    if radius < 0.0 || !radius.is_finite() {
        return Err(Error::InvalidConfig("radius must be a finite non-negative real".into()));
    }
    let n_params = center.len();
    let mut rng = rng_for(seed, SALT_LANDSCAPE);
    let mut offsets = Matrix::zeros(n_samples, n_params);
    for v in offsets.data_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = z * radius;
    }
    let center_loss = loss(arch, center, eval_batch)?;

    let rows: Vec<Vec<f64>> = offsets.iter_rows().take(n_samples).map(|r| r.to_vec()).collect();
    let raw: Vec<f64> = rows
        .par_iter()
        .map(|offset| {
            let values: Vec<f64> =
                center.values().iter().zip(offset).map(|(c, o)| c + o).collect();
            match ParamVector::new(arch, values) {
                Ok(p) => loss(arch, &p, eval_batch).unwrap_or(f64::NAN),
                Err(_) => f64::NAN,
            }
        })
        .collect();
    let mut flagged = 0usize;
    let losses: Vec<f64> = raw
        .into_iter()
        .map(|l| {
            if l.is_finite() {
                l
            } else {
                flagged += 1;
                DIVERGENCE_THRESHOLD
            }
        })
        .collect();
    Ok(LandscapeSample { offsets, losses, center_loss, radius, seed, flagged })
}

/// Greedy maxmin (farthest point) landmark selection: indices of up to
/// `k` landmarks, starting from index 0. Deterministic.
pub fn maxmin_landmarks(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    if n <= k {
        return (0..n).collect();
    }
    let dist = |i: usize, j: usize| -> f64 {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let mut chosen = vec![0usize];
    let mut min_dist: Vec<f64> = (0..n).map(|j| dist(0, j)).collect();
    while chosen.len() < k {
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (j, &d) in min_dist.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = j;
            }
        }
        chosen.push(best);
        for j in 0..n {
            min_dist[j] = min_dist[j].min(dist(best, j));
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::arch::{Activation, Head};
    use crate::nn::data::Targets;
    use crate::nn::params::init_params;

    fn setup() -> (NetworkArch, ParamVector, LabeledBatch) {
        let arch =
            NetworkArch::new(vec![2, 3, 2], Activation::Tanh, Head::SoftmaxCrossEntropy)
                .unwrap();
        let theta = init_params(&arch, 1).unwrap();
        let mut inputs = Matrix::zeros(6, 2);
        for (i, v) in inputs.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        let batch = LabeledBatch::new(inputs, Targets::Labels(vec![0, 1, 0, 1, 0, 1])).unwrap();
        (arch, theta, batch)
    }

    #[test]
    fn zero_radius_all_losses_equal_center() {
        let (arch, theta, batch) = setup();
        let sample = sample_landscape(&arch, &theta, 0.0, 8, 3, &batch).unwrap();
        assert!(sample.offsets.data().iter().all(|v| *v == 0.0));
        for l in &sample.losses {
            assert_eq!(*l, sample.center_loss);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let (arch, theta, batch) = setup();
        let a = sample_landscape(&arch, &theta, 0.5, 16, 7, &batch).unwrap();
        let b = sample_landscape(&arch, &theta, 0.5, 16, 7, &batch).unwrap();
        assert_eq!(a.offsets, b.offsets);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn offset_std_tracks_radius() {
        let (arch, theta, batch) = setup();
        let radius = 0.8;
        let sample = sample_landscape(&arch, &theta, radius, 5000, 11, &batch).unwrap();
        let n = sample.offsets.data().len() as f64;
        let mean: f64 = sample.offsets.data().iter().sum::<f64>() / n;
        let var: f64 =
            sample.offsets.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!((std - radius).abs() / radius < 0.05, "std = {std}");
    }

    #[test]
    fn too_few_samples_rejected() {
        let (arch, theta, batch) = setup();
        assert!(sample_landscape(&arch, &theta, 0.5, 1, 7, &batch).is_err());
    }

    #[test]
    fn landmarks_cover_extremes() {
        let points: Vec<Vec<f64>> =
            (0..50).map(|i| vec![i as f64, 0.0]).collect();
        let idx = maxmin_landmarks(&points, 3);
        assert_eq!(idx.len(), 3);
        assert_eq!(idx[0], 0);
        assert_eq!(idx[1], 49); // farthest from 0
        assert_eq!(idx[2], 24); // then the middle (24 or 25; ties go low)
    }

    #[test]
    fn landmarks_identity_when_few_points() {
        let points = vec![vec![0.0], vec![1.0]];
        assert_eq!(maxmin_landmarks(&points, 10), vec![0, 1]);
    }
}
