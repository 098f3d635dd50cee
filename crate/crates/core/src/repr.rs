//! Representation snapshots, affine alignment between runs, and the
//! level-set fixed-point stability check.

use serde::{Deserialize, Serialize};

use crate::category::RepresentationPath;
use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::matrix::Matrix;
use crate::nn::arch::NetworkArch;
use crate::nn::data::LabeledBatch;
use crate::nn::net::{forward, loss};
use crate::nn::params::ParamVector;

/// Representation drift below which a perturbed configuration counts as the
/// same learned representation.
pub const FIXED_POINT_DRIFT_THRESHOLD: f64 = 1e-4;

/// Fingerprint of a probe input set; snapshots over different probes never
/// compare.
pub fn probe_id(probe: &Matrix) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u64| {
        h ^= b;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    eat(probe.rows() as u64);
    eat(probe.cols() as u64);
    for v in probe.data() {
        eat(v.to_bits());
    }
    h
}

/// Where a snapshot came from, when it came from a recorded trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotSource {
    pub trajectory: String,
    pub point_index: usize,
}

/// Penultimate-layer activations of one parameter configuration over a
/// fixed probe set: the objects of the representation category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationSnapshot {
    pub matrix: Matrix,
    pub probe_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SnapshotSource>,
}

impl RepresentationSnapshot {
    /// Snapshot of `theta` over `probe`.
    pub fn capture(arch: &NetworkArch, theta: &ParamVector, probe: &Matrix) -> Result<Self> {
        let (_, penultimate) = forward(arch, theta, probe)?;
        if !penultimate.is_finite() {
            return Err(Error::NonFinite("representation snapshot".into()));
        }
        Ok(Self { matrix: penultimate, probe_id: probe_id(probe), source: None })
    }

    pub fn width(&self) -> usize {
        self.matrix.cols()
    }

    pub fn n_probe(&self) -> usize {
        self.matrix.rows()
    }
}

/// Affine map `R1 ~ R0 A + 1 b^T` fitted between two snapshots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffineAlignment {
    /// `width x width` linear part.
    pub a: Matrix,
    /// Translation.
    pub b: Vec<f64>,
    /// `||R1 - (R0 A + 1 b^T)||_F / ||R1||_F`.
    pub residual: f64,
    /// The design `[R0 | 1]` had column rank below `width + 1`; the reported
    /// map is the minimum-norm solution.
    pub rank_deficient: bool,
}

/// Least-squares fit of the affine map taking `r0`'s representation onto
/// `r1`'s, over their shared probe set.
pub fn fit_affine_alignment(
    r0: &RepresentationSnapshot,
    r1: &RepresentationSnapshot,
) -> Result<AffineAlignment> {
    if r0.probe_id != r1.probe_id {
        return Err(Error::InvalidInput("snapshots taken over different probe sets".into()));
    }
    if r0.width() != r1.width() {
        return Err(Error::ShapeMismatch(format!(
            "snapshot widths {} vs {}",
            r0.width(),
            r1.width()
        )));
    }
    let n = r0.n_probe();
    let w = r0.width();
    if n < w + 1 {
        return Err(Error::InvalidInput(format!(
            "need at least width+1 = {} probe rows for a well-posed fit, got {n}",
            w + 1
        )));
    }
    // design [R0 | 1]
    let mut design = Matrix::zeros(n, w + 1);
    for i in 0..n {
        design.row_mut(i)[..w].copy_from_slice(r0.matrix.row(i));
        design.row_mut(i)[w] = 1.0;
    }
    let (coef, rank_deficient) = lstsq(&design, &r1.matrix)?;
    let mut a = Matrix::zeros(w, w);
    for i in 0..w {
        a.row_mut(i).copy_from_slice(coef.row(i));
    }
    let b = coef.row(w).to_vec();

    let fitted = apply_affine(&r0.matrix, &a, &b)?;
    let diff = r1.matrix.sub(&fitted)?;
    let denom = r1.matrix.frobenius_norm();
    let num = diff.frobenius_norm();
    let residual = if denom == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / denom
    };
    Ok(AffineAlignment { a, b, residual, rank_deficient })
}

/// `R A + 1 b^T`.
pub fn apply_affine(r: &Matrix, a: &Matrix, b: &[f64]) -> Result<Matrix> {
    let mut out = r.matmul(a)?;
    for i in 0..out.rows() {
        for (v, bj) in out.row_mut(i).iter_mut().zip(b) {
            *v += bj;
        }
    }
    Ok(out)
}

/// Per-index alignments along two representation paths plus the largest
/// consecutive drift `||A_{k+1} - A_k||_F` as a smoothness statistic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentPath {
    pub alignments: Vec<AffineAlignment>,
    pub max_consecutive_drift: f64,
}

pub fn alignment_path(p0: &RepresentationPath, p1: &RepresentationPath) -> Result<AlignmentPath> {
    if p0.len() != p1.len() {
        return Err(Error::ShapeMismatch(format!(
            "paths of lengths {} and {}",
            p0.len(),
            p1.len()
        )));
    }
    let alignments = p0
        .snapshots()
        .iter()
        .zip(p1.snapshots())
        .map(|(a, b)| fit_affine_alignment(a, b))
        .collect::<Result<Vec<_>>>()?;
    let mut max_drift = 0.0f64;
    for pair in alignments.windows(2) {
        let d = pair[1].a.sub(&pair[0].a)?.frobenius_norm();
        max_drift = max_drift.max(d);
    }
    Ok(AlignmentPath { alignments, max_consecutive_drift: max_drift })
}

/// Outcome of probing a configuration's representation stability along its
/// loss level set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub is_fixed_point: bool,
    /// Max over kept directions of the mean squared representation
    /// difference per probe example.
    pub max_repr_drift: f64,
    pub rejected_directions: usize,
    /// All directions fell outside the loss tolerance band, so nothing was
    /// measured.
    pub indeterminate: bool,
}

/// Check whether `theta_star`'s representation is invariant under
/// perturbations that stay on its loss level (within `loss_tolerance`).
/// Directions that leave the band are rejected, not counted against drift.
pub fn fixed_point_check(
    arch: &NetworkArch,
    theta_star: &ParamVector,
    directions: &[Vec<f64>],
    loss_tolerance: f64,
    probe: &Matrix,
    eval_batch: &LabeledBatch,
) -> Result<FixedPointReport> {
    if directions.is_empty() {
        return Err(Error::InvalidInput("need at least one perturbation direction".into()));
    }
    let base_loss = loss(arch, theta_star, eval_batch)?;
    let base_snapshot = RepresentationSnapshot::capture(arch, theta_star, probe)?;
    let mut rejected = 0usize;
    let mut max_drift = 0.0f64;
    let mut kept_any = false;

    for delta in directions {
        if delta.len() != theta_star.len() {
            return Err(Error::ShapeMismatch("direction length mismatch".into()));
        }
        let values: Vec<f64> =
            theta_star.values().iter().zip(delta).map(|(p, d)| p + d).collect();
        let perturbed = ParamVector::new(arch, values)?;
        let perturbed_loss = loss(arch, &perturbed, eval_batch)?;
        if !perturbed_loss.is_finite() || (perturbed_loss - base_loss).abs() > loss_tolerance {
            rejected += 1;
            continue;
        }
        kept_any = true;
        let snap = RepresentationSnapshot::capture(arch, &perturbed, probe)?;
        let diff = snap.matrix.sub(&base_snapshot.matrix)?;
        let mean_sq = diff.data().iter().map(|v| v * v).sum::<f64>() / diff.rows() as f64;
        max_drift = max_drift.max(mean_sq);
    }

    Ok(FixedPointReport {
        is_fixed_point: kept_any && max_drift < FIXED_POINT_DRIFT_THRESHOLD,
        max_repr_drift: max_drift,
        rejected_directions: rejected,
        indeterminate: !kept_any,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::arch::{Activation, Head};
    use crate::nn::data::Targets;
    use crate::nn::params::init_params;
    use crate::rng::rng_for;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rng_for(seed, 0x5eed);
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        m
    }

    fn snapshot(matrix: Matrix, pid: u64) -> RepresentationSnapshot {
        RepresentationSnapshot { matrix, probe_id: pid, source: None }
    }

    #[test]
    fn self_alignment_is_identity() {
        let r = snapshot(random_matrix(40, 5, 1), 9);
        let fit = fit_affine_alignment(&r, &r).unwrap();
        assert!(fit.residual < 1e-10, "residual = {}", fit.residual);
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((fit.a.get(i, j) - expect).abs() < 1e-8);
            }
            assert!(fit.b[i].abs() < 1e-8);
        }
    }

    #[test]
    fn planted_affine_transform_recovered() {
        let r0m = random_matrix(60, 4, 2);
        let a_true = random_matrix(4, 4, 3);
        let b_true: Vec<f64> = vec![0.3, -1.0, 0.25, 2.0];
        let r1m = apply_affine(&r0m, &a_true, &b_true).unwrap();
        let fit =
            fit_affine_alignment(&snapshot(r0m, 1), &snapshot(r1m, 1)).unwrap();
        assert!(fit.residual < 1e-10);
        assert!(fit.a.max_abs_diff(&a_true).unwrap() < 1e-8);
        for (got, want) in fit.b.iter().zip(&b_true) {
            assert!((got - want).abs() < 1e-8);
        }
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn independent_snapshots_have_residual_near_one() {
        let r0 = snapshot(random_matrix(200, 4, 5), 1);
        let r1 = snapshot(random_matrix(200, 4, 6), 1);
        let fit = fit_affine_alignment(&r0, &r1).unwrap();
        assert!(fit.residual > 0.8, "residual = {}", fit.residual);
    }

    #[test]
    fn residual_invariant_under_shared_orthogonal_transform() {
        // rotate both snapshots by the same orthogonal map (Givens rotation
        // padded to width 4) and compare residuals
        let r0m = random_matrix(50, 4, 7);
        let r1m = random_matrix(50, 4, 8);
        let theta: f64 = 0.7;
        let mut q = Matrix::zeros(4, 4);
        q.set(0, 0, theta.cos());
        q.set(0, 1, -theta.sin());
        q.set(1, 0, theta.sin());
        q.set(1, 1, theta.cos());
        q.set(2, 2, 1.0);
        q.set(3, 3, 1.0);
        let fit = fit_affine_alignment(&snapshot(r0m.clone(), 1), &snapshot(r1m.clone(), 1))
            .unwrap();
        let fit_q = fit_affine_alignment(
            &snapshot(r0m.matmul(&q).unwrap(), 2),
            &snapshot(r1m.matmul(&q).unwrap(), 2),
        )
        .unwrap();
        assert!((fit.residual - fit_q.residual).abs() < 1e-9);
    }

    #[test]
    fn mismatched_probes_rejected() {
        let r0 = snapshot(random_matrix(10, 3, 1), 1);
        let r1 = snapshot(random_matrix(10, 3, 2), 2);
        assert!(fit_affine_alignment(&r0, &r1).is_err());
    }

    #[test]
    fn underdetermined_fit_rejected() {
        let r0 = snapshot(random_matrix(3, 4, 1), 1);
        let r1 = snapshot(random_matrix(3, 4, 2), 1);
        assert!(fit_affine_alignment(&r0, &r1).is_err());
    }

    #[test]
    fn zero_perturbations_are_a_fixed_point() {
        let arch =
            NetworkArch::new(vec![2, 4, 2], Activation::Tanh, Head::SoftmaxCrossEntropy).unwrap();
        let theta = init_params(&arch, 1).unwrap();
        let probe = random_matrix(8, 2, 2);
        let batch = LabeledBatch::new(
            random_matrix(6, 2, 3),
            Targets::Labels(vec![0, 1, 0, 1, 0, 1]),
        )
        .unwrap();
        let dirs = vec![vec![0.0; theta.len()]; 3];
        let report = fixed_point_check(&arch, &theta, &dirs, 1e-3, &probe, &batch).unwrap();
        assert!(report.is_fixed_point);
        assert_eq!(report.max_repr_drift, 0.0);
        assert_eq!(report.rejected_directions, 0);
        assert!(!report.indeterminate);
    }

    /// A relu unit with all incoming and outgoing weights zero is dead:
    /// perturbing its incoming weights within the dead region leaves the
    /// loss unchanged and moves the representation only negligibly.
    #[test]
    fn dead_unit_perturbation_is_loss_invariant() {
        let arch =
            NetworkArch::new(vec![2, 3, 2], Activation::Relu, Head::SoftmaxCrossEntropy).unwrap();
        let mut values = init_params(&arch, 4).unwrap().into_values();
        // kill hidden unit 0: incoming weights (rows of W0) and bias, plus
        // the head column reading it
        values[0] = 0.0; // W0[0,0]
        values[1] = 0.0; // W0[0,1]
        values[6] = -1.0; // b0[0] strongly negative keeps relu dead nearby
        // W1 is 2x3 starting at offset 9; column 0 entries are 9+0 and 9+3
        values[9] = 0.0;
        values[12] = 0.0;
        let theta = ParamVector::new(&arch, values).unwrap();

        let probe = random_matrix(16, 2, 5);
        let batch = LabeledBatch::new(
            random_matrix(8, 2, 6),
            Targets::Labels(vec![0, 1, 0, 1, 0, 1, 0, 1]),
        )
        .unwrap();
        // perturb only the dead unit's incoming weights, small enough that
        // the pre-activation stays negative on the probe
        let mut delta = vec![0.0; theta.len()];
        delta[0] = 0.05;
        delta[1] = -0.05;
        let report =
            fixed_point_check(&arch, &theta, &[delta], 1e-12, &probe, &batch).unwrap();
        assert_eq!(report.rejected_directions, 0);
        assert!(report.is_fixed_point, "drift = {}", report.max_repr_drift);
        assert!(report.max_repr_drift < 1e-4);
    }

    #[test]
    fn violating_direction_is_rejected_not_measured() {
        let arch =
            NetworkArch::new(vec![2, 4, 2], Activation::Tanh, Head::SoftmaxCrossEntropy).unwrap();
        let theta = init_params(&arch, 7).unwrap();
        let probe = random_matrix(8, 2, 8);
        let batch = LabeledBatch::new(
            random_matrix(6, 2, 9),
            Targets::Labels(vec![0, 1, 0, 1, 0, 1]),
        )
        .unwrap();
        let huge = vec![10.0; theta.len()];
        let zero = vec![0.0; theta.len()];
        let report =
            fixed_point_check(&arch, &theta, &[huge.clone(), zero], 1e-6, &probe, &batch)
                .unwrap();
        assert_eq!(report.rejected_directions, 1);
        assert!(!report.indeterminate);

        let report_all = fixed_point_check(&arch, &theta, &[huge], 1e-6, &probe, &batch).unwrap();
        assert!(report_all.indeterminate);
        assert!(!report_all.is_fixed_point);
    }

    /// Enlarging the tolerance never rejects more directions.
    #[test]
    fn rejection_is_monotone_in_tolerance() {
        let arch =
            NetworkArch::new(vec![2, 4, 2], Activation::Tanh, Head::SoftmaxCrossEntropy).unwrap();
        let theta = init_params(&arch, 10).unwrap();
        let probe = random_matrix(8, 2, 11);
        let batch = LabeledBatch::new(
            random_matrix(6, 2, 12),
            Targets::Labels(vec![0, 1, 0, 1, 0, 1]),
        )
        .unwrap();
        let mut rng = rng_for(13, 0xd1);
        let dirs: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..theta.len()).map(|_| rng.random_range(-0.3..0.3)).collect())
            .collect();
        let mut prev_rejected = usize::MAX;
        for tol in [1e-6, 1e-4, 1e-2, 1.0] {
            let r = fixed_point_check(&arch, &theta, &dirs, tol, &probe, &batch).unwrap();
            assert!(r.rejected_directions <= prev_rejected);
            prev_rejected = r.rejected_directions;
        }
    }
}
