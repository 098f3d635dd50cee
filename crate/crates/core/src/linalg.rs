//! Least-squares solves shared by the alignment and transfer modules.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Rank cutoff relative to the largest singular value.
const RANK_EPS: f64 = 1e-10;

/// Minimum-norm least squares solution of `A X = B` (Frobenius sense) via
/// SVD. Returns the solution and whether the design was rank-deficient.
pub fn lstsq(a: &Matrix, b: &Matrix) -> Result<(Matrix, bool)> {
    if a.rows() != b.rows() {
        return Err(Error::ShapeMismatch(format!(
            "lstsq: {} design rows vs {} target rows",
            a.rows(),
            b.rows()
        )));
    }
    let na = DMatrix::from_row_slice(a.rows(), a.cols(), a.data());
    let nb = DMatrix::from_row_slice(b.rows(), b.cols(), b.data());
    let svd = na.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = RANK_EPS * max_sv.max(1.0);
    let rank = svd.singular_values.iter().filter(|s| **s > eps).count();
    let solution = svd
        .solve(&nb, eps)
        .map_err(|e| Error::InvalidInput(format!("svd solve failed: {e}")))?;
    let rank_deficient = rank < a.cols();
    let out = Matrix::from_vec(
        solution.nrows(),
        solution.ncols(),
        solution.transpose().as_slice().to_vec(),
    )?;
    Ok((out, rank_deficient))
}
