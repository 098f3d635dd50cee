//! Empirical Fisher information and natural-gradient steps.
//!
//! The Fisher is kept matrix-free: `F v = mean_i g_i (g_i . v)` over the
//! per-example log-likelihood gradients `g_i` of the realized labels. The
//! natural-gradient step solves `(F + damping I) x = grad` by conjugate
//! gradient.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::arch::{Head, NetworkArch};
use crate::nn::data::LabeledBatch;
use crate::nn::net::{grad, per_example_grads};
use crate::nn::params::ParamVector;

/// Relative residual target for the conjugate-gradient solve.
pub const CG_TOLERANCE: f64 = 1e-6;

/// Matrix-free empirical Fisher operator.
///
/// Holds the per-example gradients; `apply` is `O(batch * n_params)`.
pub struct FisherOperator {
    grads: Vec<Vec<f64>>,
    n_params: usize,
}

impl FisherOperator {
    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// `F v` as the mean of rank-one actions.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_params];
        let inv = 1.0 / self.grads.len() as f64;
        for g in &self.grads {
            let dot: f64 = g.iter().zip(v).map(|(a, b)| a * b).sum();
            let scaled = dot * inv;
            for (o, gi) in out.iter_mut().zip(g) {
                *o += scaled * gi;
            }
        }
        out
    }

    /// Explicit dense Fisher matrix; only sensible for tiny networks.
    pub fn to_dense(&self) -> Matrix {
        let n = self.n_params;
        let mut m = Matrix::zeros(n, n);
        let inv = 1.0 / self.grads.len() as f64;
        for g in &self.grads {
            for i in 0..n {
                if g[i] == 0.0 {
                    continue;
                }
                let gi = g[i] * inv;
                let row = m.row_mut(i);
                for (j, gj) in g.iter().enumerate() {
                    row[j] += gi * gj;
                }
            }
        }
        m
    }
}

/// Empirical Fisher at `theta` over `batch`: mean of outer products of
/// per-example log-likelihood gradients. Requires the softmax head (the
/// log-likelihood of an MSE head is not modeled).
pub fn empirical_fisher(
    arch: &NetworkArch,
    theta: &ParamVector,
    batch: &LabeledBatch,
) -> Result<FisherOperator> {
    if arch.head != Head::SoftmaxCrossEntropy {
        return Err(Error::Unsupported(
            "empirical Fisher requires the softmax-cross-entropy head".into(),
        ));
    }
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let grads = per_example_grads(arch, theta, batch)?;
    Ok(FisherOperator { grads, n_params: theta.len() })
}

/// Conjugate gradient for `(op + damping I) x = b` to relative residual
/// below [`CG_TOLERANCE`].
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    damping: f64,
    b: &[f64],
) -> Result<Vec<f64>> {
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let damped = |v: &[f64]| -> Vec<f64> {
        let mut out = apply(v);
        for (o, vi) in out.iter_mut().zip(v) {
            *o += damping * vi;
        }
        out
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs_old: f64 = r.iter().map(|v| v * v).sum();
    let max_iter = 4 * n + 50;
    for _ in 0..max_iter {
        if rs_old.sqrt() / b_norm < CG_TOLERANCE {
            return Ok(x);
        }
        let ap = damped(&p);
        let p_ap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if p_ap <= 0.0 || !p_ap.is_finite() {
            return Err(Error::CgDidNotConverge {
                iterations: max_iter,
                residual: rs_old.sqrt() / b_norm,
            });
        }
        let alpha = rs_old / p_ap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs_old;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs_old = rs_new;
    }
    if rs_old.sqrt() / b_norm < CG_TOLERANCE {
        Ok(x)
    } else {
        Err(Error::CgDidNotConverge { iterations: max_iter, residual: rs_old.sqrt() / b_norm })
    }
}

/// `(F + damping I)^-1 grad` for the empirical Fisher at `theta`.
pub(crate) fn natural_gradient_direction(
    arch: &NetworkArch,
    theta: &ParamVector,
    batch: &LabeledBatch,
    gradient: &[f64],
    damping: f64,
) -> Result<Vec<f64>> {
    let fisher = empirical_fisher(arch, theta, batch)?;
    conjugate_gradient(|v| fisher.apply(v), damping, gradient)
}

/// One natural-gradient step: `theta - lr * (F + damping I)^-1 grad`.
pub fn natural_gradient_step(
    arch: &NetworkArch,
    theta: &ParamVector,
    batch: &LabeledBatch,
    learning_rate: f64,
    damping: f64,
) -> Result<ParamVector> {
    if damping <= 0.0 {
        return Err(Error::InvalidConfig("damping must be > 0".into()));
    }
    let g = grad(arch, theta, batch)?;
    let dir = natural_gradient_direction(arch, theta, batch, &g, damping)?;
    let values = theta
        .values()
        .iter()
        .zip(&dir)
        .map(|(p, d)| p - learning_rate * d)
        .collect();
    ParamVector::new(arch, values)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
