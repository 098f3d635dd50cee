//! Forward evaluation, loss and exact backpropagation gradients.
//!
//! Losses are means of per-example losses. The mean-squared-error head uses
//! the `1/2 ||pred - target||^2` convention per example, which makes
//! full-batch gradient descent on a single linear unit contract by exactly
//! `(1 - lr)` per step (see the train tests).

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::arch::{Head, NetworkArch};
use crate::nn::data::{LabeledBatch, Targets};
use crate::nn::params::ParamVector;

/// Forward pass: returns logits (`n x output_dim`) and the penultimate
/// activation (`n x penultimate_dim`). For a single-affine-layer network the
/// penultimate activation is the input itself.
pub fn forward(arch: &NetworkArch, theta: &ParamVector, inputs: &Matrix) -> Result<(Matrix, Matrix)> {
    let trace = forward_trace(arch, theta, inputs)?;
    let n_layers = arch.n_layers();
    let penultimate = trace.activations[n_layers - 1].clone();
    let logits = trace.activations[n_layers].clone();
    Ok((logits, penultimate))
}

/// All per-layer activations and pre-activations, kept for backprop.
/// `activations[0]` is the input; `activations[l+1]` is the output of affine
/// layer `l` (activated for hidden layers, raw for the head).
pub(crate) struct ForwardTrace {
    pub activations: Vec<Matrix>,
    pub pre_activations: Vec<Matrix>,
}

pub(crate) fn forward_trace(
    arch: &NetworkArch,
    theta: &ParamVector,
    inputs: &Matrix,
) -> Result<ForwardTrace> {
    check_theta(arch, theta)?;
    if inputs.cols() != arch.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input width {} does not match arch input dim {}",
            inputs.cols(),
            arch.input_dim()
        )));
    }
    let n = inputs.rows();
    let n_layers = arch.n_layers();
    let mut activations = Vec::with_capacity(n_layers + 1);
    let mut pre_activations = Vec::with_capacity(n_layers);
    activations.push(inputs.clone());
    for l in 0..n_layers {
        let (in_dim, out_dim) = (arch.layer_sizes[l], arch.layer_sizes[l + 1]);
        let weights = theta.layer_weights(arch, l);
        let biases = theta.layer_biases(arch, l);
        let prev = &activations[l];
        let mut z = Matrix::zeros(n, out_dim);
        for i in 0..n {
            let x = prev.row(i);
            let zrow = z.row_mut(i);
            for (o, zv) in zrow.iter_mut().enumerate() {
                let wrow = &weights[o * in_dim..(o + 1) * in_dim];
                let mut acc = biases[o];
                for (w, xv) in wrow.iter().zip(x) {
                    acc += w * xv;
                }
                *zv = acc;
            }
        }
        let is_head = l == n_layers - 1;
        let a = if is_head {
            z.clone()
        } else {
            let mut a = z.clone();
            for v in a.data_mut() {
                *v = arch.activation.apply(*v);
            }
            a
        };
        pre_activations.push(z);
        activations.push(a);
    }
    Ok(ForwardTrace { activations, pre_activations })
}

/// Mean per-example loss of `theta` on `batch`.
pub fn loss(arch: &NetworkArch, theta: &ParamVector, batch: &LabeledBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let (logits, _) = forward(arch, theta, &batch.inputs)?;
    loss_from_logits(arch, &logits, &batch.targets)
}

pub(crate) fn loss_from_logits(arch: &NetworkArch, logits: &Matrix, targets: &Targets) -> Result<f64> {
    let n = logits.rows();
    match (arch.head, targets) {
        (Head::SoftmaxCrossEntropy, Targets::Labels(labels)) => {
            let mut total = 0.0;
            for i in 0..n {
                let row = logits.row(i);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                total += lse - row[labels[i]];
            }
            Ok(total / n as f64)
        }
        (Head::MeanSquaredError, Targets::Values(values)) => {
            if values.cols() != logits.cols() {
                return Err(Error::ShapeMismatch(format!(
                    "target width {} vs output width {}",
                    values.cols(),
                    logits.cols()
                )));
            }
            let mut total = 0.0;
            for i in 0..n {
                for (p, t) in logits.row(i).iter().zip(values.row(i)) {
                    let d = p - t;
                    total += 0.5 * d * d;
                }
            }
            Ok(total / n as f64)
        }
        (Head::SoftmaxCrossEntropy, Targets::Values(_)) => Err(Error::InvalidInput(
            "softmax-cross-entropy head requires class labels".into(),
        )),
        (Head::MeanSquaredError, Targets::Labels(_)) => Err(Error::InvalidInput(
            "mean-squared-error head requires value targets (one-hot encode labels first)".into(),
        )),
    }
}

/// Exact backpropagation gradient of [`loss`] with respect to `theta`.
pub fn grad(arch: &NetworkArch, theta: &ParamVector, batch: &LabeledBatch) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let trace = forward_trace(arch, theta, &batch.inputs)?;
    grad_from_trace(arch, theta, &trace, &batch.targets)
}

fn grad_from_trace(
    arch: &NetworkArch,
    theta: &ParamVector,
    trace: &ForwardTrace,
    targets: &Targets,
) -> Result<Vec<f64>> {
    let n_layers = arch.n_layers();
    let logits = &trace.activations[n_layers];
    let n = logits.rows();
    let inv_n = 1.0 / n as f64;

    // d(loss)/d(logits)
    let mut delta = match (arch.head, targets) {
        (Head::SoftmaxCrossEntropy, Targets::Labels(labels)) => {
            let mut d = Matrix::zeros(n, logits.cols());
            for i in 0..n {
                let row = logits.row(i);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
                let sum: f64 = exps.iter().sum();
                let drow = d.row_mut(i);
                for (j, e) in exps.iter().enumerate() {
                    drow[j] = (e / sum) * inv_n;
                }
                drow[labels[i]] -= inv_n;
            }
            d
        }
        (Head::MeanSquaredError, Targets::Values(values)) => {
            let mut d = Matrix::zeros(n, logits.cols());
            for i in 0..n {
                let drow = d.row_mut(i);
                for (j, (p, t)) in logits.row(i).iter().zip(values.row(i)).enumerate() {
                    drow[j] = (p - t) * inv_n;
                }
            }
            d
        }
        _ => {
            // reuse the loss checks for the error message
            loss_from_logits(arch, logits, targets)?;
            unreachable!()
        }
    };

    let mut grad = vec![0.0; theta.len()];
    for l in (0..n_layers).rev() {
        let (in_dim, out_dim) = (arch.layer_sizes[l], arch.layer_sizes[l + 1]);
        let off = arch.layer_offset(l);
        let prev = &trace.activations[l];
        // weight and bias gradients
        for i in 0..n {
            let drow = delta.row(i);
            let x = prev.row(i);
            for o in 0..out_dim {
                let d = drow[o];
                if d == 0.0 {
                    continue;
                }
                let wgrad = &mut grad[off + o * in_dim..off + (o + 1) * in_dim];
                for (g, xv) in wgrad.iter_mut().zip(x) {
                    *g += d * xv;
                }
            }
        }
        for o in 0..out_dim {
            let mut acc = 0.0;
            for i in 0..n {
                acc += delta.get(i, o);
            }
            grad[off + in_dim * out_dim + o] = acc;
        }
        // propagate to the previous layer
        if l > 0 {
            let weights = theta.layer_weights(arch, l);
            let pre = &trace.pre_activations[l - 1];
            let mut new_delta = Matrix::zeros(n, in_dim);
            for i in 0..n {
                let drow = delta.row(i);
                let nrow = new_delta.row_mut(i);
                for (o, &d) in drow.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = &weights[o * in_dim..(o + 1) * in_dim];
                    for (nv, w) in nrow.iter_mut().zip(wrow) {
                        *nv += d * w;
                    }
                }
                for (j, nv) in nrow.iter_mut().enumerate() {
                    *nv *= arch.activation.derivative(pre.get(i, j));
                }
            }
            delta = new_delta;
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok(grad)
}

/// Per-example gradients (each over a batch of one). Used by the empirical
/// Fisher; kept here so it shares the backprop path.
pub fn per_example_grads(
    arch: &NetworkArch,
    theta: &ParamVector,
    batch: &LabeledBatch,
) -> Result<Vec<Vec<f64>>> {
    (0..batch.len())
        .map(|i| grad(arch, theta, &batch.select(&[i])))
        .collect()
}

/// Classification accuracy: fraction of rows whose argmax logit matches the
/// label (or the argmax of a one-hot target row).
pub fn accuracy(arch: &NetworkArch, theta: &ParamVector, batch: &LabeledBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let (logits, _) = forward(arch, theta, &batch.inputs)?;
    let n = logits.rows();
    let mut correct = 0usize;
    for i in 0..n {
        let pred = argmax(logits.row(i));
        let truth = match &batch.targets {
            Targets::Labels(l) => l[i],
            Targets::Values(v) => argmax(v.row(i)),
        };
        if pred == truth {
            correct += 1;
        }
    }
    Ok(correct as f64 / n as f64)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn check_theta(arch: &NetworkArch, theta: &ParamVector) -> Result<()> {
    if theta.arch_id() != arch.id() {
        return Err(Error::ShapeMismatch("parameter vector built for a different arch".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::arch::{Activation, Head};
    use crate::nn::params::init_params;
    use crate::rng::rng_for;
    use rand::Rng;

    fn arch(sizes: &[usize], act: Activation, head: Head) -> NetworkArch {
        NetworkArch::new(sizes.to_vec(), act, head).unwrap()
    }

    fn random_inputs(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = rng_for(seed, 0x1234);
        let mut m = Matrix::zeros(n, d);
        for v in m.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        m
    }

    #[test]
    fn zero_net_identity_activation_gives_zero_logits() {
        let a = arch(&[3, 4, 2], Activation::Identity, Head::MeanSquaredError);
        let theta = ParamVector::new(&a, vec![0.0; a.param_count()]).unwrap();
        let x = random_inputs(5, 3, 1);
        let (logits, _) = forward(&a, &theta, &x).unwrap();
        assert!(logits.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn batch_rows_are_independent() {
        let a = arch(&[2, 5, 3], Activation::Relu, Head::SoftmaxCrossEntropy);
        let theta = init_params(&a, 3).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -0.7], vec![0.3, -0.7]]).unwrap();
        let (logits, pen) = forward(&a, &theta, &x).unwrap();
        assert_eq!(logits.row(0), logits.row(1));
        assert_eq!(pen.row(0), pen.row(1));
    }

    #[test]
    fn penultimate_through_head_reproduces_logits() {
        let a = arch(&[3, 6, 4, 2], Activation::Tanh, Head::MeanSquaredError);
        let theta = init_params(&a, 11).unwrap();
        let x = random_inputs(4, 3, 2);
        let (logits, pen) = forward(&a, &theta, &x).unwrap();
        // recompute the head affine map independently
        let l = a.n_layers() - 1;
        let w = theta.layer_weights(&a, l);
        let b = theta.layer_biases(&a, l);
        let (in_dim, out_dim) = (a.layer_sizes[l], a.layer_sizes[l + 1]);
        for i in 0..x.rows() {
            for o in 0..out_dim {
                let mut acc = b[o];
                for j in 0..in_dim {
                    acc += w[o * in_dim + j] * pen.get(i, j);
                }
                assert!((acc - logits.get(i, o)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_affine_layer_penultimate_is_input() {
        let a = arch(&[3, 2], Activation::Relu, Head::MeanSquaredError);
        let theta = init_params(&a, 5).unwrap();
        let x = random_inputs(4, 3, 9);
        let (_, pen) = forward(&a, &theta, &x).unwrap();
        assert_eq!(pen, x);
    }

    #[test]
    fn mse_zero_when_predictions_equal_targets() {
        let a = arch(&[2, 2], Activation::Identity, Head::MeanSquaredError);
        let theta = ParamVector::new(&a, vec![0.0; a.param_count()]).unwrap();
        let x = random_inputs(6, 2, 3);
        let targets = Targets::Values(Matrix::zeros(6, 2));
        let batch = LabeledBatch::new(x, targets).unwrap();
        assert_eq!(loss(&a, &theta, &batch).unwrap(), 0.0);
    }

    #[test]
    fn uniform_logits_cross_entropy_is_ln_k() {
        for k in [2usize, 5, 10] {
            let a = arch(&[3, k], Activation::Identity, Head::SoftmaxCrossEntropy);
            let theta = ParamVector::new(&a, vec![0.0; a.param_count()]).unwrap();
            let x = random_inputs(4, 3, 4);
            let batch =
                LabeledBatch::new(x, Targets::Labels(vec![0, 1 % k, 0, k - 1])).unwrap();
            let l = loss(&a, &theta, &batch).unwrap();
            assert!((l - (k as f64).ln()).abs() < 1e-12, "k={k} loss={l}");
        }
    }

    #[test]
    fn loss_matches_independent_reimplementation() {
        // straightforward scalar reimplementation of CE on a tiny case
        let a = arch(&[2, 3], Activation::Identity, Head::SoftmaxCrossEntropy);
        let theta = init_params(&a, 21).unwrap();
        let x = random_inputs(5, 2, 22);
        let labels = vec![0usize, 2, 1, 1, 0];
        let batch = LabeledBatch::new(x.clone(), Targets::Labels(labels.clone())).unwrap();
        let got = loss(&a, &theta, &batch).unwrap();

        let w = theta.layer_weights(&a, 0);
        let b = theta.layer_biases(&a, 0);
        let mut expected = 0.0;
        for i in 0..5 {
            let mut logits = [0.0f64; 3];
            for (o, l) in logits.iter_mut().enumerate() {
                *l = b[o] + w[o * 2] * x.get(i, 0) + w[o * 2 + 1] * x.get(i, 1);
            }
            let denom: f64 = logits.iter().map(|v| v.exp()).sum();
            expected += -(logits[labels[i]].exp() / denom).ln();
        }
        expected /= 5.0;
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let a = arch(&[2, 2], Activation::Relu, Head::SoftmaxCrossEntropy);
        let theta = init_params(&a, 0).unwrap();
        let batch = LabeledBatch::new(Matrix::zeros(0, 2), Targets::Labels(vec![])).unwrap();
        assert!(loss(&a, &theta, &batch).is_err());
        assert!(grad(&a, &theta, &batch).is_err());
    }

    #[test]
    fn gradient_vanishes_at_exact_minimum() {
        // single linear unit fitting realizable targets exactly
        let a = arch(&[2, 1], Activation::Identity, Head::MeanSquaredError);
        let theta = ParamVector::new(&a, vec![1.5, -0.5, 0.25]).unwrap();
        let x = random_inputs(8, 2, 6);
        let mut t = Matrix::zeros(8, 1);
        for i in 0..8 {
            t.set(i, 0, 1.5 * x.get(i, 0) - 0.5 * x.get(i, 1) + 0.25);
        }
        let batch = LabeledBatch::new(x, Targets::Values(t)).unwrap();
        let g = grad(&a, &theta, &batch).unwrap();
        let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-10, "norm={norm}");
    }

    #[test]
    fn duplicated_batch_leaves_mean_gradient_unchanged() {
        let a = arch(&[3, 4, 2], Activation::Tanh, Head::SoftmaxCrossEntropy);
        let theta = init_params(&a, 8).unwrap();
        let x = random_inputs(4, 3, 7);
        let labels = vec![0usize, 1, 1, 0];
        let batch = LabeledBatch::new(x.clone(), Targets::Labels(labels.clone())).unwrap();

        let doubled_indices: Vec<usize> = (0..4).chain(0..4).collect();
        let doubled = batch.select(&doubled_indices);
        let g1 = grad(&a, &theta, &batch).unwrap();
        let g2 = grad(&a, &theta, &doubled).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn backprop_matches_central_finite_differences() {
        for (seed, act, head) in [
            (1u64, Activation::Tanh, Head::SoftmaxCrossEntropy),
            (2, Activation::Identity, Head::MeanSquaredError),
            (3, Activation::Tanh, Head::MeanSquaredError),
        ] {
            let a = arch(&[3, 5, 4, 2], act, head);
            let theta = init_params(&a, seed).unwrap();
            let x = random_inputs(6, 3, seed + 10);
            let targets = match head {
                Head::SoftmaxCrossEntropy => Targets::Labels(vec![0, 1, 0, 1, 1, 0]),
                Head::MeanSquaredError => {
                    let mut t = Matrix::zeros(6, 2);
                    let mut rng = rng_for(seed, 0x77);
                    for v in t.data_mut() {
                        *v = rng.random_range(-1.0..1.0);
                    }
                    Targets::Values(t)
                }
            };
            let batch = LabeledBatch::new(x, targets).unwrap();
            let g = grad(&a, &theta, &batch).unwrap();

            let h = 1e-5;
            let mut rng = rng_for(seed, 0x99);
            for _ in 0..30 {
                let i = rng.random_range(0..theta.len());
                let mut plus = theta.clone();
                plus.values_mut()[i] += h;
                let mut minus = theta.clone();
                minus.values_mut()[i] -= h;
                let fd = (loss(&a, &plus, &batch).unwrap() - loss(&a, &minus, &batch).unwrap())
                    / (2.0 * h);
                let denom = g[i].abs().max(fd.abs()).max(1e-6);
                assert!(
                    (g[i] - fd).abs() / denom < 1e-4,
                    "coord {i}: bp={} fd={fd}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn per_example_grads_mean_equals_batch_grad() {
        let a = arch(&[2, 4, 3], Activation::Tanh, Head::SoftmaxCrossEntropy);
        let theta = init_params(&a, 13).unwrap();
        let x = random_inputs(5, 2, 14);
        let batch = LabeledBatch::new(x, Targets::Labels(vec![0, 2, 1, 0, 2])).unwrap();
        let g = grad(&a, &theta, &batch).unwrap();
        let per = per_example_grads(&a, &theta, &batch).unwrap();
        for (i, gi) in g.iter().enumerate() {
            let mean: f64 = per.iter().map(|p| p[i]).sum::<f64>() / per.len() as f64;
            assert!((gi - mean).abs() < 1e-12);
        }
    }
}
