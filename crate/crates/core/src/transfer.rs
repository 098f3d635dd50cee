//! Pullback transfer: map target inputs into the source input space
//! through a domain morphism, reuse the source encoder frozen, fine-tune
//! only the head, and verify the factorization quality of alternatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::matrix::Matrix;
use crate::nn::arch::NetworkArch;
use crate::nn::data::{DatasetSpec, LabeledBatch, Targets};
use crate::nn::net::forward;
use crate::nn::params::{init_params, ParamVector};
use crate::nn::train::{train_on_batch, TrainConfig, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MorphismKind {
    /// `f(x) = x`.
    Identity,
    /// Target coordinate `i` lands in source coordinate `indices[i]`; all
    /// other source coordinates are zero-filled.
    CoordinateEmbed { indices: Vec<usize> },
    /// Treat the target vector as 1-d samples and piecewise-linearly
    /// resample it to the source width.
    LinearResample,
}

/// A morphism of input domains: maps target inputs to source-shaped inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMorphism {
    pub kind: MorphismKind,
    pub source_dim: usize,
    pub target_dim: usize,
}

impl DomainMorphism {
    pub fn identity(dim: usize) -> Self {
        Self { kind: MorphismKind::Identity, source_dim: dim, target_dim: dim }
    }

    pub fn coordinate_embed(source_dim: usize, indices: Vec<usize>) -> Result<Self> {
        let target_dim = indices.len();
        if target_dim == 0 || target_dim > source_dim {
            return Err(Error::InvalidConfig(
                "coordinate embed needs 1..=source_dim indices".into(),
            ));
        }
        let mut seen = vec![false; source_dim];
        for &i in &indices {
            if i >= source_dim {
                return Err(Error::InvalidConfig(format!(
                    "embed index {i} out of range for source dim {source_dim}"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidConfig(format!("duplicate embed index {i}")));
            }
            seen[i] = true;
        }
        Ok(Self { kind: MorphismKind::CoordinateEmbed { indices }, source_dim, target_dim })
    }

    pub fn linear_resample(source_dim: usize, target_dim: usize) -> Result<Self> {
        if target_dim == 0 || source_dim == 0 {
            return Err(Error::InvalidConfig("dims must be >= 1".into()));
        }
        Ok(Self { kind: MorphismKind::LinearResample, source_dim, target_dim })
    }

    /// Apply to a batch of target inputs (`n x target_dim`), producing
    /// source-shaped inputs (`n x source_dim`).
    pub fn apply(&self, inputs: &Matrix) -> Result<Matrix> {
        if inputs.cols() != self.target_dim {
            return Err(Error::ShapeMismatch(format!(
                "morphism expects target dim {}, got {}",
                self.target_dim,
                inputs.cols()
            )));
        }
        let n = inputs.rows();
        match &self.kind {
            MorphismKind::Identity => Ok(inputs.clone()),
            MorphismKind::CoordinateEmbed { indices } => {
                let mut out = Matrix::zeros(n, self.source_dim);
                for r in 0..n {
                    for (t, &s) in indices.iter().enumerate() {
                        out.set(r, s, inputs.get(r, t));
                    }
                }
                Ok(out)
            }
            MorphismKind::LinearResample => {
                let m = self.target_dim;
                let s = self.source_dim;
                let mut out = Matrix::zeros(n, s);
                for r in 0..n {
                    let row = inputs.row(r);
                    for j in 0..s {
                        let pos = if s == 1 {
                            0.0
                        } else {
                            j as f64 * (m - 1) as f64 / (s - 1) as f64
                        };
                        let lo = pos.floor() as usize;
                        let hi = (lo + 1).min(m - 1);
                        let w = pos - lo as f64;
                        out.set(r, j, row[lo] * (1.0 - w) + row[hi] * w);
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Morphism choice mirroring the reference construction: resample when the
/// target is smaller, identity when dims match; a larger target has no
/// morphism in scope.
pub fn build_domain_morphism(source_dim: usize, target_dim: usize) -> Result<DomainMorphism> {
    if source_dim == 0 || target_dim == 0 {
        return Err(Error::InvalidConfig("dims must be >= 1".into()));
    }
    match target_dim.cmp(&source_dim) {
        std::cmp::Ordering::Equal => Ok(DomainMorphism::identity(source_dim)),
        std::cmp::Ordering::Less => DomainMorphism::linear_resample(source_dim, target_dim),
        std::cmp::Ordering::Greater => Err(Error::Unsupported(format!(
            "no morphism from target dim {target_dim} into smaller source dim {source_dim}"
        ))),
    }
}

/// How the transferred head starts before fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadInit {
    /// Keep the source head unchanged (output dims must match).
    KeepSource,
    /// Restrict the source head to the given class rows (the pullback of
    /// the classifier along a class-subset inclusion).
    SourceRows(Vec<usize>),
    /// Fresh seeded initialization.
    Fresh(u64),
}

/// A transferred model: the (possibly re-headed) architecture and its
/// parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferredModel {
    pub arch: NetworkArch,
    pub theta: ParamVector,
    /// Head-only fine-tuning trajectory (in the morphism-mapped input
    /// space).
    pub finetune: Trajectory,
}

/// Freeze the source encoder, rebuild the head per `head_init`, and
/// fine-tune it on morphism-mapped target training data. Every layer except
/// the final one is bit-identical to `source_theta` afterwards.
pub fn pullback_transfer(
    source_arch: &NetworkArch,
    source_theta: &ParamVector,
    morphism: &DomainMorphism,
    target_dataset: &DatasetSpec,
    head_init: &HeadInit,
    finetune: &TrainConfig,
) -> Result<TransferredModel> {
    if source_theta.arch_id() != source_arch.id() {
        return Err(Error::ShapeMismatch("source theta built for a different arch".into()));
    }
    if morphism.source_dim != source_arch.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "morphism source dim {} vs network input dim {}",
            morphism.source_dim,
            source_arch.input_dim()
        )));
    }
    if morphism.target_dim != target_dataset.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "morphism target dim {} vs dataset input dim {}",
            morphism.target_dim, target_dataset.input_dim
        )));
    }

    let n_classes = target_dataset.n_classes;
    let mut sizes = source_arch.layer_sizes.clone();
    let out_slot = sizes.len() - 1;
    sizes[out_slot] = n_classes;
    let target_arch = NetworkArch::new(sizes, source_arch.activation, source_arch.head)?;
    let head_layer = target_arch.n_layers() - 1;

    // assemble initial parameters: encoder copied, head per init policy
    let mut values = Vec::with_capacity(target_arch.param_count());
    for l in 0..head_layer {
        values.extend_from_slice(source_theta.layer_weights(source_arch, l));
        values.extend_from_slice(source_theta.layer_biases(source_arch, l));
    }
    let pen = target_arch.penultimate_dim();
    match head_init {
        HeadInit::KeepSource => {
            if n_classes != source_arch.output_dim() {
                return Err(Error::InvalidConfig(format!(
                    "keep-source head needs matching output dims ({} vs {})",
                    source_arch.output_dim(),
                    n_classes
                )));
            }
            values.extend_from_slice(source_theta.layer_weights(source_arch, head_layer));
            values.extend_from_slice(source_theta.layer_biases(source_arch, head_layer));
        }
        HeadInit::SourceRows(rows) => {
            if rows.len() != n_classes {
                return Err(Error::InvalidConfig(format!(
                    "{} head rows given for {} target classes",
                    rows.len(),
                    n_classes
                )));
            }
            let src_w = source_theta.layer_weights(source_arch, head_layer);
            let src_b = source_theta.layer_biases(source_arch, head_layer);
            for &r in rows {
                if r >= source_arch.output_dim() {
                    return Err(Error::InvalidConfig(format!(
                        "head row {r} out of range for source output dim {}",
                        source_arch.output_dim()
                    )));
                }
                values.extend_from_slice(&src_w[r * pen..(r + 1) * pen]);
            }
            for &r in rows {
                values.push(src_b[r]);
            }
        }
        HeadInit::Fresh(seed) => {
            let fresh = init_params(&target_arch, *seed)?;
            let off = target_arch.layer_offset(head_layer);
            values.extend_from_slice(&fresh.values()[off..]);
        }
    }
    let theta0 = ParamVector::new(&target_arch, values)?;

    // morphism-mapped target training data
    let splits = target_dataset.instantiate()?;
    let mapped_train = LabeledBatch::new(
        morphism.apply(&splits.train.inputs)?,
        splits.train.targets.clone(),
    )?;

    let config = finetune.clone().with_frozen_prefix(head_layer);
    let finetune_traj = train_on_batch(&target_arch, target_dataset, mapped_train, &config, &theta0)?;
    let theta = finetune_traj.final_point().clone();

    // freeze contract: encoder bits unchanged
    let encoder_len = target_arch.layer_offset(head_layer);
    debug_assert!(theta.values()[..encoder_len]
        .iter()
        .zip(&theta0.values()[..encoder_len])
        .all(|(a, b)| a == b));

    Ok(TransferredModel { arch: target_arch, theta, finetune: finetune_traj })
}

/// How well an alternative model's representation factors through the
/// pullback representation: `1 - ||R_pull L - R_alt||_F / ||R_alt||_F` with
/// `L` the least-squares map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub quality: f64,
    /// The pullback representation was rank-deficient; `L` is minimum-norm.
    pub rank_deficient: bool,
}

pub fn verify_universal_property(
    pullback_arch: &NetworkArch,
    pullback_theta: &ParamVector,
    alternative_arch: &NetworkArch,
    alternative_theta: &ParamVector,
    target_probe: &Matrix,
    morphism: &DomainMorphism,
) -> Result<FactorizationReport> {
    let mapped = morphism.apply(target_probe)?;
    let (_, r_pull) = forward(pullback_arch, pullback_theta, &mapped)?;
    let (_, r_alt) = forward(alternative_arch, alternative_theta, &mapped)?;
    if r_pull.frobenius_norm() == 0.0 {
        return Err(Error::InvalidInput("degenerate pullback representation (zero norm)".into()));
    }
    let alt_norm = r_alt.frobenius_norm();
    if alt_norm == 0.0 {
        return Ok(FactorizationReport { quality: 1.0, rank_deficient: true });
    }
    let (l, rank_deficient) = lstsq(&r_pull, &r_alt)?;
    let reconstruction = r_pull.matmul(&l)?;
    let quality = 1.0 - reconstruction.sub(&r_alt)?.frobenius_norm() / alt_norm;
    Ok(FactorizationReport { quality, rank_deficient })
}

/// One-hot targets relabeled to a class subset: maps dataset labels
/// `classes[i] -> i`, dropping rows of other classes.
pub fn restrict_to_classes(batch: &LabeledBatch, classes: &[usize]) -> Result<LabeledBatch> {
    let labels = match &batch.targets {
        Targets::Labels(l) => l,
        Targets::Values(_) => {
            return Err(Error::InvalidInput("class restriction needs label targets".into()))
        }
    };
    let mut keep = Vec::new();
    let mut new_labels = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if let Some(pos) = classes.iter().position(|&c| c == l) {
            keep.push(i);
            new_labels.push(pos);
        }
    }
    LabeledBatch::new(batch.inputs.select_rows(&keep), Targets::Labels(new_labels))
}
