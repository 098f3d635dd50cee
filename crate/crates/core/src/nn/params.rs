//! Flat parameter vectors and initialization.
//!
//! Layout: for each affine layer in order, the weight matrix row-major as
//! `(out, in)` followed by the bias vector.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::arch::{ArchId, NetworkArch};
use crate::rng::{rng_for, SALT_INIT};

/// Flat vector of all network parameters, tagged with its architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    arch_id: ArchId,
}

impl ParamVector {
    pub fn new(arch: &NetworkArch, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters for arch, got {}",
                arch.param_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(Self { values, arch_id: arch.id() })
    }

    /// Construct from raw parts when the architecture is known only by id
    /// (e.g. averaging vectors that already share an arch).
    pub(crate) fn from_raw(values: Vec<f64>, arch_id: ArchId) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(Self { values, arch_id })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn arch_id(&self) -> ArchId {
        self.arch_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Weight slice of affine layer `l` (excludes the bias).
    pub fn layer_weights<'a>(&'a self, arch: &NetworkArch, l: usize) -> &'a [f64] {
        let off = arch.layer_offset(l);
        let w = arch.layer_sizes[l] * arch.layer_sizes[l + 1];
        &self.values[off..off + w]
    }

    /// Bias slice of affine layer `l`.
    pub fn layer_biases<'a>(&'a self, arch: &NetworkArch, l: usize) -> &'a [f64] {
        let off = arch.layer_offset(l) + arch.layer_sizes[l] * arch.layer_sizes[l + 1];
        &self.values[off..off + arch.layer_sizes[l + 1]]
    }
}

/// Gaussian weights with per-layer scale `1/sqrt(fan_in)`; zero biases.
/// Deterministic in `(arch, seed)`.
pub fn init_params(arch: &NetworkArch, seed: u64) -> Result<ParamVector> {
    arch.validate()?;
    let mut rng = rng_for(seed, SALT_INIT);
    let mut values = Vec::with_capacity(arch.param_count());
    for w in arch.layer_sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let scale = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push(z * scale);
        }
        values.extend(std::iter::repeat(0.0).take(fan_out));
    }
    ParamVector::new(arch, values)
}
