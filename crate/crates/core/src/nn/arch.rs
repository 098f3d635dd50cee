//! Network architecture description.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element-wise activation applied to all hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed in terms of the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Output head: pairs the final affine layer with a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    SoftmaxCrossEntropy,
    MeanSquaredError,
}

/// Dense feed-forward architecture: layer sizes plus activation and head.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkArch {
    /// Input, hidden..., output sizes. At least two entries, all positive.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
}

/// Compact fingerprint of an architecture; parameter vectors and trajectory
/// points carry it so mismatched uses fail fast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchId(pub u64);

impl NetworkArch {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, head: Head) -> Result<Self> {
        let arch = Self { layer_sizes, activation, head };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidConfig("architecture needs at least 2 layers".into()));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig("all layer sizes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Width of the penultimate activation: the last hidden layer, or the
    /// input itself when the network is a single affine layer.
    pub fn penultimate_dim(&self) -> usize {
        self.layer_sizes[self.layer_sizes.len() - 2]
    }

    /// Number of affine layers.
    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Total parameter count: sum over layers of `in*out + out`.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Parameter count of affine layer `l`.
    pub fn layer_param_count(&self, l: usize) -> usize {
        self.layer_sizes[l] * self.layer_sizes[l + 1] + self.layer_sizes[l + 1]
    }

    /// Flat-vector offset at which layer `l`'s parameters start.
    pub fn layer_offset(&self, l: usize) -> usize {
        (0..l).map(|i| self.layer_param_count(i)).sum()
    }

    /// FNV-1a over the canonical encoding; stable across runs of one build.
    pub fn id(&self) -> ArchId {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |b: u64| {
            h ^= b;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for &s in &self.layer_sizes {
            eat(s as u64);
        }
        eat(match self.activation {
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::Identity => 3,
        });
        eat(match self.head {
            Head::SoftmaxCrossEntropy => 11,
            Head::MeanSquaredError => 12,
        });
        ArchId(h)
    }
}
