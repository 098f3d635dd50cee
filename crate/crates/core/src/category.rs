//! The parameter category made operational: trajectory composition and
//! identities, the functor onto representation paths, a functoriality
//! check, and parameter averaging as the federated colimit approximation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::arch::NetworkArch;
use crate::nn::data::DatasetSpec;
use crate::nn::net::loss;
use crate::nn::params::ParamVector;
use crate::nn::train::{TrainConfig, Trajectory};
use crate::repr::{probe_id, RepresentationSnapshot};

/// Element-wise tolerance for trajectory endpoints to count as the same
/// object. Exact equality is the intent; serialization round-trips motivate
/// a tolerance.
pub const JUNCTION_TOLERANCE: f64 = 1e-9;

/// Maximum functor deviation for a composable pair to count as preserved.
pub const FUNCTOR_TOLERANCE: f64 = 1e-9;

/// An object of the parameter category: a configuration together with the
/// data and loss it is measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamObject {
    pub arch: NetworkArch,
    pub theta: ParamVector,
    pub dataset: DatasetSpec,
}

impl ParamObject {
    pub fn new(arch: NetworkArch, theta: ParamVector, dataset: DatasetSpec) -> Result<Self> {
        if theta.arch_id() != arch.id() {
            return Err(Error::ShapeMismatch("theta built for a different arch".into()));
        }
        Ok(Self { arch, theta, dataset })
    }
}

/// A path of representation snapshots: the image of a trajectory under the
/// functor. Serialized as an array of row-major matrices plus the probe id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationPath {
    snapshots: Vec<RepresentationSnapshot>,
    probe_id: u64,
}

impl RepresentationPath {
    pub fn new(snapshots: Vec<RepresentationSnapshot>) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::InvalidInput("empty representation path".into()))?;
        let pid = first.probe_id;
        let width = first.width();
        if snapshots.iter().any(|s| s.probe_id != pid || s.width() != width) {
            return Err(Error::InvalidInput(
                "snapshots disagree on probe set or width".into(),
            ));
        }
        Ok(Self { snapshots, probe_id: pid })
    }

    pub fn snapshots(&self) -> &[RepresentationSnapshot] {
        &self.snapshots
    }

    pub fn probe_id(&self) -> u64 {
        self.probe_id
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

/// The constant path at `obj.theta`, with `length` recorded points.
pub fn identity_trajectory(obj: &ParamObject, length: usize) -> Result<Trajectory> {
    if length == 0 {
        return Err(Error::InvalidInput("identity trajectory needs length >= 1".into()));
    }
    let splits = obj.dataset.instantiate()?;
    let mut train_batch = splits.train;
    if obj.arch.head == crate::nn::arch::Head::MeanSquaredError {
        if let crate::nn::data::Targets::Labels(_) = train_batch.targets {
            train_batch = crate::nn::data::LabeledBatch::new(
                train_batch.inputs.clone(),
                crate::nn::data::Targets::Values(
                    train_batch.targets.to_values(obj.arch.output_dim()),
                ),
            )?;
        }
    }
    let l = loss(&obj.arch, &obj.theta, &train_batch)?;
    Trajectory::from_parts(
        obj.arch.clone(),
        obj.dataset.clone(),
        TrainConfig::sgd(0.0, 1, 0, 0),
        vec![obj.theta.clone(); length],
        vec![l; length],
    )
}

/// Path concatenation `g2 . g1`, dropping the duplicated junction point.
/// Requires matching arch and dataset and endpoints equal within
/// [`JUNCTION_TOLERANCE`].
pub fn compose_trajectories(g1: &Trajectory, g2: &Trajectory) -> Result<Trajectory> {
    if g1.arch() != g2.arch() {
        return Err(Error::ShapeMismatch("composing trajectories over different archs".into()));
    }
    if g1.dataset() != g2.dataset() {
        return Err(Error::InvalidInput("composing trajectories over different datasets".into()));
    }
    let junction_gap = g1
        .final_point()
        .values()
        .iter()
        .zip(g2.first_point().values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if junction_gap > JUNCTION_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "trajectory endpoints differ by {junction_gap} (tolerance {JUNCTION_TOLERANCE})"
        )));
    }
    let mut points = g1.points().to_vec();
    points.extend_from_slice(&g2.points()[1..]);
    let mut losses = g1.losses().to_vec();
    losses.extend_from_slice(&g2.losses()[1..]);
    Trajectory::from_parts(
        g1.arch().clone(),
        g1.dataset().clone(),
        g1.config().clone(),
        points,
        losses,
    )
}

/// The functor on morphisms: evaluate the penultimate representation of
/// every trajectory point over the probe set.
pub fn apply_functor(gamma: &Trajectory, probe: &Matrix) -> Result<RepresentationPath> {
    if probe.rows() == 0 {
        return Err(Error::InvalidInput("empty probe set".into()));
    }
    let snapshots = gamma
        .points()
        .iter()
        .map(|p| RepresentationSnapshot::capture(gamma.arch(), p, probe))
        .collect::<Result<Vec<_>>>()?;
    RepresentationPath::new(snapshots)
}

/// Result of checking that the functor preserves composition on a pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctorialityReport {
    pub max_deviation: f64,
    pub passes: bool,
}

/// Compare the functor applied to `g2 . g1` against the concatenation of
/// the functor applied to each part. Both sides evaluate the same parameter
/// points, so the deviation is zero up to floating-point evaluation noise.
pub fn verify_functoriality(
    g1: &Trajectory,
    g2: &Trajectory,
    probe: &Matrix,
) -> Result<FunctorialityReport> {
    let composed = compose_trajectories(g1, g2)?;
    let lhs = apply_functor(&composed, probe)?;
    let path1 = apply_functor(g1, probe)?;
    let path2 = apply_functor(g2, probe)?;

    let mut rhs = path1.snapshots().to_vec();
    rhs.extend_from_slice(&path2.snapshots()[1..]);

    if lhs.len() != rhs.len() {
        return Err(Error::ShapeMismatch("functor image length mismatch".into()));
    }
    let mut max_dev = 0.0f64;
    for (a, b) in lhs.snapshots().iter().zip(&rhs) {
        max_dev = max_dev.max(a.matrix.max_abs_diff(&b.matrix)?);
    }
    Ok(FunctorialityReport { max_deviation: max_dev, passes: max_dev < FUNCTOR_TOLERANCE })
}

/// Element-wise parameter mean: the federated-averaging approximation of
/// the colimit of client models.
pub fn fedavg_colimit(thetas: &[ParamVector]) -> Result<ParamVector> {
    let first = thetas
        .first()
        .ok_or_else(|| Error::InvalidInput("fedavg over an empty set".into()))?;
    if thetas.iter().any(|t| t.arch_id() != first.arch_id() || t.len() != first.len()) {
        return Err(Error::ShapeMismatch("fedavg over mismatched architectures".into()));
    }
    // per-coordinate sorted anchored mean: permutation-invariant to the bit
    // and exact on identical inputs
    let n = thetas.len();
    let mut values = vec![0.0; first.len()];
    let mut column = vec![0.0f64; n];
    for (i, out) in values.iter_mut().enumerate() {
        for (c, t) in column.iter_mut().zip(thetas) {
            *c = t.values()[i];
        }
        column.sort_by(f64::total_cmp);
        let anchor = column[0];
        let correction: f64 = column.iter().map(|v| v - anchor).sum();
        *out = anchor + correction / n as f64;
    }
    ParamVector::from_raw(values, first.arch_id())
}

/// Largest distortion of pairwise probe distances along a representation
/// path, reported (never enforced) as the distance-preservation statistic
/// of representation morphisms.
pub fn max_pairwise_distortion(path: &RepresentationPath) -> f64 {
    let first = &path.snapshots[0];
    let n = first.n_probe();
    let mut max_distortion = 0.0f64;
    for snap in &path.snapshots[1..] {
        for i in 0..n {
            for j in (i + 1)..n {
                let d0 = row_distance(&first.matrix, i, j);
                let dt = row_distance(&snap.matrix, i, j);
                max_distortion = max_distortion.max((dt - d0).abs());
            }
        }
    }
    max_distortion
}

fn row_distance(m: &Matrix, i: usize, j: usize) -> f64 {
    m.row(i)
        .iter()
        .zip(m.row(j))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Convenience: capture a probe's id without a snapshot.
pub fn probe_fingerprint(probe: &Matrix) -> u64 {
    probe_id(probe)
}
