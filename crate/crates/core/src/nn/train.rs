//! Training loop with trajectory recording.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::arch::NetworkArch;
use crate::nn::data::{DatasetSpec, LabeledBatch, Targets};
use crate::nn::fisher::natural_gradient_direction;
use crate::nn::net::{grad, loss};
use crate::nn::params::ParamVector;
use crate::rng::{rng_for, SALT_SHUFFLE};

/// Loss level above which training aborts as diverged. Keeps later barrier
/// searches away from NaN landscapes.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    NaturalGradient,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Trajectory sampling stride, in optimizer steps.
    pub record_every: usize,
    pub seed: u64,
    /// Damping added to the Fisher operator (natural gradient only).
    #[serde(default)]
    pub damping: f64,
    /// Leading affine layers excluded from updates.
    #[serde(default)]
    pub frozen_prefix: usize,
}

impl TrainConfig {
    pub fn sgd(learning_rate: f64, batch_size: usize, epochs: usize, seed: u64) -> Self {
        Self {
            optimizer: OptimizerKind::Sgd,
            learning_rate,
            batch_size,
            epochs,
            record_every: 1,
            seed,
            damping: 0.0,
            frozen_prefix: 0,
        }
    }

    pub fn with_record_every(mut self, record_every: usize) -> Self {
        self.record_every = record_every;
        self
    }

    pub fn with_frozen_prefix(mut self, frozen_prefix: usize) -> Self {
        self.frozen_prefix = frozen_prefix;
        self
    }

    fn validate(&self, arch: &NetworkArch, n_train: usize) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning_rate must be a finite non-negative real".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be positive".into()));
        }
        if self.frozen_prefix > arch.n_layers() {
            return Err(Error::InvalidConfig(format!(
                "frozen_prefix {} exceeds layer count {}",
                self.frozen_prefix,
                arch.n_layers()
            )));
        }
        if self.optimizer == OptimizerKind::NaturalGradient && self.damping <= 0.0 {
            return Err(Error::InvalidConfig("natural-gradient requires damping > 0".into()));
        }
        let total_steps = self.total_steps(n_train);
        if total_steps > 0 && self.record_every > total_steps {
            return Err(Error::InvalidConfig(format!(
                "record_every {} exceeds total step count {}",
                self.record_every, total_steps
            )));
        }
        Ok(())
    }

    pub fn total_steps(&self, n_train: usize) -> usize {
        self.epochs * n_train.div_ceil(self.batch_size)
    }
}

/// A recorded optimization path: the morphisms of the parameter category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryFile", into = "TrajectoryFile")]
pub struct Trajectory {
    arch: NetworkArch,
    dataset: DatasetSpec,
    config: TrainConfig,
    points: Vec<ParamVector>,
    losses: Vec<f64>,
}

/// On-disk shape: points as plain arrays so trajectory files round-trip as
/// `{arch, dataset, config, points, losses}`.
#[derive(Serialize, Deserialize)]
struct TrajectoryFile {
    arch: NetworkArch,
    dataset: DatasetSpec,
    config: TrainConfig,
    points: Vec<Vec<f64>>,
    losses: Vec<f64>,
}

impl From<Trajectory> for TrajectoryFile {
    fn from(t: Trajectory) -> Self {
        Self {
            arch: t.arch,
            dataset: t.dataset,
            config: t.config,
            points: t.points.into_iter().map(ParamVector::into_values).collect(),
            losses: t.losses,
        }
    }
}

impl TryFrom<TrajectoryFile> for Trajectory {
    type Error = Error;

    fn try_from(f: TrajectoryFile) -> Result<Self> {
        let points = f
            .points
            .into_iter()
            .map(|v| ParamVector::new(&f.arch, v))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::from_parts(f.arch, f.dataset, f.config, points, f.losses)
    }
}

impl Trajectory {
    /// Build a trajectory from already-recorded parts, enforcing the type
    /// invariants (nonempty, one arch, finite losses, equal lengths).
    pub fn from_parts(
        arch: NetworkArch,
        dataset: DatasetSpec,
        config: TrainConfig,
        points: Vec<ParamVector>,
        losses: Vec<f64>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("trajectory needs at least one point".into()));
        }
        if points.len() != losses.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} points vs {} losses",
                points.len(),
                losses.len()
            )));
        }
        let id = arch.id();
        if points.iter().any(|p| p.arch_id() != id) {
            return Err(Error::ShapeMismatch("trajectory points disagree on arch".into()));
        }
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("trajectory losses".into()));
        }
        Ok(Self { arch, dataset, config, points, losses })
    }

    pub fn arch(&self) -> &NetworkArch {
        &self.arch
    }

    pub fn dataset(&self) -> &DatasetSpec {
        &self.dataset
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn points(&self) -> &[ParamVector] {
        &self.points
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_point(&self) -> &ParamVector {
        &self.points[0]
    }

    pub fn final_point(&self) -> &ParamVector {
        self.points.last().unwrap()
    }

    /// Suffix starting at `start` (clamped to keep at least one point).
    /// Used by analyses that only care about the converged portion.
    pub fn tail_from(&self, start: usize) -> Trajectory {
        let start = start.min(self.points.len() - 1);
        Trajectory {
            arch: self.arch.clone(),
            dataset: self.dataset.clone(),
            config: self.config.clone(),
            points: self.points[start..].to_vec(),
            losses: self.losses[start..].to_vec(),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&json)?)
    }
}

/// Optimizer state for one run.
enum OptimizerState {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: u64 },
    NaturalGradient,
}

/// Train `theta0` on the dataset, recording every `record_every` steps plus
/// the final point. Deterministic given all seeds. The recorded losses are
/// full-training-set losses at the recorded points.
pub fn train(
    arch: &NetworkArch,
    dataset: &DatasetSpec,
    config: &TrainConfig,
    theta0: &ParamVector,
) -> Result<Trajectory> {
    let splits = dataset.instantiate()?;
    train_on_batch(arch, dataset, splits.train, config, theta0)
}

/// [`train`] on already-materialized training data; `dataset` is carried as
/// trajectory metadata only. Used by transfer, where the inputs have been
/// mapped through a domain morphism first.
pub fn train_on_batch(
    arch: &NetworkArch,
    dataset: &DatasetSpec,
    mut train_batch: LabeledBatch,
    config: &TrainConfig,
    theta0: &ParamVector,
) -> Result<Trajectory> {
    if theta0.arch_id() != arch.id() {
        return Err(Error::ShapeMismatch("theta0 built for a different arch".into()));
    }
    config.validate(arch, train_batch.len())?;
    // the MSE head wants value targets; one-hot encode labels up front
    if arch.head == crate::nn::arch::Head::MeanSquaredError {
        if let Targets::Labels(_) = train_batch.targets {
            train_batch = LabeledBatch::new(
                train_batch.inputs.clone(),
                Targets::Values(train_batch.targets.to_values(arch.output_dim())),
            )?;
        }
    }

    let frozen_len = arch.layer_offset(config.frozen_prefix);
    let mut theta = theta0.clone();
    let mut points = vec![theta.clone()];
    let mut losses = vec![loss(arch, &theta, &train_batch)?];
    let mut state = match config.optimizer {
        OptimizerKind::Sgd => OptimizerState::Sgd,
        OptimizerKind::Adam => OptimizerState::Adam {
            m: vec![0.0; theta.len()],
            v: vec![0.0; theta.len()],
            t: 0,
        },
        OptimizerKind::NaturalGradient => OptimizerState::NaturalGradient,
    };

    let n = train_batch.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(config.seed, SALT_SHUFFLE);
    let mut step = 0usize;
    let mut last_recorded = 0usize;

    for _epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let minibatch = train_batch.select(chunk);
            let mut g = grad(arch, &theta, &minibatch)?;
            for gi in g.iter_mut().take(frozen_len) {
                *gi = 0.0;
            }
            apply_update(&mut theta, arch, config, &mut state, &minibatch, &g)?;
            step += 1;

            let mb_loss = loss(arch, &theta, &minibatch)?;
            if !mb_loss.is_finite() || mb_loss > DIVERGENCE_THRESHOLD {
                // roll back to the last valid point and report
                let last_valid = points.last().unwrap().clone();
                let partial = Trajectory::from_parts(
                    arch.clone(),
                    dataset.clone(),
                    config.clone(),
                    points,
                    losses,
                )
                .unwrap_or_else(|_| {
                    Trajectory::from_parts(
                        arch.clone(),
                        dataset.clone(),
                        config.clone(),
                        vec![last_valid],
                        vec![0.0],
                    )
                    .expect("single-point trajectory")
                });
                return Err(Error::Diverged { step, loss: mb_loss, partial: Box::new(partial) });
            }

            if step % config.record_every == 0 {
                points.push(theta.clone());
                losses.push(loss(arch, &theta, &train_batch)?);
                last_recorded = step;
            }
        }
    }
    if step != last_recorded {
        points.push(theta.clone());
        losses.push(loss(arch, &theta, &train_batch)?);
    }
    Trajectory::from_parts(arch.clone(), dataset.clone(), config.clone(), points, losses)
}

fn apply_update(
    theta: &mut ParamVector,
    arch: &NetworkArch,
    config: &TrainConfig,
    state: &mut OptimizerState,
    minibatch: &LabeledBatch,
    g: &[f64],
) -> Result<()> {
    let lr = config.learning_rate;
    match state {
        OptimizerState::Sgd => {
            for (p, gi) in theta.values_mut().iter_mut().zip(g) {
                *p -= lr * gi;
            }
        }
        OptimizerState::Adam { m, v, t } => {
            *t += 1;
            let b1t = 1.0 - ADAM_BETA1.powi(*t as i32);
            let b2t = 1.0 - ADAM_BETA2.powi(*t as i32);
            for (i, p) in theta.values_mut().iter_mut().enumerate() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let mhat = m[i] / b1t;
                let vhat = v[i] / b2t;
                *p -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
        OptimizerState::NaturalGradient => {
            let frozen_len = arch.layer_offset(config.frozen_prefix);
            let mut dir = natural_gradient_direction(arch, theta, minibatch, g, config.damping)?;
            for d in dir.iter_mut().take(frozen_len) {
                *d = 0.0;
            }
            for (p, di) in theta.values_mut().iter_mut().zip(&dir) {
                *p -= lr * di;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::nn::arch::{Activation, Head};
    use crate::nn::data::DatasetKind;
    use crate::nn::params::init_params;

    fn moons_spec(seed: u64, n: usize) -> DatasetSpec {
        DatasetSpec {
            kind: DatasetKind::TwoMoons,
            seed,
            n_train: n,
            n_test: n,
            input_dim: 2,
            n_classes: 2,
            path: None,
        }
    }

    fn small_arch() -> NetworkArch {
        NetworkArch::new(vec![2, 4, 2], Activation::Relu, Head::SoftmaxCrossEntropy).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_theta_fixed() {
        let arch = small_arch();
        let theta0 = init_params(&arch, 1).unwrap();
        let config = TrainConfig::sgd(0.0, 8, 2, 5).with_record_every(3);
        let traj = train(&arch, &moons_spec(3, 32), &config, &theta0).unwrap();
        for p in traj.points() {
            assert_eq!(p.values(), theta0.values());
        }
    }

    #[test]
    fn fully_frozen_network_stays_constant() {
        let arch = small_arch();
        let theta0 = init_params(&arch, 2).unwrap();
        let config = TrainConfig::sgd(0.5, 8, 2, 5)
            .with_record_every(2)
            .with_frozen_prefix(arch.n_layers());
        let traj = train(&arch, &moons_spec(3, 32), &config, &theta0).unwrap();
        for p in traj.points() {
            assert_eq!(p.values(), theta0.values());
        }
    }

    #[test]
    fn first_point_is_the_initialization_and_final_is_recorded() {
        let arch = small_arch();
        let theta0 = init_params(&arch, 3).unwrap();
        let config = TrainConfig::sgd(0.05, 8, 3, 5).with_record_every(5);
        let traj = train(&arch, &moons_spec(4, 32), &config, &theta0).unwrap();
        assert_eq!(traj.first_point().values(), theta0.values());
        assert_eq!(traj.points().len(), traj.losses().len());
        // 3 epochs * 4 steps = 12 steps, recorded at 5, 10 plus final 12 plus init
        assert_eq!(traj.len(), 4);
    }

    #[test]
    fn deterministic_trajectories_serialize_identically() {
        let arch = small_arch();
        let theta0 = init_params(&arch, 4).unwrap();
        let config = TrainConfig::sgd(0.1, 8, 2, 9).with_record_every(2);
        let spec = moons_spec(5, 32);
        let a = train(&arch, &spec, &config, &theta0).unwrap();
        let b = train(&arch, &spec, &config, &theta0).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn trajectory_json_round_trips_exactly() {
        let arch = small_arch();
        let theta0 = init_params(&arch, 6).unwrap();
        let config = TrainConfig::sgd(0.1, 8, 1, 9);
        let traj = train(&arch, &moons_spec(6, 16), &config, &theta0).unwrap();
        let json = serde_json::to_string(&traj).unwrap();
        let back: Trajectory = serde_json::from_str(&json).unwrap();
        assert_eq!(traj, back);
    }

    /// Single linear unit, symmetric data: full-batch GD contracts the error
    /// as exactly (1 - lr)^k in both coordinates.
    #[test]
    fn linear_unit_matches_geometric_decay() {
        // inputs +-1 with targets +-c: loss = 1/2 ((w - c)^2 + b^2)
        let arch =
            NetworkArch::new(vec![1, 1], Activation::Identity, Head::MeanSquaredError).unwrap();
        let c = 0.75;
        let lr = 0.3;
        let w0 = -0.2;
        let b0 = 0.4;
        let theta0 = ParamVector::new(&arch, vec![w0, b0]).unwrap();

        // hand-rolled full-batch GD using the library gradient
        let inputs = Matrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let targets = Targets::Values(Matrix::from_rows(&[vec![c], vec![-c]]).unwrap());
        let batch = LabeledBatch::new(inputs, targets).unwrap();
        let mut theta = theta0;
        for k in 1..=20 {
            let g = grad(&arch, &theta, &batch).unwrap();
            for (p, gi) in theta.values_mut().iter_mut().zip(&g) {
                *p -= lr * gi;
            }
            let decay = (1.0 - lr).powi(k);
            let expect_w = c + (w0 - c) * decay;
            let expect_b = b0 * decay;
            assert!((theta.values()[0] - expect_w).abs() < 1e-12);
            assert!((theta.values()[1] - expect_b).abs() < 1e-12);
        }
    }

    /// Full-batch GD on a convex surrogate has non-increasing recorded losses.
    #[test]
    fn convex_surrogate_losses_non_increasing() {
        let arch =
            NetworkArch::new(vec![1, 1], Activation::Identity, Head::MeanSquaredError).unwrap();
        let theta0 = ParamVector::new(&arch, vec![-1.0, 1.0]).unwrap();
        let spec = DatasetSpec {
            kind: DatasetKind::TwoValleyRegression,
            seed: 8,
            n_train: 32,
            n_test: 32,
            input_dim: 1,
            n_classes: 1,
            path: None,
        };
        let config = TrainConfig::sgd(0.1, 32, 20, 0).with_record_every(1);
        let traj = train(&arch, &spec, &config, &theta0).unwrap();
        for w in traj.losses().windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn divergence_aborts_with_last_valid_point() {
        let arch =
            NetworkArch::new(vec![1, 1], Activation::Identity, Head::MeanSquaredError).unwrap();
        let theta0 = ParamVector::new(&arch, vec![1.0, 0.0]).unwrap();
        let spec = DatasetSpec {
            kind: DatasetKind::TwoValleyRegression,
            seed: 8,
            n_train: 16,
            n_test: 16,
            input_dim: 1,
            n_classes: 1,
            path: None,
        };
        // lr far above 2/L: iterates explode
        let config = TrainConfig::sgd(1e3, 16, 50, 0).with_record_every(1);
        match train(&arch, &spec, &config, &theta0) {
            Err(Error::Diverged { partial, .. }) => {
                assert!(!partial.is_empty());
                assert!(partial.losses().iter().all(|l| l.is_finite()));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn record_every_larger_than_step_count_rejected() {
        let arch = small_arch();
        let theta0 = init_params(&arch, 3).unwrap();
        let config = TrainConfig::sgd(0.1, 32, 1, 5).with_record_every(100);
        assert!(train(&arch, &moons_spec(4, 32), &config, &theta0).is_err());
    }

    #[test]
    fn adam_runs_and_reduces_loss() {
        let arch = small_arch();
        let theta0 = init_params(&arch, 12).unwrap();
        let config = TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 30,
            record_every: 10,
            seed: 3,
            damping: 0.0,
            frozen_prefix: 0,
        };
        let traj = train(&arch, &moons_spec(7, 64), &config, &theta0).unwrap();
        assert!(traj.losses().last().unwrap() < &traj.losses()[0]);
    }
}
