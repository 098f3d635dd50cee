//! Desk-scale experiment protocols tying the toolkit together: homotopy
//! classes of trained networks, persistence against generalization gap, and
//! pullback transfer against baselines. The exact hyperparameters are part
//! of each protocol and fixed here.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::homotopy::{
    class_statistics, homotopy_matrix, partition_classes, BatchSurface, ClassStatistics,
    HomotopyClassPartition, ThresholdSpec,
};
use crate::nn::{
    accuracy, init_params, loss, train, Activation, DatasetKind, DatasetSpec, Head, NetworkArch,
    TrainConfig, Trajectory,
};
use crate::persistence::{
    fit_gap_model, maxmin_landmarks, rips_persistence, sample_landscape, total_persistence,
    GapModel,
};
use crate::rng::derive_seed;
use crate::transfer::{
    pullback_transfer, verify_universal_property, DomainMorphism, HeadInit, TransferredModel,
};

// ---------------------------------------------------------------------
// homotopy classes of trained networks
// ---------------------------------------------------------------------

/// Training families for the homotopy-class experiment: branches within a
/// family share the initialization and differ in shuffling, so they descend
/// into one basin; the third family is deliberately underfit.
const HOMOTOPY_FAMILIES: [(f64, usize, u64); 4] =
    [(0.10, 150, 101), (0.08, 150, 202), (0.01, 2, 303), (0.12, 200, 404)];
const HOMOTOPY_BRANCHES: usize = 5;
/// Fixed barrier threshold: above the converged families' own path losses,
/// below both the cross-basin barriers and the underfit family's level.
pub const HOMOTOPY_CLASS_THRESHOLD: f64 = 0.4;
/// Fraction of each trajectory dropped from the front before the grid test,
/// keeping the converged portion.
const HOMOTOPY_TAIL_START: f64 = 0.7;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomotopyClassesResult {
    pub partition: HomotopyClassPartition,
    pub statistics: ClassStatistics,
    pub test_accuracies: Vec<f64>,
    pub threshold: f64,
}

fn moons_spec(seed: u64, n_train: usize, n_test: usize) -> DatasetSpec {
    DatasetSpec {
        kind: DatasetKind::TwoMoons,
        seed,
        n_train,
        n_test,
        input_dim: 2,
        n_classes: 2,
        path: None,
    }
}

/// Train `4 x 5` two-moons networks (shared inits per family), partition
/// their trajectory tails into homotopy classes, and report per-class
/// accuracy statistics.
pub fn homotopy_classes_experiment(experiment_seed: u64) -> Result<HomotopyClassesResult> {
    let arch = NetworkArch::new(vec![2, 16, 2], Activation::Relu, Head::SoftmaxCrossEntropy)?;
    let dataset = moons_spec(derive_seed(experiment_seed, 1), 100, 1200);
    let splits = dataset.instantiate()?;
    let eval = dataset.eval_batch(256)?;

    let mut tails = Vec::new();
    let mut accuracies = Vec::new();
    for (family, &(lr, epochs, family_salt)) in HOMOTOPY_FAMILIES.iter().enumerate() {
        let init_seed = derive_seed(experiment_seed, family_salt);
        let theta0 = init_params(&arch, init_seed)?;
        for branch in 0..HOMOTOPY_BRANCHES {
            let total_steps = epochs * 100usize.div_ceil(8);
            let config = TrainConfig::sgd(
                lr,
                8,
                epochs,
                derive_seed(experiment_seed, family_salt * 10 + branch as u64),
            )
            .with_record_every((total_steps / 40).max(1));
            let traj = train(&arch, &dataset, &config, &theta0)?;
            accuracies.push(accuracy(&arch, traj.final_point(), &splits.test)?);
            let start = (traj.len() as f64 * HOMOTOPY_TAIL_START) as usize;
            tails.push(traj.tail_from(start));
            let _ = family;
        }
    }

    let surface = BatchSurface { arch: &arch, batch: &eval };
    let matrix = homotopy_matrix(
        &tails,
        &surface,
        ThresholdSpec::Fixed(HOMOTOPY_CLASS_THRESHOLD),
        crate::homotopy::DEFAULT_S_STEPS,
        crate::homotopy::DEFAULT_T_STEPS,
    )?;
    let partition = partition_classes(&matrix)?;
    let statistics = class_statistics(&partition, &accuracies)?;
    Ok(HomotopyClassesResult {
        partition,
        statistics,
        test_accuracies: accuracies,
        threshold: HOMOTOPY_CLASS_THRESHOLD,
    })
}

// ---------------------------------------------------------------------
// persistence against generalization gap
// ---------------------------------------------------------------------

pub const GAP_BATCH_SIZES: [usize; 12] = [2, 3, 4, 5, 6, 8, 12, 20, 32, 50, 75, 100];
const GAP_RADIUS: f64 = 0.3;
const GAP_N_SAMPLES: usize = 320;
/// Sublevel cut: offsets whose loss stays within this factor of the center
/// loss belong to the basin sample handed to Rips.
const GAP_SUBLEVEL_FACTOR: f64 = 1.5;
const GAP_LANDMARKS: usize = 256;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapRun {
    pub batch_size: usize,
    pub total_persistence: f64,
    pub kept_samples: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Loss-based generalization gap `test_loss - train_loss`; the accuracy
    /// gap at this scale is quantized too coarsely to regress on.
    pub loss_gap: f64,
    pub accuracy_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersistenceGapResult {
    pub runs: Vec<GapRun>,
    pub model: GapModel,
}

/// Total persistence of the sublevel portion of a landscape sample: keep
/// offsets whose loss stays within `factor x` the center loss, landmark,
/// and take H0 Rips total persistence (the spanning-tree length of the
/// retained basin sample).
pub fn sublevel_rips_persistence(
    sample: &crate::persistence::LandscapeSample,
    factor: f64,
    landmarks: usize,
) -> Result<(f64, usize)> {
    let threshold = factor * sample.center_loss;
    let points = sample.points();
    let kept: Vec<Vec<f64>> = points
        .into_iter()
        .zip(&sample.losses)
        .filter(|(_, l)| **l <= threshold)
        .map(|(p, _)| p)
        .collect();
    if kept.len() < 2 {
        return Ok((0.0, kept.len()));
    }
    let indices = maxmin_landmarks(&kept, landmarks);
    let selected: Vec<Vec<f64>> = indices.into_iter().map(|i| kept[i].clone()).collect();
    let diagram = rips_persistence(&selected, 0, None)?;
    Ok((total_persistence(&diagram), kept.len()))
}

/// Train two-moons networks across a batch-size sweep, compute each
/// converged point's sublevel Rips persistence, and fit the gap model on
/// (persistence, loss gap).
pub fn persistence_gap_experiment(experiment_seed: u64) -> Result<PersistenceGapResult> {
    let arch = NetworkArch::new(vec![2, 24, 2], Activation::Relu, Head::SoftmaxCrossEntropy)?;
    let dataset = moons_spec(derive_seed(experiment_seed, 2), 100, 1200);
    let splits = dataset.instantiate()?;

    let mut runs = Vec::new();
    for (i, &batch_size) in GAP_BATCH_SIZES.iter().enumerate() {
        let run_seed = derive_seed(experiment_seed, 100 + i as u64);
        let theta0 = init_params(&arch, run_seed)?;
        let total_steps = 250 * 100usize.div_ceil(batch_size);
        let config =
            TrainConfig::sgd(0.1, batch_size, 250, run_seed).with_record_every(total_steps);
        let traj = train(&arch, &dataset, &config, &theta0)?;
        let theta = traj.final_point();

        let train_loss = loss(&arch, theta, &splits.train)?;
        let test_loss = loss(&arch, theta, &splits.test)?;
        let train_accuracy = accuracy(&arch, theta, &splits.train)?;
        let test_accuracy = accuracy(&arch, theta, &splits.test)?;

        let sample = sample_landscape(
            &arch,
            theta,
            GAP_RADIUS,
            GAP_N_SAMPLES,
            derive_seed(experiment_seed, 7700 + i as u64),
            &splits.train,
        )?;
        let (pers, kept) =
            sublevel_rips_persistence(&sample, GAP_SUBLEVEL_FACTOR, GAP_LANDMARKS)?;

        runs.push(GapRun {
            batch_size,
            total_persistence: pers,
            kept_samples: kept,
            train_loss,
            test_loss,
            train_accuracy,
            test_accuracy,
            loss_gap: test_loss - train_loss,
            accuracy_gap: train_accuracy - test_accuracy,
        });
    }
    let pers: Vec<f64> = runs.iter().map(|r| r.total_persistence).collect();
    let gaps: Vec<f64> = runs.iter().map(|r| r.loss_gap).collect();
    let model = fit_gap_model(&pers, &gaps)?;
    Ok(PersistenceGapResult { runs, model })
}

// ---------------------------------------------------------------------
// pullback transfer against baselines
// ---------------------------------------------------------------------

const TRANSFER_INPUT_DIM: usize = 32;
const TRANSFER_SOURCE_CLASSES: usize = 4;
const TRANSFER_HIDDEN: usize = 16;
/// Scratch baseline trains on this many target examples; the pullback head
/// fine-tunes on a tenth of them.
pub const TRANSFER_SCRATCH_EXAMPLES: usize = 60;
pub const TRANSFER_DATA_RATIO: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferRow {
    pub method: String,
    pub test_accuracy: f64,
    pub parameters_updated: usize,
    pub target_examples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferComparisonResult {
    pub rows: Vec<TransferRow>,
    pub factorization_quality: f64,
    pub total_parameters: usize,
}

fn blob_spec(seed: u64, n_classes: usize, n_train: usize, n_test: usize) -> DatasetSpec {
    DatasetSpec {
        kind: DatasetKind::GaussianBlobs,
        seed,
        n_train,
        n_test,
        input_dim: TRANSFER_INPUT_DIM,
        n_classes,
        path: None,
    }
}

/// Source task: four Gaussian blobs. Target task: the first two of those
/// blobs, relabeled. Compares training from scratch on N examples, full
/// fine-tuning on N examples, and head-only pullback transfer on N/10
/// examples, all with shared seeds.
pub fn transfer_comparison_experiment(experiment_seed: u64) -> Result<TransferComparisonResult> {
    let data_seed = derive_seed(experiment_seed, 3);
    let source_arch = NetworkArch::new(
        vec![TRANSFER_INPUT_DIM, TRANSFER_HIDDEN, TRANSFER_SOURCE_CLASSES],
        Activation::Relu,
        Head::SoftmaxCrossEntropy,
    )?;
    let source_spec = blob_spec(data_seed, TRANSFER_SOURCE_CLASSES, 1200, 400);
    let source_theta0 = init_params(&source_arch, derive_seed(experiment_seed, 10))?;
    let source_config =
        TrainConfig::sgd(0.1, 16, 60, derive_seed(experiment_seed, 11)).with_record_every(75);
    let source_traj = train(&source_arch, &source_spec, &source_config, &source_theta0)?;
    let source_theta = source_traj.final_point();

    // target: first two blobs (centers are a prefix of the source centers)
    let target_full = blob_spec(data_seed, 2, TRANSFER_SCRATCH_EXAMPLES, 2000);
    let target_small = blob_spec(
        data_seed,
        2,
        TRANSFER_SCRATCH_EXAMPLES / TRANSFER_DATA_RATIO,
        2000,
    );
    let target_splits = target_full.instantiate()?;
    let target_arch = NetworkArch::new(
        vec![TRANSFER_INPUT_DIM, TRANSFER_HIDDEN, 2],
        Activation::Relu,
        Head::SoftmaxCrossEntropy,
    )?;
    let total_parameters = target_arch.param_count();
    let head_parameters = total_parameters - target_arch.layer_offset(target_arch.n_layers() - 1);

    // scratch baseline on the full target budget
    let scratch_theta0 = init_params(&target_arch, derive_seed(experiment_seed, 20))?;
    let scratch_config =
        TrainConfig::sgd(0.1, 8, 120, derive_seed(experiment_seed, 21)).with_record_every(500);
    let scratch = train(&target_arch, &target_full, &scratch_config, &scratch_theta0)?;
    let scratch_acc = accuracy(&target_arch, scratch.final_point(), &target_splits.test)?;

    let morphism = DomainMorphism::identity(TRANSFER_INPUT_DIM);

    // pullback: frozen encoder, head restricted to the target classes,
    // fine-tuned on a tenth of the data
    let finetune = TrainConfig::sgd(0.02, 3, 40, derive_seed(experiment_seed, 21));
    let pullback: TransferredModel = pullback_transfer(
        &source_arch,
        source_theta,
        &morphism,
        &target_small,
        &HeadInit::SourceRows(vec![0, 1]),
        &finetune,
    )?;
    let pullback_acc = accuracy(&pullback.arch, &pullback.theta, &target_splits.test)?;

    // standard transfer: same initialization, all layers trainable, full
    // target budget
    let full_config =
        TrainConfig::sgd(0.05, 8, 60, derive_seed(experiment_seed, 21)).with_record_every(450);
    let full_init = pullback_transfer(
        &source_arch,
        source_theta,
        &morphism,
        &target_full,
        &HeadInit::SourceRows(vec![0, 1]),
        &TrainConfig::sgd(0.0, 8, 0, 0),
    )?;
    let full = train(&target_arch, &target_full, &full_config, &full_init.theta)?;
    let full_acc = accuracy(&target_arch, full.final_point(), &target_splits.test)?;

    let probe = target_full.probe_set(128)?;
    let factorization = verify_universal_property(
        &pullback.arch,
        &pullback.theta,
        &target_arch,
        full.final_point(),
        &probe,
        &morphism,
    )?;

    Ok(TransferComparisonResult {
        rows: vec![
            TransferRow {
                method: "from-scratch".into(),
                test_accuracy: scratch_acc,
                parameters_updated: total_parameters,
                target_examples: TRANSFER_SCRATCH_EXAMPLES,
            },
            TransferRow {
                method: "full-finetune".into(),
                test_accuracy: full_acc,
                parameters_updated: total_parameters,
                target_examples: TRANSFER_SCRATCH_EXAMPLES,
            },
            TransferRow {
                method: "pullback".into(),
                test_accuracy: pullback_acc,
                parameters_updated: head_parameters,
                target_examples: TRANSFER_SCRATCH_EXAMPLES / TRANSFER_DATA_RATIO,
            },
        ],
        factorization_quality: factorization.quality,
        total_parameters,
    })
}

/// Trajectories of the homotopy-class experiment, exposed for pipeline
/// reuse (the CLI writes them as ordinary trajectory files).
pub fn homotopy_family_trajectories(experiment_seed: u64) -> Result<Vec<Trajectory>> {
    let arch = NetworkArch::new(vec![2, 16, 2], Activation::Relu, Head::SoftmaxCrossEntropy)?;
    let dataset = moons_spec(derive_seed(experiment_seed, 1), 100, 1200);
    let mut out = Vec::new();
    for &(lr, epochs, family_salt) in HOMOTOPY_FAMILIES.iter() {
        let theta0 = init_params(&arch, derive_seed(experiment_seed, family_salt))?;
        for branch in 0..HOMOTOPY_BRANCHES {
            let total_steps = epochs * 100usize.div_ceil(8);
            let config = TrainConfig::sgd(
                lr,
                8,
                epochs,
                derive_seed(experiment_seed, family_salt * 10 + branch as u64),
            )
            .with_record_every((total_steps / 40).max(1));
            out.push(train(&arch, &dataset, &config, &theta0)?);
        }
    }
    Ok(out)
}
