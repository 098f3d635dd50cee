//! Homotopy detection between optimization paths.
//!
//! Two trajectories are tested by filling the straight-line interpolation
//! grid between their (arc-length resampled) points and checking every
//! interpolant's loss against a barrier threshold. Collections partition
//! into classes as connected components of the pairwise relation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::arch::NetworkArch;
use crate::nn::data::LabeledBatch;
use crate::nn::net::loss;
use crate::nn::params::ParamVector;
use crate::nn::train::Trajectory;

/// Default trajectory resampling length for the grid's s axis.
pub const DEFAULT_S_STEPS: usize = 50;
/// Default interpolation count for the grid's t axis.
pub const DEFAULT_T_STEPS: usize = 20;
/// Endpoint separation above which the report flags that the two paths do
/// not share endpoints (the fixed-endpoint definition does not apply).
pub const ENDPOINT_TOLERANCE: f64 = 1e-6;
/// Factor applied to the max final-point loss by the auto threshold rule.
pub const AUTO_THRESHOLD_FACTOR: f64 = 1.5;

/// A loss function over flat parameter vectors. Implementations return
/// `f64::INFINITY` (or NaN) for unevaluable points; both count as barriers.
pub trait LossSurface: Sync {
    fn loss_at(&self, theta: &[f64]) -> f64;
}

/// Network loss on a fixed evaluation batch.
pub struct BatchSurface<'a> {
    pub arch: &'a NetworkArch,
    pub batch: &'a LabeledBatch,
}

impl LossSurface for BatchSurface<'_> {
    fn loss_at(&self, theta: &[f64]) -> f64 {
        match ParamVector::new(self.arch, theta.to_vec()) {
            Ok(p) => loss(self.arch, &p, self.batch).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Analytic two-valley landscape: the pointwise minimum of two quadratics
/// centered at `c1` and `c2` with shared metric `a`. The equidistant ridge
/// between the valleys separates paths at thresholds below its height.
#[derive(Debug, Clone)]
pub struct TwoValleyLandscape {
    c1: Vec<f64>,
    c2: Vec<f64>,
    a: Matrix,
}

impl TwoValleyLandscape {
    /// Identity metric.
    pub fn new(c1: Vec<f64>, c2: Vec<f64>) -> Result<Self> {
        if c1.len() != c2.len() {
            return Err(Error::ShapeMismatch("valley centers of different dimension".into()));
        }
        let d = c1.len();
        let mut a = Matrix::zeros(d, d);
        for i in 0..d {
            a.set(i, i, 1.0);
        }
        Ok(Self { c1, c2, a })
    }

    pub fn with_metric(mut self, a: Matrix) -> Result<Self> {
        if a.rows() != self.c1.len() || a.cols() != self.c1.len() {
            return Err(Error::ShapeMismatch("metric dimension mismatch".into()));
        }
        self.a = a;
        Ok(self)
    }

    fn quadratic(&self, theta: &[f64], center: &[f64]) -> f64 {
        let d = center.len();
        let mut total = 0.0;
        for i in 0..d {
            let di = theta[i] - center[i];
            for j in 0..d {
                total += di * self.a.get(i, j) * (theta[j] - center[j]);
            }
        }
        total
    }

    /// Which valley a point falls in (0 or 1).
    pub fn valley_of(&self, theta: &[f64]) -> usize {
        if self.quadratic(theta, &self.c1) <= self.quadratic(theta, &self.c2) {
            0
        } else {
            1
        }
    }
}

impl LossSurface for TwoValleyLandscape {
    fn loss_at(&self, theta: &[f64]) -> f64 {
        self.quadratic(theta, &self.c1).min(self.quadratic(theta, &self.c2))
    }
}

/// Barrier threshold: fixed, or derived per pair from the final-point
/// losses (`1.5 x` their max).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdSpec {
    Fixed(f64),
    Auto,
}

impl ThresholdSpec {
    fn resolve(&self, surface: &dyn LossSurface, p0: &[Vec<f64>], p1: &[Vec<f64>]) -> f64 {
        match self {
            ThresholdSpec::Fixed(t) => *t,
            ThresholdSpec::Auto => {
                let l0 = surface.loss_at(p0.last().unwrap());
                let l1 = surface.loss_at(p1.last().unwrap());
                AUTO_THRESHOLD_FACTOR * l0.max(l1)
            }
        }
    }
}

/// Outcome of one pairwise homotopy test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierReport {
    pub homotopic: bool,
    /// Max grid loss seen; the full grid max when homotopic, the running
    /// max up to the first violation otherwise.
    pub max_loss: f64,
    /// First `(s, t)` violation in row-major scan order.
    pub barrier_location: Option<(usize, usize)>,
    pub threshold: f64,
    /// Max-norm separation of the paired start/end points when above
    /// [`ENDPOINT_TOLERANCE`]; the straight-line grid then interpolates
    /// between distinct endpoints rather than fixing them.
    pub endpoint_divergence: Option<f64>,
}

/// Uniform arc-length resampling of a polyline to `n` points. Endpoints are
/// preserved exactly; a zero-length path yields `n` copies of the point.
pub fn resample_points(points: &[Vec<f64>], n: usize) -> Result<Vec<Vec<f64>>> {
    if n < 2 {
        return Err(Error::InvalidInput("resample target must be >= 2".into()));
    }
    if points.len() < 2 {
        return Err(Error::InvalidInput("resampling needs >= 2 points".into()));
    }
    let seg_lengths: Vec<f64> = points
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let total: f64 = seg_lengths.iter().sum();
    if total == 0.0 {
        return Ok(vec![points[0].clone(); n]);
    }
    let mut cumulative = Vec::with_capacity(points.len());
    cumulative.push(0.0);
    for l in &seg_lengths {
        cumulative.push(cumulative.last().unwrap() + l);
    }
    let mut out = Vec::with_capacity(n);
    out.push(points[0].clone());
    let mut seg = 0usize;
    for i in 1..n - 1 {
        let target = total * i as f64 / (n - 1) as f64;
        while seg + 1 < seg_lengths.len() && cumulative[seg + 1] < target {
            seg += 1;
        }
        let w = if seg_lengths[seg] > 0.0 {
            (target - cumulative[seg]) / seg_lengths[seg]
        } else {
            0.0
        };
        let p = points[seg]
            .iter()
            .zip(&points[seg + 1])
            .map(|(a, b)| a * (1.0 - w) + b * w)
            .collect();
        out.push(p);
    }
    out.push(points.last().unwrap().clone());
    Ok(out)
}

/// Arc-length resampling of a trajectory; recorded losses are interpolated
/// with the same bracketing weights.
pub fn resample_trajectory(gamma: &Trajectory, n: usize) -> Result<Trajectory> {
    let raw: Vec<Vec<f64>> = gamma.points().iter().map(|p| p.values().to_vec()).collect();
    let resampled = resample_points(&raw, n)?;
    // losses by nearest interpolation on arc-length position
    let losses = resample_scalars(&raw, gamma.losses(), n)?;
    let points = resampled
        .into_iter()
        .map(|v| ParamVector::new(gamma.arch(), v))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::from_parts(
        gamma.arch().clone(),
        gamma.dataset().clone(),
        gamma.config().clone(),
        points,
        losses,
    )
}

fn resample_scalars(points: &[Vec<f64>], values: &[f64], n: usize) -> Result<Vec<f64>> {
    let seg_lengths: Vec<f64> = points
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let total: f64 = seg_lengths.iter().sum();
    if total == 0.0 {
        return Ok(vec![values[0]; n]);
    }
    let mut cumulative = vec![0.0];
    for l in &seg_lengths {
        cumulative.push(cumulative.last().unwrap() + l);
    }
    let mut out = Vec::with_capacity(n);
    out.push(values[0]);
    let mut seg = 0usize;
    for i in 1..n - 1 {
        let target = total * i as f64 / (n - 1) as f64;
        while seg + 1 < seg_lengths.len() && cumulative[seg + 1] < target {
            seg += 1;
        }
        let w = if seg_lengths[seg] > 0.0 {
            (target - cumulative[seg]) / seg_lengths[seg]
        } else {
            0.0
        };
        out.push(values[seg] * (1.0 - w) + values[seg + 1] * w);
    }
    out.push(*values.last().unwrap());
    Ok(out)
}

/// Pairwise homotopy test on raw point paths.
///
/// Both paths are resampled to `s_steps`; every `(s, t)` interpolant's loss
/// is checked against the threshold in row-major order and the first
/// violation is reported. Non-finite losses count as barriers.
pub fn are_homotopic_paths(
    p0: &[Vec<f64>],
    p1: &[Vec<f64>],
    surface: &dyn LossSurface,
    threshold: ThresholdSpec,
    s_steps: usize,
    t_steps: usize,
) -> Result<BarrierReport> {
    if s_steps == 0 || t_steps < 2 {
        return Err(Error::InvalidConfig("need s_steps >= 1 and t_steps >= 2".into()));
    }
    let g0 = if p0.len() == 1 { vec![p0[0].clone(); 2] } else { p0.to_vec() };
    let g1 = if p1.len() == 1 { vec![p1[0].clone(); 2] } else { p1.to_vec() };
    if g0[0].len() != g1[0].len() {
        return Err(Error::ShapeMismatch("paths of different parameter dimension".into()));
    }
    let s_steps = s_steps.max(2);
    let g0 = resample_points(&g0, s_steps)?;
    let g1 = resample_points(&g1, s_steps)?;
    let threshold = threshold.resolve(surface, &g0, &g1);

    let start_sep = max_norm_diff(&g0[0], &g1[0]);
    let end_sep = max_norm_diff(g0.last().unwrap(), g1.last().unwrap());
    let sep = start_sep.max(end_sep);
    let endpoint_divergence = (sep > ENDPOINT_TOLERANCE).then_some(sep);

    let mut max_loss = f64::NEG_INFINITY;
    let mut interp = vec![0.0; g0[0].len()];
    for s in 0..s_steps {
        for t_idx in 0..t_steps {
            let t = t_idx as f64 / (t_steps - 1) as f64;
            for (k, v) in interp.iter_mut().enumerate() {
                *v = (1.0 - t) * g0[s][k] + t * g1[s][k];
            }
            let l = surface.loss_at(&interp);
            let bad = !l.is_finite() || l > threshold;
            max_loss = max_loss.max(if l.is_nan() { f64::INFINITY } else { l });
            if bad {
                return Ok(BarrierReport {
                    homotopic: false,
                    max_loss,
                    barrier_location: Some((s, t_idx)),
                    threshold,
                    endpoint_divergence,
                });
            }
        }
    }
    Ok(BarrierReport {
        homotopic: true,
        max_loss,
        barrier_location: None,
        threshold,
        endpoint_divergence,
    })
}

/// Trajectory front end of [`are_homotopic_paths`]; requires matching arch
/// and dataset.
pub fn are_homotopic(
    g0: &Trajectory,
    g1: &Trajectory,
    surface: &dyn LossSurface,
    threshold: ThresholdSpec,
    s_steps: usize,
    t_steps: usize,
) -> Result<BarrierReport> {
    if g0.arch() != g1.arch() {
        return Err(Error::ShapeMismatch("trajectories over different archs".into()));
    }
    if g0.dataset() != g1.dataset() {
        return Err(Error::InvalidInput("trajectories over different datasets".into()));
    }
    let p0: Vec<Vec<f64>> = g0.points().iter().map(|p| p.values().to_vec()).collect();
    let p1: Vec<Vec<f64>> = g1.points().iter().map(|p| p.values().to_vec()).collect();
    are_homotopic_paths(&p0, &p1, surface, threshold, s_steps, t_steps)
}

/// Full interpolation grid with all losses evaluated (no early exit); used
/// for heat maps and grid inspection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomotopyGrid {
    pub s_steps: usize,
    pub t_steps: usize,
    /// `s_steps x t_steps` losses.
    pub losses: Matrix,
    /// Resampled paths backing the grid columns `t = 0` and `t = 1`.
    pub gamma0: Vec<Vec<f64>>,
    pub gamma1: Vec<Vec<f64>>,
}

impl HomotopyGrid {
    /// The grid point `H(s, t) = (1 - t) gamma0[s] + t gamma1[s]`.
    pub fn point(&self, s: usize, t_idx: usize) -> Vec<f64> {
        let t = t_idx as f64 / (self.t_steps - 1) as f64;
        self.gamma0[s]
            .iter()
            .zip(&self.gamma1[s])
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect()
    }
}

pub fn compute_grid(
    p0: &[Vec<f64>],
    p1: &[Vec<f64>],
    surface: &dyn LossSurface,
    s_steps: usize,
    t_steps: usize,
) -> Result<HomotopyGrid> {
    if s_steps < 2 || t_steps < 2 {
        return Err(Error::InvalidConfig("need s_steps >= 2 and t_steps >= 2".into()));
    }
    let g0 = resample_points(p0, s_steps)?;
    let g1 = resample_points(p1, s_steps)?;
    let mut losses = Matrix::zeros(s_steps, t_steps);
    let mut interp = vec![0.0; g0[0].len()];
    for s in 0..s_steps {
        for t_idx in 0..t_steps {
            let t = t_idx as f64 / (t_steps - 1) as f64;
            for (k, v) in interp.iter_mut().enumerate() {
                *v = (1.0 - t) * g0[s][k] + t * g1[s][k];
            }
            losses.set(s, t_idx, surface.loss_at(&interp));
        }
    }
    Ok(HomotopyGrid { s_steps, t_steps, losses, gamma0: g0, gamma1: g1 })
}

/// Symmetric boolean relation matrix over a trajectory collection. Each
/// unordered pair is evaluated once (in parallel); the diagonal is true.
pub fn homotopy_matrix_paths(
    paths: &[Vec<Vec<f64>>],
    surface: &dyn LossSurface,
    threshold: ThresholdSpec,
    s_steps: usize,
    t_steps: usize,
) -> Result<Vec<Vec<bool>>> {
    let n = paths.len();
    if n == 0 {
        return Err(Error::InvalidInput("no trajectories".into()));
    }
    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let results: Vec<((usize, usize), bool)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let report =
                are_homotopic_paths(&paths[i], &paths[j], surface, threshold, s_steps, t_steps)?;
            Ok(((i, j), report.homotopic))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut matrix = vec![vec![false; n]; n];
    for (i, row) in matrix.iter_mut().enumerate() {
        row[i] = true;
    }
    for ((i, j), h) in results {
        matrix[i][j] = h;
        matrix[j][i] = h;
    }
    Ok(matrix)
}

pub fn homotopy_matrix(
    trajs: &[Trajectory],
    surface: &dyn LossSurface,
    threshold: ThresholdSpec,
    s_steps: usize,
    t_steps: usize,
) -> Result<Vec<Vec<bool>>> {
    if trajs.is_empty() {
        return Err(Error::InvalidInput("no trajectories".into()));
    }
    let first = &trajs[0];
    for t in trajs {
        if t.arch() != first.arch() || t.dataset() != first.dataset() {
            return Err(Error::InvalidInput("mixed architectures or datasets".into()));
        }
    }
    let paths: Vec<Vec<Vec<f64>>> = trajs
        .iter()
        .map(|t| t.points().iter().map(|p| p.values().to_vec()).collect())
        .collect();
    homotopy_matrix_paths(&paths, surface, threshold, s_steps, t_steps)
}

/// Partition of trajectory indices into homotopy classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopyClassPartition {
    /// Connected components, ordered by smallest member; members ascending.
    pub classes: Vec<Vec<usize>>,
    pub relation: Vec<Vec<bool>>,
}

/// Connected components of the relation graph (its transitive closure).
pub fn partition_classes(matrix: &[Vec<bool>]) -> Result<HomotopyClassPartition> {
    let n = matrix.len();
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidInput("relation matrix is not square".into()));
        }
        if !row[i] {
            return Err(Error::InvalidInput("relation matrix diagonal must be true".into()));
        }
        for (j, &v) in row.iter().enumerate() {
            if matrix[j][i] != v {
                return Err(Error::InvalidInput("relation matrix is not symmetric".into()));
            }
        }
    }
    let mut visited = vec![false; n];
    let mut classes = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let mut queue = std::collections::VecDeque::from([start]);
        visited[start] = true;
        let mut class = Vec::new();
        while let Some(current) = queue.pop_front() {
            class.push(current);
            for (j, &related) in matrix[current].iter().enumerate() {
                if related && !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        class.sort_unstable();
        classes.push(class);
    }
    classes.sort_by_key(|c| c[0]);
    Ok(HomotopyClassPartition { classes, relation: matrix.to_vec() })
}

/// Per-class accuracy statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassStat {
    pub members: Vec<usize>,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassStatistics {
    pub per_class: Vec<ClassStat>,
    /// Max over classes of (max - min accuracy).
    pub within_class_max_spread: f64,
    /// Max - min of class means.
    pub between_class_mean_gap: f64,
}

pub fn class_statistics(
    partition: &HomotopyClassPartition,
    test_accuracies: &[f64],
) -> Result<ClassStatistics> {
    let n: usize = partition.classes.iter().map(|c| c.len()).sum();
    if n != test_accuracies.len() {
        return Err(Error::ShapeMismatch(format!(
            "partition covers {n} trajectories but {} accuracies given",
            test_accuracies.len()
        )));
    }
    let mut per_class = Vec::with_capacity(partition.classes.len());
    let mut within = 0.0f64;
    let mut means = Vec::with_capacity(partition.classes.len());
    for class in &partition.classes {
        let values: Vec<f64> = class.iter().map(|&i| test_accuracies[i]).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        within = within.max(hi - lo);
        means.push(mean);
        per_class.push(ClassStat { members: class.clone(), mean, stddev: var.sqrt() });
    }
    let between = if means.len() > 1 {
        means.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - means.iter().cloned().fold(f64::INFINITY, f64::min)
    } else {
        0.0
    };
    Ok(ClassStatistics {
        per_class,
        within_class_max_spread: within,
        between_class_mean_gap: between,
    })
}

fn max_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
