//! Zero-dimensional sublevel-set persistence on a loss-weighted neighbor
//! graph, via disjoint-set union and the elder rule.

use crate::error::{Error, Result};
use crate::persistence::diagram::{FiltrationKind, PersistenceDiagram, PersistencePoint};
use crate::persistence::landscape::LandscapeSample;

struct DisjointSet {
    parent: Vec<usize>,
    /// Birth of the component rooted here: (loss, vertex index).
    birth: Vec<(f64, usize)>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), birth: vec![(f64::INFINITY, usize::MAX); n] }
    }

    fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != node {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }
}

/// H0 sublevel persistence of the sampled landscape.
///
/// Builds the symmetric k-nearest-neighbor graph on the offsets, processes
/// vertices in increasing loss order and merges components through edges to
/// already-active neighbors. On a merge the younger component (higher birth
/// loss, ties by higher birth vertex index) dies at the current loss. Each
/// connected component of the graph leaves one essential class.
pub fn sublevel_persistence_0d(
    sample: &LandscapeSample,
    k_neighbors: usize,
) -> Result<PersistenceDiagram> {
    let n = sample.len();
    if k_neighbors == 0 || k_neighbors >= n {
        return Err(Error::InvalidConfig(format!(
            "k_neighbors must be in [1, {}), got {k_neighbors}",
            n
        )));
    }
    let offsets = &sample.offsets;
    let losses = &sample.losses;

    // symmetric kNN adjacency
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d = offsets
                    .row(i)
                    .iter()
                    .zip(offsets.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d, j)
            })
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in dists.iter().take(k_neighbors) {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
    }
    for adj in &mut neighbors {
        adj.sort_unstable();
        adj.dedup();
    }

    // sweep vertices in increasing (loss, index) order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    let mut active = vec![false; n];
    let mut dsu = DisjointSet::new(n);
    let mut points = Vec::new();

    for &v in &order {
        active[v] = true;
        // distinct components already reachable from v
        let mut roots: Vec<usize> = Vec::new();
        for idx in 0..neighbors[v].len() {
            let u = neighbors[v][idx];
            if active[u] {
                let r = dsu.find(u);
                if !roots.contains(&r) {
                    roots.push(r);
                }
            }
        }
        if roots.is_empty() {
            // v is a local minimum: a class is born
            dsu.birth[v] = (losses[v], v);
            continue;
        }
        // v joins the elder component; all younger neighbor components die
        let elder = *roots
            .iter()
            .min_by(|&&a, &&b| {
                dsu.birth[a]
                    .0
                    .total_cmp(&dsu.birth[b].0)
                    .then(dsu.birth[a].1.cmp(&dsu.birth[b].1))
            })
            .unwrap();
        for &r in &roots {
            if r == elder {
                continue;
            }
            points.push(PersistencePoint {
                birth: dsu.birth[r].0,
                death: losses[v],
                dimension: 0,
            });
            dsu.parent[r] = elder;
        }
        dsu.parent[v] = elder;
    }

    // surviving roots are essential classes (one per graph component)
    for v in 0..n {
        if dsu.find(v) == v {
            points.push(PersistencePoint {
                birth: dsu.birth[v].0,
                death: f64::INFINITY,
                dimension: 0,
            });
        }
    }

    Ok(PersistenceDiagram::new(
        points,
        FiltrationKind::Sublevel { k_neighbors },
        0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::rng::rng_for;
    use rand::Rng;

    fn sample_1d(xs: &[f64], losses: Vec<f64>) -> LandscapeSample {
        let offsets =
            Matrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap();
        LandscapeSample::from_parts(offsets, losses)
    }

    #[test]
    fn equal_losses_give_zero_persistence() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let sample = sample_1d(&xs, vec![1.0; 20]);
        let dgm = sublevel_persistence_0d(&sample, 2).unwrap();
        for p in dgm.points.iter().filter(|p| !p.is_essential()) {
            assert_eq!(p.persistence(), 0.0);
        }
        assert_eq!(dgm.essential_count(), 1);
    }

    #[test]
    fn double_well_produces_secondary_feature_at_saddle() {
        // f(x) = (x^2-1)^2 + 0.2 x on a dense uniform grid
        let f = |x: f64| (x * x - 1.0).powi(2) + 0.2 * x;
        let n = 800;
        let xs: Vec<f64> = (0..n).map(|i| -1.7 + 3.3 * i as f64 / (n - 1) as f64).collect();
        let losses: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let sample = sample_1d(&xs, losses);
        let dgm = sublevel_persistence_0d(&sample, 2).unwrap();

        let finite: Vec<_> = dgm.points.iter().filter(|p| !p.is_essential()).collect();
        let significant: Vec<_> = finite.iter().filter(|p| p.persistence() > 1e-9).collect();
        assert_eq!(significant.len(), 1, "finite points: {finite:?}");
        // frozen analytic values of the secondary minimum and saddle
        let secondary_min = 0.19743415285827653;
        let saddle = 1.005006281486546;
        let p = significant[0];
        assert!((p.birth - secondary_min).abs() / secondary_min < 0.02, "birth {}", p.birth);
        assert!((p.death - saddle).abs() / saddle < 0.02, "death {}", p.death);
        // essential class born at the global minimum
        let essential: Vec<_> = dgm.points.iter().filter(|p| p.is_essential()).collect();
        assert_eq!(essential.len(), 1);
        assert!((essential[0].birth - (-0.20244043434482245)).abs() < 1e-3);
    }

    #[test]
    fn convex_bowl_has_only_the_essential_class() {
        let n = 400;
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let losses: Vec<f64> = xs.iter().map(|&x| x * x).collect();
        let sample = sample_1d(&xs, losses);
        let dgm = sublevel_persistence_0d(&sample, 2).unwrap();
        let above_noise = dgm
            .points
            .iter()
            .filter(|p| !p.is_essential() && p.persistence() > 1e-9)
            .count();
        assert_eq!(above_noise, 0);
        assert_eq!(dgm.essential_count(), 1);
    }

    #[test]
    fn disconnected_graph_reports_component_count() {
        // two clusters far apart with k=1: the knn graph splits
        let xs = [0.0, 0.01, 100.0, 100.01];
        let sample = sample_1d(&xs, vec![1.0, 2.0, 3.0, 4.0]);
        let dgm = sublevel_persistence_0d(&sample, 1).unwrap();
        assert_eq!(dgm.essential_count(), 2);
    }

    /// Finite points + essential points = local minima of the graph
    /// (vertices below all neighbors in the (loss, index) order).
    #[test]
    fn feature_count_equals_local_minimum_count() {
        let mut rng = rng_for(3, 0x10ca);
        let n = 120;
        let k = 3;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let losses: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let sample = sample_1d(&xs, losses.clone());
        let dgm = sublevel_persistence_0d(&sample, k).unwrap();

        // rebuild the same symmetric knn graph independently
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let mut ds: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((xs[i] - xs[j]).abs(), j))
                .collect();
            ds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, j) in ds.iter().take(k) {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
        let mut minima = 0;
        for i in 0..n {
            neighbors[i].sort_unstable();
            neighbors[i].dedup();
            if neighbors[i]
                .iter()
                .all(|&j| (losses[j], j) > (losses[i], i))
            {
                minima += 1;
            }
        }
        assert_eq!(dgm.points.len(), minima);
    }

    #[test]
    fn invalid_k_rejected() {
        let sample = sample_1d(&[0.0, 1.0], vec![0.0, 1.0]);
        assert!(sublevel_persistence_0d(&sample, 0).is_err());
        assert!(sublevel_persistence_0d(&sample, 2).is_err());
    }
}
