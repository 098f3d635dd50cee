//! Vietoris-Rips persistence over Z/2 by boundary-matrix column reduction
//! with the clearing optimization (higher dimensions reduced first; pivot
//! rows of dimension d clear the corresponding (d-1)-columns).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::persistence::diagram::{FiltrationKind, PersistenceDiagram, PersistencePoint};

/// Rips persistence of a Euclidean point cloud up to homology dimension
/// `max_dim` (0 or 1). Edges longer than `max_edge` are excluded; features
/// still alive at the cap are truncated there and counted in the diagram's
/// `truncated` field. H0 classes are all born at 0 and exactly one class
/// (the oldest) is reported essential.
pub fn rips_persistence(
    points: &[Vec<f64>],
    max_dim: usize,
    max_edge: Option<f64>,
) -> Result<PersistenceDiagram> {
    if points.is_empty() {
        return Err(Error::InvalidInput("empty point cloud".into()));
    }
    if max_dim > 1 {
        return Err(Error::Unsupported(format!(
            "rips persistence supports max_dim <= 1, got {max_dim} (H2 and above are out of scope)"
        )));
    }
    let n = points.len();
    let dim_cols = points[0].len();
    if points.iter().any(|p| p.len() != dim_cols) {
        return Err(Error::ShapeMismatch("point cloud rows of unequal dimension".into()));
    }
    let cap = max_edge.unwrap_or(f64::INFINITY);
    if cap < 0.0 || cap.is_nan() {
        return Err(Error::InvalidConfig("max_edge must be non-negative".into()));
    }

    // pairwise distances
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let d_at = |i: usize, j: usize| dist[i * n + j];

    // simplices: (filtration value, dim, vertices)
    struct Simplex {
        filt: f64,
        dim: u8,
        verts: [u32; 3],
    }
    let mut simplices: Vec<Simplex> = Vec::new();
    for v in 0..n {
        simplices.push(Simplex { filt: 0.0, dim: 0, verts: [v as u32, 0, 0] });
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let d = d_at(i, j);
            if d <= cap {
                simplices.push(Simplex { filt: d, dim: 1, verts: [i as u32, j as u32, 0] });
            }
        }
    }
    if max_dim >= 1 {
        for i in 0..n {
            for j in (i + 1)..n {
                if d_at(i, j) > cap {
                    continue;
                }
                for k in (j + 1)..n {
                    let f = d_at(i, j).max(d_at(i, k)).max(d_at(j, k));
                    if f <= cap {
                        simplices.push(Simplex {
                            filt: f,
                            dim: 2,
                            verts: [i as u32, j as u32, k as u32],
                        });
                    }
                }
            }
        }
    }

    // filtration order: by value, then dimension, then lexicographic verts
    let mut order: Vec<u32> = (0..simplices.len() as u32).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&simplices[a as usize], &simplices[b as usize]);
        sa.filt
            .total_cmp(&sb.filt)
            .then(sa.dim.cmp(&sb.dim))
            .then(sa.verts.cmp(&sb.verts))
    });
    let m = order.len();
    let mut id_of_original = vec![0u32; m];
    for (id, &orig) in order.iter().enumerate() {
        id_of_original[orig as usize] = id as u32;
    }

    // per-id metadata and boundaries
    let mut filt = vec![0.0f64; m];
    let mut dim_of = vec![0u8; m];
    let mut edge_id: HashMap<(u32, u32), u32> = HashMap::new();
    for (id, &orig) in order.iter().enumerate() {
        let s = &simplices[orig as usize];
        filt[id] = s.filt;
        dim_of[id] = s.dim;
        if s.dim == 1 {
            edge_id.insert((s.verts[0], s.verts[1]), id as u32);
        }
    }
    let vertex_id = |v: u32| id_of_original[v as usize];
    let mut boundary: Vec<Vec<u32>> = vec![Vec::new(); m];
    for (id, &orig) in order.iter().enumerate() {
        let s = &simplices[orig as usize];
        match s.dim {
            0 => {}
            1 => {
                let mut b = vec![vertex_id(s.verts[0]), vertex_id(s.verts[1])];
                b.sort_unstable();
                boundary[id] = b;
            }
            _ => {
                let (a, bb, c) = (s.verts[0], s.verts[1], s.verts[2]);
                let mut b = vec![
                    edge_id[&(a, bb)],
                    edge_id[&(a, c)],
                    edge_id[&(bb, c)],
                ];
                b.sort_unstable();
                boundary[id] = b;
            }
        }
    }

    // reduction, top dimension first, with clearing
    let mut pivot_of_row: Vec<Option<u32>> = vec![None; m];
    let mut died = vec![false; m];
    let mut skip = vec![false; m];
    let mut reduced_to_zero = vec![false; m];
    let mut reduced: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut pairs: Vec<(u32, u32)> = Vec::new();

    let top_dim = if max_dim >= 1 { 2u8 } else { 1u8 };
    for d in (1..=top_dim).rev() {
        for j in 0..m as u32 {
            if dim_of[j as usize] != d || skip[j as usize] {
                continue;
            }
            let mut col = std::mem::take(&mut boundary[j as usize]);
            loop {
                let Some(&low) = col.last() else {
                    reduced_to_zero[j as usize] = true;
                    break;
                };
                match pivot_of_row[low as usize] {
                    None => {
                        pivot_of_row[low as usize] = Some(j);
                        died[low as usize] = true;
                        skip[low as usize] = true;
                        pairs.push((low, j));
                        break;
                    }
                    Some(k) => {
                        col = add_columns(&col, &reduced[k as usize]);
                    }
                }
            }
            reduced[j as usize] = col;
        }
    }

    let mut diagram_points = Vec::new();
    for &(row, col) in &pairs {
        let feature_dim = dim_of[row as usize] as usize;
        if feature_dim <= max_dim {
            diagram_points.push(PersistencePoint {
                birth: filt[row as usize],
                death: filt[col as usize],
                dimension: feature_dim,
            });
        }
    }

    // survivors: creators of dim <= max_dim that never died
    let mut truncated = 0usize;
    let mut essential_h0_taken = false;
    for id in 0..m {
        let d = dim_of[id] as usize;
        if d > max_dim || died[id] {
            continue;
        }
        let is_creator = d == 0 || reduced_to_zero[id];
        if !is_creator {
            continue;
        }
        if d == 0 && !essential_h0_taken {
            // the oldest class (ids ascend in filtration order, so the first
            // surviving vertex is the elder)
            essential_h0_taken = true;
            diagram_points.push(PersistencePoint {
                birth: filt[id],
                death: f64::INFINITY,
                dimension: 0,
            });
        } else if cap.is_finite() {
            truncated += 1;
            diagram_points.push(PersistencePoint { birth: filt[id], death: cap, dimension: d });
        } else {
            diagram_points.push(PersistencePoint {
                birth: filt[id],
                death: f64::INFINITY,
                dimension: d,
            });
        }
    }

    Ok(PersistenceDiagram::new(
        diagram_points,
        FiltrationKind::Rips { max_edge },
        truncated,
    ))
}

/// Symmetric difference of two sorted index lists (Z/2 column addition).
fn add_columns(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
