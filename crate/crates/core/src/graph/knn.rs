use rayon::prelude::*;

use crate::error::{Error, Result};

/// Per-vertex neighbor lists: row `i` holds `k` ids sorted by ascending distance
/// to vertex `i`, ties by ascending id, never `i` itself.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborIndex {
    pub n: usize,
    pub k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
}

impl NeighborIndex {
    /// Builds a table from explicit rows, checking ids are in range, distinct and not self.
    pub fn from_rows(n: usize, k: usize, indices: Vec<usize>, distances: Vec<f64>) -> Result<Self> {
        if k == 0 || k >= n {
            return Err(Error::NeighborCount { k, n });
        }
        if indices.len() != n * k || distances.len() != n * k {
            return Err(Error::shape("NeighborIndex", format!("need {} entries", n * k)));
        }
        for (i, row) in indices.chunks_exact(k).enumerate() {
            for (r, &j) in row.iter().enumerate() {
                if j >= n || j == i || row[..r].contains(&j) {
                    return Err(Error::InvalidArgument(format!("row {i}: invalid neighbor {j}")));
                }
            }
        }
        Ok(NeighborIndex { n, k, indices, distances })
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn row_distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// `(vertex_id, rank, neighbor_id, distance)` rows; rank starts at 1.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (0..self.k).map(move |r| (i, r + 1, self.indices[i * self.k + r], self.distances[i * self.k + r]))
        })
    }
}

/// Squared Euclidean distance with features rounded to f32 and sums in f64.
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x as f32 - y as f32) as f64;
            d * d
        })
        .sum()
}

/// k nearest neighbors of every row of the row-major `[n, t]` block `features`.
pub fn knn_graph(features: &[f64], n: usize, t: usize, k: usize) -> Result<NeighborIndex> {
    if k == 0 || k >= n {
        return Err(Error::NeighborCount { k, n });
    }
    if features.len() != n * t {
        return Err(Error::shape("knn_graph", format!("{} values for {n} vertices of width {t}", features.len())));
    }
    let mut indices = vec![0usize; n * k];
    let mut distances = vec![0.0; n * k];
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let hi = &features[i * t..(i + 1) * t];
            let mut cand: Vec<(f64, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (sq_dist(hi, &features[j * t..(j + 1) * t]), j)).collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, cmp);
                cand.truncate(k);
            }
            cand.sort_unstable_by(cmp);
            cand.into_iter().map(|(d, j)| (j, d)).unzip()
        })
        .collect();
    for (i, (ids, ds)) in rows.into_iter().enumerate() {
        indices[i * k..(i + 1) * k].copy_from_slice(&ids);
        distances[i * k..(i + 1) * k].copy_from_slice(&ds);
    }
    Ok(NeighborIndex { n, k, indices, distances })
}
