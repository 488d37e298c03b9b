//! Minimum-cost assignment for rectangular cost matrices.

/// Minimum-cost assignment of an `m x n` row-major cost matrix.
///
/// Returns `min(m, n)` pairs `(row, col)` sorted by row. The matrix is padded to
/// square with a constant sentinel above every real cost, which does not change
/// the optimum over real pairs because the number of padded pairs is fixed.
pub fn hungarian(cost: &[f64], m: usize, n: usize) -> Vec<(usize, usize)> {
    assert_eq!(cost.len(), m * n, "cost matrix has {} entries for {m} x {n}", cost.len());
    assert!(cost.iter().all(|c| c.is_finite()), "costs must be finite");
    if m == 0 || n == 0 {
        return Vec::new();
    }
    let size = m.max(n);
    let sentinel = 1.0 + cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let at = |i: usize, j: usize| if i < m && j < n { cost[i * n + j] } else { sentinel };

    // Shortest augmenting path with row/column potentials (1-based, column 0 is a virtual root).
    let inf = f64::INFINITY;
    let mut u = vec![0.0; size + 1];
    let mut v = vec![0.0; size + 1];
    let mut row_of = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for i in 1..=size {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=size {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> =
        (1..=size).map(|j| (row_of[j] - 1, j - 1)).filter(|&(i, j)| i < m && j < n).collect();
    pairs.sort_unstable();
    pairs
}

pub fn assignment_cost(cost: &[f64], n: usize, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| cost[i * n + j]).sum()
}
