//! Minimum-cost bipartite assignment (Hungarian method with potentials).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Optimal assignment of `min(n, m)` row/column pairs for an `n x m` cost
/// matrix. Pairs are returned sorted by row.
pub fn hungarian_assign(cost: &Tensor) -> Result<Vec<(usize, usize)>> {
    let (n, m) = match cost.shape() {
        &[n, m] => (n, m),
        s => {
            return Err(Error::InvalidShape {
                shape: s.to_vec(),
                reason: "cost matrix must be two-dimensional".into(),
            })
        }
    };
    let at = |r: usize, c: usize| cost.data()[r * m + c];

    let mut pairs = if n <= m {
        solve(n, m, at)
    } else {
        solve(m, n, |r, c| at(c, r))
            .into_iter()
            .map(|(r, c)| (c, r))
            .collect()
    };
    pairs.sort_unstable();
    Ok(pairs)
}

/// Sum of costs of the given pairs.
pub fn assignment_cost(cost: &Tensor, pairs: &[(usize, usize)]) -> f64 {
    let m = cost.shape()[1];
    pairs.iter().map(|&(r, c)| cost.data()[r * m + c]).sum()
}

// rows <= cols; 1-based arrays with a virtual column 0.
fn solve(rows: usize, cols: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];

    for row in 1..=rows {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for c in 1..=cols {
                if used[c] {
                    continue;
                }
                let reduced = cost(r0 - 1, c - 1) - u[r0] - v[c];
                if reduced < minv[c] {
                    minv[c] = reduced;
                    way[c] = col0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for c in 0..=cols {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }

    (1..=cols)
        .filter(|&c| owner[c] != 0)
        .map(|c| (owner[c] - 1, c - 1))
        .collect()
}
