use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Largest instance accepted by [`discrete_ot_oracle`].
pub const MAX_ORACLE_SIZE: usize = 512;

/// Minimum-cost perfect matching on a square `n × n` cost matrix.
///
/// Returns `p` with row `i` matched to column `p[i]`. Shortest augmenting
/// paths with dual potentials, `O(n³)`.
pub fn solve_assignment(cost: &Tensor) -> Result<Vec<usize>> {
    let n = cost.rows();
    if cost.cols() != n {
        return Err(Error::Shape(format!(
            "cost matrix must be square, got {:?}",
            cost.shape()
        )));
    }
    if !cost.is_finite() {
        return Err(Error::Shape("cost matrix has non-finite entries".into()));
    }
    // 1-based internally; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut p = vec![0; n];
    for j in 1..=n {
        p[owner[j] - 1] = j - 1;
    }
    Ok(p)
}

/// Pairwise squared distances, `n × m`.
pub fn squared_distances(x: &Tensor, y: &Tensor) -> Tensor {
    let mut c = Tensor::zeros(x.rows(), y.rows());
    for i in 0..x.rows() {
        let xi = x.row_slice(i);
        for j in 0..y.rows() {
            let d: f64 = xi.iter().zip(y.row_slice(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            c.set(i, j, d);
        }
    }
    c
}

/// Mean squared distance of the pairing `x[i] ↔ y[perm[i]]`.
pub fn matching_cost(x: &Tensor, y: &Tensor, perm: &[usize]) -> f64 {
    let total: f64 = perm
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            x.row_slice(i)
                .iter()
                .zip(y.row_slice(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    total / perm.len() as f64
}

/// Exact optimal transport between two uniform clouds of equal size.
///
/// Returns the optimal permutation and its mean squared cost, which is the
/// empirical `W₂²`.
pub fn discrete_ot_oracle(x: &Tensor, y: &Tensor) -> Result<(Vec<usize>, f64)> {
    if x.shape() != y.shape() {
        return Err(Error::Shape(format!(
            "point clouds must match in size, got {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    if x.rows() == 0 || x.rows() > MAX_ORACLE_SIZE {
        return Err(Error::Shape(format!(
            "oracle handles 1..={MAX_ORACLE_SIZE} points, got {}",
            x.rows()
        )));
    }
    let perm = solve_assignment(&squared_distances(x, y))?;
    let cost = matching_cost(x, y, &perm);
    Ok((perm, cost))
}
