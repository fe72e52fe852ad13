//! Sparse symmetric storage (lower-triangle CSR), reverse-Cuthill-McKee
//! ordering, and a skyline (variable-band) Cholesky factorization.

use super::{LinalgError, SpdFactor, SpdFactorize, SymMatrix};

/// Symmetric matrix stored as compressed sparse rows of the lower triangle
/// (diagonal included). Column indices are sorted within each row and no
/// explicit zeros are stored.
#[derive(Debug, Clone)]
pub struct SparseSpd {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSpd {
    /// Build from `(i, j, v)` triplets. Entries with `i < j` are mirrored
    /// into the lower triangle; duplicates accumulate; exact zeros are
    /// dropped after accumulation.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            assert!(r < n, "row {r} out of bounds");
            per_row[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in per_row.iter_mut() {
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseSpd {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Diagonal entries (zero where structurally absent).
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] = self.values[k];
                }
            }
        }
        d
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if j != i {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        adj
    }
}

impl SymMatrix for SparseSpd {
    fn dim(&self) -> usize {
        self.n
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let v = self.values[k];
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }
}

/// Reverse-Cuthill-McKee ordering: `perm[new] = old`. Starts each connected
/// component from a pseudo-peripheral vertex found by repeated BFS.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, visited: &[bool]| -> Vec<usize> {
        let mut level = vec![usize::MAX; n];
        level[start] = 0;
        let mut queue = std::collections::VecDeque::from([start]);
        let mut last = start;
        while let Some(u) = queue.pop_front() {
            last = u;
            for &v in &adj[u] {
                if !visited[v] && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        vec![last]
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start: follow the BFS to its farthest vertex twice
        let mut start = seed;
        for _ in 0..2 {
            start = bfs_levels(start, &visited)[0];
        }
        let mut queue = std::collections::VecDeque::from([start]);
        visited[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            nbrs.sort_by_key(|&v| (degree[v], v));
            for v in nbrs {
                if !visited[v] {
                    visited[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Skyline Cholesky factor of an RCM-permuted matrix. Fill stays inside the
/// row profiles, which RCM keeps narrow for mesh-derived systems.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    data: Vec<f64>,
}

impl SpdFactorize for SparseSpd {
    type Factor = SkylineCholesky;

    fn factor(&self) -> Result<SkylineCholesky, LinalgError> {
        let n = self.n;
        let adj = self.adjacency();
        let perm = reverse_cuthill_mckee(&adj);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        // profile of the permuted matrix
        let mut first: Vec<usize> = (0..n).collect();
        for old_i in 0..n {
            for k in self.row_ptr[old_i]..self.row_ptr[old_i + 1] {
                let old_j = self.col_idx[k];
                let (a, b) = (inv[old_i], inv[old_j]);
                let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
                if lo < first[hi] {
                    first[hi] = lo;
                }
            }
        }
        let mut row_start = vec![0usize; n + 1];
        for i in 0..n {
            row_start[i + 1] = row_start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; row_start[n]];
        for old_i in 0..n {
            for k in self.row_ptr[old_i]..self.row_ptr[old_i + 1] {
                let old_j = self.col_idx[k];
                let (a, b) = (inv[old_i], inv[old_j]);
                let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
                data[row_start[hi] + (lo - first[hi])] += self.values[k];
            }
        }

        // profile Cholesky, in place
        for i in 0..n {
            for j in first[i]..=i {
                let mut s = data[row_start[i] + (j - first[i])];
                let m0 = first[i].max(first[j]);
                for m in m0..j {
                    s -= data[row_start[i] + (m - first[i])] * data[row_start[j] + (m - first[j])];
                }
                if j == i {
                    if s <= 0.0 {
                        return Err(LinalgError::NotPositiveDefinite { pivot: perm[i] });
                    }
                    data[row_start[i] + (i - first[i])] = s.sqrt();
                } else {
                    data[row_start[i] + (j - first[i])] = s / data[row_start[j] + (j - first[j])];
                }
            }
        }

        Ok(SkylineCholesky {
            n,
            perm,
            first,
            row_start,
            data,
        })
    }
}

impl SpdFactor for SkylineCholesky {
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = rhs[self.perm[i]];
        }
        for i in 0..n {
            let mut s = y[i];
            for j in self.first[i]..i {
                s -= self.data[self.row_start[i] + (j - self.first[i])] * y[j];
            }
            y[i] = s / self.data[self.row_start[i] + (i - self.first[i])];
        }
        for i in (0..n).rev() {
            let s = y[i] / self.data[self.row_start[i] + (i - self.first[i])];
            y[i] = s;
            for j in self.first[i]..i {
                y[j] -= self.data[self.row_start[i] + (j - self.first[i])] * s;
            }
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky_solve;
    use rand::{Rng, SeedableRng};

    #[test]
    fn rcm_visits_everything_once() {
        let adj = vec![vec![1], vec![0, 2], vec![1], vec![4], vec![3]];
        let mut order = reverse_cuthill_mckee(&adj);
        order.sort_unstable();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn skyline_solves_grid_laplacian() {
        // 12x12 five-point grid plus identity: SPD with 2D-mesh structure
        let m = 12;
        let n = m * m;
        let id = |i: usize, j: usize| i * m + j;
        let mut trip = Vec::new();
        for i in 0..m {
            for j in 0..m {
                trip.push((id(i, j), id(i, j), 5.0));
                if i + 1 < m {
                    trip.push((id(i + 1, j), id(i, j), -1.0));
                }
                if j + 1 < m {
                    trip.push((id(i, j + 1), id(i, j), -1.0));
                }
            }
        }
        let a = SparseSpd::from_triplets(n, &trip);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rhs = a.matvec(&x_true);
        let x = cholesky_solve(&a, &rhs).unwrap();
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-9, "mismatch at {i}");
        }
    }

    #[test]
    fn duplicate_triplets_accumulate() {
        let a = SparseSpd::from_triplets(2, &[(0, 0, 1.0), (0, 0, 1.0), (1, 1, 2.0), (1, 0, 0.0)]);
        assert_eq!(a.nnz(), 2); // the zero entry is dropped
        assert_eq!(a.diagonal(), vec![2.0, 2.0]);
    }
}
