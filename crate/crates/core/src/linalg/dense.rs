//! Small dense symmetric matrices for the subspace pencils of the
//! measurement harness (dimensions of a few hundred at most).

use super::{LinalgError, SpdFactor, SpdFactorize, SymMatrix};

/// Dense symmetric matrix in full row-major storage.
#[derive(Debug, Clone)]
pub struct DenseSpd {
    n: usize,
    data: Vec<f64>,
}

impl DenseSpd {
    pub fn zeros(n: usize) -> Self {
        DenseSpd {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Set `A[i][j]` and `A[j][i]`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
        if i != j {
            self.data[j * self.n + i] += v;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

impl SymMatrix for DenseSpd {
    fn dim(&self) -> usize {
        self.n
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        y
    }
}

/// Dense lower-triangular Cholesky factor.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl SpdFactorize for DenseSpd {
    type Factor = DenseCholesky;

    fn factor(&self) -> Result<DenseCholesky, LinalgError> {
        let n = self.n;
        let mut l = self.data.clone();
        for i in 0..n {
            for j in 0..=i {
                let mut s = l[i * n + j];
                for m in 0..j {
                    s -= l[i * n + m] * l[j * n + m];
                }
                if j == i {
                    if s <= 0.0 {
                        return Err(LinalgError::NotPositiveDefinite { pivot: i });
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(DenseCholesky { n, l })
    }
}

impl SpdFactor for DenseCholesky {
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.l[i * n + j] * y[j];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.l[j * n + i] * y[j];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}
