//! Symmetric banded storage and banded Cholesky factorization.

use super::{LinalgError, SpdFactor, SpdFactorize, SymMatrix};

/// Symmetric matrix stored by its lower band: row `i` holds the entries
/// `A[i][j]` for `j` in `[i - k, i]`. Hierarchically ordered 1D hp systems
/// have bandwidth `k <= p + 1`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn new(n: usize, bandwidth: usize) -> Self {
        BandedSpd {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + (j + self.bandwidth - i)
    }

    /// Add `v` to `A[i][j]`. Only the lower triangle is stored; symmetric
    /// counterparts are implied.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(r - c <= self.bandwidth, "entry ({i},{j}) outside band");
        let s = self.slot(r, c);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bandwidth {
            0.0
        } else {
            self.data[self.slot(r, c)]
        }
    }
}

impl SymMatrix for BandedSpd {
    fn dim(&self) -> usize {
        self.n
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            for j in lo..=i {
                let v = self.data[self.slot(i, j)];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }
}

/// Lower-triangular banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * (self.bandwidth + 1) + (j + self.bandwidth - i)
    }
}

impl SpdFactorize for BandedSpd {
    type Factor = BandedCholesky;

    fn factor(&self) -> Result<BandedCholesky, LinalgError> {
        let mut l = BandedCholesky {
            n: self.n,
            bandwidth: self.bandwidth,
            data: self.data.clone(),
        };
        let k = self.bandwidth;
        for i in 0..self.n {
            let lo = i.saturating_sub(k);
            for j in lo..=i {
                let mut s = l.data[l.slot(i, j)];
                let m0 = lo.max(j.saturating_sub(k));
                for m in m0..j {
                    s -= l.data[l.slot(i, m)] * l.data[l.slot(j, m)];
                }
                if j == i {
                    if s <= 0.0 {
                        return Err(LinalgError::NotPositiveDefinite { pivot: i });
                    }
                    let slot = l.slot(i, i);
                    l.data[slot] = s.sqrt();
                } else {
                    let piv = l.data[l.slot(j, j)];
                    let slot = l.slot(i, j);
                    l.data[slot] = s / piv;
                }
            }
        }
        Ok(l)
    }
}

impl SpdFactor for BandedCholesky {
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let k = self.bandwidth;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(k);
            let mut s = y[i];
            for j in lo..i {
                s -= self.data[self.slot(i, j)] * y[j];
            }
            y[i] = s / self.data[self.slot(i, i)];
        }
        for i in (0..n).rev() {
            let hi = (i + k).min(n - 1);
            let mut s = y[i];
            for j in i + 1..=hi {
                s -= self.data[self.slot(j, i)] * y[j];
            }
            y[i] = s / self.data[self.slot(i, i)];
        }
        y
    }
}
