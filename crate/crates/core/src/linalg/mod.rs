//! Symmetric positive definite linear algebra: banded Cholesky for 1D
//! systems, sparse skyline Cholesky with reverse-Cuthill-McKee ordering for
//! 2D systems, Jacobi-preconditioned conjugate gradients as a large-system
//! fallback, and extremal generalized eigenvalues by power iteration.
//!
//! The singular perturbation makes the assembled forms `eps^2 K + M_b`
//! symmetric positive definite for any `eps`, so direct factorizations are
//! robust to the `eps`-induced conditioning and are the default everywhere.

mod banded;
mod dense;
mod sparse;

pub use banded::BandedSpd;
pub use dense::DenseSpd;
pub use sparse::SparseSpd;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} failed)")]
    NotPositiveDefinite { pivot: usize },
    #[error("{method} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
}

/// A symmetric matrix that can produce `A x`.
pub trait SymMatrix {
    fn dim(&self) -> usize;
    fn matvec(&self, x: &[f64]) -> Vec<f64>;
}

/// A symmetric positive definite matrix with a Cholesky-type factorization.
pub trait SpdFactorize: SymMatrix {
    type Factor: SpdFactor;
    fn factor(&self) -> Result<Self::Factor, LinalgError>;
}

/// A computed factorization; immutable, so concurrent solves are safe.
pub trait SpdFactor {
    fn solve(&self, rhs: &[f64]) -> Vec<f64>;
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Factor `a` and solve `a x = rhs`, applying one step of iterative
/// refinement if the relative residual exceeds `1e-12`.
pub fn cholesky_solve<M: SpdFactorize>(a: &M, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if rhs.len() != a.dim() {
        return Err(LinalgError::DimensionMismatch {
            context: format!("matrix dim {} vs rhs len {}", a.dim(), rhs.len()),
        });
    }
    let factor = a.factor()?;
    let mut x = factor.solve(rhs);
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return Ok(x);
    }
    for _ in 0..2 {
        let ax = a.matvec(&x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
        if norm2(&r) / bnorm <= 1e-12 {
            break;
        }
        let dx = factor.solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
    }
    Ok(x)
}

/// Jacobi-preconditioned conjugate gradients with relative residual `tol`.
///
/// Fails with [`LinalgError::NonConvergence`] after `20 n` iterations.
pub fn pcg_solve(a: &SparseSpd, rhs: &[f64], tol: f64) -> Result<Vec<f64>, LinalgError> {
    let n = a.dim();
    if rhs.len() != n {
        return Err(LinalgError::DimensionMismatch {
            context: format!("matrix dim {} vs rhs len {}", n, rhs.len()),
        });
    }
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| 1.0 / d).collect();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = 20 * n;
    for _ in 0..max_iter {
        if norm2(&r) / bnorm <= tol {
            return Ok(x);
        }
        let ap = a.matvec(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let residual = norm2(&r) / bnorm;
    if residual <= tol {
        Ok(x)
    } else {
        Err(LinalgError::NonConvergence {
            method: "pcg",
            iterations: max_iter,
            residual,
        })
    }
}

/// Largest generalized eigenvalue `mu` with `K z = mu M z`, by power
/// iteration on `M^{-1} K` with `M` Cholesky-factored.
///
/// `K` may be positive semidefinite (stiffness matrices annihilate
/// constants); `M` must be definite. Iteration stops when the relative
/// change of the Rayleigh quotient drops below `tol`, and fails after 1e5
/// iterations. Returns the eigenvalue and the final iterate.
pub fn max_gen_eig(
    k: &DenseSpd,
    m: &DenseSpd,
    tol: f64,
) -> Result<(f64, Vec<f64>), LinalgError> {
    assert!(tol > 0.0 && tol <= 1e-3, "tol must lie in (0, 1e-3]");
    let n = k.dim();
    if m.dim() != n {
        return Err(LinalgError::DimensionMismatch {
            context: format!("K dim {} vs M dim {}", n, m.dim()),
        });
    }
    let m_factor = m.factor()?;
    // deterministic start with components in every direction
    let mut z: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) / (n as f64 + 1.0)).collect();
    let scale = norm2(&z);
    z.iter_mut().for_each(|v| *v /= scale);
    let mut mu_old = f64::NAN;
    let max_iter = 100_000;
    for it in 0..max_iter {
        let kz = k.matvec(&z);
        if norm2(&kz) == 0.0 {
            return Ok((0.0, z)); // K annihilates the iterate: sup ratio is 0
        }
        let w = m_factor.solve(&kz);
        let wnorm = norm2(&w);
        let z_next: Vec<f64> = w.iter().map(|v| v / wnorm).collect();
        let kzz = dot(&z_next, &k.matvec(&z_next));
        let mzz = dot(&z_next, &m.matvec(&z_next));
        let mu = kzz / mzz;
        z = z_next;
        if it > 0 && (mu - mu_old).abs() <= tol * mu.abs().max(f64::MIN_POSITIVE) {
            return Ok((mu, z));
        }
        mu_old = mu;
    }
    Err(LinalgError::NonConvergence {
        method: "power iteration",
        iterations: max_iter,
        residual: f64::NAN,
    })
}
