//! hp finite elements on spectral boundary layer meshes for singularly
//! perturbed reaction-diffusion problems
//!
//! The library solves `-eps^2 u'' + b u = f` on the unit interval and
//! `-eps^2 Δu + b u = f` on smooth 2D domains with homogeneous Dirichlet
//! conditions, using piecewise polynomials of degree `p` on minimal
//! layer-adapted meshes (needle elements of width `lambda * p * eps` next to
//! the boundary). Errors are measured in the energy, balanced and maximum
//! norms, and a measurement harness estimates the constants of the inverse
//! estimates, the strengthened Cauchy-Schwarz inequality between coarse and
//! layer subspaces, and the stability of the reduced `b`-weighted L2
//! projection.
//!
//! Modules:
//! - [`poly_quad`]: Legendre polynomials, Gauss/Gauss-Lobatto rules,
//!   hierarchical shape functions, Gauss-Lobatto interpolation.
//! - [`expr`]: a small expression language for coefficient functions.
//! - [`linalg`]: banded/skyline Cholesky, PCG, and extremal generalized
//!   eigenvalues by power iteration.
//! - [`fem1d`], [`analysis1d`]: 1D discretization and measurement harness.
//! - [`geom2d`], [`fem2d`]: curvilinear quad meshes with needle splitting,
//!   2D discretization and the 2D measurement harness.
//!
//! Data-parallel inner loops (element assembly, norm quadrature, parameter
//! sweeps) run on rayon when the default `parallel` feature is enabled and
//! fall back to plain sequential iteration without it; see [`par`].

pub mod analysis1d;
pub mod expr;
pub mod fem1d;
pub mod fem2d;
pub mod geom2d;
pub mod linalg;
pub mod par;
pub mod poly_quad;
pub mod stats;
