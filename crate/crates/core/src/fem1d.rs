//! 1D hp-FEM for `-eps^2 u'' + b u = f` on `(0, 1)` with homogeneous
//! Dirichlet conditions, discretized on spectral boundary layer meshes.
//!
//! The boundary layer mesh places needle elements of width
//! `lambda * p * eps` next to both endpoints whenever that width is below
//! `1/4`, and otherwise consists of the single element `(0, 1)`. On the
//! three-element mesh the Dirichlet space has dimension `2 + 3 (p - 1)`,
//! which is what makes the method "minimal": accuracy comes from raising
//! `p`, not from refining.

use crate::expr::{self, Expr, ExprError};
use crate::linalg::{cholesky_solve, BandedSpd, LinalgError, SymMatrix};
use crate::poly_quad::{gauss_rule, gl_interpolate, shape_coeffs_from_legendre, ShapeSet};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Fem1dError {
    #[error("epsilon {0} outside (0, 1]")]
    InvalidEpsilon(f64),
    #[error("coefficient b is not positive: sampled minimum {min}")]
    NonPositiveCoefficient { min: f64 },
    #[error("expression evaluation failed{}: {source}", element_context(.element))]
    Eval {
        element: Option<usize>,
        source: ExprError,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("algebraic residual {residual:e} exceeds tolerance")]
    ResidualTooLarge { residual: f64 },
    #[error("operation requires the three-element boundary layer regime")]
    AsymptoticRegime,
}

fn element_context(element: &Option<usize>) -> String {
    match element {
        Some(j) => format!(" in element {j}"),
        None => String::new(),
    }
}

impl From<ExprError> for Fem1dError {
    fn from(source: ExprError) -> Self {
        Fem1dError::Eval {
            element: None,
            source,
        }
    }
}

// ------------------------------------------------------------------ meshes

/// A partition `0 = x_0 < x_1 < ... < x_N = 1` of the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1d {
    nodes: Vec<f64>,
}

impl Mesh1d {
    pub fn new(nodes: Vec<f64>) -> Self {
        assert!(nodes.len() >= 2, "mesh needs at least one element");
        assert_eq!(nodes[0], 0.0, "mesh must start at 0");
        assert_eq!(*nodes.last().unwrap(), 1.0, "mesh must end at 1");
        for w in nodes.windows(2) {
            assert!(w[0] < w[1], "mesh nodes must be strictly increasing");
        }
        Mesh1d { nodes }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn num_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Endpoints `(x_{j-1}, x_j)` of element `j` (0-based).
    pub fn element(&self, j: usize) -> (f64, f64) {
        (self.nodes[j], self.nodes[j + 1])
    }

    /// Element containing `x`; interior mesh nodes resolve to the left
    /// element.
    pub fn locate(&self, x: f64) -> usize {
        let idx = self.nodes.partition_point(|&n| n < x);
        idx.saturating_sub(1).min(self.num_elements() - 1)
    }

    /// Affine map from the reference interval `[-1, 1]` onto element `j`.
    pub fn to_physical(&self, j: usize, t: f64) -> f64 {
        let (x0, x1) = self.element(j);
        0.5 * (1.0 - t) * x0 + 0.5 * (1.0 + t) * x1
    }

    /// Union of the node sets of two meshes (nodes closer than `1e-14` are
    /// identified). Error quadrature between solutions on different meshes
    /// runs on this merged partition, where their difference is piecewise
    /// smooth.
    pub fn merge(&self, other: &Mesh1d) -> Mesh1d {
        let mut nodes: Vec<f64> = self
            .nodes
            .iter()
            .chain(other.nodes.iter())
            .copied()
            .collect();
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        if *nodes.last().unwrap() != 1.0 {
            *nodes.last_mut().unwrap() = 1.0;
        }
        Mesh1d::new(nodes)
    }

    /// Every element split at its midpoint.
    pub fn bisect(&self) -> Mesh1d {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(1.0);
        Mesh1d::new(nodes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshRegime {
    /// Needle elements of width `lambda * p * eps` at both endpoints.
    ThreeElement,
    /// `lambda * p * eps >= 1/4`: the single element `(0, 1)` suffices.
    Asymptotic,
}

/// Spectral boundary layer mesh together with the parameters that built it.
#[derive(Debug, Clone)]
pub struct SblMesh1d {
    pub lambda: f64,
    pub degree: usize,
    pub epsilon: f64,
    pub regime: MeshRegime,
    pub mesh: Mesh1d,
}

impl SblMesh1d {
    /// Needle width `lambda * p * eps`.
    pub fn layer_width(&self) -> f64 {
        self.lambda * self.degree as f64 * self.epsilon
    }
}

/// Build the spectral boundary layer mesh for `(lambda, p, eps)`.
///
/// The regime test is `lambda * p * eps < 1/4`; equality goes to the
/// asymptotic branch.
pub fn sbl_mesh(lambda: f64, degree: usize, epsilon: f64) -> SblMesh1d {
    assert!(lambda > 0.0, "lambda must be positive");
    assert!(degree >= 1, "degree must be >= 1");
    assert!(
        epsilon > 0.0 && epsilon <= 1.0,
        "epsilon must lie in (0, 1]"
    );
    let width = lambda * degree as f64 * epsilon;
    if width < 0.25 {
        SblMesh1d {
            lambda,
            degree,
            epsilon,
            regime: MeshRegime::ThreeElement,
            mesh: Mesh1d::new(vec![0.0, width, 1.0 - width, 1.0]),
        }
    } else {
        SblMesh1d {
            lambda,
            degree,
            epsilon,
            regime: MeshRegime::Asymptotic,
            mesh: Mesh1d::new(vec![0.0, 1.0]),
        }
    }
}

// ------------------------------------------------------------------ spaces

/// Piecewise polynomial space of uniform degree `p` with shared vertex
/// degrees of freedom (H1-conforming) and a Dirichlet mask at the endpoints.
///
/// Global numbering interleaves vertices and element-internal functions so
/// that assembled matrices are banded with bandwidth `p`: vertex `i` sits at
/// `i * p` and the internals of element `j` at `j * p + 1 ..= j * p + p - 1`.
#[derive(Debug, Clone)]
pub struct Space1d {
    mesh: Mesh1d,
    degree: usize,
}

impl Space1d {
    pub fn new(mesh: Mesh1d, degree: usize) -> Self {
        assert!(degree >= 1);
        Space1d { mesh, degree }
    }

    pub fn mesh(&self) -> &Mesh1d {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Dimension including boundary vertices: `N p + 1`.
    pub fn dim(&self) -> usize {
        self.mesh.num_elements() * self.degree + 1
    }

    /// Dimension of the Dirichlet subspace: `N p - 1`.
    pub fn interior_dim(&self) -> usize {
        self.dim() - 2
    }

    /// Global DOF ids of element `j` in the local order
    /// `[left vertex, right vertex, internal 2, ..., internal p]`.
    pub fn element_dofs(&self, j: usize) -> Vec<usize> {
        let p = self.degree;
        let base = j * p;
        let mut dofs = Vec::with_capacity(p + 1);
        dofs.push(base);
        dofs.push(base + p);
        for k in 1..p {
            dofs.push(base + k);
        }
        dofs
    }

    /// Interior (non-Dirichlet) index for a global DOF.
    pub fn interior_index(&self, global: usize) -> Option<usize> {
        if global == 0 || global == self.dim() - 1 {
            None
        } else {
            Some(global - 1)
        }
    }
}

// ---------------------------------------------------------------- problems

/// Exact solution with derivative, for error evaluation against closed
/// forms.
#[derive(Clone)]
pub struct Exact1d {
    pub u: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub du: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for Exact1d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Exact1d{..}")
    }
}

/// Problem data for `-eps^2 u'' + b u = f`, `u(0) = u(1) = 0`.
#[derive(Debug, Clone)]
pub struct Problem1d {
    pub epsilon: f64,
    pub b: Expr,
    pub f: Expr,
    pub exact: Option<Exact1d>,
}

impl Problem1d {
    /// Validates `eps` and samples `b` for positivity (1e4 midpoints).
    pub fn new(epsilon: f64, b: Expr, f: Expr) -> Result<Self, Fem1dError> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Fem1dError::InvalidEpsilon(epsilon));
        }
        let min = expr::check_positivity(&b, &expr::unit_interval_samples(10_000))?;
        if min <= 0.0 {
            return Err(Fem1dError::NonPositiveCoefficient { min });
        }
        Ok(Problem1d {
            epsilon,
            b,
            f,
            exact: None,
        })
    }

    pub fn with_exact(
        mut self,
        u: impl Fn(f64) -> f64 + Send + Sync + 'static,
        du: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.exact = Some(Exact1d {
            u: Arc::new(u),
            du: Arc::new(du),
        });
        self
    }
}

/// Closed-form solution of `-eps^2 u'' + u = 1` with zero boundary values,
/// in the overflow-safe form `1 - (e^{-x/eps} + e^{-(1-x)/eps}) / (1 + e^{-1/eps})`.
pub fn constant_coefficient_exact(eps: f64) -> Exact1d {
    let denom = 1.0 + (-1.0 / eps).exp();
    Exact1d {
        u: Arc::new(move |x: f64| {
            1.0 - ((-x / eps).exp() + (-(1.0 - x) / eps).exp()) / denom
        }),
        du: Arc::new(move |x: f64| {
            ((-x / eps).exp() - (-(1.0 - x) / eps).exp()) / (eps * denom)
        }),
    }
}

// ---------------------------------------------------------------- assembly

/// Number of Gauss points used per element for assembly: exact for the
/// polynomial parts of the mapped forms, with 4 extra points to absorb the
/// analytic coefficients `b` and `f`.
pub fn assembly_points(degree: usize) -> usize {
    degree + 4
}

/// Galerkin matrix of the bilinear form on the interior DOFs and the load
/// vector. The matrix is banded with bandwidth `p`.
pub fn assemble(space: &Space1d, prob: &Problem1d) -> Result<(BandedSpd, Vec<f64>), Fem1dError> {
    assemble_form(space, prob.epsilon, &prob.b, &prob.f)
}

/// Assembly with explicit `eps` (the measurement harness reuses this with
/// `eps = 0` to build the reduced, mass-only form).
pub fn assemble_form(
    space: &Space1d,
    epsilon: f64,
    b: &Expr,
    f: &Expr,
) -> Result<(BandedSpd, Vec<f64>), Fem1dError> {
    let p = space.degree();
    let n_int = space.interior_dim();
    let mut a = BandedSpd::new(n_int, p);
    let mut rhs = vec![0.0; n_int];
    let rule = gauss_rule(assembly_points(p));
    let shapes = ShapeSet::new(p);
    let shape_table: Vec<(Vec<f64>, Vec<f64>)> =
        rule.nodes.iter().map(|&t| shapes.eval(t)).collect();

    for j in 0..space.mesh().num_elements() {
        let (x0, x1) = space.mesh().element(j);
        let h = x1 - x0;
        let dofs = space.element_dofs(j);
        let nloc = dofs.len();
        let mut local = vec![0.0; nloc * nloc];
        let mut local_rhs = vec![0.0; nloc];
        for (q, &t) in rule.nodes.iter().enumerate() {
            let w = rule.weights[q];
            let x = space.mesh().to_physical(j, t);
            let bv = b.eval(x, None).map_err(|source| Fem1dError::Eval {
                element: Some(j),
                source,
            })?;
            let fv = f.eval(x, None).map_err(|source| Fem1dError::Eval {
                element: Some(j),
                source,
            })?;
            let (vals, ders) = &shape_table[q];
            let mass_w = w * 0.5 * h * bv;
            let stiff_w = w * 2.0 / h * epsilon * epsilon;
            let load_w = w * 0.5 * h * fv;
            for r in 0..nloc {
                local_rhs[r] += load_w * vals[r];
                for c in 0..=r {
                    local[r * nloc + c] +=
                        mass_w * vals[r] * vals[c] + stiff_w * ders[r] * ders[c];
                }
            }
        }
        for r in 0..nloc {
            let Some(gr) = space.interior_index(dofs[r]) else {
                continue;
            };
            rhs[gr] += local_rhs[r];
            for c in 0..nloc {
                let Some(gc) = space.interior_index(dofs[c]) else {
                    continue;
                };
                if gc <= gr {
                    let (lr, lc) = if r >= c { (r, c) } else { (c, r) };
                    a.add(gr, gc, local[lr * nloc + lc]);
                }
            }
        }
    }
    Ok((a, rhs))
}

/// Solve the Galerkin problem. The returned coefficients include the
/// (zeroed) boundary DOFs. Fails if the algebraic residual exceeds
/// `1e-10 * ||rhs||_inf`.
pub fn solve(space: &Space1d, prob: &Problem1d) -> Result<FemSolution1d, Fem1dError> {
    let (a, rhs) = assemble(space, prob)?;
    let x = if space.interior_dim() == 0 {
        Vec::new()
    } else {
        cholesky_solve(&a, &rhs)?
    };
    let rhs_scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if rhs_scale > 0.0 {
        let ax = a.matvec(&x);
        let resid = rhs
            .iter()
            .zip(&ax)
            .fold(0.0f64, |m, (b, v)| m.max((b - v).abs()));
        if resid > 1e-10 * rhs_scale {
            return Err(Fem1dError::ResidualTooLarge {
                residual: resid / rhs_scale,
            });
        }
    }
    let mut coeffs = vec![0.0; space.dim()];
    for g in 0..space.dim() {
        if let Some(i) = space.interior_index(g) {
            coeffs[g] = x[i];
        }
    }
    Ok(FemSolution1d {
        space: space.clone(),
        coeffs,
    })
}

// --------------------------------------------------------------- solutions

/// A function in a [`Space1d`], stored as the full coefficient vector
/// (boundary DOFs included).
#[derive(Debug, Clone)]
pub struct FemSolution1d {
    space: Space1d,
    coeffs: Vec<f64>,
}

impl FemSolution1d {
    pub fn new(space: Space1d, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.dim());
        FemSolution1d { space, coeffs }
    }

    pub fn space(&self) -> &Space1d {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Zero function in the given space.
    pub fn zero(space: Space1d) -> Self {
        let coeffs = vec![0.0; space.dim()];
        FemSolution1d { space, coeffs }
    }

    /// `(value, derivative)` at `x`; interior mesh nodes evaluate on the
    /// left element.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let j = self.space.mesh().locate(x);
        self.eval_on_element(j, x)
    }

    /// Evaluation pinned to element `j` (used to probe one-sided limits).
    pub fn eval_on_element(&self, j: usize, x: f64) -> (f64, f64) {
        let (x0, x1) = self.space.mesh().element(j);
        let h = x1 - x0;
        // this form is exact at both element endpoints under roundoff
        let t = (2.0 * (x - x0) / h - 1.0).clamp(-1.0, 1.0);
        let shapes = ShapeSet::new(self.space.degree());
        let (vals, ders) = shapes.eval(t);
        let dofs = self.space.element_dofs(j);
        let mut v = 0.0;
        let mut d = 0.0;
        for (loc, &g) in dofs.iter().enumerate() {
            v += self.coeffs[g] * vals[loc];
            d += self.coeffs[g] * ders[loc];
        }
        (v, d * 2.0 / h)
    }

    /// L2 norm over `(0, 1)` by composite Gauss quadrature.
    pub fn l2_norm(&self, points: usize) -> f64 {
        let rule = gauss_rule(points);
        let mut acc = 0.0;
        for j in 0..self.space.mesh().num_elements() {
            let (x0, x1) = self.space.mesh().element(j);
            let h = x1 - x0;
            for (q, &t) in rule.nodes.iter().enumerate() {
                let x = self.space.mesh().to_physical(j, t);
                let (v, _) = self.eval_on_element(j, x);
                acc += rule.weights[q] * 0.5 * h * v * v;
            }
        }
        acc.sqrt()
    }
}

/// Elementwise Gauss-Lobatto interpolation of `f` into the space. Exact on
/// piecewise polynomials of degree `<= p` over the same mesh; continuous
/// inputs produce conforming outputs because the interpolant matches `f` at
/// the element endpoints.
pub fn interpolate_into_space(space: &Space1d, f: impl Fn(f64) -> f64) -> FemSolution1d {
    let p = space.degree();
    let mut coeffs = vec![0.0; space.dim()];
    for j in 0..space.mesh().num_elements() {
        let series = gl_interpolate(|t| f(space.mesh().to_physical(j, t)), p);
        let local = shape_coeffs_from_legendre(&series, p);
        for (loc, &g) in space.element_dofs(j).iter().enumerate() {
            coeffs[g] = local[loc];
        }
    }
    FemSolution1d {
        space: space.clone(),
        coeffs,
    }
}

// -------------------------------------------------------------------- norms

/// The five error measures reported by the experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub energy: f64,
    pub balanced: f64,
    pub max: f64,
}

/// Norms of an evaluable difference over a mesh.
///
/// `diff` returns `(value, derivative)`. Quadrature is composite Gauss with
/// `points` nodes per element, optionally subdivided into `panels` equal
/// panels per element when the integrand varies below the element scale.
/// The maximum norm is sampled at 1001 uniform points plus all quadrature
/// points.
pub fn norms(
    diff: &dyn Fn(f64) -> (f64, f64),
    mesh: &Mesh1d,
    epsilon: f64,
    b: &Expr,
    points: usize,
    panels: usize,
) -> Result<Norms, Fem1dError> {
    let rule = gauss_rule(points);
    let panels = panels.max(1);
    let mut l2_sq = 0.0;
    let mut h1_sq = 0.0;
    let mut weighted_sq = 0.0;
    let mut max = 0.0f64;
    for j in 0..mesh.num_elements() {
        let (x0, x1) = mesh.element(j);
        let dx = (x1 - x0) / panels as f64;
        for panel in 0..panels {
            let a = x0 + panel as f64 * dx;
            let (xs, ws) = rule.mapped_to(a, a + dx);
            for (x, w) in xs.iter().zip(&ws) {
                let (v, d) = diff(*x);
                let bv = b.eval(*x, None).map_err(|source| Fem1dError::Eval {
                    element: Some(j),
                    source,
                })?;
                l2_sq += w * v * v;
                h1_sq += w * d * d;
                weighted_sq += w * bv * v * v;
                max = max.max(v.abs());
            }
        }
    }
    for i in 0..=1000 {
        let x = i as f64 / 1000.0;
        max = max.max(diff(x).0.abs());
    }
    Ok(Norms {
        l2: l2_sq.sqrt(),
        h1_semi: h1_sq.sqrt(),
        energy: (epsilon * epsilon * h1_sq + weighted_sq).sqrt(),
        balanced: (l2_sq + epsilon * h1_sq).sqrt(),
        max,
    })
}

/// Error norms of `sol` against a closed-form exact solution, integrated on
/// the solution's own mesh.
pub fn error_against_exact(
    sol: &FemSolution1d,
    exact: &Exact1d,
    epsilon: f64,
    b: &Expr,
    panels: usize,
) -> Result<Norms, Fem1dError> {
    let diff = |x: f64| {
        let (v, d) = sol.eval(x);
        ((exact.u)(x) - v, (exact.du)(x) - d)
    };
    norms(
        &diff,
        sol.space().mesh(),
        epsilon,
        b,
        sol.space().degree() + 6,
        panels,
    )
}

/// Error norms of `sol` against a reference solution, integrated on the
/// merged mesh with the reference's quadrature resolution.
pub fn error_against_reference(
    sol: &FemSolution1d,
    reference: &FemSolution1d,
    epsilon: f64,
    b: &Expr,
) -> Result<Norms, Fem1dError> {
    let merged = sol.space().mesh().merge(reference.space().mesh());
    let diff = |x: f64| {
        let (v, d) = sol.eval(x);
        let (rv, rd) = reference.eval(x);
        (rv - v, rd - d)
    };
    norms(
        &diff,
        &merged,
        epsilon,
        b,
        reference.space().degree() + 6,
        1,
    )
}

/// Reference solution used as the error yardstick when no closed form is
/// available: degree `p_max + 6` on its own boundary layer mesh with every
/// element bisected once. Validated by a Cauchy check in the tests.
pub fn reference_solution(
    prob: &Problem1d,
    lambda: f64,
    p_max: usize,
) -> Result<FemSolution1d, Fem1dError> {
    reference_with_degree(prob, lambda, p_max + 6)
}

/// Reference with an explicit degree, for Cauchy-sequence self checks.
pub fn reference_with_degree(
    prob: &Problem1d,
    lambda: f64,
    p_ref: usize,
) -> Result<FemSolution1d, Fem1dError> {
    let bl = sbl_mesh(lambda, p_ref, prob.epsilon);
    let space = Space1d::new(bl.mesh.bisect(), p_ref);
    solve(&space, prob)
}
