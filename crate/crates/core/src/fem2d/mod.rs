//! 2D hp-FEM for `-eps^2 Laplace(u) + b u = f` on smooth domains meshed by
//! curvilinear quads with needle splitting at the boundary.
//!
//! The space is tensor-product `Q_p` per element, H1-conforming through
//! shared vertex and edge DOFs. Edge DOFs are orientation-sensitive
//! (hierarchical edge functions of odd index flip sign under direction
//! reversal), resolved by directed global edge keys. Element assembly runs
//! data-parallel with a deterministic in-order merge.

pub mod analysis2d;

use crate::expr::{Expr, ExprError};
use crate::geom2d::{det2, invert2, BlMesh2d, ElementMap2d};
use crate::linalg::{cholesky_solve, pcg_solve, LinalgError, SparseSpd, SymMatrix};
use crate::par;
use crate::poly_quad::{gauss_rule, ShapeSet};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Fem2dError {
    #[error("expression evaluation failed in element {element}: {source}")]
    Eval { element: usize, source: ExprError },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("coefficient b is not positive: sampled minimum {min}")]
    NonPositiveCoefficient { min: f64 },
    #[error("point ({x}, {y}) lies outside the meshed domain")]
    PointOutsideDomain { x: f64, y: f64 },
    #[error("algebraic residual {residual:e} exceeds tolerance")]
    ResidualTooLarge { residual: f64 },
    #[error("solutions do not live on meshes with a common parent")]
    MeshMismatch,
    #[error("operation requires the needle-split boundary layer regime")]
    AsymptoticRegime,
}

// ------------------------------------------------------------------ space

/// Local DOF index layout: `l = a * (p + 1) + b` for the tensor function
/// `N_a(2 xi - 1) N_b(2 eta - 1)`.
#[derive(Debug, Clone)]
pub struct Space2d {
    mesh: BlMesh2d,
    degree: usize,
    /// per element and local index: (global dof, orientation sign)
    element_dofs: Vec<Vec<(usize, f64)>>,
    dim: usize,
    dirichlet: Vec<bool>,
    interior_of: Vec<Option<usize>>,
    interior_dim: usize,
}

fn quantize(p: [f64; 2]) -> (i64, i64) {
    ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64)
}

impl Space2d {
    pub fn new(mesh: &BlMesh2d, degree: usize) -> Self {
        assert!(degree >= 1);
        let p = degree;
        let nel = mesh.elements.len();
        let mut vertex_ids: HashMap<(i64, i64), usize> = HashMap::new();
        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut vertex_count = 0usize;

        // pass 1: vertex ids per element corner
        let mut corner_ids = vec![[0usize; 4]; nel];
        for (e, el) in mesh.elements.iter().enumerate() {
            let corners = [
                el.map(0.0, 0.0),
                el.map(1.0, 0.0),
                el.map(1.0, 1.0),
                el.map(0.0, 1.0),
            ];
            for (c, &pt) in corners.iter().enumerate() {
                let id = *vertex_ids.entry(quantize(pt)).or_insert_with(|| {
                    vertex_count += 1;
                    vertex_count - 1
                });
                corner_ids[e][c] = id;
            }
        }

        // pass 2: edge ids (by sorted vertex pair, enumerated in first-seen
        // order so numbering is deterministic)
        // element edges by corner indices: E0 (xi=0): c0 -> c3, E1: c1 -> c2,
        // E2 (eta=0): c0 -> c1, E3: c3 -> c2, each in increasing parameter
        const EDGE_CORNERS: [(usize, usize); 4] = [(0, 3), (1, 2), (0, 1), (3, 2)];
        let mut edge_count = 0usize;
        let mut element_edges = vec![[(0usize, false); 4]; nel];
        for e in 0..nel {
            for (edge, &(ca, cb)) in EDGE_CORNERS.iter().enumerate() {
                let va = corner_ids[e][ca];
                let vb = corner_ids[e][cb];
                let key = (va.min(vb), va.max(vb));
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edge_count += 1;
                    edge_count - 1
                });
                // reversed when the local start vertex is not the smaller id
                element_edges[e][edge] = (id, va > vb);
            }
        }

        let per_edge = p.saturating_sub(1);
        let per_interior = per_edge * per_edge;
        let edge_base = vertex_count;
        let interior_base = edge_base + edge_count * per_edge;
        let dim = interior_base + nel * per_interior;

        let mut element_dofs = vec![Vec::new(); nel];
        for e in 0..nel {
            let mut dofs = vec![(0usize, 1.0f64); (p + 1) * (p + 1)];
            for a in 0..=p {
                for bb in 0..=p {
                    let l = a * (p + 1) + bb;
                    dofs[l] = match (a, bb) {
                        (0 | 1, 0 | 1) => {
                            // corner (xi = a, eta = bb)
                            let c = match (a, bb) {
                                (0, 0) => 0,
                                (1, 0) => 1,
                                (1, 1) => 2,
                                _ => 3,
                            };
                            (corner_ids[e][c], 1.0)
                        }
                        (0 | 1, k) => {
                            // edge xi = a, running in eta; function index k
                            let (id, rev) = element_edges[e][a];
                            let sign = if rev && k % 2 == 1 { -1.0 } else { 1.0 };
                            (edge_base + id * per_edge + (k - 2), sign)
                        }
                        (k, 0 | 1) => {
                            let (id, rev) = element_edges[e][2 + bb];
                            let sign = if rev && k % 2 == 1 { -1.0 } else { 1.0 };
                            (edge_base + id * per_edge + (k - 2), sign)
                        }
                        (a, bb) => (
                            interior_base + e * per_interior + (a - 2) * per_edge + (bb - 2),
                            1.0,
                        ),
                    };
                }
            }
            element_dofs[e] = dofs;
        }

        // Dirichlet mask: edge 0 of boundary elements plus its endpoints
        let mut dirichlet = vec![false; dim];
        for &e in &mesh.boundary {
            dirichlet[corner_ids[e][0]] = true;
            dirichlet[corner_ids[e][3]] = true;
            let (id, _) = element_edges[e][0];
            for k in 0..per_edge {
                dirichlet[edge_base + id * per_edge + k] = true;
            }
        }
        let mut interior_of = vec![None; dim];
        let mut interior_dim = 0;
        for g in 0..dim {
            if !dirichlet[g] {
                interior_of[g] = Some(interior_dim);
                interior_dim += 1;
            }
        }

        Space2d {
            mesh: mesh.clone(),
            degree,
            element_dofs,
            dim,
            dirichlet,
            interior_of,
            interior_dim,
        }
    }

    pub fn mesh(&self) -> &BlMesh2d {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn interior_dim(&self) -> usize {
        self.interior_dim
    }

    pub fn is_dirichlet(&self, g: usize) -> bool {
        self.dirichlet[g]
    }

    pub fn interior_index(&self, g: usize) -> Option<usize> {
        self.interior_of[g]
    }

    /// `(global dof, orientation sign)` for every local tensor index of
    /// element `e`.
    pub fn element_dofs(&self, e: usize) -> &[(usize, f64)] {
        &self.element_dofs[e]
    }
}

// --------------------------------------------------------------- problems

#[derive(Debug, Clone)]
pub struct Problem2d {
    pub epsilon: f64,
    pub b: Expr,
    pub f: Expr,
}

impl Problem2d {
    /// Validates positivity of `b` on quasi-uniform samples of the mesh.
    pub fn new(epsilon: f64, b: Expr, f: Expr, mesh: &BlMesh2d) -> Result<Self, Fem2dError> {
        assert!(epsilon > 0.0 && epsilon <= 1.0);
        let per_axis = ((10_000.0 / mesh.elements.len() as f64).sqrt().ceil() as usize).max(3);
        let mut samples = Vec::new();
        for el in &mesh.elements {
            for i in 0..per_axis {
                for j in 0..per_axis {
                    let p = el.map(
                        (i as f64 + 0.5) / per_axis as f64,
                        (j as f64 + 0.5) / per_axis as f64,
                    );
                    samples.push((p[0], Some(p[1])));
                }
            }
        }
        let min = crate::expr::check_positivity(&b, &samples).map_err(|source| {
            Fem2dError::Eval { element: 0, source }
        })?;
        if min <= 0.0 {
            return Err(Fem2dError::NonPositiveCoefficient { min });
        }
        Ok(Problem2d { epsilon, b, f })
    }
}

// --------------------------------------------------------------- assembly

/// 1D shape values and `d/dxi` derivatives at points of `[0, 1]`.
struct RefBasis {
    vals: Vec<Vec<f64>>,
    ders: Vec<Vec<f64>>,
}

impl RefBasis {
    fn at_points(p: usize, points: &[f64]) -> Self {
        let shapes = ShapeSet::new(p);
        let mut vals = Vec::with_capacity(points.len());
        let mut ders = Vec::with_capacity(points.len());
        for &xi in points {
            let (v, d) = shapes.eval(2.0 * xi - 1.0);
            vals.push(v);
            ders.push(d.into_iter().map(|x| 2.0 * x).collect());
        }
        RefBasis { vals, ders }
    }
}

/// Local stiffness-plus-mass matrix and load vector of one element, with
/// `(p + 4)^2 ` Gauss points.
pub fn element_system(
    space: &Space2d,
    epsilon: f64,
    b: &Expr,
    f: &Expr,
    e: usize,
) -> Result<(Vec<f64>, Vec<f64>), Fem2dError> {
    let p = space.degree();
    let nq = p + 4;
    let rule = gauss_rule(nq);
    let points: Vec<f64> = rule.nodes.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    let weights: Vec<f64> = rule.weights.iter().map(|&w| 0.5 * w).collect();
    let basis = RefBasis::at_points(p, &points);
    element_system_with(space, epsilon, b, f, e, &points, &weights, &basis)
}

#[allow(clippy::too_many_arguments)]
fn element_system_with(
    space: &Space2d,
    epsilon: f64,
    b: &Expr,
    f: &Expr,
    e: usize,
    points: &[f64],
    weights: &[f64],
    basis: &RefBasis,
) -> Result<(Vec<f64>, Vec<f64>), Fem2dError> {
    let p = space.degree();
    let nloc = (p + 1) * (p + 1);
    let el = &space.mesh().elements[e];
    let mut local = vec![0.0; nloc * nloc];
    let mut load = vec![0.0; nloc];
    let eps2 = epsilon * epsilon;
    let nq = points.len();
    let mut grads = vec![[0.0; 2]; nloc];
    let mut vals = vec![0.0; nloc];
    for qi in 0..nq {
        for qj in 0..nq {
            let (xi, eta) = (points[qi], points[qj]);
            let jac = el.jacobian(xi, eta);
            let det = det2(&jac).abs();
            let inv = invert2(&jac);
            let [x, y] = el.map(xi, eta);
            let bv = b.eval(x, Some(y)).map_err(|source| Fem2dError::Eval {
                element: e,
                source,
            })?;
            let fv = f.eval(x, Some(y)).map_err(|source| Fem2dError::Eval {
                element: e,
                source,
            })?;
            let w = weights[qi] * weights[qj] * det;
            for a in 0..=p {
                for bb in 0..=p {
                    let l = a * (p + 1) + bb;
                    let v = basis.vals[qi][a] * basis.vals[qj][bb];
                    let gx = basis.ders[qi][a] * basis.vals[qj][bb];
                    let gy = basis.vals[qi][a] * basis.ders[qj][bb];
                    // physical gradient: J^{-T} (gx, gy)
                    grads[l] = [
                        inv[0][0] * gx + inv[1][0] * gy,
                        inv[0][1] * gx + inv[1][1] * gy,
                    ];
                    vals[l] = v;
                }
            }
            for r in 0..nloc {
                load[r] += w * fv * vals[r];
                let wr = w * bv * vals[r];
                let we = w * eps2;
                for c in 0..=r {
                    local[r * nloc + c] += wr * vals[c]
                        + we * (grads[r][0] * grads[c][0] + grads[r][1] * grads[c][1]);
                }
            }
        }
    }
    // symmetrize the lower-triangle accumulation
    for r in 0..nloc {
        for c in r + 1..nloc {
            local[r * nloc + c] = local[c * nloc + r];
        }
    }
    Ok((local, load))
}

/// Galerkin system of the bilinear form on interior DOFs. The element loop
/// runs in parallel; locals merge in element order, so the assembled values
/// do not depend on the thread count.
pub fn assemble2d(
    space: &Space2d,
    epsilon: f64,
    b: &Expr,
    f: &Expr,
) -> Result<(SparseSpd, Vec<f64>), Fem2dError> {
    let p = space.degree();
    let nel = space.mesh().elements.len();
    let rule = gauss_rule(p + 4);
    let points: Vec<f64> = rule.nodes.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    let weights: Vec<f64> = rule.weights.iter().map(|&w| 0.5 * w).collect();
    let basis = RefBasis::at_points(p, &points);

    let locals = par::map_indexed(nel, |e| {
        element_system_with(space, epsilon, b, f, e, &points, &weights, &basis)
    });

    let nloc = (p + 1) * (p + 1);
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; space.interior_dim()];
    for (e, res) in locals.into_iter().enumerate() {
        let (local, load) = res?;
        let dofs = space.element_dofs(e);
        for r in 0..nloc {
            let (gr, sr) = dofs[r];
            let Some(ir) = space.interior_index(gr) else {
                continue;
            };
            rhs[ir] += sr * load[r];
            for c in 0..nloc {
                let (gc, sc) = dofs[c];
                let Some(ic) = space.interior_index(gc) else {
                    continue;
                };
                if ic <= ir {
                    triplets.push((ir, ic, sr * sc * local[r * nloc + c]));
                }
            }
        }
    }
    Ok((SparseSpd::from_triplets(space.interior_dim(), &triplets), rhs))
}

/// Unmasked load vector `int f phi_i` over all DOFs (used by the
/// partition-of-unity checks).
pub fn load_vector_full(space: &Space2d, f: &Expr) -> Result<Vec<f64>, Fem2dError> {
    let p = space.degree();
    let nel = space.mesh().elements.len();
    let one = Expr::Num(1.0);
    let rule = gauss_rule(p + 4);
    let points: Vec<f64> = rule.nodes.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    let weights: Vec<f64> = rule.weights.iter().map(|&w| 0.5 * w).collect();
    let basis = RefBasis::at_points(p, &points);
    let mut rhs = vec![0.0; space.dim()];
    for e in 0..nel {
        let (_, load) = element_system_with(space, 0.0, &one, f, e, &points, &weights, &basis)?;
        for (l, &(g, s)) in space.element_dofs(e).iter().enumerate() {
            rhs[g] += s * load[l];
        }
    }
    Ok(rhs)
}

/// DOF count above which the solver falls back to conjugate gradients.
pub const PCG_FALLBACK_DOFS: usize = 200_000;

/// Solve the Galerkin problem; fails when the relative algebraic residual
/// exceeds `1e-11`.
pub fn solve2d(space: &Space2d, prob: &Problem2d) -> Result<FemSolution2d, Fem2dError> {
    let (a, rhs) = assemble2d(space, prob.epsilon, &prob.b, &prob.f)?;
    let x = if space.interior_dim() == 0 {
        Vec::new()
    } else if space.interior_dim() > PCG_FALLBACK_DOFS {
        pcg_solve(&a, &rhs, 1e-12)?
    } else {
        cholesky_solve(&a, &rhs)?
    };
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm > 0.0 {
        let ax = a.matvec(&x);
        let resid = rhs
            .iter()
            .zip(&ax)
            .map(|(b, v)| (b - v) * (b - v))
            .sum::<f64>()
            .sqrt()
            / bnorm;
        if resid > 1e-11 {
            return Err(Fem2dError::ResidualTooLarge { residual: resid });
        }
    }
    let mut coeffs = vec![0.0; space.dim()];
    for g in 0..space.dim() {
        if let Some(i) = space.interior_index(g) {
            coeffs[g] = x[i];
        }
    }
    Ok(FemSolution2d {
        space: space.clone(),
        coeffs,
    })
}

// -------------------------------------------------------------- solutions

#[derive(Debug, Clone)]
pub struct FemSolution2d {
    space: Space2d,
    coeffs: Vec<f64>,
}

impl FemSolution2d {
    pub fn new(space: Space2d, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.dim());
        FemSolution2d { space, coeffs }
    }

    pub fn zero(space: Space2d) -> Self {
        let coeffs = vec![0.0; space.dim()];
        FemSolution2d { space, coeffs }
    }

    pub fn space(&self) -> &Space2d {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Value and physical gradient at reference coordinates of element `e`.
    pub fn eval_ref(&self, e: usize, xi: f64, eta: f64) -> (f64, [f64; 2]) {
        let p = self.space.degree();
        let shapes = ShapeSet::new(p);
        let (va, da) = shapes.eval(2.0 * xi.clamp(0.0, 1.0) - 1.0);
        let (vb, db) = shapes.eval(2.0 * eta.clamp(0.0, 1.0) - 1.0);
        let dofs = self.space.element_dofs(e);
        let mut value = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for a in 0..=p {
            for bb in 0..=p {
                let l = a * (p + 1) + bb;
                let (g, s) = dofs[l];
                let c = s * self.coeffs[g];
                value += c * va[a] * vb[bb];
                gx += c * 2.0 * da[a] * vb[bb];
                gy += c * va[a] * 2.0 * db[bb];
            }
        }
        let el = &self.space.mesh().elements[e];
        let inv = invert2(&el.jacobian(xi, eta));
        (
            value,
            [inv[0][0] * gx + inv[1][0] * gy, inv[0][1] * gx + inv[1][1] * gy],
        )
    }
}

// ---------------------------------------------------------- point location

/// Spatial-hash accelerated physical-point lookup with Newton inversion of
/// the element maps.
pub struct PointLocator<'a> {
    elements: &'a [ElementMap2d],
    lo: [f64; 2],
    cell: f64,
    grid: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(elements: &'a [ElementMap2d]) -> Self {
        let grid = 16usize;
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let boxes: Vec<([f64; 2], [f64; 2])> =
            elements.iter().map(|el| el.bounding_box(8)).collect();
        for (blo, bhi) in &boxes {
            for d in 0..2 {
                lo[d] = lo[d].min(blo[d]);
                hi[d] = hi[d].max(bhi[d]);
            }
        }
        let cell = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / grid as f64).max(1e-12);
        let mut buckets = vec![Vec::new(); grid * grid];
        let clamp_idx = |v: f64| -> usize { (v.max(0.0) as usize).min(grid - 1) };
        for (e, (blo, bhi)) in boxes.iter().enumerate() {
            let i0 = clamp_idx((blo[0] - lo[0]) / cell);
            let i1 = clamp_idx((bhi[0] - lo[0]) / cell);
            let j0 = clamp_idx((blo[1] - lo[1]) / cell);
            let j1 = clamp_idx((bhi[1] - lo[1]) / cell);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    buckets[i * grid + j].push(e);
                }
            }
        }
        PointLocator {
            elements,
            lo,
            cell,
            grid,
            buckets,
        }
    }

    /// Element index and reference coordinates of `point`, or `None` when no
    /// candidate element inverts onto it.
    pub fn locate(&self, point: [f64; 2]) -> Option<(usize, f64, f64)> {
        let clamp_idx = |v: f64| -> usize { (v.max(0.0) as usize).min(self.grid - 1) };
        let i = clamp_idx((point[0] - self.lo[0]) / self.cell);
        let j = clamp_idx((point[1] - self.lo[1]) / self.cell);
        for &e in &self.buckets[i * self.grid + j] {
            if let Some((xi, eta)) = self.invert(e, point) {
                return Some((e, xi, eta));
            }
        }
        None
    }

    /// Newton inversion of element `e` at `point`, seeded at the reference
    /// center, accepting reference coordinates within 1e-9 of the square.
    fn invert(&self, e: usize, point: [f64; 2]) -> Option<(f64, f64)> {
        let el = &self.elements[e];
        let mut s = [0.5f64, 0.5f64];
        for _ in 0..60 {
            let m = el.map(s[0], s[1]);
            let r = [m[0] - point[0], m[1] - point[1]];
            let rn = (r[0] * r[0] + r[1] * r[1]).sqrt();
            if rn < 1e-13 {
                let tol = 1e-9;
                if s[0] >= -tol && s[0] <= 1.0 + tol && s[1] >= -tol && s[1] <= 1.0 + tol {
                    return Some((s[0].clamp(0.0, 1.0), s[1].clamp(0.0, 1.0)));
                }
                return None;
            }
            let inv = invert2(&el.jacobian(s[0], s[1]));
            s[0] -= inv[0][0] * r[0] + inv[0][1] * r[1];
            s[1] -= inv[1][0] * r[0] + inv[1][1] * r[1];
            // keep the iterate from wandering far outside the element
            s[0] = s[0].clamp(-0.75, 1.75);
            s[1] = s[1].clamp(-0.75, 1.75);
        }
        None
    }
}

impl FemSolution2d {
    /// Value and gradient at a physical point.
    pub fn eval_point(
        &self,
        locator: &PointLocator,
        point: [f64; 2],
    ) -> Result<(f64, [f64; 2]), Fem2dError> {
        let (e, xi, eta) = locator
            .locate(point)
            .ok_or(Fem2dError::PointOutsideDomain {
                x: point[0],
                y: point[1],
            })?;
        Ok(self.eval_ref(e, xi, eta))
    }
}

// -------------------------------------------------------------------- norms

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms2d {
    pub l2: f64,
    pub h1_semi: f64,
    pub energy: f64,
    pub balanced: f64,
}

/// Norms of a difference evaluated per quadrature point on the elements of
/// a mesh. `diff` receives `(element, xi, eta, x, y)` and returns
/// `(value, physical gradient)`.
#[allow(clippy::type_complexity)]
pub fn norms2d(
    diff: &(dyn Fn(usize, f64, f64, f64, f64) -> (f64, [f64; 2]) + Sync),
    elements: &[ElementMap2d],
    epsilon: f64,
    b: &Expr,
    points_per_axis: usize,
) -> Result<Norms2d, Fem2dError> {
    let rule = gauss_rule(points_per_axis);
    let points: Vec<f64> = rule.nodes.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    let weights: Vec<f64> = rule.weights.iter().map(|&w| 0.5 * w).collect();
    let per_element = par::map_indexed(elements.len(), |e| -> Result<[f64; 3], Fem2dError> {
        let el = &elements[e];
        let mut acc = [0.0f64; 3]; // l2^2, h1^2, weighted^2
        for (qi, &xi) in points.iter().enumerate() {
            for (qj, &eta) in points.iter().enumerate() {
                let det = el.det_jacobian(xi, eta).abs();
                let [x, y] = el.map(xi, eta);
                let (v, g) = diff(e, xi, eta, x, y);
                let bv = b.eval(x, Some(y)).map_err(|source| Fem2dError::Eval {
                    element: e,
                    source,
                })?;
                let w = weights[qi] * weights[qj] * det;
                acc[0] += w * v * v;
                acc[1] += w * (g[0] * g[0] + g[1] * g[1]);
                acc[2] += w * bv * v * v;
            }
        }
        Ok(acc)
    });
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let mut weighted = 0.0;
    for r in per_element {
        let acc = r?;
        l2 += acc[0];
        h1 += acc[1];
        weighted += acc[2];
    }
    Ok(Norms2d {
        l2: l2.sqrt(),
        h1_semi: h1.sqrt(),
        energy: (epsilon * epsilon * h1 + weighted).sqrt(),
        balanced: (l2 + epsilon * h1).sqrt(),
    })
}

/// Norms of a single discrete function over its own mesh.
pub fn solution_norms(
    sol: &FemSolution2d,
    epsilon: f64,
    b: &Expr,
    points_per_axis: usize,
) -> Result<Norms2d, Fem2dError> {
    norms2d(
        &|e, xi, eta, _x, _y| sol.eval_ref(e, xi, eta),
        &sol.space().mesh().elements,
        epsilon,
        b,
        points_per_axis,
    )
}

/// Where reference coordinate `xi` of a parent element lands among the
/// descendants of that parent in a boundary layer mesh.
fn descendant_at(descendants: &[Vec<(usize, f64, f64)>], parent: usize, xi: f64) -> (usize, f64) {
    let list = &descendants[parent];
    for &(e, x0, x1) in list {
        if xi <= x1 {
            return (e, ((xi - x0) / (x1 - x0)).clamp(0.0, 1.0));
        }
    }
    let &(e, x0, x1) = list.last().unwrap();
    (e, ((xi - x0) / (x1 - x0)).clamp(0.0, 1.0))
}

/// Error norms of `sol` against `reference`, where both live on boundary
/// layer meshes split from the same asymptotic mesh. Quadrature runs on the
/// merged partition (parent elements subdivided at both needle widths) with
/// the reference's resolution, and both solutions are evaluated through
/// their descendant reparameterizations (no Newton inversion).
pub fn error_vs_reference2d(
    sol: &FemSolution2d,
    reference: &FemSolution2d,
    epsilon: f64,
    b: &Expr,
) -> Result<Norms2d, Fem2dError> {
    let mesh_s = sol.space().mesh();
    let mesh_r = reference.space().mesh();
    if mesh_s.parent.elements.len() != mesh_r.parent.elements.len()
        || mesh_s.parent.boundary != mesh_r.parent.boundary
    {
        return Err(Fem2dError::MeshMismatch);
    }
    let parent = &mesh_s.parent;
    let desc_s = mesh_s.descendants();
    let desc_r = mesh_r.descendants();
    let nq = reference.space().degree() + 6;
    let rule = gauss_rule(nq);
    let points: Vec<f64> = rule.nodes.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    let weights: Vec<f64> = rule.weights.iter().map(|&w| 0.5 * w).collect();

    let per_parent = par::map_indexed(parent.elements.len(), |pe| -> Result<[f64; 3], Fem2dError> {
        let el = &parent.elements[pe];
        // breakpoints in the parent xi coordinate from both meshes
        let mut breaks = vec![0.0, 1.0];
        for desc in [&desc_s[pe], &desc_r[pe]] {
            for &(_, x0, x1) in desc {
                breaks.push(x0);
                breaks.push(x1);
            }
        }
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let mut acc = [0.0f64; 3];
        for strip in breaks.windows(2) {
            let (s0, s1) = (strip[0], strip[1]);
            if s1 - s0 < 1e-15 {
                continue;
            }
            for (qi, &pxi) in points.iter().enumerate() {
                let xi = s0 + (s1 - s0) * pxi;
                for (qj, &eta) in points.iter().enumerate() {
                    let det = el.det_jacobian(xi, eta).abs();
                    let [x, y] = el.map(xi, eta);
                    let (es, ls) = descendant_at(&desc_s, pe, xi);
                    let (vs, gs) = sol.eval_ref(es, ls, eta);
                    let (er, lr) = descendant_at(&desc_r, pe, xi);
                    let (vr, gr) = reference.eval_ref(er, lr, eta);
                    let bv = b.eval(x, Some(y)).map_err(|source| Fem2dError::Eval {
                        element: pe,
                        source,
                    })?;
                    let w = weights[qi] * weights[qj] * det * (s1 - s0);
                    let v = vr - vs;
                    let g = [gr[0] - gs[0], gr[1] - gs[1]];
                    acc[0] += w * v * v;
                    acc[1] += w * (g[0] * g[0] + g[1] * g[1]);
                    acc[2] += w * bv * v * v;
                }
            }
        }
        Ok(acc)
    });
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let mut weighted = 0.0;
    for r in per_parent {
        let acc = r?;
        l2 += acc[0];
        h1 += acc[1];
        weighted += acc[2];
    }
    Ok(Norms2d {
        l2: l2.sqrt(),
        h1_semi: h1.sqrt(),
        energy: (epsilon * epsilon * h1 + weighted).sqrt(),
        balanced: (l2 + epsilon * h1).sqrt(),
    })
}

/// Maximum absolute difference of two solutions over `m` uniform samples of
/// the segment from `start` to `end` (endpoints included).
pub fn sample_line_error(
    sol: &FemSolution2d,
    reference: &FemSolution2d,
    locator_sol: &PointLocator,
    locator_ref: &PointLocator,
    start: [f64; 2],
    end: [f64; 2],
    m: usize,
) -> Result<f64, Fem2dError> {
    assert!(m >= 2);
    let mut worst = 0.0f64;
    for i in 0..m {
        let t = i as f64 / (m - 1) as f64;
        let p = [
            start[0] + t * (end[0] - start[0]),
            start[1] + t * (end[1] - start[1]),
        ];
        let (vs, _) = sol.eval_point(locator_sol, p)?;
        let (vr, _) = reference.eval_point(locator_ref, p)?;
        worst = worst.max((vs - vr).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests;
