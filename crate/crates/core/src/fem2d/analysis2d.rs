//! 2D measurement harness mirroring the 1D one: per-element inverse
//! estimate constants, the `b`-weighted L2 projection, the splitting of the
//! needle-split space into coarse-mesh polynomials and needle-supported
//! functions (by polynomial extension from the regular descendants), the
//! coarse/layer coupling constant, and the projection stability study.

use super::{assemble2d, Fem2dError, FemSolution2d, Space2d};
use crate::expr::Expr;
use crate::fem1d::MeshRegime;
use crate::geom2d::{det2, invert2, BlMesh2d, ElementMap2d, MapKind};
use crate::linalg::{
    cholesky_solve, max_gen_eig, DenseSpd, SpdFactor, SpdFactorize, SymMatrix,
};
use crate::poly_quad::{
    gauss_lobatto_rule, gauss_rule, legendre_value, shape_coeffs_from_legendre, LegendreSeries,
    ShapeSet,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

// ------------------------------------------------------- inverse estimates

/// Measured `sup ||grad z||_0 / ||z||_0` over tensor polynomials of degree
/// `p` on one element, from the stiffness/mass pencil.
pub fn element_inverse_constant(el: &ElementMap2d, p: usize) -> Result<f64, Fem2dError> {
    let shapes = ShapeSet::new(p);
    let rule = gauss_rule(p + 4);
    let points: Vec<f64> = rule.nodes.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    let weights: Vec<f64> = rule.weights.iter().map(|&w| 0.5 * w).collect();
    let n = (p + 1) * (p + 1);
    let mut k = DenseSpd::zeros(n);
    let mut m = DenseSpd::zeros(n);
    let table: Vec<(Vec<f64>, Vec<f64>)> = points
        .iter()
        .map(|&xi| {
            let (v, d) = shapes.eval(2.0 * xi - 1.0);
            (v, d.into_iter().map(|x| 2.0 * x).collect())
        })
        .collect();
    let mut grads = vec![[0.0; 2]; n];
    let mut vals = vec![0.0; n];
    for qi in 0..points.len() {
        for qj in 0..points.len() {
            let jac = el.jacobian(points[qi], points[qj]);
            let det = det2(&jac).abs();
            let inv = invert2(&jac);
            let w = weights[qi] * weights[qj] * det;
            for a in 0..=p {
                for b in 0..=p {
                    let l = a * (p + 1) + b;
                    let gx = table[qi].1[a] * table[qj].0[b];
                    let gy = table[qi].0[a] * table[qj].1[b];
                    grads[l] = [
                        inv[0][0] * gx + inv[1][0] * gy,
                        inv[0][1] * gx + inv[1][1] * gy,
                    ];
                    vals[l] = table[qi].0[a] * table[qj].0[b];
                }
            }
            for r in 0..n {
                for c in 0..=r {
                    m.add(r, c, w * vals[r] * vals[c]);
                    k.add(
                        r,
                        c,
                        w * (grads[r][0] * grads[c][0] + grads[r][1] * grads[c][1]),
                    );
                }
            }
        }
    }
    let (mu, _) = max_gen_eig(&k, &m, 1e-8)?;
    Ok(mu.max(0.0).sqrt())
}

// ------------------------------------------------------------ interpolation

/// Tensor Legendre series on `[-1, 1]^2`.
struct TensorLegendre {
    /// `coeffs[k][l]` multiplies `P_k(t) P_l(s)`.
    coeffs: Vec<Vec<f64>>,
}

impl TensorLegendre {
    fn eval(&self, t: f64, s: f64) -> f64 {
        let p = self.coeffs.len() - 1;
        let pt: Vec<f64> = (0..=p).map(|k| legendre_value(k, t)).collect();
        let ps: Vec<f64> = (0..=p).map(|l| legendre_value(l, s)).collect();
        let mut v = 0.0;
        for k in 0..=p {
            for l in 0..=p {
                v += self.coeffs[k][l] * pt[k] * ps[l];
            }
        }
        v
    }
}

/// Discrete tensor Legendre transform of `f` sampled at the `(p+1)^2`
/// Gauss-Lobatto grid of `[0,1]^2` (exact interpolation for `Q_p`).
fn tensor_gl_interpolate(f: &dyn Fn(f64, f64) -> f64, p: usize) -> TensorLegendre {
    let rule = gauss_lobatto_rule(p + 1);
    let nodes01: Vec<f64> = rule.nodes.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    let n = p + 1;
    let fvals: Vec<Vec<f64>> = nodes01
        .iter()
        .map(|&xi| nodes01.iter().map(|&eta| f(xi, eta)).collect())
        .collect();
    // 1D transform matrix: row k gives the k-th Legendre coefficient from
    // nodal values
    let mut transform = vec![vec![0.0; n]; n];
    for (k, row) in transform.iter_mut().enumerate() {
        let mut den = 0.0;
        for i in 0..n {
            let pk = legendre_value(k, rule.nodes[i]);
            den += rule.weights[i] * pk * pk;
        }
        for i in 0..n {
            row[i] = rule.weights[i] * legendre_value(k, rule.nodes[i]) / den;
        }
    }
    // apply along xi then along eta
    let mut half = vec![vec![0.0; n]; n];
    for k in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += transform[k][i] * fvals[i][j];
            }
            half[k][j] = acc;
        }
    }
    let mut coeffs = vec![vec![0.0; n]; n];
    for k in 0..n {
        for l in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += transform[l][j] * half[k][j];
            }
            coeffs[k][l] = acc;
        }
    }
    TensorLegendre { coeffs }
}

/// Elementwise tensor Gauss-Lobatto interpolation of `f(element, xi, eta)`
/// into the space. Exact on the space itself; continuous inputs give
/// conforming outputs.
pub fn interpolate_into_space2d(
    space: &Space2d,
    f: &dyn Fn(usize, f64, f64) -> f64,
) -> FemSolution2d {
    let p = space.degree();
    let n = p + 1;
    // 1D Legendre -> shape conversion matrix
    let mut conv = vec![vec![0.0; n]; n];
    for k in 0..n {
        let mut unit = vec![0.0; n];
        unit[k] = 1.0;
        let shape = shape_coeffs_from_legendre(&LegendreSeries { coeffs: unit }, p);
        for (a, row) in conv.iter_mut().enumerate() {
            row[k] = shape[a];
        }
    }
    let mut coeffs = vec![0.0; space.dim()];
    for e in 0..space.mesh().elements.len() {
        let series = tensor_gl_interpolate(&|xi, eta| f(e, xi, eta), p);
        // shape coefficients: S = conv * L * conv^T
        let mut half = vec![vec![0.0; n]; n];
        for a in 0..n {
            for l in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += conv[a][k] * series.coeffs[k][l];
                }
                half[a][l] = acc;
            }
        }
        let dofs = space.element_dofs(e);
        for a in 0..n {
            for b in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += half[a][l] * conv[b][l];
                }
                let (g, s) = dofs[a * n + b];
                coeffs[g] = s * acc; // sign^2 = 1: local = s * global
            }
        }
    }
    FemSolution2d::new(space.clone(), coeffs)
}

// ------------------------------------------------------------- projection

/// `b`-weighted L2 projection of `z(x, y)` onto the Dirichlet space.
pub fn weighted_l2_projection2d(
    space: &Space2d,
    b: &Expr,
    z: &(dyn Fn(f64, f64) -> f64 + Sync),
    points_per_axis: usize,
) -> Result<FemSolution2d, Fem2dError> {
    let (mass, _) = assemble2d(space, 0.0, b, &Expr::Num(0.0))?;
    let p = space.degree();
    let rule = gauss_rule(points_per_axis.max(p + 4));
    let points: Vec<f64> = rule.nodes.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    let weights: Vec<f64> = rule.weights.iter().map(|&w| 0.5 * w).collect();
    let shapes = ShapeSet::new(p);
    let table: Vec<Vec<f64>> = points.iter().map(|&xi| shapes.eval(2.0 * xi - 1.0).0).collect();
    let mut rhs = vec![0.0; space.interior_dim()];
    for (e, el) in space.mesh().elements.iter().enumerate() {
        let dofs = space.element_dofs(e);
        for qi in 0..points.len() {
            for qj in 0..points.len() {
                let det = el.det_jacobian(points[qi], points[qj]).abs();
                let [x, y] = el.map(points[qi], points[qj]);
                let bv = b.eval(x, Some(y)).map_err(|source| Fem2dError::Eval {
                    element: e,
                    source,
                })?;
                let w = weights[qi] * weights[qj] * det * bv * z(x, y);
                for a in 0..=p {
                    for bb in 0..=p {
                        let (g, s) = dofs[a * (p + 1) + bb];
                        if let Some(i) = space.interior_index(g) {
                            rhs[i] += w * s * table[qi][a] * table[qj][bb];
                        }
                    }
                }
            }
        }
    }
    let x = cholesky_solve(&mass, &rhs)?;
    let mut coeffs = vec![0.0; space.dim()];
    for g in 0..space.dim() {
        if let Some(i) = space.interior_index(g) {
            coeffs[g] = x[i];
        }
    }
    Ok(FemSolution2d::new(space.clone(), coeffs))
}

// ----------------------------------------------------------- decomposition

/// Splitting of a needle-split space function into a coarse-mesh polynomial
/// part and a needle-supported remainder.
#[derive(Debug, Clone)]
pub struct Decomposition2d {
    /// Function in the space over the asymptotic mesh.
    pub coarse: FemSolution2d,
    /// Remainder in the needle-split space, supported on the needles.
    pub layer: FemSolution2d,
}

/// Split `v`: on each boundary parent the coarse part is the polynomial
/// extension of `v` from the regular descendant to the whole parent
/// element (a Legendre change of interval in the wall-normal coordinate);
/// elsewhere it is `v` itself. The layer part is the remainder.
pub fn decompose2d(v: &FemSolution2d) -> Result<Decomposition2d, Fem2dError> {
    let mesh = v.space().mesh();
    if mesh.regime != MeshRegime::ThreeElement {
        return Err(Fem2dError::AsymptoticRegime);
    }
    let p = v.space().degree();
    let w = mesh.layer_width;
    let asym_bl = BlMesh2d::asymptotic(&mesh.parent);
    let asym_space = Space2d::new(&asym_bl, p);
    let descendants = mesh.descendants();

    // per parent: either the single covering element, or the extension
    // series interpolated on the regular descendant
    enum CoarsePart {
        Direct(usize),
        Extension(TensorLegendre),
    }
    let parts: Vec<CoarsePart> = (0..mesh.parent.elements.len())
        .map(|pe| {
            let list = &descendants[pe];
            if list.len() == 1 {
                CoarsePart::Direct(list[0].0)
            } else {
                let reg = list
                    .iter()
                    .find(|&&(e, _, _)| mesh.elements[e].kind == MapKind::RegularDescendant)
                    .unwrap()
                    .0;
                CoarsePart::Extension(tensor_gl_interpolate(
                    &|xi, eta| v.eval_ref(reg, xi, eta).0,
                    p,
                ))
            }
        })
        .collect();

    let coarse_at = |pe: usize, xi: f64, eta: f64| -> f64 {
        match &parts[pe] {
            CoarsePart::Direct(e) => v.eval_ref(*e, xi, eta).0,
            CoarsePart::Extension(series) => {
                // parent xi -> regular-descendant local coordinate in [-1,1]
                let t = 2.0 * (xi - w) / (1.0 - w) - 1.0;
                series.eval(t, 2.0 * eta - 1.0)
            }
        }
    };
    let coarse = interpolate_into_space2d(&asym_space, &|pe, xi, eta| coarse_at(pe, xi, eta));

    let parent_of = &mesh.parent_of;
    let layer = interpolate_into_space2d(v.space(), &|e, xi, eta| {
        let pe = parent_of[e];
        let (x0, x1) = match mesh.elements[e].kind {
            MapKind::Needle => (0.0, w),
            MapKind::RegularDescendant => (w, 1.0),
            MapKind::Asymptotic => (0.0, 1.0),
        };
        let parent_xi = x0 + (x1 - x0) * xi;
        v.eval_ref(e, xi, eta).0 - coarse_at(pe, parent_xi, eta)
    });
    Ok(Decomposition2d { coarse, layer })
}

// -------------------------------------------------------- coupling constant

/// Global DOFs of the needle-split space supported entirely on needle
/// elements (the layer subspace; no boundary conditions).
pub fn layer_dofs(space: &Space2d) -> Vec<usize> {
    let mesh = space.mesh();
    let mut on_needle = vec![false; space.dim()];
    let mut elsewhere = vec![false; space.dim()];
    for (e, el) in mesh.elements.iter().enumerate() {
        let needle = el.kind == MapKind::Needle;
        for &(g, _) in space.element_dofs(e) {
            if needle {
                on_needle[g] = true;
            } else {
                elsewhere[g] = true;
            }
        }
    }
    (0..space.dim())
        .filter(|&g| on_needle[g] && !elsewhere[g])
        .collect()
}

/// Unmasked plain mass matrix of a space (dense; the coarse spaces this is
/// used for stay small).
fn full_mass(space: &Space2d) -> Result<DenseSpd, Fem2dError> {
    let p = space.degree();
    let one = Expr::Num(1.0);
    let mut m = DenseSpd::zeros(space.dim());
    for e in 0..space.mesh().elements.len() {
        let (local, _) = super::element_system(space, 0.0, &one, &one, e)?;
        let dofs = space.element_dofs(e);
        let nloc = (p + 1) * (p + 1);
        for r in 0..nloc {
            let (gr, sr) = dofs[r];
            for c in 0..=r {
                let (gc, sc) = dofs[c];
                if gr >= gc {
                    m.add(gr, gc, sr * sc * local[r * nloc + c]);
                } else {
                    m.add(gc, gr, sr * sc * local[r * nloc + c]);
                }
            }
        }
    }
    Ok(m)
}

/// Measured coupling constant between the coarse space (over the asymptotic
/// mesh) and the needle-supported layer subspace:
/// `sup |int b u v| / (||u||_{0,Omega} ||v||_{0,layer region})`.
pub fn coupling_constant2d(
    space: &Space2d,
    b: &Expr,
    trials: usize,
    seed: u64,
) -> Result<f64, Fem2dError> {
    let mesh = space.mesh();
    if mesh.regime != MeshRegime::ThreeElement {
        return Err(Fem2dError::AsymptoticRegime);
    }
    assert!(trials >= 200);
    let p = space.degree();
    let w = mesh.layer_width;
    let asym_bl = BlMesh2d::asymptotic(&mesh.parent);
    let coarse_space = Space2d::new(&asym_bl, p);
    let v_dofs = layer_dofs(space);
    let nu = coarse_space.dim();
    let nv = v_dofs.len();
    let v_index: std::collections::HashMap<usize, usize> =
        v_dofs.iter().enumerate().map(|(i, &g)| (g, i)).collect();

    let m_u = full_mass(&coarse_space)?;
    let mut m_v = DenseSpd::zeros(nv);
    let mut coupling = vec![vec![0.0; nv]; nu];

    let rule = gauss_rule(p + 4);
    let points: Vec<f64> = rule.nodes.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    let weights: Vec<f64> = rule.weights.iter().map(|&w| 0.5 * w).collect();
    let shapes = ShapeSet::new(p);
    // needle-local xi table and the matching parent-coordinate table
    let table: Vec<Vec<f64>> = points.iter().map(|&xi| shapes.eval(2.0 * xi - 1.0).0).collect();
    let table_stretched: Vec<Vec<f64>> = points
        .iter()
        .map(|&xi| shapes.eval(2.0 * (w * xi) - 1.0).0)
        .collect();

    for (e, el) in mesh.elements.iter().enumerate() {
        if el.kind != MapKind::Needle {
            continue;
        }
        let pe = mesh.parent_of[e];
        let needle_dofs = space.element_dofs(e);
        let parent_dofs = coarse_space.element_dofs(pe);
        for qi in 0..points.len() {
            for qj in 0..points.len() {
                let det = el.det_jacobian(points[qi], points[qj]).abs();
                let [x, y] = el.map(points[qi], points[qj]);
                let bv = b.eval(x, Some(y)).map_err(|source| Fem2dError::Eval {
                    element: e,
                    source,
                })?;
                let wq = weights[qi] * weights[qj] * det;
                // layer basis values at this point (only layer dofs)
                let mut lvals = vec![0.0; nv];
                for a in 0..=p {
                    for bb in 0..=p {
                        let (g, s) = needle_dofs[a * (p + 1) + bb];
                        if let Some(&i) = v_index.get(&g) {
                            lvals[i] += s * table[qi][a] * table[qj][bb];
                        }
                    }
                }
                for r in 0..nv {
                    if lvals[r] == 0.0 {
                        continue;
                    }
                    for c in 0..=r {
                        m_v.add(r, c, wq * lvals[r] * lvals[c]);
                    }
                }
                // coarse basis values through the parent map at (w xi, eta)
                for a in 0..=p {
                    for bb in 0..=p {
                        let (g, s) = parent_dofs[a * (p + 1) + bb];
                        let uval = s * table_stretched[qi][a] * table[qj][bb];
                        if uval == 0.0 {
                            continue;
                        }
                        let wu = wq * bv * uval;
                        for (c, &lv) in lvals.iter().enumerate() {
                            coupling[g][c] += wu * lv;
                        }
                    }
                }
            }
        }
    }

    let mu_factor = m_u.factor()?;
    let mv_factor = m_v.factor()?;
    let ratio = |u: &[f64], v: &[f64]| -> f64 {
        let mut buv = 0.0;
        for r in 0..nu {
            if u[r] == 0.0 {
                continue;
            }
            for c in 0..nv {
                buv += u[r] * coupling[r][c] * v[c];
            }
        }
        let un = m_u.matvec(u);
        let vn = m_v.matvec(v);
        let nu2: f64 = u.iter().zip(&un).map(|(a, b)| a * b).sum();
        let nv2: f64 = v.iter().zip(&vn).map(|(a, b)| a * b).sum();
        buv.abs() / (nu2 * nv2).sqrt()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let mut best = 0.0f64;
    let mut best_v = vec![1.0; nv];
    for _ in 0..trials {
        let u: Vec<f64> = (0..nu).map(|_| normal(&mut rng)).collect();
        let v: Vec<f64> = (0..nv).map(|_| normal(&mut rng)).collect();
        let r = ratio(&u, &v);
        if r > best {
            best = r;
            best_v = v;
        }
    }
    let mut v = best_v;
    let mut u;
    for _ in 0..10 {
        let bv: Vec<f64> = (0..nu)
            .map(|r| (0..nv).map(|c| coupling[r][c] * v[c]).sum())
            .collect();
        u = mu_factor.solve(&bv);
        let btu: Vec<f64> = (0..nv)
            .map(|c| (0..nu).map(|r| coupling[r][c] * u[r]).sum())
            .collect();
        v = mv_factor.solve(&btu);
        let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale > 0.0 {
            v.iter_mut().for_each(|x| *x /= scale);
        }
        best = best.max(ratio(&u, &v));
    }
    Ok(best)
}

// --------------------------------------------------------- stability study

#[derive(Debug, Clone, Copy)]
pub struct StabilityRow2d {
    pub trial: usize,
    pub coarse_ratio: f64,
    pub layer_ratio: f64,
    /// Largest boundary value of the cutoff-corrected layer part (should be
    /// zero: the corrector restores the Dirichlet condition).
    pub corrected_boundary_max: f64,
    pub corrected_ratio: f64,
}

/// Random smooth field: a sum of plane-wave cosines with seeded directions.
pub struct RandomField2d {
    waves: Vec<([f64; 2], f64, f64)>,
}

impl RandomField2d {
    pub fn sample(rng: &mut ChaCha8Rng, waves: usize, max_wavenumber: f64) -> Self {
        let waves = (0..waves)
            .map(|_| {
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let k = rng.gen_range(0.5..max_wavenumber);
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let amp = {
                    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                };
                ([k * angle.cos(), k * angle.sin()], phase, amp)
            })
            .collect();
        RandomField2d { waves }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.waves
            .iter()
            .map(|&(k, phase, amp)| amp * (k[0] * x + k[1] * y + phase).cos())
            .sum()
    }
}

/// L2 norm of a pointwise function over a set of elements.
fn field_norm(
    f: &dyn Fn(f64, f64) -> f64,
    elements: &[&ElementMap2d],
    points_per_axis: usize,
) -> f64 {
    let rule = gauss_rule(points_per_axis);
    let points: Vec<f64> = rule.nodes.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    let weights: Vec<f64> = rule.weights.iter().map(|&w| 0.5 * w).collect();
    let mut acc = 0.0;
    for el in elements {
        for qi in 0..points.len() {
            for qj in 0..points.len() {
                let det = el.det_jacobian(points[qi], points[qj]).abs();
                let [x, y] = el.map(points[qi], points[qj]);
                let v = f(x, y);
                acc += weights[qi] * weights[qj] * det * v * v;
            }
        }
    }
    acc.sqrt()
}

/// Projection stability study on the needle-split space: project seeded
/// random fields, split them, and report the component ratios. The cutoff
/// corrector `(1 - xi)^p * coarse(0, eta)` on each needle makes the layer
/// part boundary-compatible; its boundary values and norm ratio are
/// reported as well.
pub fn stability_study2d(
    space: &Space2d,
    b: &Expr,
    trials: usize,
    seed: u64,
) -> Result<Vec<StabilityRow2d>, Fem2dError> {
    let mesh = space.mesh();
    if mesh.regime != MeshRegime::ThreeElement {
        return Err(Fem2dError::AsymptoticRegime);
    }
    let p = space.degree();
    let w = mesh.layer_width;
    let scale = w.sqrt() * p as f64;
    let all: Vec<&ElementMap2d> = mesh.elements.iter().collect();
    let needles: Vec<&ElementMap2d> = mesh
        .elements
        .iter()
        .filter(|el| el.kind == MapKind::Needle)
        .collect();
    let mut rows = Vec::new();
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((trial as u64) << 16));
        let field = RandomField2d::sample(&mut rng, 24, 8.0);
        let zf = |x: f64, y: f64| field.eval(x, y);
        let proj = weighted_l2_projection2d(space, b, &zf, p + 8)?;
        let dec = decompose2d(&proj)?;
        let z_total = field_norm(&zf, &all, 12);
        let z_layer = field_norm(&zf, &needles, 12);
        let coarse_norm = super::solution_norms(&dec.coarse, 1.0, &Expr::Num(1.0), p + 4)?.l2;
        let layer_norm = super::solution_norms(&dec.layer, 1.0, &Expr::Num(1.0), p + 4)?.l2;

        // boundary-compatible corrected layer part
        let coarse = dec.coarse.clone();
        let parent_of = &mesh.parent_of;
        let layer_ref = &dec.layer;
        let corrected = interpolate_into_space2d(space, &|e, xi, eta| {
            let base = layer_ref.eval_ref(e, xi, eta).0;
            if mesh.elements[e].kind == MapKind::Needle {
                let pe = parent_of[e];
                base + (1.0 - xi).powi(p as i32) * coarse.eval_ref(pe, 0.0, eta).0
            } else {
                base
            }
        });
        let mut boundary_max = 0.0f64;
        for &e in &mesh.boundary {
            for k in 0..=50 {
                let eta = k as f64 / 50.0;
                boundary_max = boundary_max.max(corrected.eval_ref(e, 0.0, eta).0.abs());
            }
        }
        let corrected_norm = super::solution_norms(&corrected, 1.0, &Expr::Num(1.0), p + 4)?.l2;
        rows.push(StabilityRow2d {
            trial,
            coarse_ratio: coarse_norm / z_total,
            layer_ratio: layer_norm / (z_layer + scale * z_total),
            corrected_boundary_max: boundary_max,
            corrected_ratio: corrected_norm
                / (layer_norm + (p as f64).sqrt() * w.sqrt() * coarse_norm),
        });
    }
    Ok(rows)
}
