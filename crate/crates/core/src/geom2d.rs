//! Curvilinear quadrilateral meshes for smooth 2D domains: analytic
//! boundary parameterizations, an O-grid asymptotic mesh (boundary collar,
//! blended transition ring, central patch), and needle splitting of the
//! boundary elements for layer resolution.
//!
//! All element maps go from the reference square `[0,1]^2` to the physical
//! element with analytic Jacobians; boundary edges are always the image of
//! the edge `{0} x [0,1]`. Needle elements are obtained by restricting a
//! collar map in the wall-normal coordinate, so splitting never breaks the
//! conformity of shared edges.

use crate::fem1d::MeshRegime;
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Geom2dError {
    #[error("curve is not closed: endpoints differ by {gap:e}")]
    CurveNotClosed { gap: f64 },
    #[error("degenerate tangent (norm {norm:e}) at parameter {theta}")]
    DegenerateTangent { theta: f64, norm: f64 },
    #[error(
        "collar depth {rho0} exceeds the minimal radius of curvature {min_radius:.6} of the boundary"
    )]
    CurvatureViolation { rho0: f64, min_radius: f64 },
    #[error("collar count {0} must be a multiple of 4 and at least 4")]
    InvalidCollarCount(usize),
    #[error(
        "element {element} has a degenerate or sign-changing Jacobian \
         (det {det:e} at reference point ({xi}, {eta}))"
    )]
    DegenerateJacobian {
        element: usize,
        xi: f64,
        eta: f64,
        det: f64,
    },
}

// ------------------------------------------------------------------ curves

type CurveFn = Arc<dyn Fn(f64) -> [f64; 2] + Send + Sync>;

/// Closed analytic boundary parameterization `theta -> (X, Y)` with period
/// `L`, counterclockwise. Derivative callables are supplied analytically.
#[derive(Clone)]
pub struct BoundaryCurve {
    point: CurveFn,
    deriv: CurveFn,
    deriv2: CurveFn,
    period: f64,
}

impl std::fmt::Debug for BoundaryCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BoundaryCurve{{period: {}}}", self.period)
    }
}

impl BoundaryCurve {
    pub fn new(point: CurveFn, deriv: CurveFn, deriv2: CurveFn, period: f64) -> Self {
        BoundaryCurve {
            point,
            deriv,
            deriv2,
            period,
        }
    }

    /// Unit circle.
    pub fn circle() -> Self {
        BoundaryCurve {
            point: Arc::new(|t: f64| [t.cos(), t.sin()]),
            deriv: Arc::new(|t: f64| [-t.sin(), t.cos()]),
            deriv2: Arc::new(|t: f64| [-t.cos(), -t.sin()]),
            period: std::f64::consts::TAU,
        }
    }

    /// Ellipse `(a cos, b sin)`.
    pub fn ellipse(a: f64, b: f64) -> Self {
        BoundaryCurve {
            point: Arc::new(move |t: f64| [a * t.cos(), b * t.sin()]),
            deriv: Arc::new(move |t: f64| [-a * t.sin(), b * t.cos()]),
            deriv2: Arc::new(move |t: f64| [-a * t.cos(), -b * t.sin()]),
            period: std::f64::consts::TAU,
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn point(&self, theta: f64) -> [f64; 2] {
        (self.point)(theta)
    }

    pub fn tangent(&self, theta: f64) -> [f64; 2] {
        (self.deriv)(theta)
    }

    /// Inward unit normal (the curve runs counterclockwise).
    pub fn inward_normal(&self, theta: f64) -> [f64; 2] {
        let t = self.tangent(theta);
        let n = (t[0] * t[0] + t[1] * t[1]).sqrt();
        [-t[1] / n, t[0] / n]
    }

    /// Derivative of the inward unit normal with respect to `theta`.
    fn inward_normal_deriv(&self, theta: f64) -> [f64; 2] {
        let t = (self.deriv)(theta);
        let dt = (self.deriv2)(theta);
        let n2 = t[0] * t[0] + t[1] * t[1];
        let n = n2.sqrt();
        let tdt = (t[0] * dt[0] + t[1] * dt[1]) / (n2 * n);
        [-dt[1] / n + t[1] * tdt, dt[0] / n - t[0] * tdt]
    }

    /// Signed curvature (positive for a convex counterclockwise curve).
    pub fn curvature(&self, theta: f64) -> f64 {
        let t = (self.deriv)(theta);
        let dt = (self.deriv2)(theta);
        let n = (t[0] * t[0] + t[1] * t[1]).sqrt();
        (t[0] * dt[1] - t[1] * dt[0]) / (n * n * n)
    }

    /// Point at depth `rho` along the inward normal.
    pub fn offset_point(&self, theta: f64, rho: f64) -> [f64; 2] {
        let z = self.point(theta);
        let n = self.inward_normal(theta);
        [z[0] + rho * n[0], z[1] + rho * n[1]]
    }

    fn offset_deriv(&self, theta: f64, rho: f64) -> [f64; 2] {
        let dz = (self.deriv)(theta);
        let dn = self.inward_normal_deriv(theta);
        [dz[0] + rho * dn[0], dz[1] + rho * dn[1]]
    }

    /// Closure and non-degeneracy checks from the type invariants.
    pub fn validate(&self) -> Result<(), Geom2dError> {
        let p0 = self.point(0.0);
        let p1 = self.point(self.period);
        let gap = ((p0[0] - p1[0]).powi(2) + (p0[1] - p1[1]).powi(2)).sqrt();
        if gap > 1e-12 {
            return Err(Geom2dError::CurveNotClosed { gap });
        }
        for i in 0..1000 {
            let theta = self.period * i as f64 / 1000.0;
            let t = self.tangent(theta);
            let norm = (t[0] * t[0] + t[1] * t[1]).sqrt();
            if norm < 1e-8 {
                return Err(Geom2dError::DegenerateTangent { theta, norm });
            }
        }
        Ok(())
    }

    fn min_curvature_radius(&self) -> f64 {
        let mut max_kappa = 0.0f64;
        for i in 0..1000 {
            let theta = self.period * i as f64 / 1000.0;
            max_kappa = max_kappa.max(self.curvature(theta).abs());
        }
        1.0 / max_kappa
    }
}

// ------------------------------------------------------------ element maps

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Asymptotic,
    Needle,
    RegularDescendant,
}

#[derive(Clone)]
enum Geometry {
    /// `(xi, eta) -> z(theta(eta)) + xi rho0 n_in(theta(eta))`; the edge
    /// `xi = 0` lies on the boundary. `theta(eta)` is affine from `theta0`
    /// (at `eta = 0`) to `theta1`, decreasing so the Jacobian is positive.
    Collar {
        curve: BoundaryCurve,
        theta0: f64,
        theta1: f64,
        rho0: f64,
    },
    /// Ruled blend between the collar's inner curve (`xi = 0`) and a
    /// straight central edge (`xi = 1`). Bottom and top edges are straight,
    /// so this is the transfinite interpolant of its four edges.
    Ruled {
        curve: BoundaryCurve,
        theta0: f64,
        theta1: f64,
        rho0: f64,
        r0: [f64; 2],
        r1: [f64; 2],
    },
    /// Bilinear quadrilateral with corners at `(0,0), (1,0), (1,1), (0,1)`.
    Bilinear {
        corners: [[f64; 2]; 4],
    },
    /// Restriction of a parent map in the first coordinate:
    /// `(xi, eta) -> parent(x0 + (x1 - x0) xi, eta)`.
    Restricted {
        parent: Arc<Geometry>,
        x0: f64,
        x1: f64,
    },
}

impl Geometry {
    fn map(&self, xi: f64, eta: f64) -> [f64; 2] {
        match self {
            Geometry::Collar {
                curve,
                theta0,
                theta1,
                rho0,
            } => {
                let theta = theta0 + eta * (theta1 - theta0);
                let z = curve.point(theta);
                let n = curve.inward_normal(theta);
                [z[0] + xi * rho0 * n[0], z[1] + xi * rho0 * n[1]]
            }
            Geometry::Ruled {
                curve,
                theta0,
                theta1,
                rho0,
                r0,
                r1,
            } => {
                let theta = theta0 + eta * (theta1 - theta0);
                let c = curve.offset_point(theta, *rho0);
                let r = [
                    (1.0 - eta) * r0[0] + eta * r1[0],
                    (1.0 - eta) * r0[1] + eta * r1[1],
                ];
                [
                    (1.0 - xi) * c[0] + xi * r[0],
                    (1.0 - xi) * c[1] + xi * r[1],
                ]
            }
            Geometry::Bilinear { corners } => {
                let [c00, c10, c11, c01] = corners;
                let mut p = [0.0; 2];
                for d in 0..2 {
                    p[d] = (1.0 - xi) * (1.0 - eta) * c00[d]
                        + xi * (1.0 - eta) * c10[d]
                        + xi * eta * c11[d]
                        + (1.0 - xi) * eta * c01[d];
                }
                p
            }
            Geometry::Restricted { parent, x0, x1 } => parent.map(x0 + (x1 - x0) * xi, eta),
        }
    }

    /// Jacobian `[[dx/dxi, dx/deta], [dy/dxi, dy/deta]]`.
    fn jacobian(&self, xi: f64, eta: f64) -> [[f64; 2]; 2] {
        match self {
            Geometry::Collar {
                curve,
                theta0,
                theta1,
                rho0,
            } => {
                let dtheta = theta1 - theta0;
                let theta = theta0 + eta * dtheta;
                let n = curve.inward_normal(theta);
                let dz = curve.tangent(theta);
                let dn = curve.inward_normal_deriv(theta);
                [
                    [rho0 * n[0], dtheta * (dz[0] + xi * rho0 * dn[0])],
                    [rho0 * n[1], dtheta * (dz[1] + xi * rho0 * dn[1])],
                ]
            }
            Geometry::Ruled {
                curve,
                theta0,
                theta1,
                rho0,
                r0,
                r1,
            } => {
                let dtheta = theta1 - theta0;
                let theta = theta0 + eta * dtheta;
                let c = curve.offset_point(theta, *rho0);
                let dc = curve.offset_deriv(theta, *rho0);
                let r = [
                    (1.0 - eta) * r0[0] + eta * r1[0],
                    (1.0 - eta) * r0[1] + eta * r1[1],
                ];
                let dr = [r1[0] - r0[0], r1[1] - r0[1]];
                [
                    [
                        r[0] - c[0],
                        (1.0 - xi) * dtheta * dc[0] + xi * dr[0],
                    ],
                    [
                        r[1] - c[1],
                        (1.0 - xi) * dtheta * dc[1] + xi * dr[1],
                    ],
                ]
            }
            Geometry::Bilinear { corners } => {
                let [c00, c10, c11, c01] = corners;
                let mut j = [[0.0; 2]; 2];
                for d in 0..2 {
                    j[d][0] = (1.0 - eta) * (c10[d] - c00[d]) + eta * (c11[d] - c01[d]);
                    j[d][1] = (1.0 - xi) * (c01[d] - c00[d]) + xi * (c11[d] - c10[d]);
                }
                j
            }
            Geometry::Restricted { parent, x0, x1 } => {
                let mut j = parent.jacobian(x0 + (x1 - x0) * xi, eta);
                j[0][0] *= x1 - x0;
                j[1][0] *= x1 - x0;
                j
            }
        }
    }
}

/// An element map from the reference square `[0, 1]^2`.
#[derive(Clone)]
pub struct ElementMap2d {
    pub kind: MapKind,
    geometry: Geometry,
}

impl std::fmt::Debug for ElementMap2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ElementMap2d{{kind: {:?}}}", self.kind)
    }
}

pub fn det2(j: &[[f64; 2]; 2]) -> f64 {
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

pub fn invert2(j: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let d = det2(j);
    [
        [j[1][1] / d, -j[0][1] / d],
        [-j[1][0] / d, j[0][0] / d],
    ]
}

/// Row-sum norm of a 2x2 matrix.
pub fn inf_norm2(j: &[[f64; 2]; 2]) -> f64 {
    (j[0][0].abs() + j[0][1].abs()).max(j[1][0].abs() + j[1][1].abs())
}

impl ElementMap2d {
    pub fn map(&self, xi: f64, eta: f64) -> [f64; 2] {
        self.geometry.map(xi, eta)
    }

    pub fn jacobian(&self, xi: f64, eta: f64) -> [[f64; 2]; 2] {
        self.geometry.jacobian(xi, eta)
    }

    pub fn det_jacobian(&self, xi: f64, eta: f64) -> f64 {
        det2(&self.jacobian(xi, eta))
    }

    /// Reference coordinates of the endpoints of edge `e` (0: `xi=0`,
    /// 1: `xi=1`, 2: `eta=0`, 3: `eta=1`), each parameterized by `s` from
    /// the first endpoint to the second.
    pub fn edge_param(e: usize, s: f64) -> (f64, f64) {
        match e {
            0 => (0.0, s),
            1 => (1.0, s),
            2 => (s, 0.0),
            3 => (s, 1.0),
            _ => panic!("edge index {e} out of range"),
        }
    }

    pub fn edge_point(&self, e: usize, s: f64) -> [f64; 2] {
        let (xi, eta) = Self::edge_param(e, s);
        self.map(xi, eta)
    }

    /// Axis-aligned bounding box from an `n x n` sample grid (padded a
    /// little, for candidate selection in point location).
    pub fn bounding_box(&self, n: usize) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for i in 0..=n {
            for j in 0..=n {
                let p = self.map(i as f64 / n as f64, j as f64 / n as f64);
                for d in 0..2 {
                    lo[d] = lo[d].min(p[d]);
                    hi[d] = hi[d].max(p[d]);
                }
            }
        }
        let pad = 0.05 * ((hi[0] - lo[0]).max(hi[1] - lo[1])).max(1e-12);
        ([lo[0] - pad, lo[1] - pad], [hi[0] + pad, hi[1] + pad])
    }

    fn check_jacobian(&self, element: usize) -> Result<(), Geom2dError> {
        let mut sign = 0.0f64;
        for i in 0..20 {
            for j in 0..20 {
                let xi = (i as f64 + 0.5) / 20.0;
                let eta = (j as f64 + 0.5) / 20.0;
                let det = self.det_jacobian(xi, eta);
                if det.abs() < 1e-10 || (sign != 0.0 && det.signum() != sign) {
                    return Err(Geom2dError::DegenerateJacobian {
                        element,
                        xi,
                        eta,
                        det,
                    });
                }
                sign = det.signum();
            }
        }
        Ok(())
    }
}

// ------------------------------------------------------------------ meshes

/// A shared edge between two elements. `flipped` means the second element
/// traverses the common edge in the opposite parameter direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharedEdge {
    pub a: (usize, usize),
    pub b: (usize, usize),
    pub flipped: bool,
}

/// Fixed coarse mesh of curvilinear quads resolving the geometry: `n`
/// collar elements with one full edge each on the boundary (numbered
/// first), `n` blended transition patches, and a central bilinear patch
/// subdivided into `(n/4)^2` cells so that its boundary matches the
/// transition ring edge-for-edge.
#[derive(Debug, Clone)]
pub struct AsymptoticMesh2d {
    pub curve: BoundaryCurve,
    pub elements: Vec<ElementMap2d>,
    pub adjacency: Vec<SharedEdge>,
    /// Indices of elements with an edge on the boundary: `0..n_collar`.
    pub boundary: Vec<usize>,
    pub rho0: f64,
}

fn quantize(p: [f64; 2]) -> (i64, i64) {
    ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64)
}

/// Corner indices (as `(xi, eta)` in `{0,1}`) of the endpoints of edge `e`.
fn edge_corner_params(e: usize) -> ((f64, f64), (f64, f64)) {
    match e {
        0 => ((0.0, 0.0), (0.0, 1.0)),
        1 => ((1.0, 0.0), (1.0, 1.0)),
        2 => ((0.0, 0.0), (1.0, 0.0)),
        _ => ((0.0, 1.0), (1.0, 1.0)),
    }
}

/// Geometric adjacency: edges match when their endpoint pairs coincide
/// (coordinates quantized at 1e-9, with a tolerance fallback for points
/// that land on a rounding boundary).
pub fn compute_adjacency(elements: &[ElementMap2d]) -> Vec<SharedEdge> {
    struct Rec {
        elem: usize,
        edge: usize,
        p0: [f64; 2],
        p1: [f64; 2],
    }
    let mut records = Vec::new();
    for (ei, el) in elements.iter().enumerate() {
        for e in 0..4 {
            let ((a0, a1), (b0, b1)) = edge_corner_params(e);
            records.push(Rec {
                elem: ei,
                edge: e,
                p0: el.map(a0, a1),
                p1: el.map(b0, b1),
            });
        }
    }
    let key = |r: &Rec| {
        let mut k = [quantize(r.p0), quantize(r.p1)];
        k.sort_unstable();
        k
    };
    let mut buckets: HashMap<[(i64, i64); 2], Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        buckets.entry(key(r)).or_default().push(i);
    }
    let mut pairs = Vec::new();
    let mut matched = vec![false; records.len()];
    for bucket in buckets.values() {
        if bucket.len() == 2 {
            let (i, j) = (bucket[0], bucket[1]);
            let (ra, rb) = (&records[i], &records[j]);
            let flipped = quantize(ra.p0) != quantize(rb.p0);
            pairs.push(SharedEdge {
                a: (ra.elem, ra.edge),
                b: (rb.elem, rb.edge),
                flipped,
            });
            matched[i] = true;
            matched[j] = true;
        }
    }
    // tolerance fallback for edges whose endpoints straddled a rounding cell
    let close = |p: [f64; 2], q: [f64; 2]| {
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() < 1e-9
    };
    let unmatched: Vec<usize> = (0..records.len()).filter(|&i| !matched[i]).collect();
    for (ii, &i) in unmatched.iter().enumerate() {
        if matched[i] {
            continue;
        }
        for &j in &unmatched[ii + 1..] {
            if matched[j] || records[i].elem == records[j].elem {
                continue;
            }
            let same = close(records[i].p0, records[j].p0) && close(records[i].p1, records[j].p1);
            let flip = close(records[i].p0, records[j].p1) && close(records[i].p1, records[j].p0);
            if same || flip {
                pairs.push(SharedEdge {
                    a: (records[i].elem, records[i].edge),
                    b: (records[j].elem, records[j].edge),
                    flipped: flip,
                });
                matched[i] = true;
                matched[j] = true;
                break;
            }
        }
    }
    pairs.sort_by_key(|p| (p.a, p.b));
    pairs
}

/// Build the O-grid asymptotic mesh: a collar of `n_collar` boundary
/// elements of depth `rho0`, a ring of `n_collar` ruled transition patches,
/// and the central patch. `n_collar` must be a multiple of 4 so the central
/// patch subdivision matches the ring conformally; its corners sit at half
/// the depth-`rho0` offset curve.
pub fn make_ogrid_mesh(
    curve: &BoundaryCurve,
    n_collar: usize,
    rho0: f64,
) -> Result<AsymptoticMesh2d, Geom2dError> {
    curve.validate()?;
    if n_collar < 4 || n_collar % 4 != 0 {
        return Err(Geom2dError::InvalidCollarCount(n_collar));
    }
    let min_radius = curve.min_curvature_radius();
    if rho0 >= min_radius {
        return Err(Geom2dError::CurvatureViolation { rho0, min_radius });
    }
    let n = n_collar;
    let m = n / 4;
    let dtheta = curve.period() / n as f64;
    let thetas: Vec<f64> = (0..=n).map(|j| j as f64 * dtheta).collect();

    let mut elements = Vec::new();
    // collar sector j covers [theta_j, theta_{j+1}]; theta decreases with
    // eta so that det J > 0
    for j in 0..n {
        elements.push(ElementMap2d {
            kind: MapKind::Asymptotic,
            geometry: Geometry::Collar {
                curve: curve.clone(),
                theta0: thetas[j + 1],
                theta1: thetas[j],
                rho0,
            },
        });
    }

    // central patch: bilinear on corners at half depth of the inner curve,
    // aligned with every m-th sector boundary
    let corner = |k: usize| -> [f64; 2] {
        let c = curve.offset_point(thetas[(k * m) % n], rho0);
        [0.5 * c[0], 0.5 * c[1]]
    };
    let q = [corner(0), corner(1), corner(2), corner(3)];
    let central = move |s: f64, t: f64| -> [f64; 2] {
        let mut p = [0.0; 2];
        for d in 0..2 {
            p[d] = (1.0 - s) * (1.0 - t) * q[0][d]
                + s * (1.0 - t) * q[1][d]
                + s * t * q[2][d]
                + (1.0 - s) * t * q[3][d];
        }
        p
    };
    // boundary nodes of the central patch, one per sector boundary, walked
    // counterclockwise starting at corner 0
    let central_node = |j: usize| -> [f64; 2] {
        let side = j / m;
        let r = (j % m) as f64 / m as f64;
        match side {
            0 => central(r, 0.0),
            1 => central(1.0, r),
            2 => central(1.0 - r, 1.0),
            _ => central(0.0, 1.0 - r),
        }
    };

    // transition ring: ruled patches between inner-curve sectors and the
    // central boundary edges, sharing the collar's eta parameterization
    for j in 0..n {
        elements.push(ElementMap2d {
            kind: MapKind::Asymptotic,
            geometry: Geometry::Ruled {
                curve: curve.clone(),
                theta0: thetas[j + 1],
                theta1: thetas[j],
                rho0,
                r0: central_node((j + 1) % n),
                r1: central_node(j),
            },
        });
    }

    // central cells
    for a in 0..m {
        for b in 0..m {
            let s0 = a as f64 / m as f64;
            let s1 = (a + 1) as f64 / m as f64;
            let t0 = b as f64 / m as f64;
            let t1 = (b + 1) as f64 / m as f64;
            elements.push(ElementMap2d {
                kind: MapKind::Asymptotic,
                geometry: Geometry::Bilinear {
                    corners: [
                        central(s0, t0),
                        central(s1, t0),
                        central(s1, t1),
                        central(s0, t1),
                    ],
                },
            });
        }
    }

    for (i, el) in elements.iter().enumerate() {
        el.check_jacobian(i)?;
    }
    let adjacency = compute_adjacency(&elements);
    Ok(AsymptoticMesh2d {
        curve: curve.clone(),
        elements,
        adjacency,
        boundary: (0..n).collect(),
        rho0,
    })
}

// -------------------------------------------------------- needle splitting

/// Boundary layer mesh: the asymptotic mesh with each boundary element
/// split at `lambda * p * eps` into a needle and a regular descendant
/// (unless `lambda * p * eps >= 1/2`, in which case the asymptotic mesh is
/// used as is).
#[derive(Debug, Clone)]
pub struct BlMesh2d {
    pub parent: AsymptoticMesh2d,
    pub lambda: f64,
    pub degree: usize,
    pub epsilon: f64,
    pub regime: MeshRegime,
    /// Needle width `lambda * p * eps` (meaningful in the needle regime).
    pub layer_width: f64,
    pub elements: Vec<ElementMap2d>,
    /// Parent element index for every element.
    pub parent_of: Vec<usize>,
    pub adjacency: Vec<SharedEdge>,
    /// Elements with an edge on the boundary (needles, or the collar
    /// elements themselves in the asymptotic regime).
    pub boundary: Vec<usize>,
}

impl BlMesh2d {
    /// For every parent element, the list of `(element index, xi0, xi1)`
    /// descendants covering it, ordered by `xi0`. Needle descendants cover
    /// `[0, layer_width]`, regular descendants the rest; untouched elements
    /// cover the full range.
    pub fn descendants(&self) -> Vec<Vec<(usize, f64, f64)>> {
        let mut out = vec![Vec::new(); self.parent.elements.len()];
        for (e, &pe) in self.parent_of.iter().enumerate() {
            let (x0, x1) = match self.elements[e].kind {
                MapKind::Needle => (0.0, self.layer_width),
                MapKind::RegularDescendant => (self.layer_width, 1.0),
                MapKind::Asymptotic => (0.0, 1.0),
            };
            out[pe].push((e, x0, x1));
        }
        for list in out.iter_mut() {
            list.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        }
        out
    }

    /// Build a trivial boundary layer mesh that is just the asymptotic mesh
    /// (used to host spaces on the coarse mesh itself).
    pub fn asymptotic(mesh: &AsymptoticMesh2d) -> BlMesh2d {
        BlMesh2d {
            parent: mesh.clone(),
            lambda: 1.0,
            degree: 1,
            epsilon: 1.0,
            regime: MeshRegime::Asymptotic,
            layer_width: 1.0,
            elements: mesh.elements.clone(),
            parent_of: (0..mesh.elements.len()).collect(),
            adjacency: mesh.adjacency.clone(),
            boundary: mesh.boundary.clone(),
        }
    }
}

/// Split the boundary elements of `mesh` into needle and regular
/// descendants for the given `(lambda, p, eps)`.
pub fn split_needles(
    mesh: &AsymptoticMesh2d,
    lambda: f64,
    degree: usize,
    epsilon: f64,
) -> Result<BlMesh2d, Geom2dError> {
    assert!(lambda > 0.0 && degree >= 1);
    assert!(epsilon > 0.0 && epsilon <= 1.0);
    let width = lambda * degree as f64 * epsilon;
    if width >= 0.5 {
        return Ok(BlMesh2d {
            parent: mesh.clone(),
            lambda,
            degree,
            epsilon,
            regime: MeshRegime::Asymptotic,
            layer_width: width,
            elements: mesh.elements.clone(),
            parent_of: (0..mesh.elements.len()).collect(),
            adjacency: mesh.adjacency.clone(),
            boundary: mesh.boundary.clone(),
        });
    }
    let n = mesh.boundary.len();
    let mut elements = Vec::with_capacity(mesh.elements.len() + n);
    let mut parent_of = Vec::with_capacity(mesh.elements.len() + n);
    // needles first, then regular descendants, then the untouched interior
    for &i in &mesh.boundary {
        elements.push(ElementMap2d {
            kind: MapKind::Needle,
            geometry: Geometry::Restricted {
                parent: Arc::new(mesh.elements[i].geometry.clone()),
                x0: 0.0,
                x1: width,
            },
        });
        parent_of.push(i);
    }
    for &i in &mesh.boundary {
        elements.push(ElementMap2d {
            kind: MapKind::RegularDescendant,
            geometry: Geometry::Restricted {
                parent: Arc::new(mesh.elements[i].geometry.clone()),
                x0: width,
                x1: 1.0,
            },
        });
        parent_of.push(i);
    }
    for (i, el) in mesh.elements.iter().enumerate() {
        if !mesh.boundary.contains(&i) {
            elements.push(el.clone());
            parent_of.push(i);
        }
    }
    for (i, el) in elements.iter().enumerate() {
        el.check_jacobian(i)?;
    }
    let adjacency = compute_adjacency(&elements);
    Ok(BlMesh2d {
        parent: mesh.clone(),
        lambda,
        degree,
        epsilon,
        regime: MeshRegime::ThreeElement,
        layer_width: width,
        elements,
        parent_of,
        adjacency,
        boundary: (0..n).collect(),
    })
}

// -------------------------------------------------------------- utilities

/// Total area by per-element Gauss quadrature of `|det J|` (24 points per
/// direction; the maps are analytic, not polynomial).
pub fn mesh_area(elements: &[ElementMap2d]) -> f64 {
    let rule = crate::poly_quad::gauss_rule(24);
    let mut area = 0.0;
    for el in elements {
        for (i, &ti) in rule.nodes.iter().enumerate() {
            for (j, &tj) in rule.nodes.iter().enumerate() {
                let xi = 0.5 * (ti + 1.0);
                let eta = 0.5 * (tj + 1.0);
                let w = rule.weights[i] * rule.weights[j] * 0.25;
                area += w * el.det_jacobian(xi, eta).abs();
            }
        }
    }
    area
}

/// Largest pointwise mismatch across all shared edges (50 samples each).
pub fn max_conformity_gap(elements: &[ElementMap2d], adjacency: &[SharedEdge]) -> f64 {
    let mut worst = 0.0f64;
    for pair in adjacency {
        for k in 0..=50 {
            let s = k as f64 / 50.0;
            let pa = elements[pair.a.0].edge_point(pair.a.1, s);
            let sb = if pair.flipped { 1.0 - s } else { s };
            let pb = elements[pair.b.0].edge_point(pair.b.1, sb);
            let gap = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
            worst = worst.max(gap);
        }
    }
    worst
}

/// Debug dump: sampled element outlines as a standalone SVG document.
pub fn mesh_svg(elements: &[ElementMap2d]) -> String {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut outlines = Vec::new();
    for el in elements {
        let mut pts = Vec::new();
        for e in [2usize, 1, 3, 0] {
            // walk edges in a loop around the element
            for k in 0..=24 {
                let s = k as f64 / 24.0;
                let s = match e {
                    3 | 0 => 1.0 - s,
                    _ => s,
                };
                let p = el.edge_point(e, s);
                pts.push(p);
                for d in 0..2 {
                    lo[d] = lo[d].min(p[d]);
                    hi[d] = hi[d].max(p[d]);
                }
            }
        }
        outlines.push(pts);
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let scale = 700.0 / span;
    let px = |p: [f64; 2]| -> (f64, f64) {
        (
            20.0 + (p[0] - lo[0]) * scale,
            20.0 + (hi[1] - p[1]) * scale,
        )
    };
    let width = 40.0 + (hi[0] - lo[0]) * scale;
    let height = 40.0 + (hi[1] - lo[1]) * scale;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for pts in &outlines {
        let mut d = String::from("M");
        for (i, &p) in pts.iter().enumerate() {
            let (x, y) = px(p);
            if i == 0 {
                d.push_str(&format!("{x:.2} {y:.2}"));
            } else {
                d.push_str(&format!(" L{x:.2} {y:.2}"));
            }
        }
        d.push('Z');
        svg.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"#1f4e79\" stroke-width=\"1\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
