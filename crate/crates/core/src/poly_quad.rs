//! Legendre polynomials, Gauss and Gauss-Lobatto quadrature, hierarchical
//! shape functions, and Gauss-Lobatto interpolation on the reference
//! interval `[-1, 1]`.
//!
//! Everything downstream (element matrices, norm quadrature, interpolation
//! operators) is built on these primitives. Nodes are computed by Newton
//! iteration on the Legendre recurrences to machine accuracy; no tables.

/// Legendre polynomial `P_p(t)` by the three-term recurrence.
pub fn legendre_value(p: usize, t: f64) -> f64 {
    legendre_pair(p, t).0
}

/// `(P_p(t), P_p'(t))` by simultaneous recurrence.
pub fn legendre_pair(p: usize, t: f64) -> (f64, f64) {
    if p == 0 {
        return (1.0, 0.0);
    }
    let (mut v0, mut v1) = (1.0, t);
    let (mut d0, mut d1) = (0.0, 1.0);
    for k in 2..=p {
        let kf = k as f64;
        let v2 = ((2.0 * kf - 1.0) * t * v1 - (kf - 1.0) * v0) / kf;
        let d2 = ((2.0 * kf - 1.0) * (v1 + t * d1) - (kf - 1.0) * d0) / kf;
        v0 = v1;
        v1 = v2;
        d0 = d1;
        d1 = d2;
    }
    (v1, d1)
}

/// A quadrature rule on the reference interval `[-1, 1]`.
///
/// `order` is the exactness degree: monomials `t^k` with `k <= order` are
/// integrated exactly (up to roundoff). Nodes are sorted ascending and the
/// weights are positive and sum to 2.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadRule {
    /// Number of points.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Approximate `∫_{-1}^{1} f(t) dt`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }

    /// Nodes and weights mapped affinely to `[a, b]`.
    pub fn mapped_to(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let x = self.nodes.iter().map(|&t| mid + half * t).collect();
        let w = self.weights.iter().map(|&w| w * half).collect();
        (x, w)
    }
}

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Gauss-Legendre rule with `n >= 1` points; exactness degree `2n - 1`.
pub fn gauss_rule(n: usize) -> QuadRule {
    assert!(n >= 1, "gauss_rule requires n >= 1");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev initial guess for the i-th largest root of P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (v, d) = legendre_pair(n, z);
            let dz = v / d;
            z -= dz;
            if dz.abs() <= NEWTON_TOL {
                break;
            }
        }
        if n % 2 == 1 && i == m - 1 {
            z = 0.0; // middle root is exactly zero for odd n
        }
        let (_, d) = legendre_pair(n, z);
        let w = 2.0 / ((1.0 - z * z) * d * d);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    QuadRule {
        nodes,
        weights,
        order: 2 * n - 1,
    }
}

/// Gauss-Lobatto rule with `n >= 2` points including the endpoints `±1`;
/// exactness degree `2n - 3`.
pub fn gauss_lobatto_rule(n: usize) -> QuadRule {
    assert!(n >= 2, "gauss_lobatto_rule requires n >= 2");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[n - 1] = 1.0;
    let q = n - 1; // interior nodes are the roots of P_q'
    let endpoint_w = 2.0 / (n as f64 * (n as f64 - 1.0));
    weights[0] = endpoint_w;
    weights[n - 1] = endpoint_w;
    let m = n / 2;
    for i in 1..m {
        // Chebyshev-Lobatto initial guess, refined by Newton on P_q'.
        let mut z = (std::f64::consts::PI * i as f64 / q as f64).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (v, d) = legendre_pair(q, z);
            // (1 - z^2) P_q'' = 2 z P_q' - q (q + 1) P_q
            let dd = (2.0 * z * d - q as f64 * (q as f64 + 1.0) * v) / (1.0 - z * z);
            let dz = d / dd;
            z -= dz;
            if dz.abs() <= NEWTON_TOL {
                break;
            }
        }
        let v = legendre_value(q, z);
        let w = endpoint_w / (v * v);
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let v = legendre_value(q, 0.0);
        weights[n / 2] = endpoint_w / (v * v);
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    QuadRule {
        nodes,
        weights,
        order: 2 * n - 3,
    }
}

/// Hierarchical shape functions of degree `p >= 1` on `[-1, 1]`.
///
/// Function 0 is the left vertex hat `(1 - t)/2`, function 1 the right
/// vertex hat `(1 + t)/2`; functions `j = 2..=p` are integrated Legendre
/// polynomials `(P_j - P_{j-2}) / sqrt(2 (2j - 1))`, which vanish at `±1`
/// and have unit `L2` norm of the derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeSet {
    degree: usize,
}

impl ShapeSet {
    pub fn new(degree: usize) -> Self {
        assert!(degree >= 1, "shape set requires degree >= 1");
        ShapeSet { degree }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of shape functions, `p + 1`.
    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Values and first derivatives of all `p + 1` functions at `t`.
    pub fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let p = self.degree;
        let mut values = vec![0.0; p + 1];
        let mut derivs = vec![0.0; p + 1];
        values[0] = 0.5 * (1.0 - t);
        derivs[0] = -0.5;
        values[1] = 0.5 * (1.0 + t);
        derivs[1] = 0.5;
        if p >= 2 {
            // run the Legendre recurrence once, reusing consecutive values
            let mut leg = vec![0.0; p + 1];
            let mut dleg = vec![0.0; p + 1];
            leg[0] = 1.0;
            dleg[0] = 0.0;
            leg[1] = t;
            dleg[1] = 1.0;
            for k in 2..=p {
                let kf = k as f64;
                leg[k] = ((2.0 * kf - 1.0) * t * leg[k - 1] - (kf - 1.0) * leg[k - 2]) / kf;
                dleg[k] = ((2.0 * kf - 1.0) * (leg[k - 1] + t * dleg[k - 1])
                    - (kf - 1.0) * dleg[k - 2])
                    / kf;
            }
            for j in 2..=p {
                let scale = 1.0 / (2.0 * (2.0 * j as f64 - 1.0)).sqrt();
                values[j] = scale * (leg[j] - leg[j - 2]);
                derivs[j] = scale * (dleg[j] - dleg[j - 2]);
            }
        }
        (values, derivs)
    }
}

/// A polynomial stored as coefficients in the Legendre basis on `[-1, 1]`,
/// `q(t) = sum_k coeffs[k] P_k(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreSeries {
    pub coeffs: Vec<f64>,
}

impl LegendreSeries {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Value at `t`. The recurrence is valid for any real `t`, which the
    /// decomposition machinery uses to extend polynomials slightly past
    /// `[-1, 1]`.
    pub fn eval(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).0
    }

    /// `(value, derivative)` at `t`.
    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        let n = self.coeffs.len();
        if n == 0 {
            return (0.0, 0.0);
        }
        let mut value = self.coeffs[0];
        let mut deriv = 0.0;
        if n == 1 {
            return (value, deriv);
        }
        let (mut v0, mut v1) = (1.0, t);
        let (mut d0, mut d1) = (0.0, 1.0);
        value += self.coeffs[1] * v1;
        deriv += self.coeffs[1] * d1;
        for k in 2..n {
            let kf = k as f64;
            let v2 = ((2.0 * kf - 1.0) * t * v1 - (kf - 1.0) * v0) / kf;
            let d2 = ((2.0 * kf - 1.0) * (v1 + t * d1) - (kf - 1.0) * d0) / kf;
            value += self.coeffs[k] * v2;
            deriv += self.coeffs[k] * d2;
            v0 = v1;
            v1 = v2;
            d0 = d1;
            d1 = d2;
        }
        (value, deriv)
    }
}

/// Degree-`p` interpolant of `f` at the `p + 1` Gauss-Lobatto nodes.
///
/// Coefficients come from the discrete Legendre transform: the Gauss-Lobatto
/// rule with `p + 1` points makes `P_0, ..., P_p` orthogonal in the discrete
/// inner product, so the transform is exact interpolation. The identity on
/// polynomials of degree `<= p`.
pub fn gl_interpolate(f: impl Fn(f64) -> f64, p: usize) -> LegendreSeries {
    let rule = gauss_lobatto_rule(p + 1);
    let fvals: Vec<f64> = rule.nodes.iter().map(|&t| f(t)).collect();
    let mut coeffs = vec![0.0; p + 1];
    for (k, c) in coeffs.iter_mut().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..rule.len() {
            let pk = legendre_value(k, rule.nodes[i]);
            num += rule.weights[i] * fvals[i] * pk;
            den += rule.weights[i] * pk * pk;
        }
        *c = num / den;
    }
    LegendreSeries { coeffs }
}

/// Coefficients of the polynomial `series` in the degree-`p` hierarchical
/// shape basis. Exact for `series.degree() <= p`.
pub fn shape_coeffs_from_legendre(series: &LegendreSeries, p: usize) -> Vec<f64> {
    let mut leg = series.coeffs.clone();
    leg.resize(p + 1, 0.0);
    let mut out = vec![0.0; p + 1];
    let left = series.eval(-1.0);
    let right = series.eval(1.0);
    out[0] = left;
    out[1] = right;
    // subtract the vertex hats: N0 = (P0 - P1)/2, N1 = (P0 + P1)/2
    leg[0] -= 0.5 * (left + right);
    leg[1] -= 0.5 * (right - left);
    // internal function j contributes 1/sqrt(2(2j-1)) * (P_j - P_{j-2});
    // peel off coefficients from the top
    for j in (2..=p).rev() {
        let scale = 1.0 / (2.0 * (2.0 * j as f64 - 1.0)).sqrt();
        out[j] = leg[j] / scale;
        leg[j - 2] += leg[j];
        leg[j] = 0.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn monomial_integral(k: usize) -> f64 {
        if k % 2 == 1 {
            0.0
        } else {
            2.0 / (k as f64 + 1.0)
        }
    }

    #[test]
    fn legendre_closed_forms() {
        assert_abs_diff_eq!(legendre_value(0, 0.3), 1.0);
        assert_abs_diff_eq!(legendre_value(1, -0.7), -0.7);
        assert_abs_diff_eq!(legendre_value(2, 0.5), -0.125, epsilon = 1e-15);
    }

    #[test]
    fn gauss_small_rules() {
        let r1 = gauss_rule(1);
        assert_eq!(r1.nodes, vec![0.0]);
        assert_eq!(r1.weights, vec![2.0]);

        let r2 = gauss_rule(2);
        let c = 1.0 / 3.0_f64.sqrt();
        assert_abs_diff_eq!(r2.nodes[0], -c, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.nodes[1], c, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.weights[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.weights[1], 1.0, epsilon = 1e-15);

        let r3 = gauss_rule(3);
        assert_abs_diff_eq!(r3.integrate(|t| t.powi(4)), 0.4, epsilon = 1e-14);
    }

    #[test]
    fn lobatto_small_rules() {
        let r2 = gauss_lobatto_rule(2);
        assert_eq!(r2.nodes, vec![-1.0, 1.0]);
        assert_eq!(r2.weights, vec![1.0, 1.0]);

        let r3 = gauss_lobatto_rule(3);
        assert_eq!(r3.nodes, vec![-1.0, 0.0, 1.0]);
        assert_abs_diff_eq!(r3.weights[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r3.weights[1], 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r3.weights[2], 1.0 / 3.0, epsilon = 1e-15);

        let r4 = gauss_lobatto_rule(4);
        assert_abs_diff_eq!(r4.integrate(|t| t.powi(4)), 0.4, epsilon = 1e-14);
    }

    #[test]
    fn quadrature_exactness_and_weight_sum() {
        for n in 1..=16 {
            let rule = gauss_rule(n);
            let wsum: f64 = rule.weights.iter().sum();
            assert_abs_diff_eq!(wsum, 2.0, epsilon = 1e-14);
            for node_pair in rule.nodes.windows(2) {
                assert!(node_pair[0] < node_pair[1], "nodes not sorted at n={n}");
            }
            for k in 0..=rule.order {
                let exact = monomial_integral(k);
                let got = rule.integrate(|t| t.powi(k as i32));
                let scale = exact.abs().max(1.0);
                assert!(
                    (got - exact).abs() / scale < 1e-13,
                    "gauss n={n} monomial {k}: {got} vs {exact}"
                );
            }
        }
        for n in 2..=16 {
            let rule = gauss_lobatto_rule(n);
            let wsum: f64 = rule.weights.iter().sum();
            assert_abs_diff_eq!(wsum, 2.0, epsilon = 1e-14);
            for k in 0..=rule.order {
                let exact = monomial_integral(k);
                let got = rule.integrate(|t| t.powi(k as i32));
                let scale = exact.abs().max(1.0);
                assert!(
                    (got - exact).abs() / scale < 1e-13,
                    "lobatto n={n} monomial {k}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn shape_vertex_values() {
        let s = ShapeSet::new(1);
        let (v, _) = s.eval(0.0);
        assert_eq!(v, vec![0.5, 0.5]);
        for p in 1..=9 {
            let s = ShapeSet::new(p);
            let (vm, _) = s.eval(-1.0);
            let (vp, _) = s.eval(1.0);
            assert_abs_diff_eq!(vm[0], 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(vp[0], 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(vm[1], 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(vp[1], 1.0, epsilon = 1e-14);
            for j in 2..=p {
                assert_abs_diff_eq!(vm[j], 0.0, epsilon = 1e-14);
                assert_abs_diff_eq!(vp[j], 0.0, epsilon = 1e-14);
            }
        }
    }

    /// Span check: reconstruct monomials from the shape set by least squares
    /// (normal equations solved with a dense elimination written here, so the
    /// check does not route through the shape basis itself).
    #[test]
    fn shape_set_spans_polynomials() {
        for p in 1..=8 {
            let s = ShapeSet::new(p);
            let npts = 40;
            let ts: Vec<f64> = (0..npts)
                .map(|i| -1.0 + 2.0 * i as f64 / (npts - 1) as f64)
                .collect();
            let rows: Vec<Vec<f64>> = ts.iter().map(|&t| s.eval(t).0).collect();
            for k in 0..=p {
                // normal equations A^T A c = A^T y
                let n = p + 1;
                let mut ata = vec![vec![0.0; n]; n];
                let mut aty = vec![0.0; n];
                for (row, &t) in rows.iter().zip(&ts) {
                    let y = t.powi(k as i32);
                    for i in 0..n {
                        aty[i] += row[i] * y;
                        for j in 0..n {
                            ata[i][j] += row[i] * row[j];
                        }
                    }
                }
                let c = solve_dense(&mut ata, &mut aty);
                // evaluate the reconstruction at fresh points
                for q in 0..17 {
                    let t = -1.0 + 2.0 * (q as f64 + 0.5) / 17.0;
                    let (v, _) = s.eval(t);
                    let got: f64 = v.iter().zip(&c).map(|(a, b)| a * b).sum();
                    assert!(
                        (got - t.powi(k as i32)).abs() < 1e-12,
                        "p={p} monomial {k} at t={t}"
                    );
                }
            }
        }
    }

    fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let fac = a[row][col] / a[col][col];
                for j in col..n {
                    a[row][j] -= fac * a[col][j];
                }
                b[row] -= fac * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut s = b[row];
            for j in row + 1..n {
                s -= a[row][j] * x[j];
            }
            x[row] = s / a[row][row];
        }
        x
    }

    #[test]
    fn shape_derivatives_match_finite_differences() {
        let h = 1e-6;
        for p in [1, 3, 6, 9] {
            let s = ShapeSet::new(p);
            for q in 0..20 {
                let t = -0.95 + 1.9 * q as f64 / 19.0;
                let (_, d) = s.eval(t);
                let (vp, _) = s.eval(t + h);
                let (vm, _) = s.eval(t - h);
                for j in 0..=p {
                    let fd = (vp[j] - vm[j]) / (2.0 * h);
                    assert!(
                        (d[j] - fd).abs() < 1e-6,
                        "p={p} shape {j} at t={t}: {} vs {}",
                        d[j],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let q = gl_interpolate(|t| t * t, 2);
        // t^2 = (2 P_2 + P_0) / 3
        assert_abs_diff_eq!(q.coeffs[0], 1.0 / 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(q.coeffs[1], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(q.coeffs[2], 2.0 / 3.0, epsilon = 1e-13);

        for p in 1..=10 {
            let c = gl_interpolate(|_| 1.0, p);
            assert_abs_diff_eq!(c.coeffs[0], 1.0, epsilon = 1e-13);
            for k in 1..=p {
                assert_abs_diff_eq!(c.coeffs[k], 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn interpolation_of_exponential() {
        let q = gl_interpolate(|t| t.exp(), 8);
        let mut max_err = 0.0_f64;
        for i in 0..101 {
            let t = -1.0 + 2.0 * i as f64 / 100.0;
            max_err = max_err.max((q.eval(t) - t.exp()).abs());
        }
        assert!(max_err < 1e-6, "max interpolation error {max_err}");
    }

    #[test]
    fn legendre_series_derivative() {
        let q = LegendreSeries {
            coeffs: vec![0.3, -1.2, 0.7, 0.05],
        };
        let h = 1e-6;
        for i in 0..11 {
            let t = -0.9 + 1.8 * i as f64 / 10.0;
            let (_, d) = q.eval_with_derivative(t);
            let fd = (q.eval(t + h) - q.eval(t - h)) / (2.0 * h);
            assert!((d - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn shape_coeff_conversion_round_trip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for p in 1..=9 {
            let series = LegendreSeries {
                coeffs: (0..=p).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            };
            let shape = shape_coeffs_from_legendre(&series, p);
            let set = ShapeSet::new(p);
            for i in 0..25 {
                let t = -1.0 + 2.0 * i as f64 / 24.0;
                let (v, _) = set.eval(t);
                let got: f64 = v.iter().zip(&shape).map(|(a, b)| a * b).sum();
                assert!((got - series.eval(t)).abs() < 1e-12);
            }
        }
    }

    proptest::proptest! {
        /// gl_interpolate is the identity on polynomials of degree <= p.
        #[test]
        fn interpolation_projection_property(
            coeffs in proptest::collection::vec(-2.0..2.0f64, 1..10)
        ) {
            let p = coeffs.len() - 1;
            let series = LegendreSeries { coeffs };
            let q = gl_interpolate(|t| series.eval(t), p.max(1));
            for i in 0..33 {
                let t = -1.0 + 2.0 * i as f64 / 32.0;
                proptest::prop_assert!((q.eval(t) - series.eval(t)).abs() < 1e-11);
            }
        }
    }
}
