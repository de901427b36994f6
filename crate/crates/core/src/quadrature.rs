//! One-dimensional Gauss rules, double-exponential rules, radial panel grids
//! and hyperspherical product rules on S^{d-1}.

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

use crate::special::beta;

/// A quadrature rule: nodes with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Affine image of a rule on [-1, 1] onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> Rule {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule {
            nodes: self.nodes.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| w * half).collect(),
        }
    }

    /// Concatenation of several rules (for composite panels).
    pub fn concat(rules: impl IntoIterator<Item = Rule>) -> Rule {
        let mut out = Rule {
            nodes: Vec::new(),
            weights: Vec::new(),
        };
        for r in rules {
            out.nodes.extend(r.nodes);
            out.weights.extend(r.weights);
        }
        out
    }
}

/// Gauss-Legendre rule with `n` nodes on [-1, 1].
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Jacobi rule on [-1, 1] for the weight (1-x)^alpha (1+x)^beta,
/// computed by the Golub-Welsch eigenvalue method.
pub fn gauss_jacobi(n: usize, alpha: f64, beta_: f64) -> Rule {
    assert!(n >= 1 && alpha > -1.0 && beta_ > -1.0);
    if alpha == 0.0 && beta_ == 0.0 {
        return gauss_legendre(n);
    }
    let ab = alpha + beta_;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    diag[0] = (beta_ - alpha) / (ab + 2.0);
    for (k, d) in diag.iter_mut().enumerate().skip(1) {
        let kf = k as f64;
        let t = 2.0 * kf + ab;
        *d = (beta_ * beta_ - alpha * alpha) / (t * (t + 2.0));
    }
    for (i, o) in off.iter_mut().enumerate() {
        let k = (i + 1) as f64;
        let t = 2.0 * k + ab;
        let b2 = if i == 0 {
            4.0 * (1.0 + alpha) * (1.0 + beta_) / ((2.0 + ab).powi(2) * (3.0 + ab))
        } else {
            4.0 * k * (k + alpha) * (k + beta_) * (k + ab) / (t * t * (t + 1.0) * (t - 1.0))
        };
        *o = b2.sqrt();
    }
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = diag[i];
        if i + 1 < n {
            jac[(i, i + 1)] = off[i];
            jac[(i + 1, i)] = off[i];
        }
    }
    let mu0 = 2f64.powf(ab + 1.0) * beta(alpha + 1.0, beta_ + 1.0);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Tanh-sinh (double exponential) rule on [0, 1] with step `h`.
///
/// Nodes closer than `min_gap` to either endpoint are dropped; the rule
/// tolerates integrable power singularities at both ends.
pub fn tanh_sinh_unit(h: f64, min_gap: f64) -> Rule {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let half_pi = 0.5 * PI;
    let mut push = |k: i64| -> bool {
        let t = k as f64 * h;
        let u = half_pi * t.sinh();
        let ch = u.cosh();
        // x = (1 + tanh u)/2 written to keep precision near both ends
        let e = (-2.0 * u.abs()).exp();
        let small = e / (1.0 + e);
        let (x, gap) = if u >= 0.0 { (1.0 - small, small) } else { (small, small) };
        let w = 0.5 * h * half_pi * t.cosh() / (ch * ch);
        if gap < min_gap || w < 1e-300 {
            return false;
        }
        nodes.push(x);
        weights.push(w);
        true
    };
    push(0);
    let mut k = 1;
    loop {
        let a = push(k);
        let b = push(-k);
        if !a && !b {
            break;
        }
        k += 1;
        if k > 10_000 {
            break;
        }
    }
    let mut pairs: Vec<(f64, f64)> = nodes.into_iter().zip(weights).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Composite Gauss-Legendre rule over consecutive breakpoints.
pub fn composite(breaks: &[f64], nodes_per_panel: usize) -> Rule {
    let base = gauss_legendre(nodes_per_panel);
    Rule::concat(
        breaks
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| base.mapped(w[0], w[1])),
    )
}

/// Breakpoints `start, start*ratio, ...` up to and including `end`, with
/// extra points merged in (sorted, deduplicated).
pub fn geometric_breaks(start: f64, end: f64, ratio: f64, extra: &[f64]) -> Vec<f64> {
    assert!(start > 0.0 && end > start && ratio > 1.0);
    let mut b = vec![start];
    let mut x = start;
    while x * ratio < end * (1.0 - 1e-12) {
        x *= ratio;
        b.push(x);
    }
    b.push(end);
    for &e in extra {
        if e > start && e < end {
            b.push(e);
        }
    }
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    b
}

/// Composite rule for ∫_{-1}^{1} f(c)(1-c²)^g dc / ∫(1-c²)^g with panels
/// refined geometrically toward c = -1. Weights are normalised to sum to 1.
pub struct CosineRule {
    g: f64,
    total: f64,
    low: Rule,
    mid: Rule,
    high: Rule,
}

impl CosineRule {
    /// `nodes` per panel, weight exponent g.
    pub fn new(nodes: usize, g: f64) -> Self {
        CosineRule {
            g,
            total: 2f64.powf(2.0 * g + 1.0) * beta(g + 1.0, g + 1.0),
            low: gauss_jacobi(nodes, 0.0, g),
            mid: gauss_legendre(nodes),
            high: gauss_jacobi(nodes, g, 0.0),
        }
    }

    /// Calls `f(c, w)` for every node; `width` is the scale of the feature
    /// near c = -1 that the first panels must resolve.
    pub fn for_each(&self, width: f64, f: &mut impl FnMut(f64, f64)) {
        let g = self.g;
        let mut breaks = vec![-1.0];
        let mut h = 0.5 * width;
        while -1.0 + h < 0.5 {
            breaks.push(-1.0 + h);
            h *= 2.0;
        }
        breaks.push(1.0);
        let last = breaks.len() - 2;
        for (k, w) in breaks.windows(2).enumerate() {
            let (lo, hi) = (w[0], w[1]);
            let half = 0.5 * (hi - lo);
            if k == 0 {
                let scale = half.powf(g + 1.0) / self.total;
                for (&x, &wx) in self.low.nodes.iter().zip(&self.low.weights) {
                    let c = lo + half * (1.0 + x);
                    f(c, wx * scale * (1.0 - c).powf(g));
                }
            } else if k == last {
                let scale = half.powf(g + 1.0) / self.total;
                for (&x, &wx) in self.high.nodes.iter().zip(&self.high.weights) {
                    let c = hi - half * (1.0 - x);
                    f(c, wx * scale * (1.0 + c).powf(g));
                }
            } else {
                for (&x, &wx) in self.mid.nodes.iter().zip(&self.mid.weights) {
                    let c = lo + half * (1.0 + x);
                    f(c, wx * half * (1.0 - c * c).powf(g) / self.total);
                }
            }
        }
    }
}

/// Product rule on the unit sphere S^{d-1} in hyperspherical coordinates:
/// Gauss-Gegenbauer nodes in each polar angle and an equispaced azimuth.
/// The polar axis is the first vector of an orthonormal frame, so functions
/// axisymmetric about that axis are integrated with the fewest distinct
/// values of the polar angle.
#[derive(Debug, Clone)]
pub struct SphereRule {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl SphereRule {
    /// `n` polar nodes per angle, `2n` azimuthal nodes; identity frame.
    pub fn new(dim: usize, n: usize) -> SphereRule {
        Self::with_axis(dim, n, None)
    }

    pub fn with_axis(dim: usize, n: usize, axis: Option<&[f64]>) -> SphereRule {
        Self::graded(dim, n, n, axis)
    }

    /// Like [`SphereRule::with_axis`] with `n_axis` nodes in the polar angle
    /// measured from the axis and `n` in all other angles.
    pub fn graded(dim: usize, n_axis: usize, n: usize, axis: Option<&[f64]>) -> SphereRule {
        assert!(dim >= 1 && n >= 1 && n_axis >= 1);
        let local = local_sphere_points(dim, n_axis, n);
        let frame = orthonormal_frame(dim, axis);
        let count = local.1.len();
        let mut points = vec![0.0; count * dim];
        for k in 0..count {
            let w = &local.0[k * dim..(k + 1) * dim];
            let out = &mut points[k * dim..(k + 1) * dim];
            for (i, wi) in w.iter().enumerate() {
                if *wi == 0.0 {
                    continue;
                }
                for (o, f) in out.iter_mut().zip(&frame[i]) {
                    *o += wi * f;
                }
            }
        }
        SphereRule {
            dim,
            points,
            weights: local.1,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    /// Integral over the sphere (not the average).
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.iter().map(|(p, w)| w * f(p)).sum()
    }
}

fn local_sphere_points(dim: usize, n_axis: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    if dim == 1 {
        return (vec![1.0, -1.0], vec![1.0, 1.0]);
    }
    // polar angle rules: theta_k carries sin^{dim-1-k} theta_k, k = 1..dim-2
    let polar: Vec<Rule> = (1..dim - 1)
        .map(|k| {
            let m = (dim - 1 - k) as f64;
            let a = 0.5 * (m - 1.0);
            gauss_jacobi(if k == 1 { n_axis } else { n }, a, a)
        })
        .collect();
    let n_phi = 2 * n;
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    let mut idx = vec![0usize; polar.len()];
    loop {
        let mut w = 1.0;
        let mut sin_prod = 1.0;
        let mut coords = Vec::with_capacity(dim);
        for (r, &i) in polar.iter().zip(&idx) {
            let c = r.nodes[i];
            w *= r.weights[i];
            coords.push(sin_prod * c);
            sin_prod *= (1.0 - c * c).max(0.0).sqrt();
        }
        for j in 0..n_phi {
            let phi = 2.0 * PI * (j as f64 + 0.5) / n_phi as f64;
            pts.extend_from_slice(&coords);
            pts.push(sin_prod * phi.cos());
            pts.push(sin_prod * phi.sin());
            wts.push(w * 2.0 * PI / n_phi as f64);
        }
        // odometer
        let mut k = 0;
        loop {
            if k == idx.len() {
                return (pts, wts);
            }
            idx[k] += 1;
            if idx[k] < polar[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Orthonormal frame whose first vector is `axis` (identity if none).
pub fn orthonormal_frame(dim: usize, axis: Option<&[f64]>) -> Vec<Vec<f64>> {
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(dim);
    if let Some(a) = axis {
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(a.len() == dim && norm > 0.0);
        frame.push(a.iter().map(|x| x / norm).collect());
    }
    for i in 0..dim {
        if frame.len() == dim {
            break;
        }
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        for f in &frame {
            let d: f64 = f.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (vi, fi) in v.iter_mut().zip(f) {
                *vi -= d * fi;
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            frame.push(v.iter().map(|x| x / n).collect());
        }
    }
    frame
}

/// Halton point `index` (1-based internally) in [0,1)^dim.
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    assert!(dim <= PRIMES.len());
    PRIMES[..dim]
        .iter()
        .map(|&b| {
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index + 1;
            while i > 0 {
                f /= b as f64;
                r += f * (i % b) as f64;
                i /= b;
            }
            r
        })
        .collect()
}

/// Ordinary least squares for `y ≈ Σ_k c_k φ_k(x)`; returns the coefficients.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let n = rows.len();
    let k = rows.first()?.len();
    let a = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
    let b = nalgebra::DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let x = svd.solve(&b, 1e-14).ok()?;
    Some(x.iter().copied().collect())
}

/// Slope and intercept of the least-squares line through (x, y).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::sphere_area;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials() {
        let r = gauss_legendre(7);
        for p in 0..14 {
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert_relative_eq!(r.integrate(|x| x.powi(p)), exact, epsilon = 1e-14);
        }
    }

    #[test]
    fn jacobi_moments() {
        // ∫_{-1}^{1} (1+x)^b dx = 2^{b+1}/(b+1)
        for &b in &[-0.6, -0.2, 0.4, 1.5] {
            let r = gauss_jacobi(10, 0.0, b);
            assert_relative_eq!(r.integrate(|_| 1.0), 2f64.powf(b + 1.0) / (b + 1.0), max_relative = 1e-13);
            // ∫ x (1+x)^b = 2^{b+2}/(b+2) - 2^{b+1}/(b+1)
            let m1 = 2f64.powf(b + 2.0) / (b + 2.0) - 2f64.powf(b + 1.0) / (b + 1.0);
            assert_relative_eq!(r.integrate(|x| x), m1, max_relative = 1e-12, epsilon = 1e-14);
        }
        let g = gauss_jacobi(12, 1.5, 1.5);
        // ∫ (1-x^2)^{3/2} = 3π/8
        assert_relative_eq!(g.integrate(|_| 1.0), 3.0 * PI / 8.0, max_relative = 1e-13);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        let r = tanh_sinh_unit(0.1, 1e-300);
        assert_relative_eq!(r.integrate(|x| x.powf(-0.7)), 1.0 / 0.3, max_relative = 1e-9);
        assert_relative_eq!(r.integrate(|x| (1.0 - x).powf(1.5) * x.powf(0.4)), beta(1.4, 2.5), max_relative = 1e-10);
    }

    #[test]
    fn sphere_rule_total_area_and_moments() {
        for dim in 2..=7 {
            let rule = SphereRule::new(dim, 6);
            assert_relative_eq!(rule.integrate(|_| 1.0), sphere_area(dim), max_relative = 1e-12);
            // ∫ ω_i^2 = |S|/d
            for i in 0..dim {
                assert_relative_eq!(
                    rule.integrate(|w| w[i] * w[i]),
                    sphere_area(dim) / dim as f64,
                    max_relative = 1e-12
                );
            }
            // points lie on the sphere
            for (p, _) in rule.iter() {
                let n: f64 = p.iter().map(|x| x * x).sum();
                assert_relative_eq!(n, 1.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn rotated_sphere_rule_is_still_exact() {
        let axis = [0.3, -0.5, 0.8, 0.1];
        let rule = SphereRule::with_axis(4, 5, Some(&axis));
        let area = sphere_area(4);
        assert_relative_eq!(rule.integrate(|w| w[0] * w[0]), area / 4.0, max_relative = 1e-12);
        assert_relative_eq!(rule.integrate(|w| w[0] * w[1]), 0.0, epsilon = 1e-13);
        // ∫ ω_1^4 = 3|S|/(d(d+2))
        assert_relative_eq!(rule.integrate(|w| w[2].powi(4)), 3.0 * area / 24.0, max_relative = 1e-12);
    }

    #[test]
    fn graded_rule_is_exact_for_axial_moments() {
        let axis = [0.0, 1.0, 1.0, 0.0, 0.0];
        let rule = SphereRule::graded(5, 12, 3, Some(&axis));
        let area = sphere_area(5);
        let c = |w: &[f64]| (w[1] + w[2]) / 2f64.sqrt();
        // ∫ (ω·e)^{2k}: moments of the axial coordinate
        assert_relative_eq!(rule.integrate(|w| c(w).powi(2)), area / 5.0, max_relative = 1e-12);
        assert_relative_eq!(rule.integrate(|w| c(w).powi(10)), area * 945.0 / (5.0 * 7.0 * 9.0 * 11.0 * 13.0), max_relative = 1e-11);
    }

    #[test]
    fn cosine_rule_moments() {
        for &g in &[0.5, 1.0, 1.5] {
            let rule = CosineRule::new(10, g);
            for &width in &[1e-4, 0.01, 0.3] {
                let mut sum = 0.0;
                let mut m2 = 0.0;
                rule.for_each(width, &mut |c, w| {
                    sum += w;
                    m2 += w * c * c;
                });
                assert_relative_eq!(sum, 1.0, max_relative = 1e-12);
                // E[c²] = 1/(2g+3) under (1-c²)^g
                assert_relative_eq!(m2, 1.0 / (2.0 * g + 3.0), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let (a, b) = linear_fit(&x, &y).unwrap();
        assert_relative_eq!(a, 2.5, epsilon = 1e-12);
        assert_relative_eq!(b, -1.0, epsilon = 1e-12);
    }
}
