//! The weight K(r, y'') = 1 + ½ (v-v0)ᵀ H (v-v0) χ(|v-v0|/ϑ), v = (r, y''),
//! r = |(y_1, y_2)|, with a C^∞ cutoff χ, and its derivatives in (r, y'')
//! and in R^N.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// ψ(t) = e^{-1/t} for t > 0 and its first two derivatives.
fn psi(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let v = (-1.0 / t).exp();
    let t2 = t * t;
    (v, v / t2, v * (1.0 / (t2 * t2) - 2.0 / (t2 * t)))
}

/// Smooth cutoff: 1 on [0, ½], 0 on [1, ∞), with χ' and χ''.
pub fn cutoff(x: f64) -> (f64, f64, f64) {
    if x <= 0.5 {
        return (1.0, 0.0, 0.0);
    }
    if x >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let u = 2.0 * x - 1.0;
    let (a, a1, a2) = psi(1.0 - u);
    let (b, b1, b2) = psi(u);
    // derivatives in u: A' = -ψ'(1-u), A'' = ψ''(1-u)
    let (da, dda) = (-a1, a2);
    let (db, ddb) = (b1, b2);
    let sum = a + b;
    let dsum = da + db;
    let num = da * b - a * db;
    let c = a / sum;
    let c1 = num / (sum * sum);
    let c2 = (dda * b - a * ddb) / (sum * sum) - 2.0 * num * dsum / (sum * sum * sum);
    (c, 2.0 * c1, 4.0 * c2)
}

/// sup_{x ∈ [0,1]} x² χ(x), sampled.
fn max_profile() -> f64 {
    (0..=2000)
        .map(|k| {
            let x = k as f64 / 2000.0;
            x * x * cutoff(x).0
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    n: usize,
    r0: f64,
    y0pp: Vec<f64>,
    h: DMatrix<f64>,
    cutoff: f64,
    k_min: f64,
    k_max: f64,
}

/// Value, gradient and Hessian in the reduced variables v = (r, y'').
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedJet {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl WeightField {
    /// `hessian` is (N-1)×(N-1), given row-major.
    pub fn new(n: usize, r0: f64, y0pp: Vec<f64>, hessian: &[f64], cutoff_radius: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidDimension(n));
        }
        let d = n - 1;
        if y0pp.len() != n - 2 {
            return Err(invalid("y0_pp", format!("expected {} entries, got {}", n - 2, y0pp.len())));
        }
        if hessian.len() != d * d {
            return Err(invalid("hessian", format!("expected {} entries, got {}", d * d, hessian.len())));
        }
        if hessian.iter().chain(&y0pp).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight parameters".into()));
        }
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(invalid("r0", "must be positive"));
        }
        if !(cutoff_radius > 0.0 && cutoff_radius < r0) {
            return Err(invalid("cutoff", "need 0 < cutoff < r0 so K is smooth across y' = 0"));
        }
        let h = DMatrix::from_row_slice(d, d, hessian);
        let scale = h.abs().max().max(f64::MIN_POSITIVE);
        if (&h - h.transpose()).abs().max() > 1e-12 * scale {
            return Err(invalid("hessian", "must be symmetric"));
        }
        let tr = h.trace();
        if !(tr < 0.0) {
            return Err(invalid("hessian", format!("trace must be negative, got {tr}")));
        }
        let det = h.determinant();
        if det.abs() <= 1e-12 * scale.powi(d as i32) {
            return Err(Error::DegenerateCriticalPoint(det));
        }
        let eig = h.clone().symmetric_eigenvalues();
        let lo = eig.min();
        let hi = eig.max();
        let m = 0.5 * max_profile() * cutoff_radius * cutoff_radius;
        let k_min = 1.0 + m * lo.min(0.0);
        if !(k_min > 0.0) {
            return Err(invalid(
                "hessian",
                format!("K would become non-positive inside the cutoff (lower bound {k_min:.3})"),
            ));
        }
        Ok(WeightField {
            n,
            r0,
            y0pp,
            h,
            cutoff: cutoff_radius,
            k_min,
            k_max: 1.0 + m * hi.max(0.0),
        })
    }

    /// N = 5, r0 = 1, y0'' = 0, H = diag(-2, -1, ½, ½), cutoff ½.
    pub fn default_saddle() -> Self {
        let mut h = vec![0.0; 16];
        for (i, v) in [-2.0, -1.0, 0.5, 0.5].iter().enumerate() {
            h[i * 4 + i] = *v;
        }
        Self::new(5, 1.0, vec![0.0; 3], &h, 0.5).expect("default weight is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn y0pp(&self) -> &[f64] {
        &self.y0pp
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn hessian_row_major(&self) -> Vec<f64> {
        self.h.transpose().iter().copied().collect()
    }

    pub fn cutoff_radius(&self) -> f64 {
        self.cutoff
    }

    /// Bounds lower ≤ K ≤ upper valid everywhere.
    pub fn bounds(&self) -> (f64, f64) {
        (self.k_min, self.k_max)
    }

    /// Δ_{R^N} K at the critical point, equal to trace(H).
    pub fn laplacian_at_critical(&self) -> f64 {
        self.h.trace()
    }

    /// The critical point v0 = (r0, y0'').
    pub fn v0(&self) -> Vec<f64> {
        let mut v = vec![self.r0];
        v.extend_from_slice(&self.y0pp);
        v
    }

    /// Point of R^N with (y_1, y_2) = (r, 0) and y'' from v.
    pub fn lift(&self, v: &[f64]) -> Vec<f64> {
        let mut y = vec![v[0], 0.0];
        y.extend_from_slice(&v[1..]);
        y
    }

    fn reduce(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n, "point dimension");
        let mut v = vec![(y[0] * y[0] + y[1] * y[1]).sqrt()];
        v.extend_from_slice(&y[2..]);
        v
    }

    /// K, ∇K, Hess K in the variables v = (r, y'').
    pub fn jet_reduced(&self, v: &[f64]) -> ReducedJet {
        let d = self.n - 1;
        assert_eq!(v.len(), d, "reduced point dimension");
        let delta = DVector::from_iterator(d, v.iter().zip(self.v0()).map(|(a, b)| a - b));
        let rho = delta.norm();
        let x = rho / self.cutoff;
        let hd = &self.h * &delta;
        let q = delta.dot(&hd);
        let (c, c1, c2) = cutoff(x);
        let mut grad = &hd * c;
        let mut hess = &self.h * c;
        if c1 != 0.0 || c2 != 0.0 {
            let e = &delta / rho;
            let g1 = c1 / self.cutoff;
            grad += &e * (0.5 * q * g1);
            let e_hd = &e * hd.transpose();
            hess += (&e_hd + e_hd.transpose()) * g1;
            let eet = &e * e.transpose();
            let eye = DMatrix::<f64>::identity(d, d);
            let g2 = c2 / (self.cutoff * self.cutoff);
            hess += (eet.clone() * g2 + (eye - eet) * (g1 / rho)) * (0.5 * q);
        }
        ReducedJet {
            value: 1.0 + 0.5 * q * c,
            grad,
            hess,
        }
    }

    pub fn eval_reduced(&self, v: &[f64]) -> f64 {
        let d = self.n - 1;
        assert_eq!(v.len(), d, "reduced point dimension");
        let mut delta = [0.0; crate::bubble::MAX_DIM];
        delta[0] = v[0] - self.r0;
        for i in 1..d {
            delta[i] = v[i] - self.y0pp[i - 1];
        }
        let rho2: f64 = delta[..d].iter().map(|x| x * x).sum();
        if rho2 >= self.cutoff * self.cutoff {
            return 1.0;
        }
        let mut q = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.h[(i, j)] * delta[j];
            }
            q += delta[i] * row;
        }
        1.0 + 0.5 * q * cutoff(rho2.sqrt() / self.cutoff).0
    }

    /// K(y) for y ∈ R^N.
    pub fn eval(&self, y: &[f64]) -> f64 {
        assert_eq!(y.len(), self.n, "point dimension");
        let mut v = [0.0; crate::bubble::MAX_DIM];
        v[0] = (y[0] * y[0] + y[1] * y[1]).sqrt();
        v[1..self.n - 1].copy_from_slice(&y[2..]);
        self.eval_reduced(&v[..self.n - 1])
    }

    /// (∂K/∂r, ∂K/∂y_3, …, ∂K/∂y_N).
    pub fn grad_reduced(&self, v: &[f64]) -> Vec<f64> {
        self.jet_reduced(v).grad.iter().copied().collect()
    }

    /// ∇K in R^N; undefined on the axis y' = 0.
    pub fn grad(&self, y: &[f64]) -> Result<Vec<f64>> {
        let v = self.reduce(y);
        let r = v[0];
        if r == 0.0 {
            return Err(Error::PolarSingularity);
        }
        let g = self.jet_reduced(&v).grad;
        let mut out = vec![g[0] * y[0] / r, g[0] * y[1] / r];
        out.extend(g.iter().skip(1));
        Ok(out)
    }

    /// Hessian of K in R^N (row-major N×N).
    pub fn hess(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let v = self.reduce(y);
        let r = v[0];
        if r == 0.0 {
            return Err(Error::PolarSingularity);
        }
        let jet = self.jet_reduced(&v);
        let n = self.n;
        let mut m = DMatrix::<f64>::zeros(n, n);
        let kr = jet.grad[0];
        let krr = jet.hess[(0, 0)];
        for a in 0..2 {
            for b in 0..2 {
                let delta = if a == b { 1.0 } else { 0.0 };
                m[(a, b)] = krr * y[a] * y[b] / (r * r) + kr * (delta / r - y[a] * y[b] / (r * r * r));
            }
            for k in 2..n {
                let v = jet.hess[(0, k - 1)] * y[a] / r;
                m[(a, k)] = v;
                m[(k, a)] = v;
            }
        }
        for k in 2..n {
            for l in 2..n {
                m[(k, l)] = jet.hess[(k - 1, l - 1)];
            }
        }
        Ok(m)
    }

    /// Brouwer degree of ∇K at the nondegenerate critical point: sign det H.
    pub fn critical_degree(&self) -> Result<i32> {
        let det = self.h.determinant();
        let scale = self.h.abs().max().powi((self.n - 1) as i32);
        if det.abs() <= 1e-12 * scale {
            return Err(Error::DegenerateCriticalPoint(det));
        }
        Ok(if det > 0.0 { 1 } else { -1 })
    }
}

/// Brouwer degree sign det H of a symmetric matrix (row-major) at a
/// nondegenerate critical point.
pub fn degree_of_hessian(h: &[f64], d: usize) -> Result<i32> {
    let m = DMatrix::from_row_slice(d, d, h);
    let det = m.determinant();
    if det.abs() <= 1e-12 * m.abs().max().powi(d as i32) {
        return Err(Error::DegenerateCriticalPoint(det));
    }
    Ok(if det > 0.0 { 1 } else { -1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(n: usize, d: &[f64]) -> WeightField {
        let k = n - 1;
        let mut h = vec![0.0; k * k];
        for (i, v) in d.iter().enumerate() {
            h[i * k + i] = *v;
        }
        WeightField::new(n, 1.0, vec![0.0; n - 2], &h, 0.5).unwrap()
    }

    #[test]
    fn cutoff_derivatives_match_differences() {
        for &x in &[0.55, 0.62, 0.75, 0.9, 0.97] {
            let h = 1e-6;
            let (_, d1, d2) = cutoff(x);
            let fd1 = (cutoff(x + h).0 - cutoff(x - h).0) / (2.0 * h);
            let fd2 = (cutoff(x + h).1 - cutoff(x - h).1) / (2.0 * h);
            assert_relative_eq!(d1, fd1, max_relative = 1e-6, epsilon = 1e-9);
            assert_relative_eq!(d2, fd2, max_relative = 1e-6, epsilon = 1e-9);
        }
        assert_eq!(cutoff(0.3), (1.0, 0.0, 0.0));
        assert_eq!(cutoff(1.2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn critical_point_values() {
        let k = WeightField::default_saddle();
        let y0 = k.lift(&k.v0());
        assert_eq!(k.eval(&y0), 1.0);
        assert!(k.grad(&y0).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn laplacian_at_critical_by_differences() {
        let k = diag(5, &[-1.0, -1.0, -1.0, -1.0]);
        assert_eq!(k.laplacian_at_critical(), -4.0);
        let y0 = [0.6, 0.8, 0.0, 0.0, 0.0];
        let h = 1e-4;
        let mut lap = 0.0;
        for i in 0..5 {
            let mut p = y0;
            p[i] += h;
            let mut m = y0;
            m[i] -= h;
            lap += (k.eval(&p) - 2.0 * k.eval(&y0) + k.eval(&m)) / (h * h);
        }
        assert_relative_eq!(lap, -4.0, max_relative = 1e-6);
    }

    #[test]
    fn degrees() {
        assert_eq!(diag(5, &[-1.0; 4]).critical_degree().unwrap(), 1);
        // trace +2 is not a valid weight, but the degree itself is defined
        let mut h = vec![0.0; 16];
        for (i, v) in [-1.0, 1.0, 1.0, 1.0].iter().enumerate() {
            h[i * 4 + i] = *v;
        }
        assert_eq!(degree_of_hessian(&h, 4).unwrap(), -1);
        assert_eq!(diag(5, &[-1.0, 1.0, -1.0, -1.0]).critical_degree().unwrap(), -1);
        assert_eq!(WeightField::default_saddle().critical_degree().unwrap(), 1);
    }

    #[test]
    fn constructor_rejections() {
        let n = 5;
        let mut h = vec![0.0; 16];
        h[0] = 1.0;
        h[5] = 1.0;
        h[10] = -1.0;
        h[15] = -1.0;
        assert!(WeightField::new(n, 1.0, vec![0.0; 3], &h, 0.5).is_err()); // trace 0
        let mut h2 = vec![0.0; 16];
        h2[0] = -1.0;
        assert!(matches!(
            WeightField::new(n, 1.0, vec![0.0; 3], &h2, 0.5),
            Err(Error::DegenerateCriticalPoint(_))
        ));
        let mut deep = vec![0.0; 16];
        for i in 0..4 {
            deep[i * 4 + i] = -200.0;
        }
        assert!(WeightField::new(n, 1.0, vec![0.0; 3], &deep, 0.5).is_err());
        let mut asym = vec![0.0; 16];
        for i in 0..4 {
            asym[i * 4 + i] = -1.0;
        }
        asym[1] = 0.3;
        assert!(WeightField::new(n, 1.0, vec![0.0; 3], &asym, 0.5).is_err());
    }

    #[test]
    fn polar_axis_is_rejected_for_gradients() {
        let k = WeightField::default_saddle();
        assert_eq!(k.grad(&[0.0, 0.0, 0.1, 0.0, 0.0]), Err(Error::PolarSingularity));
        assert_eq!(k.eval(&[0.0, 0.0, 0.1, 0.0, 0.0]), 1.0);
    }
}
