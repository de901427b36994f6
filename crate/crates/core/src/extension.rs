//! Extension of bubbles and bubble towers to the upper half-space.
//!
//! A bubble is radial, so its extension depends only on the distance ρ to
//! the center and the height t. The unit-bubble extension is evaluated by a
//! two-dimensional quadrature (radius and the cosine of the angle to ŷ) and
//! cached; bubbles with other centers and scales follow by translation and
//! the scaling ũ_{x,λ}(y,t) = λ^{(N-2s)/2} Ũ(λ|y-x|, λt).

use std::collections::HashMap;
use std::sync::Mutex;

use crate::bubble::{ProblemParams, TowerConfig};
use crate::error::{Error, Result};
use crate::fractional::{
    extension_grid, poisson_beta, upper_flux_tail, upper_kernel_tail, QuadratureSpec,
};
use crate::quadrature::{gauss_jacobi, CosineRule, Rule};
use crate::special::sphere_area;

/// Values of the unit-bubble extension at (ρ, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtValue {
    /// Ũ(ρ, t).
    pub u: f64,
    /// ∂_ρ Ũ(ρ, t).
    pub du_drho: f64,
    /// t^{1-2s} ∂_t Ũ(ρ, t).
    pub weighted_dt: f64,
}

/// Cached extension of U_{0,1}.
pub struct BubbleExtension {
    n: usize,
    s: f64,
    a: f64,
    c: f64,
    beta: f64,
    spec: QuadratureSpec,
    cos_rule: Rule,
    panel: CosineRule,
    cache: Mutex<HashMap<(u64, u64), ExtValue>>,
}

impl BubbleExtension {
    /// The cosine rule gets `4 * angular_nodes` Gauss-Gegenbauer nodes.
    pub fn new(p: &ProblemParams, spec: QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        let n = p.n();
        let g = 0.5 * (n as f64 - 3.0);
        let mut cos_rule = gauss_jacobi(4 * spec.angular_nodes, g, g);
        let total: f64 = cos_rule.weights.iter().sum();
        cos_rule.weights.iter_mut().for_each(|w| *w /= total);
        let panel = CosineRule::new(2 * spec.angular_nodes, g);
        Ok(BubbleExtension {
            n,
            s: p.s(),
            a: p.a(),
            c: p.bubble_constant(),
            beta: poisson_beta(n, p.s()),
            spec,
            cos_rule,
            panel,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    fn unit(&self, z2: f64) -> f64 {
        self.c * (1.0 + z2).powf(-0.5 * self.a)
    }

    /// Ũ, ∂_ρ Ũ and t^{1-2s} ∂_t Ũ at (ρ, t), t > 0.
    pub fn eval(&self, rho: f64, t: f64) -> Result<ExtValue> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("extension height must be positive, got {t}")));
        }
        let rho = rho.abs();
        let key = (rho.to_bits() >> 16, t.to_bits() >> 16);
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let v = self.compute(rho, t);
        if !(v.u.is_finite() && v.du_drho.is_finite() && v.weighted_dt.is_finite()) {
            return Err(Error::NonFinite(format!("bubble extension at rho={rho}, t={t}")));
        }
        self.cache.lock().unwrap().insert(key, v);
        Ok(v)
    }

    fn compute(&self, rho: f64, t: f64) -> ExtValue {
        let q = &self.spec;
        let nf = self.n as f64;
        let s = self.s;
        let a = self.a;
        let big_r = q.truncation_radius;
        let mut marks = vec![t];
        if rho > 0.0 {
            marks.push(rho);
        }
        let grid = extension_grid(t, &marks, q);
        let u0 = self.unit(rho * rho);
        let du0 = -a * self.c * rho * (1.0 + rho * rho).powf(-0.5 * a - 1.0);
        let sp = 0.5 * (nf + 2.0 * s);
        let t2s = t.powf(2.0 * s);
        let (mut bu, mut bd, mut bw) = (0.0, 0.0, 0.0);
        for (&r, &wr) in grid.nodes.iter().zip(&grid.weights) {
            let (mut avg, mut davg) = (0.0, 0.0);
            let mut add = |c: f64, wc: f64| {
                let z2 = (rho * rho + r * r + 2.0 * rho * r * c).max(0.0);
                let base = (1.0 + z2).powf(-0.5 * a);
                avg += wc * base;
                davg += wc * base * (rho + r * c) / (1.0 + z2);
            };
            // width of the bubble peak seen from ŷ in the cosine variable
            let width = (1.0 + (rho - r) * (rho - r)) / (2.0 * rho * r).max(f64::MIN_POSITIVE);
            if width >= 0.5 {
                for (&c, &wc) in self.cos_rule.nodes.iter().zip(&self.cos_rule.weights) {
                    add(c, wc);
                }
            } else {
                self.panel.for_each(width, &mut add);
            }
            avg *= self.c;
            davg *= -a * self.c;
            let d = r * r + t * t;
            let dp = d.powf(-sp);
            let rn = r.powf(nf - 1.0);
            let kern = t2s * dp * rn;
            let flux = (2.0 * s * dp - (nf + 2.0 * s) * t * t * dp / d) * rn;
            bu += wr * kern * (avg - u0);
            bd += wr * kern * (davg - du0);
            bw += wr * flux * (avg - u0);
        }
        let norm = self.beta * sphere_area(self.n);
        let far = self.c * big_r.powf(-nf) / nf;
        let ktail = upper_kernel_tail(nf, s, t, big_r);
        ExtValue {
            u: u0 + norm * (bu + t2s * far - u0 * ktail),
            du_drho: du0 + norm * (bd - du0 * ktail),
            weighted_dt: norm * (bw + 2.0 * s * far - u0 * upper_flux_tail(nf, s, t, big_r)),
        }
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

/// Extension of the tower Σ_j U_{x_j,λ} and its gradient.
pub struct TowerExtension<'a> {
    p: &'a ProblemParams,
    centers: Vec<Vec<f64>>,
    lambda: f64,
    unit: &'a BubbleExtension,
}

/// ũ, ∇_y ũ and t^{1-2s} ∂_t ũ at a point of the half-space.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerExtValue {
    pub u: f64,
    pub grad_y: Vec<f64>,
    pub weighted_dt: f64,
}

impl<'a> TowerExtension<'a> {
    pub fn new(p: &'a ProblemParams, cfg: &TowerConfig, unit: &'a BubbleExtension) -> Self {
        TowerExtension {
            p,
            centers: crate::bubble::tower_centers(cfg),
            lambda: cfg.lambda(),
            unit,
        }
    }

    /// A single bubble with the given center and scale.
    pub fn single(p: &'a ProblemParams, center: Vec<f64>, lambda: f64, unit: &'a BubbleExtension) -> Self {
        TowerExtension {
            p,
            centers: vec![center],
            lambda,
            unit,
        }
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Trace value Σ_j U_{x_j,λ}(y) on t = 0.
    pub fn trace(&self, y: &[f64]) -> f64 {
        let lam = self.lambda;
        self.centers
            .iter()
            .map(|x| crate::bubble::profile(self.p, lam, crate::bubble::dist2(y, x)))
            .sum()
    }

    /// Gradient of the trace on t = 0.
    pub fn trace_gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; y.len()];
        for x in &self.centers {
            let b = crate::bubble::Bubble::new(x.clone(), self.lambda).expect("valid bubble");
            for (gi, v) in g.iter_mut().zip(crate::bubble::bubble_gradient(self.p, &b, y)) {
                *gi += v;
            }
        }
        g
    }

    pub fn eval(&self, y: &[f64], t: f64) -> Result<TowerExtValue> {
        let lam = self.lambda;
        let a = self.p.a();
        let s = self.p.s();
        let amp = lam.powf(0.5 * a);
        let mut out = TowerExtValue {
            u: 0.0,
            grad_y: vec![0.0; y.len()],
            weighted_dt: 0.0,
        };
        for x in &self.centers {
            let rho = crate::bubble::dist2(y, x).sqrt();
            let v = self.unit.eval(lam * rho, lam * t)?;
            out.u += amp * v.u;
            out.weighted_dt += amp * lam.powf(2.0 * s) * v.weighted_dt;
            if rho > 0.0 {
                let f = amp * lam * v.du_drho / rho;
                for (g, (yi, xi)) in out.grad_y.iter_mut().zip(y.iter().zip(x)) {
                    *g += f * (yi - xi);
                }
            }
        }
        Ok(out)
    }
}
