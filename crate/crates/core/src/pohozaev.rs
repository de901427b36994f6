//! Local Pohozaev identities on half-balls B⁺_ρ(y0) of the upper half-space,
//! evaluated term by term on extensions of bubbles and towers.
//!
//! With w = t^{1-2s}, Y' = (y - y0, t) and ν the outer normal, the flat part
//! t = 0 of ∂B⁺_ρ contributes through -w ∂_t ũ → K u^p / d_s, which turns it
//! into the sphere and ball terms below. The translation identity in a
//! direction y_i reads
//!
//! ∫_{∂''} w ∂_ν ũ ∂_i ũ - ½ ∫_{∂''} w |∇ũ|² ν_i
//!   + (1/(d_s q)) ∫_{∂B_ρ} K u^q ν_i - (1/(d_s q)) ∫_{B_ρ} ∂_i K u^q = 0,
//!
//! and the scaling identity
//!
//! ∫_{∂''} w ⟨Y', ∇ũ⟩ ∂_ν ũ - ½ ∫_{∂''} w |∇ũ|² ⟨Y', ν⟩ + (N-2s)/2 ∫_{B⁺} w |∇ũ|²
//!   + (1/(d_s q)) ∫_{∂B_ρ} K u^q ⟨y - y0, ν⟩ - (N/(d_s q)) ∫_{B_ρ} K u^q
//!   - (1/(d_s q)) ∫_{B_ρ} ⟨∇K, y - y0⟩ u^q = 0.

use rayon::prelude::*;

use crate::bubble::ProblemParams;
use crate::error::{invalid, Error, Result};
use crate::extension::TowerExtension;
use crate::fractional::d_s;
use crate::quadrature::{composite, tanh_sinh_unit, SphereRule};
use crate::weight::WeightField;

/// Half-ball B⁺_ρ(y0) = {(y, t): |(y - y0, t)| < ρ, t > 0}.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfBallRegion {
    center: Vec<f64>,
    radius: f64,
}

impl HalfBallRegion {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("radius", format!("must be positive, got {radius}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("center", "must be finite"));
        }
        Ok(HalfBallRegion { center, radius })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.center.clone(), radius)
    }
}

/// Node counts of the surface and volume rules.
#[derive(Debug, Clone, PartialEq)]
pub struct PohozaevSpec {
    /// Step of the tanh-sinh rule in (cos θ)^{2-2s} on the hemisphere.
    pub height_step: f64,
    /// Nodes per polar angle of the sphere rules.
    pub angular_nodes: usize,
    /// Gauss-Legendre nodes in the radius for volume integrals.
    pub radial_nodes: usize,
    /// Below t = min_gap·ρ the extension is evaluated at that height; its
    /// values converge as t → 0 while the weight t^{1-2s} is kept exact.
    pub min_gap: f64,
    /// Largest change of any term between the default and doubled rules,
    /// relative to the largest term, before a convergence error is raised.
    pub tolerance: f64,
}

impl Default for PohozaevSpec {
    fn default() -> Self {
        PohozaevSpec {
            height_step: 0.3,
            angular_nodes: 4,
            radial_nodes: 6,
            min_gap: 1e-10,
            tolerance: 1e-2,
        }
    }
}

impl PohozaevSpec {
    /// Twice the nodes in every direction.
    pub fn refined(&self) -> Self {
        PohozaevSpec {
            height_step: 0.5 * self.height_step,
            angular_nodes: 2 * self.angular_nodes,
            radial_nodes: 2 * self.radial_nodes,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.height_step > 0.0 && self.height_step <= 1.0) {
            return Err(invalid("height_step", "must lie in (0, 1]"));
        }
        if self.angular_nodes < 2 || self.radial_nodes < 2 {
            return Err(invalid("pohozaev nodes", "need at least 2 nodes"));
        }
        if !(self.min_gap > 0.0 && self.min_gap < 1e-3) {
            return Err(invalid("min_gap", "must lie in (0, 1e-3)"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        Ok(())
    }
}

/// Which identity a report belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identity {
    /// Translation in y_i (1-based index).
    Translation(usize),
    Scaling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PohozaevReport {
    pub identity: Identity,
    /// Named terms at the default rule; their sum is `residual`.
    pub terms: Vec<(&'static str, f64)>,
    pub residual: f64,
    /// Largest term magnitude.
    pub scale: f64,
    /// Size of the integrands, at least `scale`; for the translation
    /// identity it is the Dirichlet energy on the hemisphere, which stays
    /// positive when all terms cancel by symmetry.
    pub magnitude: f64,
    /// Residual with every node count doubled.
    pub refined_residual: f64,
    /// Hemisphere nodes of the default rule.
    pub surface_nodes: usize,
    /// Half-ball nodes of the default rule.
    pub volume_nodes: usize,
}

impl PohozaevReport {
    /// |residual| / scale.
    pub fn relative(&self) -> f64 {
        self.residual.abs() / self.scale
    }

    /// |residual| / |refined residual|.
    pub fn refinement_gain(&self) -> f64 {
        self.residual.abs() / self.refined_residual.abs()
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| *n == name).map(|t| t.1)
    }
}

struct Hemisphere {
    /// (cos θ, weight including (1 - x²)^{(N-2)/2}).
    heights: Vec<(f64, f64)>,
    sphere: SphereRule,
}

impl Hemisphere {
    /// cos θ = v^{1/(2-2s)} with a tanh-sinh rule in v, so that the weight
    /// t^{1-2s} d(cos θ) becomes a constant multiple of dv.
    fn new(n: usize, s: f64, spec: &PohozaevSpec, axis: &[f64]) -> Self {
        let rule = tanh_sinh_unit(spec.height_step, 1e-300);
        let g = 0.5 * (n as f64 - 2.0);
        let e = 1.0 / (2.0 - 2.0 * s);
        let heights = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .filter(|(&v, _)| v.powf(e) > 1e-250)
            .map(|(&v, &w)| {
                let x = v.powf(e);
                let dx = e * x / v;
                (x, w * dx * (1.0 - x * x).max(0.0).powf(g))
            })
            .collect();
        Hemisphere {
            heights,
            sphere: SphereRule::with_axis(n, spec.angular_nodes, Some(axis)),
        }
    }

    fn len(&self) -> usize {
        self.heights.len() * self.sphere.len()
    }

    /// ∫ f(y, t) dS over the upper hemisphere of radius `rho` about (y0, 0).
    fn integrate(&self, y0: &[f64], rho: f64, f: &mut impl FnMut(&[f64], f64) -> Result<f64>) -> Result<f64> {
        let n = y0.len();
        let mut y = vec![0.0; n];
        let mut total = 0.0;
        for &(x, wx) in &self.heights {
            let t = rho * x;
            let lateral = rho * (1.0 - x * x).sqrt();
            let mut ring = 0.0;
            for (omega, wo) in self.sphere.iter() {
                for i in 0..n {
                    y[i] = y0[i] + lateral * omega[i];
                }
                let v = f(&y, t)?;
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("hemisphere integrand at t = {t}")));
                }
                ring += wo * v;
            }
            total += wx * ring;
        }
        Ok(total * rho.powi(n as i32))
    }
}

fn default_axis(n: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[0] = 1.0;
    e
}

/// ∫_{∂''B⁺_ρ} t^{1-2s} g(y, t) dS, with a tanh-sinh rule in (cos θ)^{2-2s}
/// that clusters nodes at t = 0 and a product rule on S^{N-1}.
pub fn hemisphere_quadrature(
    s: f64,
    region: &HalfBallRegion,
    spec: &PohozaevSpec,
    mut g: impl FnMut(&[f64], f64) -> f64,
) -> Result<f64> {
    spec.validate()?;
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid("s", "must lie in (0, 1)"));
    }
    let n = region.center.len();
    let h = Hemisphere::new(n, s, spec, &default_axis(n));
    h.integrate(&region.center, region.radius, &mut |y, t| Ok(t.powf(1.0 - 2.0 * s) * g(y, t)))
}

/// Radial panels on [0, ρ], halving toward 0 until they are finer than the
/// bubble scale 1/λ.
fn radial_breaks(rho: f64, lambda: f64) -> Vec<f64> {
    let mut b = vec![rho];
    let mut r = 0.5 * rho;
    b.push(r);
    while r > 0.5 / lambda {
        r *= 0.5;
        b.push(r);
    }
    b.push(0.0);
    b.reverse();
    b
}

/// Sphere and ball rules in R^N about y0.
struct Ball {
    sphere: SphereRule,
    radial: Vec<(f64, f64)>,
}

impl Ball {
    fn new(n: usize, spec: &PohozaevSpec, rho: f64, lambda: f64, axis: &[f64]) -> Self {
        let rule = composite(&radial_breaks(rho, lambda), spec.radial_nodes);
        Ball {
            sphere: SphereRule::with_axis(n, 2 * spec.angular_nodes, Some(axis)),
            radial: rule.nodes.into_iter().zip(rule.weights).collect(),
        }
    }

    fn sphere_integral(&self, y0: &[f64], r: f64, f: &mut impl FnMut(&[f64], &[f64]) -> Result<f64>) -> Result<f64> {
        let n = y0.len();
        let mut y = vec![0.0; n];
        let mut sum = 0.0;
        for (omega, wo) in self.sphere.iter() {
            for i in 0..n {
                y[i] = y0[i] + r * omega[i];
            }
            sum += wo * f(&y, omega)?;
        }
        Ok(sum * r.powi(n as i32 - 1))
    }

    fn ball_integral(&self, y0: &[f64], f: &mut impl FnMut(&[f64], &[f64]) -> Result<f64>) -> Result<f64> {
        let mut sum = 0.0;
        for &(r, w) in &self.radial {
            sum += w * self.sphere_integral(y0, r, f)?;
        }
        Ok(sum)
    }
}

fn axis_for(ext: &TowerExtension, region: &HalfBallRegion) -> Vec<f64> {
    let n = region.center.len();
    let c = &ext.centers()[0];
    let d: Vec<f64> = c.iter().zip(&region.center).map(|(a, b)| a - b).collect();
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1e-12 {
        d.iter().map(|v| v / norm).collect()
    } else {
        default_axis(n)
    }
}

fn check_inputs(p: &ProblemParams, ext: &TowerExtension, k: &WeightField, region: &HalfBallRegion) -> Result<()> {
    let n = p.n();
    if region.center.len() != n || k.n() != n || ext.centers().iter().any(|c| c.len() != n) {
        return Err(invalid("dimension", "region, weight, tower and problem dimensions differ"));
    }
    Ok(())
}

fn positive_power(u: f64, q: f64) -> f64 {
    if u > 0.0 {
        u.powf(q)
    } else {
        0.0
    }
}

fn translation_terms(
    p: &ProblemParams,
    ext: &TowerExtension,
    k: &WeightField,
    region: &HalfBallRegion,
    i: usize,
    spec: &PohozaevSpec,
) -> Result<TermSet> {
    let n = p.n();
    let s = p.s();
    let q = p.energy_power();
    let y0 = &region.center;
    let rho = region.radius;
    let axis = axis_for(ext, region);
    let hemi = Hemisphere::new(n, s, spec, &axis);
    let floor = spec.min_gap * rho;
    let ii = i - 1;
    let flux = hemi.integrate(y0, rho, &mut |y, t| {
        let v = ext.eval(y, t.max(floor))?;
        let w = t.powf(1.0 - 2.0 * s);
        let radial: f64 = v.grad_y.iter().zip(y.iter().zip(y0)).map(|(g, (a, b))| g * (a - b)).sum();
        let wdn = (w * radial + t * v.weighted_dt) / rho;
        Ok(wdn * v.grad_y[ii])
    })?;
    let gradient = hemi.integrate(y0, rho, &mut |y, t| {
        let v = ext.eval(y, t.max(floor))?;
        let w = t.powf(1.0 - 2.0 * s);
        let g2: f64 = v.grad_y.iter().map(|g| g * g).sum();
        let dens = w * g2 + v.weighted_dt * v.weighted_dt / w;
        Ok(-0.5 * dens * (y[ii] - y0[ii]) / rho)
    })?;
    // every translation term can vanish by symmetry; this bounds the
    // hemisphere gradient term and sets the scale of the refinement check
    let magnitude = 0.5 * hemi.integrate(y0, rho, &mut |y, t| {
        let v = ext.eval(y, t.max(floor))?;
        let w = t.powf(1.0 - 2.0 * s);
        let g2: f64 = v.grad_y.iter().map(|g| g * g).sum();
        Ok(w * g2 + v.weighted_dt * v.weighted_dt / w)
    })?;
    let ball = Ball::new(n, spec, rho, ext.lambda(), &axis);
    let f = 1.0 / (d_s(s) * q);
    let sphere = f * ball.sphere_integral(y0, rho, &mut |y, omega| Ok(k.eval(y) * positive_power(ext.trace(y), q) * omega[ii]))?;
    let volume = -f * ball.ball_integral(y0, &mut |y, _| Ok(k.grad(y)?[ii] * positive_power(ext.trace(y), q)))?;
    let terms = vec![
        ("hemisphere_flux", flux),
        ("hemisphere_gradient", gradient),
        ("sphere_potential", sphere),
        ("volume_weight_gradient", volume),
    ];
    Ok(TermSet {
        terms,
        magnitude,
        surface_nodes: hemi.len(),
        volume_nodes: ball.radial.len() * ball.sphere.len(),
    })
}

fn scaling_terms(
    p: &ProblemParams,
    ext: &TowerExtension,
    k: &WeightField,
    region: &HalfBallRegion,
    spec: &PohozaevSpec,
) -> Result<TermSet> {
    let n = p.n();
    let nf = n as f64;
    let s = p.s();
    let q = p.energy_power();
    let y0 = &region.center;
    let rho = region.radius;
    let axis = axis_for(ext, region);
    let hemi = Hemisphere::new(n, s, spec, &axis);
    let floor = spec.min_gap * rho;
    // w ⟨Y',∇ũ⟩ ∂_ν ũ and w|∇ũ|²⟨Y',ν⟩ = ρ w|∇ũ|² on the hemisphere
    let dirichlet_density = |y: &[f64], t: f64| -> Result<(f64, f64)> {
        let v = ext.eval(y, t.max(floor))?;
        let w = t.powf(1.0 - 2.0 * s);
        let g2: f64 = v.grad_y.iter().map(|g| g * g).sum();
        let radial: f64 = v.grad_y.iter().zip(y.iter().zip(y0)).map(|(g, (a, b))| g * (a - b)).sum();
        let wt = v.weighted_dt;
        let mixed = w * radial * radial + 2.0 * t * radial * wt + t * t * wt * wt / w;
        Ok((mixed, w * g2 + wt * wt / w))
    };
    let flux = hemi.integrate(y0, rho, &mut |y, t| Ok(dirichlet_density(y, t)?.0 / rho))?;
    let gradient = -0.5 * rho * hemi.integrate(y0, rho, &mut |y, t| Ok(dirichlet_density(y, t)?.1))?;
    let radial_rule = composite(&radial_breaks(rho, ext.lambda()), spec.radial_nodes);
    let shells: Vec<Result<f64>> = radial_rule
        .nodes
        .par_iter()
        .map(|&r| hemi.integrate(y0, r, &mut |y, t| Ok(dirichlet_density(y, t)?.1)))
        .collect();
    let mut dirichlet = 0.0;
    for (shell, w) in shells.into_iter().zip(&radial_rule.weights) {
        dirichlet += w * shell?;
    }
    let dirichlet = 0.5 * (nf - 2.0 * s) * dirichlet;
    let ball = Ball::new(n, spec, rho, ext.lambda(), &axis);
    let f = 1.0 / (d_s(s) * q);
    let sphere = f * rho * ball.sphere_integral(y0, rho, &mut |y, _| Ok(k.eval(y) * positive_power(ext.trace(y), q)))?;
    let potential = -f * nf * ball.ball_integral(y0, &mut |y, _| Ok(k.eval(y) * positive_power(ext.trace(y), q)))?;
    let weight = -f * ball.ball_integral(y0, &mut |y, _| {
        let g = k.grad(y)?;
        let dot: f64 = g.iter().zip(y.iter().zip(y0)).map(|(g, (a, b))| g * (a - b)).sum();
        Ok(dot * positive_power(ext.trace(y), q))
    })?;
    let terms = vec![
        ("hemisphere_flux", flux),
        ("hemisphere_gradient", gradient),
        ("volume_dirichlet", dirichlet),
        ("sphere_potential", sphere),
        ("volume_potential", potential),
        ("volume_weight_gradient", weight),
    ];
    Ok(TermSet {
        magnitude: dirichlet.abs(),
        terms,
        surface_nodes: hemi.len(),
        volume_nodes: radial_rule.len() * hemi.len(),
    })
}

struct TermSet {
    terms: Vec<(&'static str, f64)>,
    magnitude: f64,
    surface_nodes: usize,
    volume_nodes: usize,
}

fn assemble(
    identity: Identity,
    coarse: TermSet,
    fine: Vec<(&'static str, f64)>,
    spec: &PohozaevSpec,
) -> Result<PohozaevReport> {
    let TermSet {
        terms,
        magnitude,
        surface_nodes,
        volume_nodes,
    } = coarse;
    let residual: f64 = terms.iter().map(|t| t.1).sum();
    let refined_residual: f64 = fine.iter().map(|t| t.1).sum();
    let scale = terms.iter().map(|t| t.1.abs()).fold(0.0, f64::max);
    let change = terms
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a.1 - b.1).abs())
        .fold(0.0, f64::max);
    let magnitude = magnitude.max(scale);
    if change > spec.tolerance * magnitude {
        return Err(Error::Convergence(format!(
            "a Pohozaev term changed by {change:e} under refinement (magnitude {magnitude:e})"
        )));
    }
    Ok(PohozaevReport {
        identity,
        terms,
        residual,
        scale,
        magnitude,
        refined_residual,
        surface_nodes,
        volume_nodes,
    })
}

/// Translation identity in the direction y_i, i ∈ {3, …, N} (1-based).
pub fn pohozaev_translation(
    p: &ProblemParams,
    ext: &TowerExtension,
    k: &WeightField,
    region: &HalfBallRegion,
    i: usize,
    spec: &PohozaevSpec,
) -> Result<PohozaevReport> {
    spec.validate()?;
    check_inputs(p, ext, k, region)?;
    if !(3..=p.n()).contains(&i) {
        return Err(Error::IndexOutOfRange {
            what: "i",
            index: i,
            range: format!("3..={}", p.n()),
        });
    }
    let coarse = translation_terms(p, ext, k, region, i, spec)?;
    let fine = translation_terms(p, ext, k, region, i, &spec.refined())?.terms;
    assemble(Identity::Translation(i), coarse, fine, spec)
}

/// Scaling identity about the center of the region.
pub fn pohozaev_scaling(
    p: &ProblemParams,
    ext: &TowerExtension,
    k: &WeightField,
    region: &HalfBallRegion,
    spec: &PohozaevSpec,
) -> Result<PohozaevReport> {
    spec.validate()?;
    check_inputs(p, ext, k, region)?;
    let coarse = scaling_terms(p, ext, k, region, spec)?;
    let fine = scaling_terms(p, ext, k, region, &spec.refined())?.terms;
    assemble(Identity::Scaling, coarse, fine, spec)
}
