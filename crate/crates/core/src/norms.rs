//! Weighted sup-norms ‖·‖_* and ‖·‖_** over stratified sample grids, and
//! the ratios behind the interaction bounds for bubble weights.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bubble::{dist2, tower_centers, ProblemParams, TowerConfig};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{composite, gauss_jacobi, geometric_breaks, halton, linear_fit, CosineRule};
use crate::special::sphere_area;

/// Layout of the stratified grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Radial shells around each center, radii (core/λ) 2^{k-shells+1}.
    pub shells: usize,
    /// Random directions per shell.
    pub directions: usize,
    /// Outer shell radius in units of 1/λ.
    pub core_radius: f64,
    /// Halton points in the far-field box.
    pub far_points: usize,
    /// Half-width of the far-field box in units of r̄.
    pub far_extent: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            shells: 8,
            directions: 32,
            core_radius: 20.0,
            far_points: 10_000,
            far_extent: 10.0,
        }
    }
}

/// Points over which the suprema are taken.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    points: Vec<Vec<f64>>,
    seed: u64,
}

impl SampleGrid {
    /// Explicit point set.
    pub fn from_points(points: Vec<Vec<f64>>, seed: u64) -> Self {
        SampleGrid { points, seed }
    }

    /// Centers, shells of random directions around every center and a
    /// Halton far field covering the box of half-width far_extent·r̄ about
    /// (0, 0, ȳ'').
    pub fn standard(cfg: &TowerConfig, spec: &GridSpec, seed: u64) -> Result<Self> {
        if spec.shells == 0 || spec.directions == 0 || !(spec.core_radius > 0.0) || !(spec.far_extent > 0.0) {
            return Err(invalid("grid", "shells, directions, core_radius and far_extent must be positive"));
        }
        let n = cfg.dim();
        let lam = cfg.lambda();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        for x in tower_centers(cfg) {
            points.push(x.clone());
            for k in 0..spec.shells {
                let r = spec.core_radius / lam * 2f64.powi(k as i32 + 1 - spec.shells as i32);
                for _ in 0..spec.directions {
                    let mut d: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                    d.iter_mut().for_each(|v| *v /= norm);
                    points.push(x.iter().zip(&d).map(|(a, b)| a + r * b).collect());
                }
            }
        }
        let half = spec.far_extent * cfg.rbar();
        for i in 0..spec.far_points {
            let h = halton(i, n);
            let mut y: Vec<f64> = h.iter().map(|u| (2.0 * u - 1.0) * half).collect();
            for (yk, ok) in y[2..].iter_mut().zip(cfg.ybar()) {
                *yk += ok;
            }
            points.push(y);
        }
        Ok(SampleGrid { points, seed })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Union with further points (a refinement).
    pub fn extended(&self, more: &[Vec<f64>]) -> Self {
        let mut points = self.points.clone();
        points.extend_from_slice(more);
        SampleGrid {
            points,
            seed: self.seed,
        }
    }
}

/// Result of a sampled sup-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub value: f64,
    pub argmax: Vec<f64>,
    pub grid_size: usize,
    pub seed: u64,
}

/// Which of the two weighted norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// ‖·‖_*: prefactor λ^{-(N-2s)/2}, weight exponent (N-2s)/2 + τ.
    Star,
    /// ‖·‖_**: prefactor λ^{-(N+2s)/2}, weight exponent (N+2s)/2 + τ.
    StarStar,
}

impl NormKind {
    fn exponents(self, p: &ProblemParams) -> (f64, f64) {
        let nf = p.n() as f64;
        let half = match self {
            NormKind::Star => 0.5 * (nf - 2.0 * p.s()),
            NormKind::StarStar => 0.5 * (nf + 2.0 * p.s()),
        };
        (half, half + p.tau())
    }
}

/// λ^{e} Σ_j (1 + λ|y - x_j|)^{-w} with the exponents of `kind`.
pub fn norm_weight(kind: NormKind, p: &ProblemParams, cfg: &TowerConfig, centers: &[Vec<f64>], y: &[f64]) -> f64 {
    let (pre, w) = kind.exponents(p);
    let lam = cfg.lambda();
    let sum: f64 = centers
        .iter()
        .map(|x| (1.0 + lam * dist2(y, x).sqrt()).powf(-w))
        .sum();
    lam.powf(pre) * sum
}

/// max over the grid of |u(y)| / norm_weight(y).
pub fn weighted_norm<F>(
    kind: NormKind,
    u: &F,
    p: &ProblemParams,
    cfg: &TowerConfig,
    grid: &SampleGrid,
) -> Result<NormReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let centers = tower_centers(cfg);
    let ratios: Vec<f64> = grid
        .points
        .par_iter()
        .map(|y| {
            let v = u(y);
            if !v.is_finite() {
                return Err(Error::NonFinite("function on the sample grid".into()));
            }
            Ok(v.abs() / norm_weight(kind, p, cfg, &centers, y))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in ratios.iter().enumerate() {
        if *r > ratios[best] {
            best = i;
        }
    }
    Ok(NormReport {
        value: ratios[best],
        argmax: grid.points[best].clone(),
        grid_size: grid.len(),
        seed: grid.seed,
    })
}

pub fn norm_star<F>(u: &F, p: &ProblemParams, cfg: &TowerConfig, grid: &SampleGrid) -> Result<NormReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    weighted_norm(NormKind::Star, u, p, cfg, grid)
}

pub fn norm_starstar<F>(f: &F, p: &ProblemParams, cfg: &TowerConfig, grid: &SampleGrid) -> Result<NormReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    weighted_norm(NormKind::StarStar, f, p, cfg, grid)
}

/// g_{k,j}(y) divided by |x_k - x_j|^{-δ} ((1+|y-x_k|)^{-(α+β-δ)} + (1+|y-x_j|)^{-(α+β-δ)}),
/// where g_{k,j}(y) = (1+|y-x_j|)^{-α} (1+|y-x_k|)^{-β}.
pub fn pair_weight_ratio(alpha: f64, beta: f64, delta: f64, xj: &[f64], xk: &[f64], y: &[f64]) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(invalid("alpha/beta", "must be positive"));
    }
    if !(delta > 0.0 && delta <= alpha.min(beta)) {
        return Err(invalid("delta", format!("need 0 < delta <= min(alpha, beta), got {delta}")));
    }
    let dkj = dist2(xj, xk).sqrt();
    if dkj == 0.0 {
        return Err(Error::DegeneratePair);
    }
    let dj = 1.0 + dist2(y, xj).sqrt();
    let dk = 1.0 + dist2(y, xk).sqrt();
    let g = dj.powf(-alpha) * dk.powf(-beta);
    let e = alpha + beta - delta;
    Ok(g / (dkj.powf(-delta) * (dk.powf(-e) + dj.powf(-e))))
}

/// Quadrature settings of the convolution in [`convolution_ratio`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionSpec {
    pub radial_nodes: usize,
    pub cosine_nodes: usize,
}

impl Default for ConvolutionSpec {
    fn default() -> Self {
        ConvolutionSpec {
            radial_nodes: 16,
            cosine_nodes: 16,
        }
    }
}

/// ∫ |y-z|^{-(N-2s)} (1+|z|)^{-(2s+δ)} dz in polar coordinates about y.
pub fn riesz_convolution(n: usize, s: f64, delta: f64, y: &[f64], q: &ConvolutionSpec) -> Result<f64> {
    if !(delta > 0.0 && delta < n as f64 - 2.0 * s) {
        return Err(invalid("delta", format!("need 0 < delta < N - 2s, got {delta}")));
    }
    if y.len() != n {
        return Err(invalid("y", format!("expected length {n}")));
    }
    let ry = dist2(y, &vec![0.0; n]).sqrt();
    let g = 0.5 * (n as f64 - 3.0);
    let cos_rule = CosineRule::new(q.cosine_nodes, g);
    let e = 2.0 * s + delta;
    // sphere average of (1+|y+rω|)^{-e}
    let avg = |r: f64| -> f64 {
        if ry == 0.0 {
            return (1.0 + r).powf(-e);
        }
        let width = (1.0 + (ry - r) * (ry - r)) / (2.0 * ry * r);
        let mut acc = 0.0;
        cos_rule.for_each(width.min(1.0), &mut |c, w| {
            let z = (ry * ry + r * r + 2.0 * ry * r * c).max(0.0).sqrt();
            acc += w * (1.0 + z).powf(-e);
        });
        acc
    };
    // near panel with weight r^{2s-1}
    let r_near = if ry > 0.0 { (0.5 * ry).min(0.5) } else { 0.5 };
    let gj = gauss_jacobi(q.radial_nodes, 0.0, 2.0 * s - 1.0);
    let scale = (0.5 * r_near).powf(2.0 * s);
    let near: f64 = gj
        .nodes
        .iter()
        .zip(&gj.weights)
        .map(|(x, w)| w * scale * avg(0.5 * r_near * (1.0 + x)))
        .sum();
    let big_r = 1e4 * (1.0 + ry);
    let extra = if ry > r_near { vec![ry] } else { vec![] };
    let far = composite(&geometric_breaks(r_near, big_r, 2.0, &extra), q.radial_nodes);
    let body = far.integrate(|r| r.powf(2.0 * s - 1.0) * avg(r));
    // beyond R the average behaves like A r^{-(2s+δ)}
    let amp = avg(big_r) * big_r.powf(e);
    let tail = amp * big_r.powf(-delta) / delta;
    let total = sphere_area(n) * (near + body + tail);
    if !total.is_finite() {
        return Err(Error::NonFinite("Riesz convolution".into()));
    }
    Ok(total)
}

/// The convolution above times (1+|y|)^δ.
pub fn convolution_ratio(n: usize, s: f64, delta: f64, y: &[f64], q: &ConvolutionSpec) -> Result<f64> {
    let conv = riesz_convolution(n, s, delta, y, q)?;
    let ry = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(conv * (1.0 + ry).powf(delta))
}

/// Least-squares slope of log(convolution) against log(1+|y|) over the
/// given radii (along e_1); it should not exceed -δ.
pub fn convolution_decay_slope(n: usize, s: f64, delta: f64, radii: &[f64], q: &ConvolutionSpec) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &r in radii {
        let mut y = vec![0.0; n];
        y[0] = r;
        xs.push((1.0 + r).ln());
        ys.push(riesz_convolution(n, s, delta, &y, q)?.ln());
    }
    linear_fit(&xs, &ys)
        .map(|(slope, _)| slope)
        .ok_or_else(|| Error::FitQuality("need at least two distinct radii".into()))
}
