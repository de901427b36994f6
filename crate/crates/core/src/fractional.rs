//! The fractional Laplacian: exact action on bubbles, singular-integral
//! quadrature for general functions, the Poisson-kernel extension to the
//! upper half-space and its weighted Neumann flux.

use rayon::prelude::*;

use crate::bubble::{bubble_value, Bubble, ProblemParams};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{
    composite, gauss_jacobi, least_squares, tanh_sinh_unit, Rule, SphereRule,
};
use crate::special::{gamma, sphere_area};

/// Node counts and radii for the radial-angular quadratures.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    /// Gauss nodes per radial panel.
    pub radial_nodes: usize,
    /// Nodes per polar angle of the sphere rule (the azimuth gets twice as many).
    pub angular_nodes: usize,
    /// Radius R beyond which the analytic tail takes over.
    pub truncation_radius: f64,
    /// Radius r0 separating the near-singular panel from the far panels.
    pub inner_split: f64,
    /// 0: leading power-law tail; 1: adds the next correction.
    pub tail_order: usize,
    /// Point the polar axis of the sphere rule along a finite-difference
    /// estimate of ∇f(y), so profiles that vary mostly along one direction
    /// are resolved by the polar nodes.
    pub align_to_gradient: bool,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            radial_nodes: 12,
            angular_nodes: 6,
            truncation_radius: 1e3,
            inner_split: 0.5,
            tail_order: 1,
            align_to_gradient: true,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.radial_nodes < 4 {
            return Err(invalid("radial_nodes", "must be at least 4"));
        }
        if self.angular_nodes < 4 {
            return Err(invalid("angular_nodes", "must be at least 4"));
        }
        if !(self.inner_split > 0.0 && self.inner_split < self.truncation_radius) {
            return Err(invalid("inner_split", "need 0 < r0 < R"));
        }
        if !self.truncation_radius.is_finite() {
            return Err(invalid("truncation_radius", "must be finite"));
        }
        if self.tail_order > 1 {
            return Err(invalid("tail_order", "must be 0 or 1"));
        }
        Ok(())
    }

    /// Every node count doubled.
    pub fn refined(&self) -> Self {
        QuadratureSpec {
            radial_nodes: 2 * self.radial_nodes,
            angular_nodes: 2 * self.angular_nodes,
            ..self.clone()
        }
    }
}

/// A quadrature value together with the tail diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Set when the sampled decay near R is slower than |z|^{-(N-2s)}.
    pub tail_warning: bool,
}

/// Normalising constant of (-Δ)^s in the second-difference form,
/// s 4^s Γ(N/2+s) / (π^{N/2} Γ(1-s)).
pub fn frac_lap_constant(n: usize, s: f64) -> f64 {
    let h = 0.5 * n as f64;
    s * 4f64.powf(s) * gamma(h + s) / (std::f64::consts::PI.powf(h) * gamma(1.0 - s))
}

/// d_s = 2^{2s-1} Γ(s) / Γ(1-s).
pub fn d_s(s: f64) -> f64 {
    2f64.powf(2.0 * s - 1.0) * gamma(s) / gamma(1.0 - s)
}

/// β(N,s) making the Poisson kernel a probability density, obtained by
/// integrating the kernel at t = 1 numerically.
pub fn poisson_beta(n: usize, s: f64) -> f64 {
    // ∫_0^∞ r^{N-1}(1+r²)^{-(N+2s)/2} dr = ½ ∫_0^1 v^{N/2-1}(1-v)^{s-1} dv
    let h = 0.5 * n as f64;
    // split at 1/2 so each endpoint singularity sits at a node-dense 0
    let rule = tanh_sinh_unit(1.0 / 64.0, 1e-300);
    let lower = rule.integrate(|x| {
        let v = 0.5 * x;
        v.powf(h - 1.0) * (1.0 - v).powf(s - 1.0)
    });
    let upper = rule.integrate(|x| {
        let w = 0.5 * x;
        (1.0 - w).powf(h - 1.0) * w.powf(s - 1.0)
    });
    let radial = 0.25 * (lower + upper);
    1.0 / (sphere_area(n) * radial)
}

/// (-Δ)^s U_{x,λ}(y) = U_{x,λ}(y)^{(N+2s)/(N-2s)}.
pub fn frac_lap_exact_bubble(p: &ProblemParams, b: &Bubble, y: &[f64]) -> f64 {
    bubble_value(p, b, y).powf(p.critical_power())
}

/// Sphere averages (1/|S|) ∫ f(y + r ω) dω at each radius.
fn sphere_averages<F>(f: &F, y: &[f64], radii: &[f64], rule: &SphereRule) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let area = sphere_area(y.len());
    radii
        .par_iter()
        .map(|&r| {
            let mut z = vec![0.0; y.len()];
            let mut acc = 0.0;
            for (w, wt) in rule.iter() {
                for i in 0..y.len() {
                    z[i] = y[i] + r * w[i];
                }
                let v = f(&z);
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("f at radius {r}")));
                }
                acc += wt * v;
            }
            Ok(acc / area)
        })
        .collect()
}

/// Sphere rule about y, optionally aligned with the local gradient of f.
fn sphere_rule_at<F>(f: &F, y: &[f64], q: &QuadratureSpec) -> SphereRule
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = y.len();
    if !q.align_to_gradient {
        return SphereRule::new(n, q.angular_nodes);
    }
    let h = 1e-4 * q.inner_split;
    let mut z = y.to_vec();
    let mut grad = vec![0.0; n];
    for i in 0..n {
        z[i] = y[i] + h;
        let fp = f(&z);
        z[i] = y[i] - h;
        let fm = f(&z);
        z[i] = y[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    let g2: f64 = grad.iter().map(|g| g * g).sum();
    let f_scale = f(y).abs().max(f64::MIN_POSITIVE);
    if !g2.is_finite() || g2.sqrt() * q.inner_split < 1e-8 * f_scale {
        return SphereRule::new(n, q.angular_nodes);
    }
    SphereRule::graded(n, 4 * q.angular_nodes, q.angular_nodes, Some(&grad))
}

/// Geometric panel breakpoints r0, 2r0, ... up to R.
fn far_breaks(r0: f64, big_r: f64) -> Vec<f64> {
    crate::quadrature::geometric_breaks(r0, big_r, 2.0, &[])
}

/// Power-law tail model A r^{-a} (1 + B r^{-2}) fitted to the sphere
/// averages at R/2 and R; also reports whether the local decay is too slow.
fn tail_model(avg_half: f64, avg_r: f64, big_r: f64, a: f64, order: usize) -> (f64, f64, bool) {
    if avg_r == 0.0 {
        return (0.0, 0.0, false);
    }
    let warn = if avg_half != 0.0 && avg_half.signum() == avg_r.signum() {
        ((avg_half / avg_r).ln() / 2f64.ln()) < a - 0.5
    } else {
        true
    };
    if order == 0 {
        return (avg_r * big_r.powf(a), 0.0, warn);
    }
    // avg(r) r^a = A (1 + B/r²) at r = R/2 and r = R
    let g1 = avg_half * (0.5 * big_r).powf(a);
    let g2 = avg_r * big_r.powf(a);
    let (x1, x2) = (4.0 / (big_r * big_r), 1.0 / (big_r * big_r));
    let slope = (g1 - g2) / (x1 - x2);
    let amp = g2 - slope * x2;
    if amp == 0.0 {
        return (g2, 0.0, warn);
    }
    (amp, slope / amp, warn)
}

/// (-Δ)^s f(y) by the symmetrised singular integral in polar coordinates
/// about y. The angular rule is centred at y, so shifting f and y together
/// reproduces the value.
pub fn frac_lap_quadrature<F>(
    f: &F,
    n: usize,
    s: f64,
    y: &[f64],
    q: &QuadratureSpec,
) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    q.validate()?;
    if y.len() != n {
        return Err(invalid("y", format!("expected length {n}, got {}", y.len())));
    }
    let fy = f(y);
    if !fy.is_finite() {
        return Err(Error::NonFinite("f(y)".into()));
    }
    let rule = sphere_rule_at(f, y, q);
    let r0 = q.inner_split;
    let big_r = q.truncation_radius;
    let a = n as f64 - 2.0 * s;

    // near panel: ∫_0^{r0} [(avg - f(y))/r²] r^{1-2s} dr
    let gj = gauss_jacobi(q.radial_nodes, 0.0, 1.0 - 2.0 * s);
    let scale = (0.5 * r0).powf(2.0 - 2.0 * s);
    let near_r: Vec<f64> = gj.nodes.iter().map(|x| 0.5 * r0 * (1.0 + x)).collect();
    let near_avg = sphere_averages(f, y, &near_r, &rule)?;
    let near: f64 = near_r
        .iter()
        .zip(&near_avg)
        .zip(&gj.weights)
        .map(|((r, av), w)| w * scale * (av - fy) / (r * r))
        .sum();

    // far panels: ∫_{r0}^{R} avg r^{-1-2s} dr, the f(y) part is analytic
    let far = composite(&far_breaks(r0, big_r), q.radial_nodes);
    let mut radii = far.nodes.clone();
    radii.push(0.5 * big_r);
    radii.push(big_r);
    let avg = sphere_averages(f, y, &radii, &rule)?;
    let k = far.len();
    let mid: f64 = (0..k)
        .map(|i| far.weights[i] * avg[i] * far.nodes[i].powf(-1.0 - 2.0 * s))
        .sum();
    let (amp, corr, warn) = tail_model(avg[k], avg[k + 1], big_r, a, q.tail_order);
    let nf = n as f64;
    // ∫_R^∞ A r^{-a}(1 + B r^{-2}) r^{-1-2s} dr, a + 2s = N
    let tail = amp * (big_r.powf(-nf) / nf + corr * big_r.powf(-nf - 2.0) / (nf + 2.0));
    let integral = near + mid + tail - fy * r0.powf(-2.0 * s) / (2.0 * s);
    let value = -frac_lap_constant(n, s) * sphere_area(n) * integral;
    if !value.is_finite() {
        return Err(Error::NonFinite("fractional Laplacian".into()));
    }
    Ok(Estimate {
        value,
        tail_warning: warn,
    })
}

/// A function on R^N together with its extension data: order s and the
/// Poisson-kernel normalisation β(N,s).
pub struct ExtensionField<F> {
    f: F,
    n: usize,
    s: f64,
    beta: f64,
}

impl<F: Fn(&[f64]) -> f64 + Sync> ExtensionField<F> {
    pub fn new(f: F, n: usize, s: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidDimension(n));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(invalid("s", format!("must lie in (0, 1), got {s}")));
        }
        Ok(ExtensionField {
            f,
            n,
            s,
            beta: poisson_beta(n, s),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eval_base(&self, y: &[f64]) -> f64 {
        (self.f)(y)
    }

    /// P_s(y, t) = β t^{2s} (|y|² + t²)^{-(N+2s)/2}.
    pub fn kernel(&self, y: &[f64], t: f64) -> f64 {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        self.beta * t.powf(2.0 * self.s) * (r2 + t * t).powf(-0.5 * (self.n as f64 + 2.0 * self.s))
    }

    /// ∫ P_s(y, t) dy by radial quadrature over geometric panels.
    pub fn kernel_mass(&self, t: f64) -> f64 {
        let breaks = kernel_breaks(t, 1e-4 * t, 1e4 * t);
        let rule = composite(&breaks, 16);
        let nf = self.n as f64;
        let sp = 0.5 * (nf + 2.0 * self.s);
        let body = rule.integrate(|r| {
            t.powf(2.0 * self.s) * (r * r + t * t).powf(-sp) * r.powf(nf - 1.0)
        });
        let big_r = *breaks.last().unwrap();
        let head = t.powf(-nf) * (1e-4 * t).powf(nf) / nf;
        self.beta * sphere_area(self.n) * (body + head + upper_kernel_tail(nf, self.s, t, big_r))
    }
}

/// Breakpoints 0, h0, 2h0, 4h0, ... up to R with t and extra points merged.
fn kernel_breaks(t: f64, h0: f64, big_r: f64) -> Vec<f64> {
    let mut b = vec![0.0];
    b.extend(crate::quadrature::geometric_breaks(h0, big_r, 2.0, &[t]));
    b
}

/// ∫_R^∞ t^{2s} (r²+t²)^{-(N+2s)/2} r^{N-1} dr, through w = t²/(r²+t²):
/// ½ ∫_0^{w_R} (1-w)^{N/2-1} w^{s-1} dw, summed as a binomial series.
pub(crate) fn upper_kernel_tail(nf: f64, s: f64, t: f64, big_r: f64) -> f64 {
    let w_r = t * t / (big_r * big_r + t * t);
    let mut sum = 0.0;
    let mut coeff = 1.0;
    let mut wk = w_r.powf(s);
    for k in 0..60 {
        let term = coeff * wk / (s + k as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
        coeff *= -(0.5 * nf - 1.0 - k as f64) / (k as f64 + 1.0);
        wk *= w_r;
    }
    0.5 * sum
}

/// Same tail for the flux kernel 2s(r²+t²)^{-a'} - (N+2s)t²(r²+t²)^{-a'-1},
/// a' = (N+2s)/2, times r^{N-1}, expanded for t << R.
pub(crate) fn upper_flux_tail(nf: f64, s: f64, t: f64, big_r: f64) -> f64 {
    let ap = 0.5 * (nf + 2.0 * s);
    let lead = big_r.powf(-2.0 * s);
    let next = (2.0 * s * ap + nf + 2.0 * s) * t * t * big_r.powf(-2.0 - 2.0 * s) / (2.0 + 2.0 * s);
    lead - next
}

fn check_point(n: usize, y: &[f64]) -> Result<()> {
    if y.len() != n {
        return Err(invalid("y", format!("expected length {n}, got {}", y.len())));
    }
    Ok(())
}

/// Radial grid used by the extension quadratures: resolves the kernel
/// width `t_min` and the base scale r0, up to R.
pub(crate) fn extension_grid(t_min: f64, ts: &[f64], q: &QuadratureSpec) -> Rule {
    let h0 = 0.25 * t_min.min(q.inner_split);
    let mut extra: Vec<f64> = ts.to_vec();
    extra.push(q.inner_split);
    let mut breaks = vec![0.0];
    breaks.extend(crate::quadrature::geometric_breaks(
        h0,
        q.truncation_radius,
        2.0,
        &extra,
    ));
    composite(&breaks, q.radial_nodes)
}

impl<F: Fn(&[f64]) -> f64 + Sync> ExtensionField<F> {
    /// Sphere-average profile of the base function on the grid, plus the
    /// tail model fitted at R/2 and R.
    fn profile(&self, y: &[f64], grid: &Rule, q: &QuadratureSpec) -> Result<(Vec<f64>, f64, f64)> {
        let rule = sphere_rule_at(&self.f, y, q);
        let big_r = q.truncation_radius;
        let mut radii = grid.nodes.clone();
        radii.push(0.5 * big_r);
        radii.push(big_r);
        let mut avg = sphere_averages(&self.f, y, &radii, &rule)?;
        let a = self.n as f64 - 2.0 * self.s;
        let at_r = avg.pop().unwrap();
        let at_half = avg.pop().unwrap();
        let (amp, corr, _) = tail_model(at_half, at_r, big_r, a, q.tail_order);
        Ok((avg, amp, corr))
    }

    fn extend_on_profile(&self, fy: f64, t: f64, grid: &Rule, avg: &[f64], amp: f64, big_r: f64) -> f64 {
        let nf = self.n as f64;
        let sp = 0.5 * (nf + 2.0 * self.s);
        let t2s = t.powf(2.0 * self.s);
        let body: f64 = grid
            .nodes
            .iter()
            .zip(&grid.weights)
            .zip(avg)
            .map(|((r, w), av)| w * t2s * (r * r + t * t).powf(-sp) * r.powf(nf - 1.0) * (av - fy))
            .sum();
        // beyond R: the base decays like A r^{-a}; remove the f(y) mass too
        let tail_avg = amp * t2s * big_r.powf(-nf) / nf;
        let tail_fy = fy * upper_kernel_tail(nf, self.s, t, big_r);
        fy + self.beta * sphere_area(self.n) * (body + tail_avg - tail_fy)
    }

    fn flux_on_profile(&self, fy: f64, t: f64, grid: &Rule, avg: &[f64], amp: f64, big_r: f64) -> f64 {
        let nf = self.n as f64;
        let s = self.s;
        let sp = 0.5 * (nf + 2.0 * s);
        let body: f64 = grid
            .nodes
            .iter()
            .zip(&grid.weights)
            .zip(avg)
            .map(|((r, w), av)| {
                let d = r * r + t * t;
                let k = 2.0 * s * d.powf(-sp) - (nf + 2.0 * s) * t * t * d.powf(-sp - 1.0);
                w * k * r.powf(nf - 1.0) * (av - fy)
            })
            .sum();
        let tail_avg = amp * 2.0 * s * big_r.powf(-nf) / nf;
        let tail_fy = fy * upper_flux_tail(nf, s, t, big_r) ;
        self.beta * sphere_area(self.n) * (body + tail_avg - tail_fy)
    }
}

/// ũ(y, t) = ∫ P_s(y - ξ, t) u(ξ) dξ.
pub fn poisson_extend<F>(e: &ExtensionField<F>, y: &[f64], t: f64, q: &QuadratureSpec) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    q.validate()?;
    check_point(e.n, y)?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("extension height must be positive, got {t}")));
    }
    let fy = (e.f)(y);
    if !fy.is_finite() {
        return Err(Error::NonFinite("u(y)".into()));
    }
    let grid = extension_grid(t, &[t], q);
    let (avg, amp, _) = e.profile(y, &grid, q)?;
    Ok(e.extend_on_profile(fy, t, &grid, &avg, amp, q.truncation_radius))
}

/// Weighted normal derivative t^{1-2s} ∂_t ũ(y, t).
pub fn extension_weighted_dt<F>(e: &ExtensionField<F>, y: &[f64], t: f64, q: &QuadratureSpec) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    q.validate()?;
    check_point(e.n, y)?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("extension height must be positive, got {t}")));
    }
    let fy = (e.f)(y);
    let grid = extension_grid(t, &[t], q);
    let (avg, amp, _) = e.profile(y, &grid, q)?;
    Ok(e.flux_on_profile(fy, t, &grid, &avg, amp, q.truncation_radius))
}

/// Settings of the t → 0 extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxLadder {
    /// Largest height t_0; the ladder is t_0 2^{-k}, k = 0..levels.
    pub t0: f64,
    pub levels: usize,
    /// Maximal relative change of the limit when one rung is dropped.
    pub tolerance: f64,
}

impl Default for FluxLadder {
    fn default() -> Self {
        FluxLadder {
            t0: 0.2,
            levels: 7,
            tolerance: 1e-2,
        }
    }
}

/// Result of the flux extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxEstimate {
    /// -d_s lim_{t→0} t^{1-2s} ∂_t ũ.
    pub value: f64,
    pub heights: Vec<f64>,
    pub weighted_dt: Vec<f64>,
    /// Largest relative change of the limit over leave-one-out refits.
    pub spread: f64,
}

fn flux_basis(t: f64, s: f64) -> Vec<f64> {
    vec![1.0, t.powf(2.0 - 2.0 * s), t * t, t.powf(4.0 - 2.0 * s)]
}

/// -d_s lim_{t→0} t^{1-2s} ∂_t ũ(y, t), extrapolated from a geometric ladder
/// of heights with the boundary expansion a + b t^{2-2s} + c t² + d t^{4-2s}.
pub fn extension_flux<F>(
    e: &ExtensionField<F>,
    y: &[f64],
    q: &QuadratureSpec,
    ladder: &FluxLadder,
) -> Result<FluxEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    q.validate()?;
    check_point(e.n, y)?;
    if ladder.levels < 5 || !(ladder.t0 > 0.0) {
        return Err(invalid("flux ladder", "need t0 > 0 and at least 5 levels"));
    }
    let fy = (e.f)(y);
    if !fy.is_finite() {
        return Err(Error::NonFinite("u(y)".into()));
    }
    let ts: Vec<f64> = (0..ladder.levels)
        .map(|k| ladder.t0 * 0.5f64.powi(k as i32))
        .collect();
    let t_min = *ts.last().unwrap();
    let grid = extension_grid(t_min, &ts, q);
    let (avg, amp, _) = e.profile(y, &grid, q)?;
    let ws: Vec<f64> = ts
        .iter()
        .map(|&t| e.flux_on_profile(fy, t, &grid, &avg, amp, q.truncation_radius))
        .collect();
    let fit = |skip: Option<usize>| -> Result<f64> {
        let (rows, vals): (Vec<Vec<f64>>, Vec<f64>) = ts
            .iter()
            .zip(&ws)
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(_, (&t, &w))| (flux_basis(t, e.s), w))
            .unzip();
        least_squares(&rows, &vals)
            .map(|c| c[0])
            .ok_or_else(|| Error::Extrapolation("singular fit".into()))
    };
    let limit = fit(None)?;
    let scale = ws.iter().fold(limit.abs(), |m, w| m.max(w.abs())).max(f64::MIN_POSITIVE);
    let mut spread: f64 = 0.0;
    for i in 0..ts.len() {
        spread = spread.max((fit(Some(i))? - limit).abs() / scale);
    }
    if !limit.is_finite() || spread > ladder.tolerance {
        return Err(Error::Extrapolation(format!(
            "flux limit unstable: leave-one-out spread {spread:.3e}"
        )));
    }
    Ok(FluxEstimate {
        value: -d_s(e.s) * limit,
        heights: ts,
        weighted_dt: ws,
        spread,
    })
}

/// Relative residual of div(t^{1-2s} ∇ũ) = 0 at (y, t) by central finite
/// differences of ũ with step h: |t^{1-2s}(Δ_y ũ + ũ_tt) + (1-2s) t^{-2s} ũ_t|
/// divided by the sum of the magnitudes of the three pieces.
pub fn harmonicity_residual<F>(
    e: &ExtensionField<F>,
    y: &[f64],
    t: f64,
    h: f64,
    q: &QuadratureSpec,
) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if !(h > 0.0 && h < t) {
        return Err(invalid("h", "need 0 < h < t"));
    }
    let c = poisson_extend(e, y, t, q)?;
    let up = poisson_extend(e, y, t + h, q)?;
    let dn = poisson_extend(e, y, t - h, q)?;
    let mut lap_y = 0.0;
    let mut z = y.to_vec();
    for i in 0..y.len() {
        z[i] = y[i] + h;
        let p = poisson_extend(e, &z, t, q)?;
        z[i] = y[i] - h;
        let m = poisson_extend(e, &z, t, q)?;
        z[i] = y[i];
        lap_y += (p - 2.0 * c + m) / (h * h);
    }
    let u_tt = (up - 2.0 * c + dn) / (h * h);
    let u_t = (up - dn) / (2.0 * h);
    let w = t.powf(1.0 - 2.0 * e.s);
    let a1 = w * lap_y;
    let a2 = w * u_tt;
    let a3 = (1.0 - 2.0 * e.s) * t.powf(-2.0 * e.s) * u_t;
    let scale = a1.abs() + a2.abs() + a3.abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((a1 + a2 + a3).abs() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubble::ExponentSign;
    use approx::assert_relative_eq;

    #[test]
    fn operator_constant_matches_extension_constants() {
        for &(n, s) in &[(4usize, 0.6), (5, 0.5), (5, 0.9), (6, 0.75), (7, 0.3)] {
            let lhs = d_s(s) * poisson_beta(n, s) * 2.0 * s;
            assert_relative_eq!(lhs, frac_lap_constant(n, s), max_relative = 1e-10);
        }
    }

    #[test]
    fn beta_matches_closed_form() {
        // β = Γ(N/2+s) / (π^{N/2} Γ(s))
        for &(n, s) in &[(4usize, 0.6), (5, 0.5), (6, 0.75), (9, 0.35)] {
            let h = 0.5 * n as f64;
            let closed = gamma(h + s) / (std::f64::consts::PI.powf(h) * gamma(s));
            assert_relative_eq!(poisson_beta(n, s), closed, max_relative = 1e-11);
        }
    }

    #[test]
    fn kernel_is_normalised() {
        let e = ExtensionField::new(|_: &[f64]| 1.0, 5, 0.4).unwrap();
        for &t in &[0.1, 1.0, 10.0] {
            assert_relative_eq!(e.kernel_mass(t), 1.0, max_relative = 1e-6);
        }
    }

    #[test]
    fn tail_series_matches_quadrature() {
        let (nf, s, t, r): (f64, f64, f64, f64) = (5.0, 0.4, 2.0, 30.0);
        let rule = composite(&crate::quadrature::geometric_breaks(r, 1e7, 2.0, &[]), 20);
        let q = rule.integrate(|x| t.powf(2.0 * s) * (x * x + t * t).powf(-0.5 * (nf + 2.0 * s)) * x.powf(nf - 1.0));
        let q = q + t.powf(2.0 * s) * 1e7f64.powf(-2.0 * s) / (2.0 * s);
        assert_relative_eq!(upper_kernel_tail(nf, s, t, r), q, max_relative = 1e-8);
    }

    #[test]
    fn exact_bubble_identity_at_peak() {
        let p = ProblemParams::new(5, 0.5, 0.0, ExponentSign::Plus).unwrap();
        let b = Bubble::unit(5);
        assert_relative_eq!(
            frac_lap_exact_bubble(&p, &b, &[0.0; 5]),
            16f64.powf(6.0 / 4.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn exact_bubble_scaling() {
        let p = ProblemParams::critical(6, 0.75).unwrap();
        let x = vec![0.3, -0.2, 0.1, 0.0, 0.5, -0.4];
        let lam = 3.7;
        let b = Bubble::new(x.clone(), lam).unwrap();
        let y = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let z: Vec<f64> = y.iter().zip(&x).map(|(a, b)| lam * (a - b)).collect();
        let lhs = frac_lap_exact_bubble(&p, &b, &y);
        let rhs = lam.powf(0.5 * (6.0 + 1.5)) * frac_lap_exact_bubble(&p, &Bubble::unit(6), &z);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    #[test]
    fn quadrature_reproduces_bubble_identity() {
        let p = ProblemParams::critical(4, 0.6).unwrap();
        let b = Bubble::unit(4);
        let f = |z: &[f64]| bubble_value(&p, &b, z);
        let q = QuadratureSpec::default();
        for y in [[0.0; 4], [0.7, 0.0, 0.3, 0.0], [0.0, 1.5, 0.0, -1.0]] {
            let est = frac_lap_quadrature(&f, 4, 0.6, &y, &q).unwrap();
            let exact = frac_lap_exact_bubble(&p, &b, &y);
            assert!(!est.tail_warning);
            assert_relative_eq!(est.value, exact, max_relative = 1e-3);
        }
    }

    #[test]
    fn extension_domain_error() {
        let e = ExtensionField::new(|_: &[f64]| 1.0, 4, 0.5).unwrap();
        let q = QuadratureSpec::default();
        assert!(matches!(poisson_extend(&e, &[0.0; 4], 0.0, &q), Err(Error::Domain(_))));
        assert!(matches!(poisson_extend(&e, &[0.0; 4], -1.0, &q), Err(Error::Domain(_))));
    }

    #[test]
    fn half_order_extension_closed_form() {
        // s = 1/2: the extension of U_{0,1} is C (|y|² + (1+t)²)^{-(N-1)/2}
        let p = ProblemParams::critical(5, 0.5).unwrap();
        let b = Bubble::unit(5);
        let e = ExtensionField::new(|z: &[f64]| bubble_value(&p, &b, z), 5, 0.5).unwrap();
        let q = QuadratureSpec { angular_nodes: 6, ..Default::default() };
        for (y, t) in [([0.0; 5], 0.3), ([0.4, 0.2, 0.0, 0.0, 0.1], 1.0)] {
            let r2: f64 = y.iter().map(|v| v * v).sum();
            let exact = 16.0 * (r2 + (1.0 + t) * (1.0 + t)).powf(-2.0);
            assert_relative_eq!(poisson_extend(&e, &y, t, &q).unwrap(), exact, max_relative = 1e-6);
        }
    }

    #[test]
    fn flux_reproduces_bubble_identity_at_peak() {
        let p = ProblemParams::critical(5, 0.5).unwrap();
        let b = Bubble::unit(5);
        let e = ExtensionField::new(|z: &[f64]| bubble_value(&p, &b, z), 5, 0.5).unwrap();
        let q = QuadratureSpec { angular_nodes: 6, ..Default::default() };
        let est = extension_flux(&e, &[0.0; 5], &q, &FluxLadder::default()).unwrap();
        assert_relative_eq!(est.value, frac_lap_exact_bubble(&p, &b, &[0.0; 5]), max_relative = 5e-3);
    }
}
