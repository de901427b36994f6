//! Reduced energy of a tower, its λ-derivative, the constants of the reduced
//! equation and a Newton solver for the reduced system.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::bubble::{dist2, tower_centers, ProblemParams, TowerConfig};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{composite, geometric_breaks, least_squares, linear_fit, CosineRule, SphereRule};
use crate::special::{beta, sphere_area};
use crate::weight::WeightField;

/// Number of bubbles for a given ε: m = ⌊ε^{-(a-2)/a²}⌋.
pub fn m_from_eps(p: &ProblemParams, eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid("eps", format!("must be positive and finite, got {eps}")));
    }
    let a = p.a();
    let m = (eps.ln() * (-(a - 2.0) / (a * a))).exp();
    // guard against m = 7.9999999 when the exact value is an integer
    let m = (m * (1.0 + 1e-12)).floor();
    if m < 1.0 {
        return Err(Error::EpsTooLarge(eps));
    }
    Ok(m as usize)
}

/// λ = t m^{a/(a-2)}.
pub fn lambda_from_t(p: &ProblemParams, t: f64, m: usize) -> f64 {
    let a = p.a();
    let x = (m as f64).powf(a / (a - 2.0));
    // integer results (e.g. 8^{8/3}) are returned exactly
    let r = x.round();
    let x = if (x - r).abs() <= 1e-12 * x { r } else { x };
    t * x
}

/// Inverse of [`lambda_from_t`].
pub fn t_from_lambda(p: &ProblemParams, lambda: f64, m: usize) -> f64 {
    let a = p.a();
    lambda / (m as f64).powf(a / (a - 2.0))
}

/// Quadrature controls for the energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpec {
    /// Gauss-Legendre nodes per radial panel.
    pub radial_nodes: usize,
    /// Nodes per panel of the cosine rule used for pair integrals.
    pub cosine_nodes: usize,
    /// Nodes per polar angle of the sphere rule for the remainder.
    pub angular_nodes: usize,
    /// Exponent k of the partition of unity U_1^k / Σ U_j^k.
    pub partition_power: f64,
}

impl Default for EnergySpec {
    fn default() -> Self {
        EnergySpec {
            radial_nodes: 12,
            cosine_nodes: 12,
            angular_nodes: 8,
            partition_power: 2.0,
        }
    }
}

impl EnergySpec {
    pub fn validate(&self) -> Result<()> {
        if self.radial_nodes < 2 || self.cosine_nodes < 2 || self.angular_nodes < 2 {
            return Err(invalid("energy quadrature", "node counts must be at least 2"));
        }
        if !(self.partition_power > 0.0) {
            return Err(invalid("partition_power", "must be positive"));
        }
        Ok(())
    }
}

/// Unit bubble at squared distance d2.
#[inline]
fn unit(p: &ProblemParams, d2: f64) -> f64 {
    p.bubble_constant() * (1.0 + d2).powf(-0.5 * p.a())
}

/// ∫ U^{2*} over R^N.
pub fn self_energy_constant(p: &ProblemParams) -> f64 {
    power_integral(p, p.two_star())
}

/// ∫ U^q over R^N for the unit bubble.
pub fn power_integral(p: &ProblemParams, q: f64) -> f64 {
    let n = p.n() as f64;
    let c = p.bubble_constant();
    sphere_area(p.n()) * c.powf(q) * 0.5 * beta(0.5 * n, 0.5 * p.a() * q - 0.5 * n)
}

/// Pair interaction X(D) = ∫ U^{2*-1}(z) U(z - D e) dz between two unit
/// bubbles whose centers are D apart.
pub fn pair_interaction(p: &ProblemParams, d: f64, spec: &EnergySpec) -> f64 {
    if d == 0.0 {
        return self_energy_constant(p);
    }
    let n = p.n();
    let nf = n as f64;
    let c = p.bubble_constant();
    let pc = p.critical_power();
    let cpow = c.powf(pc);
    let cr = CosineRule::new(spec.cosine_nodes, 0.5 * (nf - 3.0));
    let outer = 64.0 * d.max(16.0);
    let mut extra = vec![d];
    let mut h = 0.125;
    while h < d {
        extra.push(d - h);
        extra.push(d + h);
        h *= 2.0;
    }
    let mut breaks = vec![0.0];
    breaks.extend(geometric_breaks(0.0625, outer, 2.0, &extra));
    let rule = composite(&breaks, spec.radial_nodes);
    let mut sum = 0.0;
    for (&r, &w) in rule.nodes.iter().zip(&rule.weights) {
        let width = (1.0 + (r - d) * (r - d)) / (2.0 * r * d);
        let mut avg = 0.0;
        cr.for_each(width, &mut |cos, wc| {
            let d2 = (r * r + d * d + 2.0 * r * d * cos).max(0.0);
            avg += wc * unit(p, d2);
        });
        sum += w * r.powi(n as i32 - 1) * cpow * (1.0 + r * r).powf(-0.5 * (nf + 2.0 * p.s())) * avg;
    }
    // beyond `outer` both factors follow their power laws
    let tail = c.powf(pc + 1.0) * outer.powf(-nf) / nf;
    sphere_area(n) * (sum + tail)
}

/// Terms of the reduced energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    /// ½ Σ_{j,k} ∫ U_j^{2*-1} U_k.
    pub dirichlet: f64,
    /// (1/q) ∫ K Z^q with q = 2* ± ε.
    pub potential: f64,
    pub total: f64,
    /// Scaled pair interactions X(λ|x_j - x_k|); the diagonal holds ∫U^{2*}.
    pub pairs: Vec<Vec<f64>>,
    /// ∫ (K Z^q - Σ_j U_j^q).
    pub remainder: f64,
}

/// Reduced energy I(Z) = ½ Σ_{j,k} ∫ U_j^{2*-1} U_k - (1/q) ∫ K Z^q.
pub fn energy(p: &ProblemParams, cfg: &TowerConfig, k: &WeightField, spec: &EnergySpec) -> Result<EnergyBreakdown> {
    spec.validate()?;
    if cfg.dim() != p.n() || k.n() != p.n() {
        return Err(invalid("dimension", "tower, weight and problem dimensions differ"));
    }
    let m = cfg.m();
    let lambda = cfg.lambda();
    let centers = tower_centers(cfg);
    let mut cache: Vec<(f64, f64)> = Vec::new();
    let mut pairs = vec![vec![0.0; m]; m];
    let mut dirichlet = 0.0;
    for j in 0..m {
        for l in 0..m {
            let d = lambda * dist2(&centers[j], &centers[l]).sqrt();
            let x = match cache.iter().find(|(dd, _)| (dd - d).abs() <= 1e-12 * d.max(1.0)) {
                Some(&(_, x)) => x,
                None => {
                    let x = pair_interaction(p, d, spec);
                    cache.push((d, x));
                    x
                }
            };
            pairs[j][l] = x;
            dirichlet += 0.5 * x;
        }
    }
    let q = p.energy_power();
    let scale = lambda.powf(0.5 * p.a() * q - p.n() as f64);
    let remainder = scale * sector_remainder(p, cfg, k, spec, q);
    let potential = (m as f64 * scale * power_integral(p, q) + remainder) / q;
    Ok(EnergyBreakdown {
        dirichlet,
        potential,
        total: dirichlet - potential,
        pairs,
        remainder,
    })
}

/// m ∫ w_1 (K Z̃^q - Σ Ũ_j^q) dz in coordinates z = λ(y - x_1), where w_1 is a
/// partition of unity concentrated near bubble 1. Rotating the tower by
/// 2π/m permutes the bubbles and leaves K unchanged, so this equals the
/// integral over all of R^N.
fn sector_remainder(p: &ProblemParams, cfg: &TowerConfig, k: &WeightField, spec: &EnergySpec, q: f64) -> f64 {
    let n = p.n();
    let m = cfg.m();
    let lambda = cfg.lambda();
    let centers = tower_centers(cfg);
    let x1 = &centers[0];
    let shifted: Vec<Vec<f64>> = centers
        .iter()
        .map(|c| c.iter().zip(x1).map(|(a, b)| lambda * (a - b)).collect())
        .collect();
    let dmax = shifted.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let cut = k.cutoff_radius() + (x1[0] * x1[0] + x1[1] * x1[1]).sqrt().max(k.r0());
    let outer = 64.0 * (dmax + lambda * cut).max(16.0);
    let mut breaks = vec![0.0];
    breaks.extend(geometric_breaks(0.0625, outer, 2.0, &[]));
    let radial = composite(&breaks, spec.radial_nodes);
    // polar axis toward the ring center
    let axis: Vec<f64> = {
        let r = (x1[0] * x1[0] + x1[1] * x1[1]).sqrt();
        let mut v = vec![0.0; n];
        v[0] = -x1[0] / r;
        v[1] = -x1[1] / r;
        v
    };
    let sphere = SphereRule::with_axis(n, spec.angular_nodes, Some(&axis));
    let kp = spec.partition_power;
    let mut z = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut u = vec![0.0; m];
    let mut total = 0.0;
    for (&r, &wr) in radial.nodes.iter().zip(&radial.weights) {
        let mut shell = 0.0;
        for (omega, wo) in sphere.iter() {
            for i in 0..n {
                z[i] = r * omega[i];
                y[i] = x1[i] + z[i] / lambda;
            }
            let mut top = 0usize;
            for j in 0..m {
                u[j] = unit(p, dist2(&z, &shifted[j]));
                if u[j] > u[top] {
                    top = j;
                }
            }
            let rest: f64 = u.iter().enumerate().filter(|(j, _)| *j != top).map(|(_, v)| v).sum();
            let zq = u[top].powf(q) * (q * (rest / u[top]).ln_1p()).exp();
            // Z^q - Σ U_j^q without cancellation against the dominant term
            let mut cross = u[top].powf(q) * (q * (rest / u[top]).ln_1p()).exp_m1();
            for (j, &v) in u.iter().enumerate() {
                if j != top {
                    cross -= v.powf(q);
                }
            }
            let kv = k.eval(&y);
            let integrand = (kv - 1.0) * zq + cross;
            let w1 = 1.0 / u.iter().map(|v| (v / u[0]).powf(kp)).sum::<f64>();
            shell += wo * w1 * integrand;
        }
        total += wr * r.powi(n as i32 - 1) * shell;
    }
    m as f64 * total
}

/// Finite-difference derivative of the energy in λ and the two-term model.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub lambda: f64,
    pub derivative: f64,
    /// m(-B1/λ³ + Σ_{j≥2} B2/(λ^{a+1}|x_1 - x_j|^a)).
    pub model: f64,
    pub ratio: f64,
    /// (derivative - model) λ³ / m.
    pub remainder_scaled: f64,
    /// Difference between the estimates at steps h and 2h.
    pub step_discrepancy: f64,
}

/// The two reduced constants used by the derivative model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConstants {
    pub b1: f64,
    pub b2: f64,
}

impl ModelConstants {
    /// B1 for the Laplacian of K at the first center and B2 from the
    /// interaction fit.
    pub fn for_tower(p: &ProblemParams, cfg: &TowerConfig, k: &WeightField, spec: &EnergySpec) -> Result<Self> {
        let x1 = cfg.center(1);
        let lap = k.hess(&x1)?.trace();
        Ok(ModelConstants {
            b1: constant_b1(p, lap)?.value,
            b2: fit_interaction(p, spec)?.b2,
        })
    }
}

/// Central difference of the energy in λ with step h = 1e-4 λ, compared to
/// the model.
pub fn denergy_dlambda(
    p: &ProblemParams,
    cfg: &TowerConfig,
    k: &WeightField,
    spec: &EnergySpec,
    consts: &ModelConstants,
) -> Result<DerivativeReport> {
    let lambda = cfg.lambda();
    let e = |l: f64| -> Result<f64> { Ok(energy(p, &cfg.with_lambda(l)?, k, spec)?.total) };
    let h = 1e-4 * lambda;
    let (em2, em1, ep1, ep2) = (e(lambda - 2.0 * h)?, e(lambda - h)?, e(lambda + h)?, e(lambda + 2.0 * h)?);
    let d1 = (ep1 - em1) / (2.0 * h);
    let d2 = (ep2 - em2) / (4.0 * h);
    let discrepancy = (d1 - d2).abs();
    if !(d1.is_finite() && d2.is_finite()) {
        return Err(Error::NonFinite(format!("energy near lambda = {lambda}")));
    }
    if discrepancy > 0.25 * d1.abs().max(d2.abs()) {
        return Err(Error::StepSize(format!(
            "dI/dlambda = {d1:e} at step h but {d2:e} at 2h (lambda = {lambda})"
        )));
    }
    let model = derivative_model(p, cfg, consts);
    let m = cfg.m() as f64;
    Ok(DerivativeReport {
        lambda,
        derivative: d1,
        model,
        ratio: d1 / model,
        remainder_scaled: (d1 - model) * lambda.powi(3) / m,
        step_discrepancy: discrepancy,
    })
}

/// m(-B1/λ³ + Σ_{j≥2} B2/(λ^{a+1}|x_1 - x_j|^a)).
pub fn derivative_model(p: &ProblemParams, cfg: &TowerConfig, consts: &ModelConstants) -> f64 {
    let a = p.a();
    let lambda = cfg.lambda();
    let centers = tower_centers(cfg);
    let sum: f64 = centers[1..]
        .iter()
        .map(|c| dist2(&centers[0], c).sqrt().powf(-a))
        .sum();
    cfg.m() as f64 * (-consts.b1 / lambda.powi(3) + consts.b2 * sum / lambda.powf(a + 1.0))
}

/// A constant computed by two independent rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoRuleValue {
    pub value: f64,
    pub alternate: f64,
    pub relative_gap: f64,
}

/// ∫ |z|² U^{2*} dz by two rules: Gauss-Legendre in φ with r = tan φ, and
/// geometric radial panels with a power-law tail.
pub fn second_moment(p: &ProblemParams) -> TwoRuleValue {
    let n = p.n();
    let nf = n as f64;
    let c2 = p.bubble_constant().powf(p.two_star());
    let area = sphere_area(n);
    // r = tan φ: r^{N+1}(1+r²)^{-N} dr = sin^{N+1}φ cos^{N-3}φ dφ
    let angular = composite(&[0.0, 0.25 * PI, 0.5 * PI], 32)
        .integrate(|phi| phi.sin().powi(n as i32 + 1) * phi.cos().powi(n as i32 - 3));
    let outer = 1e4;
    let mut breaks = vec![0.0];
    breaks.extend(geometric_breaks(0.125, outer, 2.0, &[]));
    let radial = composite(&breaks, 16).integrate(|r| r.powi(n as i32 + 1) * (1.0 + r * r).powf(-nf));
    // (1+r²)^{-N} = r^{-2N}(1 - N r^{-2} + …) past `outer`
    let tail = outer.powf(2.0 - nf) / (nf - 2.0) - outer.powf(-nf);
    let value = area * c2 * angular;
    let alternate = area * c2 * (radial + tail);
    TwoRuleValue {
        value,
        alternate,
        relative_gap: (value - alternate).abs() / value.abs(),
    }
}

/// B1 = (1/2*)(-ΔK/N) ∫ |z|² U^{2*}.
pub fn constant_b1(p: &ProblemParams, laplacian: f64) -> Result<TwoRuleValue> {
    let mom = second_moment(p);
    if mom.relative_gap > 1e-4 {
        return Err(Error::Convergence(format!(
            "second moment rules disagree by {:e}",
            mom.relative_gap
        )));
    }
    let f = -laplacian / (p.n() as f64 * p.two_star());
    Ok(TwoRuleValue {
        value: f * mom.value,
        alternate: f * mom.alternate,
        relative_gap: mom.relative_gap,
    })
}

/// Power-law fit of the pair interaction and its derivative at large
/// separation.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionFit {
    /// Separations D used.
    pub separations: Vec<f64>,
    /// X(D).
    pub values: Vec<f64>,
    /// Fitted exponent of X(D) ~ D^{-γ}.
    pub decay_exponent: f64,
    /// Fitted exponent of -X'(D) ~ D^{-γ'}.
    pub derivative_exponent: f64,
    /// c with -X'(D) ≈ c D^{-(a+1)}, by least squares at the fixed exponent.
    pub derivative_coefficient: f64,
    /// Largest relative deviation of -X'(D) from c D^{-(a+1)}.
    pub relative_residual: f64,
    /// B2 = c/2, the factor for a single ordered pair in dI/dλ.
    pub b2: f64,
}

/// Fits X(D) over D ∈ [10², 10⁴].
pub fn fit_interaction(p: &ProblemParams, spec: &EnergySpec) -> Result<InteractionFit> {
    let a = p.a();
    let separations: Vec<f64> = (0..9).map(|i| 100.0 * 10f64.powf(0.25 * i as f64)).collect();
    let values: Vec<f64> = separations.iter().map(|&d| pair_interaction(p, d, spec)).collect();
    let derivs: Vec<f64> = separations
        .iter()
        .map(|&d| {
            let h = 1e-3 * d;
            -(pair_interaction(p, d + h, spec) - pair_interaction(p, d - h, spec)) / (2.0 * h)
        })
        .collect();
    if values.iter().chain(&derivs).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::FitQuality("non-positive interaction samples".into()));
    }
    let lx: Vec<f64> = separations.iter().map(|d| d.ln()).collect();
    let fit = |v: &[f64]| {
        linear_fit(&lx, &v.iter().map(|x| x.ln()).collect::<Vec<_>>())
            .map(|(s, _)| s)
            .ok_or_else(|| Error::FitQuality("log-log fit failed".into()))
    };
    let slope_x = fit(&values)?;
    let slope_d = fit(&derivs)?;
    let logs: Vec<f64> = separations
        .iter()
        .zip(&derivs)
        .map(|(d, g)| (g * d.powf(a + 1.0)).ln())
        .collect();
    let c = (logs.iter().sum::<f64>() / logs.len() as f64).exp();
    let residual = separations
        .iter()
        .zip(&derivs)
        .map(|(d, g)| (g - c * d.powf(-(a + 1.0))).abs() / g)
        .fold(0.0, f64::max);
    if residual > 0.05 {
        return Err(Error::FitQuality(format!("relative residual {residual:e} exceeds 5%")));
    }
    Ok(InteractionFit {
        separations,
        values,
        decay_exponent: -slope_x,
        derivative_exponent: -slope_d,
        derivative_coefficient: c,
        relative_residual: residual,
        b2: 0.5 * c,
    })
}

/// S(m) = m^{-a} Σ_{k=1}^{m-1} sin^{-a}(πk/m).
pub fn lattice_partial(a: f64, m: usize) -> f64 {
    let mf = m as f64;
    (1..m).map(|k| (PI * k as f64 / mf).sin().powf(-a)).sum::<f64>() * mf.powf(-a)
}

/// Extrapolated limit of [`lattice_partial`] as m → ∞.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeLimit {
    pub value: f64,
    /// Limit extrapolated from m ∈ {8, 16, 32}.
    pub coarse: f64,
    pub partials: Vec<(usize, f64)>,
}

/// Least-squares extrapolation with the model L + c1 m^{-2} + c2 m^{1-a}.
pub fn lattice_limit(a: f64) -> Result<LatticeLimit> {
    if !(a > 2.0) {
        return Err(invalid("a", "lattice sum diverges for a <= 2"));
    }
    let ms = [8usize, 16, 32, 64];
    let partials: Vec<(usize, f64)> = ms.iter().map(|&m| (m, lattice_partial(a, m))).collect();
    let extrapolate = |pts: &[(usize, f64)]| -> Result<f64> {
        let rows: Vec<Vec<f64>> = pts
            .iter()
            .map(|&(m, _)| {
                let mf = m as f64;
                vec![1.0, mf.powi(-2), mf.powf(1.0 - a)]
            })
            .collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        least_squares(&rows, &y)
            .map(|c| c[0])
            .ok_or_else(|| Error::Extrapolation("singular extrapolation system".into()))
    };
    let coarse = extrapolate(&partials[..3])?;
    let value = extrapolate(&partials)?;
    if (value - coarse).abs() > 1e-3 * value.abs() {
        return Err(Error::Extrapolation(format!(
            "lattice limit moved from {coarse} to {value} between m = 32 and m = 64"
        )));
    }
    Ok(LatticeLimit { value, coarse, partials })
}

/// B3 = B2 (2 r̄)^{-a} lim_m m^{-a} Σ_k sin^{-a}(πk/m).
pub fn constant_b3(p: &ProblemParams, b2: f64, rbar: f64) -> Result<f64> {
    let a = p.a();
    Ok(b2 * (2.0 * rbar).powf(-a) * lattice_limit(a)?.value)
}

/// All constants of the reduced equation for a given weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedConstants {
    pub b1: f64,
    pub b2: f64,
    /// B3 at r̄ = r0.
    pub b3: f64,
    pub lattice: f64,
}

impl ReducedConstants {
    pub fn compute(p: &ProblemParams, k: &WeightField, spec: &EnergySpec) -> Result<Self> {
        let b1 = constant_b1(p, k.laplacian_at_critical())?.value;
        let b2 = fit_interaction(p, spec)?.b2;
        let lattice = lattice_limit(p.a())?.value;
        let b3 = b2 * (2.0 * k.r0()).powf(-p.a()) * lattice;
        Ok(ReducedConstants { b1, b2, b3, lattice })
    }

    /// B3 at radius r̄.
    pub fn b3_at(&self, p: &ProblemParams, rbar: f64) -> f64 {
        self.b2 * (2.0 * rbar).powf(-p.a()) * self.lattice
    }
}

/// Search box for the reduced system: v within `half_width` of the critical
/// point (in each coordinate) and t ∈ [t_lo, t_hi]. The v-box must lie where
/// the cutoff of K equals one, so that ∇K has a single zero in it.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSpec {
    pub t_lo: f64,
    pub t_hi: f64,
    pub half_width: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            t_lo: 0.1,
            t_hi: 10.0,
            half_width: 0.1,
            max_iter: 100,
            tolerance: 1e-13,
        }
    }
}

/// Values of one equation on the two opposite faces of the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceSigns {
    pub low: f64,
    pub high: f64,
}

impl FaceSigns {
    pub fn opposite(&self) -> bool {
        self.low * self.high < 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSolution {
    pub rbar: f64,
    pub ybar: Vec<f64>,
    pub t: f64,
    pub t_closed_form: f64,
    /// (∇_v K, -B1/t³ + B3/t^{a+1}) at the solution.
    pub residual: Vec<f64>,
    pub iterations: usize,
    pub faces: Vec<FaceSigns>,
    pub constants: ReducedConstants,
}

impl ReducedSolution {
    pub fn faces_ok(&self) -> bool {
        self.faces.iter().all(FaceSigns::opposite)
    }
}

/// F(v, t) = (∇_v K(v), -B1/t³ + B3(r̄)/t^{a+1}).
pub fn reduced_map(p: &ProblemParams, k: &WeightField, c: &ReducedConstants, v: &[f64], t: f64) -> Vec<f64> {
    let a = p.a();
    let mut f = k.grad_reduced(v);
    f.push(-c.b1 / t.powi(3) + c.b3_at(p, v[0]) / t.powf(a + 1.0));
    f
}

/// Solves the reduced system from the center of the box.
pub fn solve_reduced(p: &ProblemParams, k: &WeightField, consts: &ReducedConstants, spec: &SolverSpec) -> Result<ReducedSolution> {
    let mut start = k.v0();
    start.push((spec.t_lo * spec.t_hi).sqrt());
    solve_reduced_from(p, k, consts, spec, &start)
}

/// Damped Newton iteration in (v, ln t) on (∇_v K, B3(r̄) - B1 t^{a-2}),
/// which has the same zeros as the reduced map.
pub fn solve_reduced_from(
    p: &ProblemParams,
    k: &WeightField,
    consts: &ReducedConstants,
    spec: &SolverSpec,
    start: &[f64],
) -> Result<ReducedSolution> {
    let d = p.n() - 1;
    if start.len() != d + 1 {
        return Err(invalid("start", format!("expected {} coordinates", d + 1)));
    }
    if !(spec.t_lo > 0.0 && spec.t_hi > spec.t_lo && spec.half_width > 0.0) {
        return Err(invalid("solver box", "need 0 < t_lo < t_hi and half_width > 0"));
    }
    if spec.half_width * (d as f64).sqrt() > 0.5 * k.cutoff_radius() {
        return Err(invalid(
            "half_width",
            format!("box leaves the ball of radius {} where K is quadratic", 0.5 * k.cutoff_radius()),
        ));
    }
    let a = p.a();
    let (b1, b3) = (consts.b1, consts.b3);
    if !(b1 > 0.0 && b3 > 0.0) {
        return Err(Error::NoRoot(format!(
            "B1 = {b1:e} and B3 = {b3:e} must both be positive for a root in t"
        )));
    }
    let t_cf = (b3 / b1).powf(1.0 / (a - 2.0));
    if t_cf < spec.t_lo || t_cf > spec.t_hi {
        return Err(Error::Window {
            t_cf,
            lo: spec.t_lo,
            hi: spec.t_hi,
        });
    }
    let v0 = k.v0();
    let lo: Vec<f64> = v0.iter().map(|c| c - spec.half_width).chain([spec.t_lo.ln()]).collect();
    let hi: Vec<f64> = v0.iter().map(|c| c + spec.half_width).chain([spec.t_hi.ln()]).collect();
    let mut x: Vec<f64> = start[..d].iter().copied().chain([start[d].ln()]).collect();
    for i in 0..=d {
        if !(x[i] >= lo[i] && x[i] <= hi[i]) {
            return Err(invalid("start", "starting point lies outside the search box"));
        }
    }
    let g = |x: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let jet = k.jet_reduced(&x[..d]);
        let t = x[d].exp();
        let b3r = consts.b3_at(p, x[0]);
        let mut val = DVector::zeros(d + 1);
        let mut jac = DMatrix::zeros(d + 1, d + 1);
        for i in 0..d {
            val[i] = jet.grad[i];
            for j in 0..d {
                jac[(i, j)] = jet.hess[(i, j)];
            }
        }
        val[d] = b3r - b1 * t.powf(a - 2.0);
        jac[(d, 0)] = -a * b3r / x[0];
        jac[(d, d)] = -(a - 2.0) * b1 * t.powf(a - 2.0);
        (val, jac)
    };
    let scale = b3.max(1.0);
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..spec.max_iter {
        iterations = it + 1;
        let (val, jac) = g(&x);
        let norm = val.norm();
        if norm <= spec.tolerance * scale {
            converged = true;
            break;
        }
        let step = jac
            .clone()
            .lu()
            .solve(&(-&val))
            .ok_or_else(|| Error::NoRoot("singular Jacobian of the reduced map".into()))?;
        let mut damp = 1.0;
        loop {
            let trial: Vec<f64> = x
                .iter()
                .zip(step.iter())
                .enumerate()
                .map(|(i, (xi, si))| (xi + damp * si).clamp(lo[i], hi[i]))
                .collect();
            let (tv, _) = g(&trial);
            if tv.norm() < norm || damp < 1e-6 {
                let moved = trial.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                x = trial;
                if moved <= 1e-15 && tv.norm() <= 1e-9 * scale {
                    converged = true;
                }
                break;
            }
            damp *= 0.5;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::NoRoot(format!("Newton did not converge in {} iterations", spec.max_iter)));
    }
    let t = x[d].exp();
    let v = x[..d].to_vec();
    let residual = reduced_map(p, k, consts, &v, t);
    let center_t = (spec.t_lo * spec.t_hi).sqrt();
    let mut faces = Vec::with_capacity(d + 1);
    for i in 0..d {
        let mut vl = v0.clone();
        let mut vh = v0.clone();
        vl[i] -= spec.half_width;
        vh[i] += spec.half_width;
        faces.push(FaceSigns {
            low: reduced_map(p, k, consts, &vl, center_t)[i],
            high: reduced_map(p, k, consts, &vh, center_t)[i],
        });
    }
    faces.push(FaceSigns {
        low: reduced_map(p, k, consts, &v0, spec.t_lo)[d],
        high: reduced_map(p, k, consts, &v0, spec.t_hi)[d],
    });
    Ok(ReducedSolution {
        rbar: v[0],
        ybar: v[1..].to_vec(),
        t,
        t_closed_form: t_cf,
        residual,
        iterations,
        faces,
        constants: *consts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gauss_legendre, Rule};
    use crate::special::gamma;
    use approx::assert_relative_eq;

    fn p59() -> ProblemParams {
        ProblemParams::critical(5, 0.9).unwrap()
    }

    fn zeta(x: f64) -> f64 {
        let k = 2000usize;
        let kf = k as f64;
        let head: f64 = (1..k).map(|j| (j as f64).powf(-x)).sum();
        head + kf.powf(1.0 - x) / (x - 1.0) + 0.5 * kf.powf(-x) + x * kf.powf(-x - 1.0) / 12.0
    }

    #[test]
    fn bookkeeping_examples() {
        let p = p59();
        let m = m_from_eps(&p.with_eps(1e-8).unwrap(), 1e-8).unwrap();
        assert_eq!(m, 8);
        assert_eq!(lambda_from_t(&p, 1.0, 8), 256.0);
        assert_relative_eq!(t_from_lambda(&p, 256.0, 8), 1.0, max_relative = 1e-14);
        assert!(matches!(m_from_eps(&p, 10.0), Err(Error::EpsTooLarge(_))));
    }

    #[test]
    fn power_integral_matches_radial_quadrature() {
        let p = p59();
        let q = p.two_star();
        let rule = composite(&[0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0], 20);
        let direct = sphere_area(5) * rule.integrate(|r| r.powi(4) * unit(&p, r * r).powf(q));
        assert_relative_eq!(power_integral(&p, q), direct, max_relative = 1e-6);
    }

    #[test]
    fn pair_interaction_matches_cylindrical_rule() {
        // axial coordinate x along the separation, radial distance ρ from the axis
        let p = p59();
        let spec = EnergySpec::default();
        let pc = p.critical_power();
        for &d in &[0.5, 3.0, 20.0] {
            let mut xb: Vec<f64> = (-40..=40).map(|k| d * 0.5 + k as f64 * (0.25 + d / 40.0)).collect();
            xb.sort_by(f64::total_cmp);
            let gl = gauss_legendre(16);
            let xr = Rule::concat(xb.windows(2).map(|w| gl.mapped(w[0], w[1])));
            let mut rb = vec![0.0];
            rb.extend(geometric_breaks(0.125, 4096.0, 1.5, &[]));
            let rr = composite(&rb, 16);
            let mut sum = 0.0;
            for (&x, &wx) in xr.nodes.iter().zip(&xr.weights) {
                for (&rho, &wr) in rr.nodes.iter().zip(&rr.weights) {
                    let u1 = unit(&p, x * x + rho * rho).powf(pc);
                    let u2 = unit(&p, (x - d) * (x - d) + rho * rho);
                    sum += wx * wr * rho.powi(3) * u1 * u2;
                }
            }
            let oracle = sphere_area(4) * sum;
            assert_relative_eq!(pair_interaction(&p, d, &spec), oracle, max_relative = 2e-4);
        }
    }

    #[test]
    fn pair_interaction_decays_with_bubble_tail() {
        // X(D) D^a → C ∫U^{2*-1}
        let p = p59();
        let d = 1e4;
        let lim = p.bubble_constant() * power_integral(&p, p.critical_power());
        let x = pair_interaction(&p, d, &EnergySpec::default());
        assert_relative_eq!(x * d.powf(p.a()), lim, max_relative = 1e-3);
    }

    #[test]
    fn interaction_fit_matches_closed_form() {
        let p = p59();
        let fit = fit_interaction(&p, &EnergySpec::default()).unwrap();
        let closed = 0.5 * p.a() * p.bubble_constant() * power_integral(&p, p.critical_power());
        assert_relative_eq!(fit.b2, closed, max_relative = 1e-3);
        assert!((fit.decay_exponent / p.a() - 1.0).abs() < 0.02);
        assert!((fit.derivative_exponent / (p.a() + 1.0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn second_moment_matches_beta() {
        for &(n, s) in &[(4usize, 0.6), (5, 0.9), (7, 0.8)] {
            let p = ProblemParams::critical(n, s).unwrap();
            let nf = n as f64;
            let closed = sphere_area(n)
                * p.bubble_constant().powf(p.two_star())
                * 0.5
                * gamma(0.5 * nf + 1.0)
                * gamma(0.5 * nf - 1.0)
                / gamma(nf);
            let mom = second_moment(&p);
            assert_relative_eq!(mom.value, closed, max_relative = 1e-10);
            assert!(mom.relative_gap < 1e-4, "{mom:?}");
        }
    }

    #[test]
    fn lattice_limit_matches_zeta() {
        for &a in &[2.4, 3.2, 5.0] {
            let lim = lattice_limit(a).unwrap();
            assert_relative_eq!(lim.value, 2.0 * zeta(a) / PI.powf(a), max_relative = 1e-3);
        }
        assert!(lattice_limit(2.0).is_err());
    }

    #[test]
    fn single_bubble_energy_is_scale_free() {
        // K ≡ 1 around the bubble: I = (s/N) ∫U^{2*} for every λ
        let p = p59();
        let k = WeightField::default_saddle();
        let spec = EnergySpec::default();
        let expect = p.s() / 5.0 * self_energy_constant(&p);
        for &lam in &[5.0, 50.0, 500.0] {
            let cfg = TowerConfig::new(1, 3.0, vec![0.0; 3], lam).unwrap();
            let e = energy(&p, &cfg, &k, &spec).unwrap();
            assert_relative_eq!(e.total, expect, max_relative = 1e-6);
        }
    }

    #[test]
    fn solver_recovers_closed_form_root() {
        let p = p59();
        let k = WeightField::default_saddle();
        let c = ReducedConstants {
            b1: 180.0,
            b2: 9000.0,
            b3: 60.0,
            lattice: 60.0 / 9000.0 * 2f64.powf(p.a()),
        };
        let spec = SolverSpec::default();
        let sol = solve_reduced(&p, &k, &c, &spec).unwrap();
        let t_cf = (c.b3 / c.b1).powf(1.0 / (p.a() - 2.0));
        assert!((sol.t - t_cf).abs() < 1e-10);
        assert!(sol.faces_ok());
        assert_relative_eq!(sol.rbar, 1.0, epsilon = 1e-12);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut start: Vec<f64> = k.v0().iter().map(|v| v + rng.random_range(-0.099..0.099)).collect();
            start.push((rng.random_range(spec.t_lo.ln()..spec.t_hi.ln())).exp());
            let s = solve_reduced_from(&p, &k, &c, &spec, &start).unwrap_or_else(|e| panic!("{start:?} {e}"));
            assert!((s.t - t_cf).abs() < 1e-10, "start {start:?} gave {}", s.t);
        }
        let narrow = SolverSpec { t_lo: 0.5, ..spec };
        assert!(matches!(solve_reduced(&p, &k, &c, &narrow), Err(Error::Window { .. })));
    }
}
