//! The defect l_ε = K Z^{2*_s-1±ε} - Σ_j U_j^{2*_s-1} of the tower ansatz,
//! its three-term split and the ε-sweep of ‖l_ε‖_**.

use rayon::prelude::*;

use crate::bubble::{dist2, profile, tower_centers, ProblemParams, TowerConfig};
use crate::error::{invalid, Result};
use crate::norms::{norm_starstar, GridSpec, SampleGrid};
use crate::quadrature::linear_fit;
use crate::reduced::{lambda_from_t, m_from_eps};
use crate::weight::WeightField;

/// x^q through log space; tiny or non-positive bases give 0.
pub fn pow_pos(x: f64, q: f64) -> f64 {
    if x <= 1e-300 {
        return 0.0;
    }
    (q * x.ln()).exp()
}

/// The defect of a tower for a given weight.
pub struct ResidualField<'a> {
    p: ProblemParams,
    cfg: TowerConfig,
    k: &'a WeightField,
    centers: Vec<Vec<f64>>,
}

/// The three pieces J1 + J2 + J3 = l_ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSplit {
    /// K (Z^{p+ε} - Z^{p}).
    pub j1: f64,
    /// K (Z^{p} - Σ U_j^{p}).
    pub j2: f64,
    /// (K - 1) Σ U_j^{p}.
    pub j3: f64,
}

impl<'a> ResidualField<'a> {
    pub fn new(p: &ProblemParams, cfg: &TowerConfig, k: &'a WeightField) -> Result<Self> {
        if cfg.dim() != p.n() || k.n() != p.n() {
            return Err(invalid("dimension", "tower, weight and problem must share N"));
        }
        Ok(ResidualField {
            p: p.clone(),
            cfg: cfg.clone(),
            k,
            centers: tower_centers(cfg),
        })
    }

    pub fn params(&self) -> &ProblemParams {
        &self.p
    }

    pub fn config(&self) -> &TowerConfig {
        &self.cfg
    }

    fn bubbles(&self, y: &[f64]) -> (f64, f64) {
        let pc = self.p.critical_power();
        let mut z = 0.0;
        let mut sum_pow = 0.0;
        for x in &self.centers {
            let u = profile(&self.p, self.cfg.lambda(), dist2(y, x));
            z += u;
            sum_pow += pow_pos(u, pc);
        }
        (z, sum_pow)
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        let (z, sum_pow) = self.bubbles(y);
        self.k.eval(y) * pow_pos(z, self.p.power()) - sum_pow
    }

    pub fn split(&self, y: &[f64]) -> ResidualSplit {
        let (z, sum_pow) = self.bubbles(y);
        let k = self.k.eval(y);
        let zc = pow_pos(z, self.p.critical_power());
        ResidualSplit {
            j1: k * (pow_pos(z, self.p.power()) - zc),
            j2: k * (zc - sum_pow),
            j3: (k - 1.0) * sum_pow,
        }
    }
}

/// One row of the ε-sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub m: usize,
    pub lambda: f64,
    pub norm_total: f64,
    pub norm_j1: f64,
    pub norm_j2: f64,
    pub norm_j3: f64,
    /// Slope of log‖l_ε‖_** against log ε over the rows so far.
    pub slope: Option<f64>,
}

/// Settings of [`residual_norm_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub l0: f64,
    pub l1: f64,
    /// λ = t m^{(N-2s)/(N-2s-2)} before clamping.
    pub t: f64,
    /// Shift of (r̄, ȳ'') away from (r0, y0''); must satisfy
    /// |offset| ≤ ε^{1/(N-2s)} for every ε of the sweep.
    pub offset: Vec<f64>,
    pub grid: GridSpec,
    pub seed: u64,
}

impl SweepSpec {
    pub fn new(n: usize) -> Self {
        SweepSpec {
            l0: 0.5,
            l1: 2.0,
            t: 1.0,
            offset: vec![0.0; n - 1],
            grid: GridSpec::default(),
            seed: 0,
        }
    }
}

/// λ = t m^{a/(a-2)} clamped into [L0 ε^{-1/a}, L1 ε^{-1/a}], a = N - 2s.
pub fn sweep_lambda(p: &ProblemParams, eps: f64, m: usize, spec: &SweepSpec) -> f64 {
    let scale = eps.powf(-1.0 / p.a());
    lambda_from_t(p, spec.t, m).clamp(spec.l0 * scale, spec.l1 * scale)
}

/// ‖l_ε‖_** and the norms of J1, J2, J3 along a decreasing list of ε, with
/// m = m(ε), (r̄, ȳ'') = (r0, y0'') + offset and λ from [`sweep_lambda`].
pub fn residual_norm_sweep(
    p: &ProblemParams,
    k: &WeightField,
    eps_list: &[f64],
    spec: &SweepSpec,
) -> Result<Vec<SweepRow>> {
    if eps_list.is_empty() {
        return Err(invalid("eps_list", "must not be empty"));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(invalid("eps_list", "must be positive and strictly decreasing"));
    }
    if !(spec.l0 > 0.0 && spec.l1 > spec.l0) {
        return Err(invalid("L0/L1", "need 0 < L0 < L1"));
    }
    if spec.offset.len() != p.n() - 1 {
        return Err(invalid("offset", format!("expected {} entries", p.n() - 1)));
    }
    let off = spec.offset.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rows: Vec<SweepRow> = eps_list
        .par_iter()
        .map(|&eps| {
            if off > eps.powf(1.0 / p.a()) {
                return Err(invalid("offset", format!("exceeds eps^(1/(N-2s)) at eps = {eps}")));
            }
            let pe = p.with_eps(eps)?;
            let m = m_from_eps(&pe, eps)?;
            let lambda = sweep_lambda(&pe, eps, m, spec);
            let rbar = k.r0() + spec.offset[0];
            let ybar: Vec<f64> = k.y0pp().iter().zip(&spec.offset[1..]).map(|(a, b)| a + b).collect();
            let cfg = TowerConfig::new(m, rbar, ybar, lambda)?;
            let field = ResidualField::new(&pe, &cfg, k)?;
            let grid = SampleGrid::standard(&cfg, &spec.grid, spec.seed)?;
            let total = norm_starstar(&|y: &[f64]| field.eval(y), &pe, &cfg, &grid)?.value;
            let j1 = norm_starstar(&|y: &[f64]| field.split(y).j1, &pe, &cfg, &grid)?.value;
            let j2 = norm_starstar(&|y: &[f64]| field.split(y).j2, &pe, &cfg, &grid)?.value;
            let j3 = norm_starstar(&|y: &[f64]| field.split(y).j3, &pe, &cfg, &grid)?.value;
            Ok(SweepRow {
                eps,
                m,
                lambda,
                norm_total: total,
                norm_j1: j1,
                norm_j2: j2,
                norm_j3: j3,
                slope: None,
            })
        })
        .collect::<Result<_>>()?;
    let mut rows = rows;
    for i in 1..rows.len() {
        let xs: Vec<f64> = rows[..=i].iter().map(|r| r.eps.ln()).collect();
        let ys: Vec<f64> = rows[..=i].iter().map(|r| r.norm_total.ln()).collect();
        rows[i].slope = linear_fit(&xs, &ys).map(|(s, _)| s);
    }
    Ok(rows)
}
