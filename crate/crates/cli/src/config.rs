//! Run configuration: TOML sections with defaults, validated and resolved
//! into the library's parameter types before any computation.

use serde::{Deserialize, Serialize};

use fracbubble::fractional::QuadratureSpec;
use fracbubble::norms::GridSpec;
use fracbubble::pohozaev::PohozaevSpec;
use fracbubble::reduced::{lambda_from_t, m_from_eps, EnergySpec, SolverSpec};
use fracbubble::weight::WeightField;
use fracbubble::{ExponentSign, ProblemParams, TowerConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub n: usize,
    pub s: f64,
    pub eps: f64,
    /// Decreasing ε values for the residual sweep.
    pub eps_list: Vec<f64>,
    /// +1 or -1.
    pub exponent_sign: i32,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            n: 5,
            s: 0.9,
            eps: 0.0,
            eps_list: vec![1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            exponent_sign: 1,
        }
    }
}

/// Bubble count: a number or the keyword "auto" (m from ε).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BubbleCount {
    Fixed(usize),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TowerSection {
    pub m: BubbleCount,
    /// Defaults to r0 of the weight.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rbar: Option<f64>,
    /// Defaults to y0'' of the weight.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ybar: Option<Vec<f64>>,
    /// Overrides λ = t m^{(N-2s)/(N-2s-2)}.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub t: f64,
}

impl Default for TowerSection {
    fn default() -> Self {
        TowerSection {
            m: BubbleCount::Fixed(1),
            rbar: None,
            ybar: None,
            lambda: None,
            t: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightSection {
    pub r0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0_pp: Option<Vec<f64>>,
    /// (N-1)×(N-1) Hessian, row-major.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hessian: Option<Vec<f64>>,
    pub cutoff: f64,
}

impl Default for WeightSection {
    fn default() -> Self {
        WeightSection {
            r0: 1.0,
            y0_pp: None,
            hessian: None,
            cutoff: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSection {
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    pub truncation_radius: f64,
    pub energy_radial_nodes: usize,
    pub energy_angular_nodes: usize,
    pub pohozaev_height_step: f64,
    pub pohozaev_angular_nodes: usize,
    pub pohozaev_radial_nodes: usize,
    pub grid_shells: usize,
    pub grid_directions: usize,
    pub grid_far_points: usize,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        let q = QuadratureSpec::default();
        let e = EnergySpec::default();
        let h = PohozaevSpec::default();
        let g = GridSpec::default();
        QuadratureSection {
            radial_nodes: q.radial_nodes,
            angular_nodes: q.angular_nodes,
            truncation_radius: q.truncation_radius,
            energy_radial_nodes: e.radial_nodes,
            energy_angular_nodes: e.angular_nodes,
            pohozaev_height_step: h.height_step,
            pohozaev_angular_nodes: h.angular_nodes,
            pohozaev_radial_nodes: h.radial_nodes,
            grid_shells: g.shells,
            grid_directions: g.directions,
            grid_far_points: g.far_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub t_lo: f64,
    pub t_hi: f64,
    pub half_width: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    /// λ window [L0 ε^{-1/(N-2s)}, L1 ε^{-1/(N-2s)}] of the sweep.
    pub l0: f64,
    pub l1: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverSpec::default();
        SolverSection {
            t_lo: s.t_lo,
            t_hi: s.t_hi,
            half_width: s.half_width,
            tolerance: s.tolerance,
            max_iter: s.max_iter,
            l0: 0.5,
            l1: 2.0,
        }
    }
}

/// Points for bubble-eval: `count` points evenly spaced from `start` to `end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Defaults to the first tower center.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    /// Defaults to start + 2 e_1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<Vec<f64>>,
    pub count: usize,
    /// Also evaluate (-Δ)^s Z by quadrature.
    pub quadrature: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            start: None,
            end: None,
            count: 3,
            quadrature: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PohozaevSection {
    /// Half-ball radii about the first tower center.
    pub radii: Vec<f64>,
    /// "translation", "scaling" or "both".
    pub identity: String,
    /// Translation direction i ∈ {3, …, N}.
    pub index: usize,
}

impl Default for PohozaevSection {
    fn default() -> Self {
        PohozaevSection {
            radii: vec![0.5, 0.25],
            identity: "both".into(),
            index: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub seed: u64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { path: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub tower: TowerSection,
    pub weight: WeightSection,
    pub quadrature: QuadratureSection,
    pub solver: SolverSection,
    pub eval: EvalSection,
    pub pohozaev: PohozaevSection,
    pub output: OutputSection,
}

/// Everything a command needs, validated.
pub struct Resolved {
    pub params: ProblemParams,
    pub tower: TowerConfig,
    pub weight: WeightField,
    pub ext_spec: QuadratureSpec,
    pub energy_spec: EnergySpec,
    pub pohozaev_spec: PohozaevSpec,
    pub grid: GridSpec,
    pub solver: SolverSpec,
}

fn config_err(key: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {e}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// The configuration with every defaulted field filled in.
    pub fn effective(&self) -> Result<Self, CliError> {
        let r = self.resolve()?;
        let mut c = self.clone();
        let n = self.problem.n;
        c.weight.y0_pp = Some(r.weight.y0pp().to_vec());
        c.weight.hessian = Some(r.weight.hessian_row_major());
        c.tower.rbar = Some(r.tower.rbar());
        c.tower.ybar = Some(r.tower.ybar().to_vec());
        c.tower.m = BubbleCount::Fixed(r.tower.m());
        c.tower.lambda = Some(r.tower.lambda());
        let (start, end) = self.eval_line(&r.tower);
        c.eval.start = Some(start);
        c.eval.end = Some(end);
        debug_assert_eq!(r.params.n(), n);
        Ok(c)
    }

    pub fn eval_line(&self, tower: &TowerConfig) -> (Vec<f64>, Vec<f64>) {
        let start = self.eval.start.clone().unwrap_or_else(|| tower.center(1));
        let end = self.eval.end.clone().unwrap_or_else(|| {
            let mut e = start.clone();
            e[0] += 2.0;
            e
        });
        (start, end)
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let pr = &self.problem;
        let sign = ExponentSign::from_i32(pr.exponent_sign).map_err(|e| config_err("problem.exponent_sign", e))?;
        let params = ProblemParams::new(pr.n, pr.s, pr.eps, sign).map_err(|e| config_err("problem", e))?;
        let n = pr.n;
        let w = &self.weight;
        let y0pp = w.y0_pp.clone().unwrap_or_else(|| vec![0.0; n - 2]);
        let hessian = match &w.hessian {
            Some(h) => h.clone(),
            None if n == 5 => WeightField::default_saddle().hessian_row_major(),
            None => {
                let d = n - 1;
                (0..d * d).map(|k| if k % (d + 1) == 0 { -1.0 } else { 0.0 }).collect()
            }
        };
        let weight = WeightField::new(n, w.r0, y0pp, &hessian, w.cutoff).map_err(|e| config_err("weight", e))?;
        let t = &self.tower;
        let m = match &t.m {
            BubbleCount::Fixed(m) => *m,
            BubbleCount::Keyword(k) if k == "auto" => {
                if !(pr.eps > 0.0) {
                    return Err(config_err("tower.m", "\"auto\" needs problem.eps > 0"));
                }
                m_from_eps(&params, pr.eps).map_err(|e| config_err("tower.m", e))?
            }
            BubbleCount::Keyword(k) => return Err(config_err("tower.m", format!("expected a count or \"auto\", got {k:?}"))),
        };
        if m == 0 {
            return Err(config_err("tower.m", "must be at least 1"));
        }
        if !(t.t > 0.0) {
            return Err(config_err("tower.t", "must be positive"));
        }
        let lambda = t.lambda.unwrap_or_else(|| lambda_from_t(&params, t.t, m));
        let rbar = t.rbar.unwrap_or(weight.r0());
        let ybar = t.ybar.clone().unwrap_or_else(|| weight.y0pp().to_vec());
        let tower = TowerConfig::new(m, rbar, ybar, lambda).map_err(|e| config_err("tower", e))?;
        let q = &self.quadrature;
        let ext_spec = QuadratureSpec {
            radial_nodes: q.radial_nodes,
            angular_nodes: q.angular_nodes,
            truncation_radius: q.truncation_radius,
            ..QuadratureSpec::default()
        };
        ext_spec.validate().map_err(|e| config_err("quadrature", e))?;
        let energy_spec = EnergySpec {
            radial_nodes: q.energy_radial_nodes,
            angular_nodes: q.energy_angular_nodes,
            ..EnergySpec::default()
        };
        energy_spec.validate().map_err(|e| config_err("quadrature", e))?;
        let pohozaev_spec = PohozaevSpec {
            height_step: q.pohozaev_height_step,
            angular_nodes: q.pohozaev_angular_nodes,
            radial_nodes: q.pohozaev_radial_nodes,
            ..PohozaevSpec::default()
        };
        pohozaev_spec.validate().map_err(|e| config_err("quadrature", e))?;
        let grid = GridSpec {
            shells: q.grid_shells,
            directions: q.grid_directions,
            far_points: q.grid_far_points,
            ..GridSpec::default()
        };
        if grid.shells == 0 || grid.directions == 0 {
            return Err(config_err("quadrature.grid_shells", "grid shells and directions must be positive"));
        }
        let so = &self.solver;
        if !(so.l0 > 0.0 && so.l1 > so.l0) {
            return Err(config_err("solver.l0", "need 0 < l0 < l1"));
        }
        let solver = SolverSpec {
            t_lo: so.t_lo,
            t_hi: so.t_hi,
            half_width: so.half_width,
            max_iter: so.max_iter,
            tolerance: so.tolerance,
        };
        if !(solver.t_lo > 0.0 && solver.t_hi > solver.t_lo) {
            return Err(config_err("solver.t_lo", "need 0 < t_lo < t_hi"));
        }
        for (key, v) in [("eval.start", &self.eval.start), ("eval.end", &self.eval.end)] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(config_err(key, format!("expected {n} coordinates")));
                }
            }
        }
        if self.pohozaev.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(config_err("pohozaev.radii", "radii must be positive"));
        }
        if !matches!(self.pohozaev.identity.as_str(), "translation" | "scaling" | "both") {
            return Err(config_err("pohozaev.identity", "expected \"translation\", \"scaling\" or \"both\""));
        }
        if !(3..=n).contains(&self.pohozaev.index) {
            return Err(config_err("pohozaev.index", format!("must lie in 3..={n}")));
        }
        if pr.eps_list.windows(2).any(|w| !(w[1] < w[0])) || pr.eps_list.iter().any(|e| !(*e > 0.0)) {
            return Err(config_err("problem.eps_list", "must be positive and strictly decreasing"));
        }
        Ok(Resolved {
            params,
            tower,
            weight,
            ext_spec,
            energy_spec,
            pohozaev_spec,
            grid,
            solver,
        })
    }
}
