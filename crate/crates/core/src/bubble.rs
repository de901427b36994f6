//! Problem parameters, the bubble profile and the polygonal tower of bubbles.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::special::gamma;

/// Smallest and largest supported spatial dimension.
pub const MIN_DIM: usize = 4;
pub const MAX_DIM: usize = 16;

/// Sign in front of the perturbation: exponent 2*_s - 1 + sign * eps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExponentSign {
    Plus,
    Minus,
}

impl ExponentSign {
    pub fn value(self) -> f64 {
        match self {
            ExponentSign::Plus => 1.0,
            ExponentSign::Minus => -1.0,
        }
    }

    pub fn from_i32(v: i32) -> Result<Self> {
        match v {
            1 => Ok(ExponentSign::Plus),
            -1 => Ok(ExponentSign::Minus),
            _ => Err(invalid("exponent_sign", format!("must be +1 or -1, got {v}"))),
        }
    }
}

/// Lower end of the admissible window (s_min, 1) of fractional orders.
pub fn admissible_s_window(n: usize) -> Result<(f64, f64)> {
    if n < MIN_DIM {
        return Err(Error::InvalidDimension(n));
    }
    let nf = n as f64;
    let first = (nf + 1.0 - (nf * nf - 2.0 * nf + 9.0).sqrt()) / 4.0;
    let second = (3.0 - (nf * nf - 6.0 * nf + 13.0).sqrt()) / 2.0;
    Ok((first.max(second), 1.0))
}

/// C_{N,s} = (4^s gamma)^{(N-2s)/(4s)}, gamma = Γ((N+2s)/2)/Γ((N-2s)/2).
pub fn bubble_constant(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    let g = gamma((nf + 2.0 * s) / 2.0) / gamma((nf - 2.0 * s) / 2.0);
    (4f64.powf(s) * g).powf((nf - 2.0 * s) / (4.0 * s))
}

/// Dimension, fractional order and perturbation of the problem, with all
/// derived exponents.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemParams {
    n: usize,
    s: f64,
    eps: f64,
    sign: ExponentSign,
    c: f64,
}

impl ProblemParams {
    pub fn new(n: usize, s: f64, eps: f64, sign: ExponentSign) -> Result<Self> {
        if !(MIN_DIM..=MAX_DIM).contains(&n) {
            return Err(Error::InvalidDimension(n));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(invalid("s", format!("must lie in (0, 1), got {s}")));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(invalid("eps", format!("must be finite and >= 0, got {eps}")));
        }
        let (s_min, _) = admissible_s_window(n)?;
        if s <= s_min {
            return Err(Error::Inadmissible { n, s, s_min });
        }
        Ok(ProblemParams {
            n,
            s,
            eps,
            sign,
            c: bubble_constant(n, s),
        })
    }

    /// Unperturbed problem (eps = 0, sign +).
    pub fn critical(n: usize, s: f64) -> Result<Self> {
        Self::new(n, s, 0.0, ExponentSign::Plus)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.n, self.s, eps, self.sign)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn sign(&self) -> ExponentSign {
        self.sign
    }

    /// N - 2s, the decay rate of a bubble.
    pub fn a(&self) -> f64 {
        self.n as f64 - 2.0 * self.s
    }

    pub fn two_star(&self) -> f64 {
        2.0 * self.n as f64 / self.a()
    }

    pub fn tau(&self) -> f64 {
        (self.a() - 2.0) / self.a()
    }

    /// Critical power (N+2s)/(N-2s) = 2*_s - 1.
    pub fn critical_power(&self) -> f64 {
        (self.n as f64 + 2.0 * self.s) / self.a()
    }

    /// Perturbed power 2*_s - 1 + sign * eps.
    pub fn power(&self) -> f64 {
        self.critical_power() + self.sign.value() * self.eps
    }

    /// Exponent of the potential energy, 2*_s + sign * eps.
    pub fn energy_power(&self) -> f64 {
        self.two_star() + self.sign.value() * self.eps
    }

    /// C_{N,s}, cached at construction.
    pub fn bubble_constant(&self) -> f64 {
        self.c
    }
}

/// A single bubble U_{x,λ}.
#[derive(Debug, Clone, PartialEq)]
pub struct Bubble {
    center: Vec<f64>,
    lambda: f64,
}

impl Bubble {
    pub fn new(center: Vec<f64>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        if center.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("bubble center".into()));
        }
        Ok(Bubble { center, lambda })
    }

    /// U_{0,1} in dimension n.
    pub fn unit(n: usize) -> Self {
        Bubble {
            center: vec![0.0; n],
            lambda: 1.0,
        }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// U at squared distance `d2` from the center with scale `lambda`.
#[inline]
pub(crate) fn profile(p: &ProblemParams, lambda: f64, d2: f64) -> f64 {
    let base = lambda / (1.0 + lambda * lambda * d2);
    p.c * base.powf(0.5 * p.a())
}

pub fn bubble_value(p: &ProblemParams, b: &Bubble, y: &[f64]) -> f64 {
    assert_eq!(y.len(), p.n, "point dimension");
    profile(p, b.lambda, dist2(y, &b.center))
}

/// ∇_y U_{x,λ}(y).
pub fn bubble_gradient(p: &ProblemParams, b: &Bubble, y: &[f64]) -> Vec<f64> {
    let l2 = b.lambda * b.lambda;
    let d2 = dist2(y, &b.center);
    let u = profile(p, b.lambda, d2);
    let f = -p.a() * l2 * u / (1.0 + l2 * d2);
    y.iter().zip(&b.center).map(|(yi, xi)| f * (yi - xi)).collect()
}

/// The m-gon configuration of bubble centers with common scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerConfig {
    m: usize,
    rbar: f64,
    ybar: Vec<f64>,
    lambda: f64,
}

impl TowerConfig {
    /// `ybar` has length N - 2.
    pub fn new(m: usize, rbar: f64, ybar: Vec<f64>, lambda: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyConfiguration);
        }
        if !(rbar > 0.0 && rbar.is_finite()) {
            return Err(invalid("rbar", format!("must be positive, got {rbar}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        if ybar.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ybar".into()));
        }
        Ok(TowerConfig {
            m,
            rbar,
            ybar,
            lambda,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rbar(&self) -> f64 {
        self.rbar
    }

    pub fn ybar(&self) -> &[f64] {
        &self.ybar
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Spatial dimension implied by the offset vector.
    pub fn dim(&self) -> usize {
        self.ybar.len() + 2
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.m, self.rbar, self.ybar.clone(), lambda)
    }

    pub fn with_rbar(&self, rbar: f64) -> Result<Self> {
        Self::new(self.m, rbar, self.ybar.clone(), self.lambda)
    }

    pub fn with_ybar(&self, ybar: Vec<f64>) -> Result<Self> {
        Self::new(self.m, self.rbar, ybar, self.lambda)
    }

    pub fn angle(&self, j: usize) -> f64 {
        2.0 * PI * (j as f64 - 1.0) / self.m as f64
    }

    /// Center x_j for 1-based j.
    pub fn center(&self, j: usize) -> Vec<f64> {
        let th = self.angle(j);
        let mut x = Vec::with_capacity(self.dim());
        x.push(self.rbar * th.cos());
        x.push(self.rbar * th.sin());
        x.extend_from_slice(&self.ybar);
        x
    }

    pub fn bubble(&self, j: usize) -> Bubble {
        Bubble {
            center: self.center(j),
            lambda: self.lambda,
        }
    }

    /// Smallest distance between two centers (zero-sized for m = 1).
    pub fn min_separation(&self) -> f64 {
        if self.m == 1 {
            return f64::INFINITY;
        }
        2.0 * self.rbar * (PI / self.m as f64).sin()
    }

    fn check_dim(&self, p: &ProblemParams) {
        assert_eq!(self.dim(), p.n, "tower offset has length N - 2");
    }
}

pub fn tower_centers(cfg: &TowerConfig) -> Vec<Vec<f64>> {
    (1..=cfg.m).map(|j| cfg.center(j)).collect()
}

pub fn tower_value(p: &ProblemParams, cfg: &TowerConfig, y: &[f64]) -> f64 {
    cfg.check_dim(p);
    assert_eq!(y.len(), p.n, "point dimension");
    (1..=cfg.m)
        .map(|j| profile(p, cfg.lambda, dist2(y, &cfg.center(j))))
        .sum()
}

/// Individual bubble values U_{x_j,λ}(y), j = 1..m.
pub fn tower_components(p: &ProblemParams, cfg: &TowerConfig, y: &[f64]) -> Vec<f64> {
    cfg.check_dim(p);
    (1..=cfg.m)
        .map(|j| profile(p, cfg.lambda, dist2(y, &cfg.center(j))))
        .collect()
}

/// Parameter direction of a derivative Z_{j,l}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// l = 1, derivative in λ.
    Scale,
    /// l = 2, derivative in r̄.
    Radius,
    /// l = k ∈ 3..=N, derivative in the component ȳ''_k.
    Offset(usize),
}

impl Direction {
    /// Maps the index l = 1..=N to a direction.
    pub fn from_index(l: usize, n: usize) -> Result<Self> {
        match l {
            1 => Ok(Direction::Scale),
            2 => Ok(Direction::Radius),
            k if (3..=n).contains(&k) => Ok(Direction::Offset(k)),
            _ => Err(Error::IndexOutOfRange {
                what: "direction",
                index: l,
                range: format!("1..={n}"),
            }),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::Scale => 1,
            Direction::Radius => 2,
            Direction::Offset(k) => k,
        }
    }

    /// Weight exponent n_l used by the norms: -1 for λ, +1 otherwise.
    pub fn norm_exponent(self) -> i32 {
        match self {
            Direction::Scale => -1,
            _ => 1,
        }
    }

    pub fn all(n: usize) -> Vec<Direction> {
        (1..=n).map(|l| Direction::from_index(l, n).unwrap()).collect()
    }
}

/// Z_{j,l}(y): exact partial derivative of U_{x_j,λ}(y) in the tower
/// parameter l, with the chain rule through x_j(r̄, ȳ'').
pub fn z_derivative(
    p: &ProblemParams,
    cfg: &TowerConfig,
    j: usize,
    l: Direction,
    y: &[f64],
) -> Result<f64> {
    cfg.check_dim(p);
    if j == 0 || j > cfg.m {
        return Err(Error::IndexOutOfRange {
            what: "bubble",
            index: j,
            range: format!("1..={}", cfg.m),
        });
    }
    if let Direction::Offset(k) = l {
        if !(3..=p.n).contains(&k) {
            return Err(Error::IndexOutOfRange {
                what: "direction",
                index: k,
                range: format!("1..={}", p.n),
            });
        }
    }
    let x = cfg.center(j);
    let lam = cfg.lambda;
    let d2 = dist2(y, &x);
    let den = 1.0 + lam * lam * d2;
    let u = profile(p, lam, d2);
    let a = p.a();
    // ∂U/∂x_k = a λ² U (y_k - x_k) / D
    let dx = |k: usize| a * lam * lam * u * (y[k] - x[k]) / den;
    Ok(match l {
        Direction::Scale => 0.5 * a * u * (1.0 - lam * lam * d2) / (lam * den),
        Direction::Radius => {
            let th = cfg.angle(j);
            dx(0) * th.cos() + dx(1) * th.sin()
        }
        Direction::Offset(k) => dx(k - 1),
    })
}
