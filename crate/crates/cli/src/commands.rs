//! One function per subcommand, each producing a table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fracbubble::extension::{BubbleExtension, TowerExtension};
use fracbubble::fractional::{d_s, frac_lap_constant, frac_lap_exact_bubble, frac_lap_quadrature, ExtensionField};
use fracbubble::norms::pair_weight_ratio;
use fracbubble::pohozaev::{pohozaev_scaling, pohozaev_translation, HalfBallRegion, PohozaevReport};
use fracbubble::reduced::{
    constant_b1, fit_interaction, lambda_from_t, lattice_limit, m_from_eps, second_moment, self_energy_constant,
    solve_reduced, ReducedConstants,
};
use fracbubble::residual::{residual_norm_sweep, sweep_lambda, ResidualField, SweepSpec};
use fracbubble::weight::WeightField;
use fracbubble::{bubble_constant, tower_value, z_derivative, Bubble, Direction, ProblemParams, TowerConfig};

use crate::config::{Resolved, RunConfig};
use crate::error::CliError;
use crate::output::{num, Table};

fn quantity_table(rows: Vec<(String, f64)>) -> Table {
    let mut t = Table::new(["quantity", "value"]);
    for (k, v) in rows {
        t.push(vec![k, num(v)]);
    }
    t
}

/// U, Z_{1,l} and (-Δ)^s of the tower at evenly spaced points of a segment.
pub fn bubble_eval(cfg: &RunConfig) -> Result<Table, CliError> {
    let r = cfg.resolve()?;
    let p = &r.params;
    let n = p.n();
    let (start, end) = cfg.eval_line(&r.tower);
    let mut header: Vec<String> = vec!["index".into()];
    header.extend((1..=n).map(|i| format!("y{i}")));
    header.push("u".into());
    header.extend((1..=n).map(|l| format!("z1_{l}")));
    header.push("frac_lap_exact".into());
    if cfg.eval.quadrature {
        header.push("frac_lap_quadrature".into());
    }
    let mut table = Table::new(header);
    let count = cfg.eval.count;
    let bubbles: Vec<Bubble> = (1..=r.tower.m()).map(|j| r.tower.bubble(j)).collect();
    let u = |y: &[f64]| tower_value(p, &r.tower, y);
    for k in 0..count {
        let f = if count == 1 { 0.0 } else { k as f64 / (count - 1) as f64 };
        let y: Vec<f64> = start.iter().zip(&end).map(|(a, b)| a + f * (b - a)).collect();
        let mut row = vec![k.to_string()];
        row.extend(y.iter().map(|v| num(*v)));
        row.push(num(u(&y)));
        for l in Direction::all(n) {
            row.push(num(z_derivative(p, &r.tower, 1, l, &y)?));
        }
        row.push(num(bubbles.iter().map(|b| frac_lap_exact_bubble(p, b, &y)).sum()));
        if cfg.eval.quadrature {
            row.push(num(frac_lap_quadrature(&u, n, p.s(), &y, &r.ext_spec)?.value));
        }
        table.push(row);
    }
    Ok(table)
}

/// Sweep settings from the config: the offset is (r̄, ȳ'') - (r0, y0'').
pub fn sweep_spec(cfg: &RunConfig, r: &Resolved, seed: u64) -> SweepSpec {
    let mut offset = vec![r.tower.rbar() - r.weight.r0()];
    offset.extend(r.tower.ybar().iter().zip(r.weight.y0pp()).map(|(a, b)| a - b));
    SweepSpec {
        l0: cfg.solver.l0,
        l1: cfg.solver.l1,
        t: cfg.tower.t,
        offset,
        grid: r.grid.clone(),
        seed,
    }
}

/// ‖l_ε‖_** and its pieces over problem.eps_list.
pub fn residual_sweep(cfg: &RunConfig, seed: u64) -> Result<Table, CliError> {
    let r = cfg.resolve()?;
    let spec = sweep_spec(cfg, &r, seed);
    let rows = residual_norm_sweep(&r.params, &r.weight, &cfg.problem.eps_list, &spec)?;
    let mut t = Table::new(["eps", "m", "lambda", "norm_total", "norm_j1", "norm_j2", "norm_j3", "slope"]);
    for row in rows {
        t.push(vec![
            num(row.eps),
            row.m.to_string(),
            num(row.lambda),
            num(row.norm_total),
            num(row.norm_j1),
            num(row.norm_j2),
            num(row.norm_j3),
            row.slope.map(num).unwrap_or_default(),
        ]);
    }
    Ok(t)
}

const POHOZAEV_TERMS: [&str; 6] = [
    "hemisphere_flux",
    "hemisphere_gradient",
    "sphere_potential",
    "volume_weight_gradient",
    "volume_dirichlet",
    "volume_potential",
];

/// Both local identities on half-balls about the first tower center.
pub fn pohozaev(cfg: &RunConfig) -> Result<Table, CliError> {
    let r = cfg.resolve()?;
    let p = &r.params;
    let unit = BubbleExtension::new(p, r.ext_spec.clone())?;
    let ext = TowerExtension::new(p, &r.tower, &unit);
    let center = r.tower.center(1);
    let which = cfg.pohozaev.identity.as_str();
    let mut header = vec!["identity", "index", "radius"];
    header.extend(POHOZAEV_TERMS);
    header.extend(["residual", "scale", "magnitude", "relative", "refined_residual", "refinement_gain"]);
    let mut t = Table::new(header);
    let mut push = |rep: PohozaevReport, name: &str, index: usize, radius: f64| {
        let mut row = vec![name.to_string(), index.to_string(), num(radius)];
        row.extend(POHOZAEV_TERMS.iter().map(|k| rep.term(k).map(num).unwrap_or_default()));
        row.extend([
            num(rep.residual),
            num(rep.scale),
            num(rep.magnitude),
            num(rep.relative()),
            num(rep.refined_residual),
            num(rep.refinement_gain()),
        ]);
        t.push(row);
    };
    for &radius in &cfg.pohozaev.radii {
        let region = HalfBallRegion::new(center.clone(), radius)?;
        if which != "scaling" {
            let i = cfg.pohozaev.index;
            let rep = pohozaev_translation(p, &ext, &r.weight, &region, i, &r.pohozaev_spec)?;
            push(rep, "translation", i, radius);
        }
        if which != "translation" {
            let rep = pohozaev_scaling(p, &ext, &r.weight, &region, &r.pohozaev_spec)?;
            push(rep, "scaling", 0, radius);
        }
    }
    Ok(t)
}

/// Constants and the root of the reduced system.
pub fn reduce(cfg: &RunConfig) -> Result<Table, CliError> {
    let r = cfg.resolve()?;
    let p = &r.params;
    let c = ReducedConstants::compute(p, &r.weight, &r.energy_spec)?;
    let sol = solve_reduced(p, &r.weight, &c, &r.solver)?;
    let mut rows = vec![
        ("b1".to_string(), c.b1),
        ("b2".into(), c.b2),
        ("b3".into(), c.b3),
        ("lattice".into(), c.lattice),
        ("rbar".into(), sol.rbar),
    ];
    rows.extend(sol.ybar.iter().enumerate().map(|(i, v)| (format!("ybar{}", i + 3), *v)));
    rows.push(("t".into(), sol.t));
    rows.push(("t_closed_form".into(), sol.t_closed_form));
    rows.extend(sol.residual.iter().enumerate().map(|(i, v)| (format!("residual{}", i + 1), *v)));
    rows.push(("iterations".into(), sol.iterations as f64));
    for (i, f) in sol.faces.iter().enumerate() {
        rows.push((format!("face{}_low", i + 1), f.low));
        rows.push((format!("face{}_high", i + 1), f.high));
    }
    rows.push(("faces_ok".into(), if sol.faces_ok() { 1.0 } else { 0.0 }));
    Ok(quantity_table(rows))
}

/// Exponents, normalisations and the reduced constants.
pub fn constants(cfg: &RunConfig) -> Result<Table, CliError> {
    let r = cfg.resolve()?;
    let p = &r.params;
    let (n, s) = (p.n(), p.s());
    let b1 = constant_b1(p, r.weight.laplacian_at_critical())?;
    let fit = fit_interaction(p, &r.energy_spec)?;
    let lattice = lattice_limit(p.a())?;
    let b3 = fit.b2 * (2.0 * r.weight.r0()).powf(-p.a()) * lattice.value;
    let mut rows = vec![
        ("bubble_constant".to_string(), bubble_constant(n, s)),
        ("frac_lap_constant".into(), frac_lap_constant(n, s)),
        ("d_s".into(), d_s(s)),
        ("a".into(), p.a()),
        ("two_star".into(), p.two_star()),
        ("critical_power".into(), p.critical_power()),
        ("power".into(), p.power()),
        ("tau".into(), p.tau()),
        ("self_energy".into(), self_energy_constant(p)),
        ("second_moment".into(), second_moment(p).value),
        ("b1".into(), b1.value),
        ("b1_alternate".into(), b1.alternate),
        ("b2".into(), fit.b2),
        ("b3".into(), b3),
        ("lattice".into(), lattice.value),
    ];
    if p.eps() > 0.0 {
        let m = m_from_eps(p, p.eps())?;
        rows.push(("m".into(), m as f64));
        rows.push(("lambda".into(), lambda_from_t(p, cfg.tower.t, m)));
    }
    Ok(quantity_table(rows))
}

/// Outcome of one selftest check.
struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.value.is_finite() && self.value <= self.tolerance
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn random_point(rng: &mut ChaCha8Rng, center: &[f64], half: f64) -> Vec<f64> {
    center.iter().map(|c| c + rng.random_range(-half..half)).collect()
}

fn selftest_checks(seed: u64) -> Result<Vec<Check>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = ProblemParams::critical(5, 0.9)?;
    let n = p.n();
    let origin = vec![0.0; n];
    let unit = Bubble::unit(n);
    let mut checks = Vec::new();

    let one = TowerConfig::new(1, 1.0, vec![0.0; n - 2], 1.0)?;
    let peak = tower_value(&p, &one, &one.center(1));
    checks.push(Check {
        name: "peak_equals_bubble_constant",
        value: rel(peak, bubble_constant(n, p.s())),
        tolerance: 1e-14,
    });

    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let y = random_point(&mut rng, &origin, 3.0);
        let refl: Vec<f64> = y.iter().map(|v| -v).collect();
        let u = fracbubble::bubble_value(&p, &unit, &y);
        worst = worst.max(rel(fracbubble::bubble_value(&p, &unit, &refl), u));
    }
    checks.push(Check {
        name: "bubble_radial_symmetry",
        value: worst,
        tolerance: 1e-14,
    });

    let spec = fracbubble::fractional::QuadratureSpec::default();
    let f = |y: &[f64]| fracbubble::bubble_value(&p, &unit, y);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let y = random_point(&mut rng, &origin, 1.5);
        let q = frac_lap_quadrature(&f, n, p.s(), &y, &spec)?.value;
        worst = worst.max(rel(q, frac_lap_exact_bubble(&p, &unit, &y)));
    }
    checks.push(Check {
        name: "bubble_equation_quadrature",
        value: worst,
        tolerance: 1e-3,
    });

    let field = ExtensionField::new(f, n, p.s())?;
    let worst = [0.1, 1.0, 10.0]
        .iter()
        .map(|&t| (field.kernel_mass(t) - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "poisson_kernel_mass",
        value: worst,
        tolerance: 1e-6,
    });

    let pe = p.with_eps(1e-8)?;
    let m = m_from_eps(&pe, 1e-8)?;
    let lam = lambda_from_t(&pe, 1.0, m);
    checks.push(Check {
        name: "bookkeeping_m8_lambda256",
        value: (m as f64 - 8.0).abs() + (lam - 256.0).abs(),
        tolerance: 0.0,
    });

    let sweep = SweepSpec::new(n);
    let mut outside: f64 = 0.0;
    for eps in [1e-4, 1e-5, 1e-6, 1e-7, 1e-8] {
        let pe = p.with_eps(eps)?;
        let m = m_from_eps(&pe, eps)?;
        let l = sweep_lambda(&pe, eps, m, &sweep);
        let scale = eps.powf(-1.0 / p.a());
        outside = outside.max((sweep.l0 * scale - l).max(l - sweep.l1 * scale).max(0.0));
    }
    checks.push(Check {
        name: "sweep_lambda_in_window",
        value: outside,
        tolerance: 0.0,
    });

    let tower = TowerConfig::new(4, 1.0, vec![0.0; n - 2], 30.0)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let j = rng.random_range(1..=tower.m());
        let l = Direction::from_index(rng.random_range(1..=n), n)?;
        let x = tower.center(j);
        let y = random_point(&mut rng, &x, 0.1);
        let exact = z_derivative(&p, &tower, j, l, &y)?;
        let shifted = |h: f64| -> Result<f64, CliError> {
            let c = match l {
                Direction::Scale => tower.with_lambda(tower.lambda() + h)?,
                Direction::Radius => tower.with_rbar(tower.rbar() + h)?,
                Direction::Offset(k) => {
                    let mut yb = tower.ybar().to_vec();
                    yb[k - 3] += h;
                    tower.with_ybar(yb)?
                }
            };
            Ok(fracbubble::bubble_value(&p, &c.bubble(j), &y))
        };
        let h = match l {
            Direction::Scale => 1e-5 * tower.lambda(),
            _ => 1e-5 / tower.lambda(),
        };
        let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
        let scale = exact.abs().max(1e-8 * fracbubble::bubble_value(&p, &tower.bubble(j), &y));
        worst = worst.max((fd - exact).abs() / scale);
    }
    checks.push(Check {
        name: "z_derivative_finite_difference",
        value: worst,
        tolerance: 1e-6,
    });

    let k = WeightField::default_saddle();
    let crit = k.lift(&k.v0());
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let y = random_point(&mut rng, &crit, 0.3);
        let g = k.grad(&y)?;
        let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-3);
        for i in 0..n {
            let h = 1e-5;
            let mut a = y.clone();
            let mut b = y.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (k.eval(&a) - k.eval(&b)) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / gmax);
        }
    }
    checks.push(Check {
        name: "weight_gradient_finite_difference",
        value: worst,
        tolerance: 1e-6,
    });

    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mut y = random_point(&mut rng, &crit, 3.0);
        let dist = |y: &[f64]| {
            let r = (y[0] * y[0] + y[1] * y[1]).sqrt() - k.r0();
            let rest: f64 = y[2..].iter().zip(k.y0pp()).map(|(a, b)| (a - b) * (a - b)).sum();
            (r * r + rest).sqrt()
        };
        if dist(&y) <= k.cutoff_radius() {
            y[0] += 2.0;
        }
        if dist(&y) > k.cutoff_radius() {
            worst = worst.max((k.eval(&y) - 1.0).abs());
        }
    }
    checks.push(Check {
        name: "weight_one_outside_cutoff",
        value: worst,
        tolerance: 0.0,
    });

    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let y = random_point(&mut rng, &crit, 0.4);
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let mut z = y.clone();
        z[0] = th.cos() * y[0] - th.sin() * y[1];
        z[1] = th.sin() * y[0] + th.cos() * y[1];
        worst = worst.max((k.eval(&z) - k.eval(&y)).abs());
    }
    checks.push(Check {
        name: "weight_rotation_invariance",
        value: worst,
        tolerance: 1e-12,
    });

    let pe = p.with_eps(1e-6)?;
    let tower = TowerConfig::new(5, 1.0, vec![0.0; n - 2], 100.0)?;
    let res = ResidualField::new(&pe, &tower, &k)?;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let j = rng.random_range(1..=tower.m());
        let y = random_point(&mut rng, &tower.center(j), 0.05);
        let sp = res.split(&y);
        let total = res.eval(&y);
        worst = worst.max((sp.j1 + sp.j2 + sp.j3 - total).abs() / total.abs().max(1.0));
    }
    checks.push(Check {
        name: "residual_split_identity",
        value: worst,
        tolerance: 1e-9,
    });

    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let alpha = rng.random_range(0.5..4.0);
        let beta = rng.random_range(0.5..4.0);
        let delta = rng.random_range(0.05..1.0) * f64::min(alpha, beta);
        let xj = random_point(&mut rng, &origin, 5.0);
        let xk = random_point(&mut rng, &origin, 5.0);
        let y = random_point(&mut rng, &origin, 20.0);
        worst = worst.max(pair_weight_ratio(alpha, beta, delta, &xj, &xk, &y)?);
    }
    checks.push(Check {
        name: "pair_weight_ratio_bound",
        value: worst,
        tolerance: 10.0,
    });

    checks.push(Check {
        name: "second_moment_two_rules",
        value: second_moment(&p).relative_gap,
        tolerance: 1e-4,
    });

    let consts = ReducedConstants {
        b1: 0.05,
        b2: 1.0,
        b3: 1.0,
        lattice: 1.0,
    };
    let consts = ReducedConstants {
        b3: consts.b3_at(&p, k.r0()),
        ..consts
    };
    let sol = solve_reduced(&p, &k, &consts, &fracbubble::reduced::SolverSpec::default())?;
    checks.push(Check {
        name: "reduced_root_closed_form",
        value: rel(sol.t, sol.t_closed_form) + if sol.faces_ok() { 0.0 } else { 1.0 },
        tolerance: 1e-10,
    });

    let t_lam = fracbubble::reduced::t_from_lambda(&p.with_eps(1e-6)?, 37.0, 3);
    checks.push(Check {
        name: "lambda_t_round_trip",
        value: rel(lambda_from_t(&p.with_eps(1e-6)?, t_lam, 3), 37.0),
        tolerance: 1e-14,
    });
    Ok(checks)
}

/// Runs the fast invariant suite; the table lists every check.
pub fn selftest(seed: u64) -> Result<(Table, usize), CliError> {
    let checks = selftest_checks(seed)?;
    let mut t = Table::new(["check", "passed", "value", "tolerance"]);
    let mut failed = 0;
    for c in &checks {
        let ok = c.passed();
        failed += usize::from(!ok);
        t.push(vec![c.name.into(), ok.to_string(), num(c.value), num(c.tolerance)]);
    }
    Ok((t, failed))
}

/// A matplotlib script that plots every numeric column of a CSV written by
/// this tool against its first column.
pub fn plot_script() -> String {
    include_str!("plot.py").to_string()
}
