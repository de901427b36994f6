use proptest::prelude::*;

use fracbubble::norms::{norm_starstar, SampleGrid};
use fracbubble::reduced::{lambda_from_t, m_from_eps, pair_interaction, t_from_lambda, EnergySpec};
use fracbubble::weight::WeightField;
use fracbubble::{admissible_s_window, bubble_value, tower_value, Bubble, ProblemParams, TowerConfig};

fn params() -> impl Strategy<Value = ProblemParams> {
    (4usize..=9, 0.0f64..1.0).prop_map(|(n, u)| {
        let (lo, hi) = admissible_s_window(n).unwrap();
        let s = lo + (0.02 + 0.96 * u) * (hi - lo);
        ProblemParams::critical(n, s).unwrap()
    })
}

fn point(n: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-r..r, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bubble_positive_radial_and_peaked(p in params(), raw in point(9, 5.0), lambda in 0.1f64..50.0) {
        let n = p.n();
        let y = &raw[..n];
        let b = Bubble::new(vec![0.0; n], lambda).unwrap();
        let u = bubble_value(&p, &b, y);
        prop_assert!(u > 0.0);
        // any rotation preserving |y|: reverse the coordinates
        let rev: Vec<f64> = y.iter().rev().copied().collect();
        prop_assert!((bubble_value(&p, &b, &rev) - u).abs() <= 1e-13 * u);
        prop_assert!(u <= bubble_value(&p, &b, &vec![0.0; n]) * (1.0 + 1e-14));
    }

    #[test]
    fn bubble_scaling_law(p in params(), raw in point(9, 3.0), lambda in 0.1f64..50.0) {
        // U_{0,λ}(y) = λ^{(N-2s)/2} U_{0,1}(λ y)
        let n = p.n();
        let y = &raw[..n];
        let scaled: Vec<f64> = y.iter().map(|v| lambda * v).collect();
        let lhs = bubble_value(&p, &Bubble::new(vec![0.0; n], lambda).unwrap(), y);
        let rhs = lambda.powf(0.5 * p.a()) * bubble_value(&p, &Bubble::unit(n), &scaled);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn tower_invariant_under_polygon_rotation(m in 1usize..12, raw in point(5, 2.0), lambda in 1.0f64..100.0) {
        let p = ProblemParams::critical(5, 0.9).unwrap();
        let cfg = TowerConfig::new(m, 1.0, vec![0.1, 0.0, -0.1], lambda).unwrap();
        let th = std::f64::consts::TAU / m as f64;
        let mut rot = raw.clone();
        rot[0] = th.cos() * raw[0] - th.sin() * raw[1];
        rot[1] = th.sin() * raw[0] + th.cos() * raw[1];
        let mut refl = raw.clone();
        refl[1] = -raw[1];
        let v = tower_value(&p, &cfg, &raw);
        prop_assert!((tower_value(&p, &cfg, &rot) - v).abs() <= 1e-11 * v.max(1e-300));
        prop_assert!((tower_value(&p, &cfg, &refl) - v).abs() <= 1e-11 * v.max(1e-300));
    }

    #[test]
    fn lambda_is_linear_in_t(m in 1usize..64, t in 0.01f64..100.0, c in 0.1f64..10.0) {
        let p = ProblemParams::critical(5, 0.9).unwrap();
        let l = lambda_from_t(&p, t, m);
        prop_assert!((lambda_from_t(&p, c * t, m) - c * l).abs() <= 1e-12 * c * l);
        prop_assert!((t_from_lambda(&p, l, m) - t).abs() <= 1e-12 * t);
    }

    #[test]
    fn bubble_count_does_not_increase_with_eps(e1 in -12.0f64..-3.0, de in 0.0f64..3.0) {
        let p = ProblemParams::critical(5, 0.9).unwrap();
        let small = 10f64.powf(e1);
        let large = 10f64.powf((e1 + de).min(-2.5));
        let ms = m_from_eps(&p.with_eps(small).unwrap(), small).unwrap();
        let ml = m_from_eps(&p.with_eps(large).unwrap(), large).unwrap();
        prop_assert!(ms >= ml);
    }

    #[test]
    fn weight_rotation_invariance_and_bounds(raw in point(5, 1.5), th in 0.0f64..6.3) {
        let k = WeightField::default_saddle();
        let mut rot = raw.clone();
        rot[0] = th.cos() * raw[0] - th.sin() * raw[1];
        rot[1] = th.sin() * raw[0] + th.cos() * raw[1];
        let v = k.eval(&raw);
        prop_assert!((k.eval(&rot) - v).abs() <= 1e-12);
        let (lo, hi) = k.bounds();
        prop_assert!(lo <= v && v <= hi && lo > 0.0);
    }

    #[test]
    fn weight_is_one_outside_the_cutoff(dir in point(4, 1.0), extra in 0.0f64..3.0, th in 0.0f64..6.3) {
        let k = WeightField::default_saddle();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        // v = v0 + (cutoff + extra) dir/|dir|, lifted with an arbitrary angle
        let rho = k.cutoff_radius() * (1.0 + 1e-9) + extra;
        let v: Vec<f64> = k.v0().iter().zip(&dir).map(|(a, d)| a + rho * d / norm).collect();
        prop_assume!(v[0] > 0.0);
        let mut y = k.lift(&v);
        y[1] = v[0] * th.sin();
        y[0] = v[0] * th.cos();
        prop_assert_eq!(k.eval(&y), 1.0);
    }

    #[test]
    fn starstar_norm_is_homogeneous(c in -100.0f64..100.0, seed in 0u64..1000) {
        let p = ProblemParams::critical(5, 0.9).unwrap().with_eps(1e-6).unwrap();
        let cfg = TowerConfig::new(3, 1.0, vec![0.0; 3], 20.0).unwrap();
        let grid = SampleGrid::standard(&cfg, &fracbubble::norms::GridSpec { far_points: 200, ..Default::default() }, seed).unwrap();
        let f = |y: &[f64]| tower_value(&p, &cfg, y).powf(p.critical_power());
        let g = |y: &[f64]| c * f(y);
        let a = norm_starstar(&f, &p, &cfg, &grid).unwrap().value;
        let b = norm_starstar(&g, &p, &cfg, &grid).unwrap().value;
        prop_assert!((b - c.abs() * a).abs() <= 1e-12 * c.abs() * a + 1e-300);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn pair_interaction_decreases_with_distance(d in 0.5f64..200.0, f in 1.2f64..3.0) {
        let p = ProblemParams::critical(5, 0.9).unwrap();
        let spec = EnergySpec::default();
        let near = pair_interaction(&p, d, &spec);
        let far = pair_interaction(&p, f * d, &spec);
        prop_assert!(near > far && far > 0.0);
    }
}
