use fracbubble::extension::{BubbleExtension, TowerExtension};
use fracbubble::fractional::{d_s, QuadratureSpec};
use fracbubble::pohozaev::{pohozaev_scaling, pohozaev_translation, HalfBallRegion, PohozaevSpec};
use fracbubble::quadrature::{composite, SphereRule};
use fracbubble::reduced::m_from_eps;
use fracbubble::residual::{sweep_lambda, SweepSpec};
use fracbubble::weight::WeightField;
use fracbubble::{bubble_gradient, bubble_value, Bubble, ProblemParams, TowerConfig};

#[test]
fn exact_bubble_half_order_both_identities() {
    let p = ProblemParams::critical(5, 0.5).unwrap();
    let k = WeightField::default_saddle();
    let unit = BubbleExtension::new(&p, QuadratureSpec::default()).unwrap();
    let y0 = vec![3.0, 0.0, 0.0, 0.0, 0.0];
    let mut c = y0.clone();
    c[3] -= 0.2;
    let centered = TowerExtension::single(&p, y0.clone(), 1.0, &unit);
    let offset = TowerExtension::single(&p, c, 1.0, &unit);
    for rho in [0.8, 0.4] {
        let region = HalfBallRegion::new(y0.clone(), rho).unwrap();
        let t = pohozaev_translation(&p, &offset, &k, &region, 4, &PohozaevSpec::default()).unwrap();
        let s = pohozaev_scaling(&p, &centered, &k, &region, &PohozaevSpec::default()).unwrap();
        for r in [&t, &s] {
            assert!(r.relative() < 1e-2, "{r:?}");
            assert!(r.refinement_gain() > 2.0, "{r:?}");
        }
        assert!(s.term("volume_dirichlet").unwrap() > 0.0);
        assert_eq!(t.terms.len(), 4);
        assert_eq!(s.terms.len(), 6);
    }
}

#[test]
fn defect_matches_ball_oracle_for_nonconstant_weight() {
    // a bubble does not solve the weighted equation; the translation identity
    // then leaves (1/d_s) ∫_B (K - 1) U^p ∂_3 U
    let k = WeightField::default_saddle();
    let p = ProblemParams::critical(5, 0.9).unwrap();
    let unit = BubbleExtension::new(&p, QuadratureSpec::default()).unwrap();
    let y0 = vec![1.1, 0.0, 0.05, 0.0, 0.0];
    let region = HalfBallRegion::new(y0.clone(), 0.3).unwrap();
    let mut c = y0.clone();
    c[2] += 0.1;
    let ext = TowerExtension::single(&p, c.clone(), 1.0, &unit);
    let r = pohozaev_translation(&p, &ext, &k, &region, 3, &PohozaevSpec::default()).unwrap();

    let b = Bubble::new(c, 1.0).unwrap();
    let sphere = SphereRule::new(5, 10);
    let radial = composite(&[0.0, 0.1, 0.2, 0.3], 10);
    let mut acc = 0.0;
    for (&rr, &wr) in radial.nodes.iter().zip(&radial.weights) {
        for (om, wo) in sphere.iter() {
            let y: Vec<f64> = (0..5).map(|i| y0[i] + rr * om[i]).collect();
            let u = bubble_value(&p, &b, &y);
            let g = bubble_gradient(&p, &b, &y);
            acc += wr * wo * rr.powi(4) * (k.eval(&y) - 1.0) * u.powf(p.critical_power()) * g[2];
        }
    }
    let oracle = acc / d_s(0.9);
    assert!(oracle.abs() > 1e-2 * r.scale, "defect should be visible");
    assert!((r.residual - oracle).abs() < 5e-4 * r.scale, "{} vs {oracle}", r.residual);
}

#[test]
fn shifting_bubble_and_region_together_changes_nothing() {
    let p = ProblemParams::critical(5, 0.75).unwrap();
    let k = WeightField::default_saddle();
    let unit = BubbleExtension::new(&p, QuadratureSpec::default()).unwrap();
    let spec = PohozaevSpec::default();
    let mut results = Vec::new();
    for y0 in [vec![3.0, 0.0, 0.0, 0.0, 0.0], vec![0.0, -3.5, 1.0, 2.0, -0.5]] {
        let ext = TowerExtension::single(&p, y0.clone(), 2.0, &unit);
        let region = HalfBallRegion::new(y0, 0.6).unwrap();
        results.push(pohozaev_scaling(&p, &ext, &k, &region, &spec).unwrap());
    }
    for (a, b) in results[0].terms.iter().zip(&results[1].terms) {
        assert_eq!(a.0, b.0);
        assert!((a.1 - b.1).abs() < 1e-9 * results[0].scale, "{a:?} {b:?}");
    }
}

#[test]
fn symmetric_translation_terms_vanish() {
    let p = ProblemParams::critical(5, 0.9).unwrap();
    let k = WeightField::default_saddle();
    let unit = BubbleExtension::new(&p, QuadratureSpec::default()).unwrap();
    let y0 = vec![1.0, 0.0, 0.0, 0.0, 0.0];
    let ext = TowerExtension::single(&p, y0.clone(), 1.0, &unit);
    let region = HalfBallRegion::new(y0, 0.25).unwrap();
    let r = pohozaev_translation(&p, &ext, &k, &region, 3, &PohozaevSpec::default()).unwrap();
    assert!(r.magnitude > 1.0);
    assert!(r.residual.abs() < 1e-10 * r.magnitude);
}

#[test]
fn tower_residual_decreases_with_eps() {
    let p = ProblemParams::critical(5, 0.9).unwrap();
    let k = WeightField::default_saddle();
    let mut residuals = Vec::new();
    for eps in [1e-4, 1e-5] {
        let pe = p.with_eps(eps).unwrap();
        let m = m_from_eps(&pe, eps).unwrap();
        let lambda = sweep_lambda(&pe, eps, m, &SweepSpec::new(5));
        let cfg = TowerConfig::new(m, 1.0, vec![0.0; 3], lambda).unwrap();
        let unit = BubbleExtension::new(&pe, QuadratureSpec::default()).unwrap();
        let ext = TowerExtension::new(&pe, &cfg, &unit);
        let region = HalfBallRegion::new(cfg.center(1), 0.25 * cfg.min_separation()).unwrap();
        let r = pohozaev_scaling(&pe, &ext, &k, &region, &PohozaevSpec::default()).unwrap();
        residuals.push(r.residual.abs());
    }
    assert!(residuals[1] < residuals[0], "{residuals:?}");
}

#[test]
fn invalid_inputs_are_rejected() {
    let p = ProblemParams::critical(5, 0.9).unwrap();
    let k = WeightField::default_saddle();
    let unit = BubbleExtension::new(&p, QuadratureSpec::default()).unwrap();
    let ext = TowerExtension::single(&p, vec![3.0, 0.0, 0.0, 0.0, 0.0], 1.0, &unit);
    let region = HalfBallRegion::new(vec![3.0, 0.0, 0.0, 0.0, 0.0], 0.5).unwrap();
    for i in [1, 2, 6] {
        assert!(pohozaev_translation(&p, &ext, &k, &region, i, &PohozaevSpec::default()).is_err());
    }
    assert!(HalfBallRegion::new(vec![0.0; 5], 0.0).is_err());
    let bad = PohozaevSpec {
        height_step: 0.0,
        ..PohozaevSpec::default()
    };
    assert!(pohozaev_scaling(&p, &ext, &k, &region, &bad).is_err());
}
