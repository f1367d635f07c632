use fracinv::spectral::{
    eigenfunction_eval, project, sobolev_norm, synthesize, synthesize_on_grid, ModeIndex, ModeSet, QuadratureRule,
    SpectralField,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

#[test]
fn weights_sum_to_pi() {
    for n in [3, 11, 101, 401] {
        let r = QuadratureRule::simpson(n).unwrap();
        assert!((r.weights().iter().sum::<f64>() - PI).abs() < 1e-13);
    }
}

#[test]
fn orthonormal_under_simpson() {
    let rule = QuadratureRule::simpson(401).unwrap();
    let modes = Arc::new(ModeSet::rect(&[10, 10]).unwrap());
    for j in [[1u32, 1], [3, 7], [10, 10], [10, 1]] {
        let jm = ModeIndex::new(j.to_vec()).unwrap();
        let u = project(|x| eigenfunction_eval(&jm, x), modes.clone(), &rule).unwrap();
        for (m, c) in u.modes().modes().iter().zip(u.coeffs()) {
            let want = if *m == jm { 1.0 } else { 0.0 };
            assert!((c - want).abs() <= 1e-8, "<{jm}, {m}> = {c}");
        }
    }
}

#[test]
fn parseval_for_band_limited_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let modes = Arc::new(ModeSet::rect(&[6, 6]).unwrap());
    let coeffs: Vec<f64> = (0..modes.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u = SpectralField::from_coeffs(modes, coeffs).unwrap();
    let rule = QuadratureRule::simpson(201).unwrap();
    let vals = synthesize_on_grid(&u, &[rule.nodes(), rule.nodes()]).unwrap();
    let mut acc = 0.0;
    for (a, wa) in rule.weights().iter().enumerate() {
        for (b, wb) in rule.weights().iter().enumerate() {
            acc += wa * wb * vals[a * rule.n_nodes() + b].powi(2);
        }
    }
    assert!((acc.sqrt() - u.l2_norm()).abs() < 1e-6);
}

#[test]
fn project_then_synthesize_at_random_points() {
    let f = |x: &[f64]| x[0].sin().powi(3) * (x[1].sin() * x[1].cos().exp());
    let rule = QuadratureRule::simpson(401).unwrap();
    let u = project(f, Arc::new(ModeSet::rect(&[5, 40]).unwrap()), &rule).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let p = [rng.random_range(0.0..PI), rng.random_range(0.0..PI)];
        assert!((synthesize(&u, &p) - f(&p)).abs() < 1e-6, "{p:?}");
    }
}

proptest! {
    #[test]
    fn sobolev_norm_is_monotone_in_sigma(coeffs in prop::collection::vec(-10.0f64..10.0, 9), s in 0.0f64..3.0, ds in 0.0f64..2.0) {
        let modes = Arc::new(ModeSet::rect(&[3, 3]).unwrap());
        let u = SpectralField::from_coeffs(modes, coeffs).unwrap();
        prop_assert!(sobolev_norm(&u, s) <= sobolev_norm(&u, s + ds) * (1.0 + 1e-14));
    }

    #[test]
    fn ball_sets_are_exact(d in 1usize..4, gamma in 0.0f64..60.0) {
        let b = ModeSet::ball(d, gamma).unwrap();
        prop_assert!(b.eigenvalues().iter().all(|&l| l <= gamma));
        let r = ModeSet::rect(&vec![8; d]).unwrap();
        let inside = r.eigenvalues().iter().filter(|&&l| l <= gamma).count();
        prop_assert_eq!(inside, b.len());
    }
}
