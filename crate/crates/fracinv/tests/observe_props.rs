use fracinv::observe::{
    aliasing_closed_form, aliasing_coefficient, empirical_risk, estimate_ball, estimate_rect, make_grid, observe,
    observe_field, rect_risk_bound, standard_normal, EstimatorSpec, NoiseSpec, SeedRecord,
};
use fracinv::spectral::{ModeIndex, ModeSet, SpectralField};
use proptest::prelude::*;
use std::sync::Arc;

fn mi(j: &[u32]) -> ModeIndex {
    ModeIndex::new(j.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn aliasing_matches_closed_form(ni in 0usize..3, nj in 0usize..3, a in 1u32..64, b in 1u32..64, c in 1u32..64, e in 1u32..64) {
        let sizes = [4usize, 8, 16];
        let (n1, n2) = (sizes[ni], sizes[nj]);
        let g = make_grid(&[n1, n2]).unwrap();
        let j = mi(&[1 + (a - 1) % (4 * n1 as u32 - 1), 1 + (b - 1) % (4 * n2 as u32 - 1)]);
        let m = mi(&[1 + (c - 1) % (4 * n1 as u32 - 1), 1 + (e - 1) % (4 * n2 as u32 - 1)]);
        let brute = aliasing_coefficient(&j, &m, &g).unwrap();
        let closed = aliasing_closed_form(&j, &m, &g).unwrap();
        prop_assert!((brute - closed).abs() <= 1e-10, "{} {} {} vs {}", j, m, brute, closed);
    }

    #[test]
    fn in_band_fields_are_reproduced(coeffs in prop::collection::vec(-2.0f64..2.0, 16), n in 10usize..30) {
        let modes = Arc::new(ModeSet::rect(&[4, 4]).unwrap());
        let phi = SpectralField::from_coeffs(modes, coeffs).unwrap();
        let g = make_grid(&[n, n + 1]).unwrap();
        let obs = observe_field(&phi, &g, &NoiseSpec::Scalar(0.0), SeedRecord::new(0, 0)).unwrap();
        let est = estimate_rect(&obs, &[5, 5]).unwrap();
        prop_assert!(est.distance(&phi, 0.0) < 1e-9);
        let ball = estimate_ball(&obs, 32.0).unwrap();
        prop_assert!(ball.distance(&phi, 0.0) < 1e-9);
    }
}

#[test]
fn noise_mean_is_centred() {
    let g = make_grid(&[50]).unwrap();
    let reps = 10_000;
    let mut total = 0.0;
    for r in 0..reps {
        let obs = observe(|x| x[0].sin(), &g, &NoiseSpec::Scalar(0.01), SeedRecord::new(77, r)).unwrap();
        total += obs.values.iter().enumerate().map(|(k, v)| v - g.point(k)[0].sin()).sum::<f64>();
    }
    let mean = total / (reps as f64 * 50.0);
    assert!(mean.abs() <= 3.0 * 0.01 / ((reps * 50) as f64).sqrt(), "{mean}");
}

#[test]
fn noise_variance() {
    let n = 100_000;
    let eps = 0.015;
    let draws: Vec<f64> = (0..n).map(|k| eps * standard_normal(SeedRecord::new(5, 0), k)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((var / (eps * eps) - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn risk_examples() {
    let g = make_grid(&[20, 20]).unwrap();
    let phi = SpectralField::single(mi(&[1, 2]), 0.7);
    let r = empirical_risk(&phi, &g, &NoiseSpec::Scalar(0.0), &EstimatorSpec::Rectangle(vec![3, 3]), 30, 1).unwrap();
    assert!(r.mean <= 1e-16);
    let out = SpectralField::single(mi(&[4, 1]), 1.0);
    let r = empirical_risk(&out, &g, &NoiseSpec::Scalar(0.0), &EstimatorSpec::Rectangle(vec![3, 3]), 30, 1).unwrap();
    assert!(r.mean >= 1.0 - 1e-9);
    assert!(empirical_risk(&phi, &g, &NoiseSpec::Scalar(0.0), &EstimatorSpec::Ball(5.0), 10, 1).is_err());
}

#[test]
fn risk_stays_below_rect_bound() {
    let phi = SpectralField::single(mi(&[1, 1]), std::f64::consts::PI / 2.0);
    for (n, cutoff, eps) in [(16usize, 2u32, 0.02), (32, 3, 0.015), (50, 3, 0.015)] {
        let g = make_grid(&[n, n]).unwrap();
        let r = empirical_risk(&phi, &g, &NoiseSpec::Scalar(eps), &EstimatorSpec::Rectangle(vec![cutoff, cutoff]), 100, 4)
            .unwrap();
        let bound = rect_risk_bound(eps, &[n, n], &[cutoff, cutoff], 3.0, phi.sobolev_norm(3.0)).unwrap();
        assert!(r.mean <= bound, "n={n}: {} > {bound}", r.mean);
    }
}
