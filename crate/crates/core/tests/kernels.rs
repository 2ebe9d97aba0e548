mod common;

use amprlab::{denoise, denoise_deriv, poisson_moments, smoothed_moments, BootstrapSize, DenoiserParams};
use common::{poisson_series, rel_err, smoothed_oracle};
use proptest::prelude::*;

fn p(lambda: f64, gamma: f64) -> DenoiserParams {
    DenoiserParams::new(lambda, gamma).unwrap()
}

#[test]
fn denoiser_values() {
    assert!((denoise(1.0, 1.0, &p(0.5, 0.5)).unwrap() - 0.6).abs() < 1e-15);
    assert!((denoise_deriv(1.0, 1.0, &p(0.5, 0.5)).unwrap() - 0.8).abs() < 1e-15);
    assert!((denoise_deriv(1.0, 2.0, &p(0.5, 1.0)).unwrap() - 0.5).abs() < 1e-15);
    assert_eq!(denoise(0.2, 1.0, &p(0.5, 0.5)).unwrap(), 0.0);
}

#[test]
fn smoothed_moments_single_point() {
    let m = smoothed_moments(0.5, 0.2, 1.0, &p(0.5, 0.5)).unwrap();
    let o = smoothed_oracle(0.5, 0.2, 1.0, 0.5, 0.5);
    assert!((m.m1 - o[0]).abs() < 1e-10, "{} vs {}", m.m1, o[0]);
    assert!((m.m2 - o[1]).abs() < 1e-10);
    assert!((m.mderiv - o[2]).abs() < 1e-10);
}

#[test]
fn smoothed_moments_approach_pointwise_values() {
    for &(h, q, l, g) in &[(0.7, 1.3, 0.4, 0.6), (-2.0, 0.5, 1.0, 1.0), (0.1, 2.0, 0.3, 0.2)] {
        let m = smoothed_moments(h, 1e-14, q, &p(l, g)).unwrap();
        let pt = denoise(h, q, &p(l, g)).unwrap();
        assert!((m.m1 - pt).abs() < 1e-7 && (m.m2 - pt * pt).abs() < 1e-7);
    }
}

#[test]
fn poisson_values() {
    let f = poisson_moments(0.0, BootstrapSize::new(2.0).unwrap()).unwrap();
    assert!((f.f1 - 1.0).abs() < 1e-14 && (f.f2 - 1.5).abs() < 1e-14);
    let f = poisson_moments(0.5, BootstrapSize::new(1.0).unwrap()).unwrap();
    let (f1, f2) = poisson_series(0.5, 1.0);
    assert!(rel_err(f.f1, f1) < 1e-12 && rel_err(f.f2, f2) < 1e-12);
}

#[test]
fn poisson_large_mu_approaches_infinity() {
    for chi in [0.0, 0.3, 2.0] {
        let a = poisson_moments(chi, BootstrapSize::new(1e6).unwrap()).unwrap();
        let b = poisson_moments(chi, BootstrapSize::INFINITE).unwrap();
        assert!((a.f1 - b.f1).abs() < 1e-3 && (a.f2 - b.f2).abs() < 1e-3);
    }
}

#[test]
fn rejects_bad_inputs() {
    assert!(DenoiserParams::new(-0.1, 0.5).is_err());
    assert!(DenoiserParams::new(0.1, 1.5).is_err());
    assert!(denoise(1.0, 0.0, &p(0.1, 0.5)).is_err());
    assert!(smoothed_moments(1.0, -1.0, 1.0, &p(0.1, 0.5)).is_err());
    assert!(poisson_moments(-0.5, BootstrapSize::new(1.0).unwrap()).is_err());
    assert!(BootstrapSize::new(0.0).is_err());
}

proptest! {
    #[test]
    fn denoiser_is_odd_and_shrinks(h in -10.0..10.0f64, q in 0.05..5.0f64, l in 0.0..3.0f64, g in 0.0..=1.0f64) {
        let pr = p(l, g);
        let a = denoise(h, q, &pr).unwrap();
        prop_assert_eq!(a, -denoise(-h, q, &pr).unwrap());
        prop_assert!(a * h >= 0.0);
        prop_assert!(a.abs() <= h.abs() / q + 1e-12);
        let d = denoise_deriv(h, q, &pr).unwrap();
        prop_assert!(d >= 0.0 && d <= 1.0 / q + 1e-12);
    }

    #[test]
    fn denoiser_is_monotone(h in -10.0..10.0f64, dh in 0.0..2.0f64, q in 0.05..5.0f64, l in 0.0..3.0f64, g in 0.0..=1.0f64) {
        let pr = p(l, g);
        prop_assert!(denoise(h + dh, q, &pr).unwrap() >= denoise(h, q, &pr).unwrap());
    }

    #[test]
    fn smoothed_variance_nonnegative(h in -8.0..8.0f64, v in 0.0..10.0f64, q in 0.05..5.0f64, l in 1e-6..3.0f64, g in 0.0..=1.0f64) {
        let m = smoothed_moments(h, v, q, &p(l, g)).unwrap();
        prop_assert!(m.m2 - m.m1 * m.m1 >= -1e-12);
        prop_assert!(m.mderiv >= 0.0);
    }

    #[test]
    fn smoothed_matches_oracle(h in -5.0..5.0f64, v in 1e-3..4.0f64, q in 0.1..5.0f64, l in 1e-3..2.0f64, g in 0.0..=1.0f64) {
        let m = smoothed_moments(h, v, q, &p(l, g)).unwrap();
        let o = smoothed_oracle(h, v, q, l, g);
        for (a, b) in [m.m1, m.m2, m.mderiv].into_iter().zip(o) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn poisson_ordering(chi in 0.0..20.0f64, dchi in 1e-3..5.0f64, mu in 0.05..50.0f64) {
        let b = BootstrapSize::new(mu).unwrap();
        let f = poisson_moments(chi, b).unwrap();
        let g = poisson_moments(chi + dchi, b).unwrap();
        prop_assert!(f.f1 * f.f1 <= f.f2 * (1.0 + 1e-14));
        prop_assert!(g.f1 < f.f1 && g.f2 < f.f2);
        let (f1, f2) = poisson_series(chi, mu);
        prop_assert!(rel_err(f.f1, f1) < 1e-12 && rel_err(f.f2, f2) < 1e-12);
    }
}
