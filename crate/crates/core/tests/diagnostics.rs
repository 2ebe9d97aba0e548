mod common;

use std::sync::OnceLock;

use amprlab::{
    decoupling_check, ks_statistic, qq_against_normal, run_ampr, run_se, AmprState, BootstrapSize, Error, Phi, Psi,
    SeInit, SeModel, SeOptions, SeState, SolverOptions,
};
use common::{mean, FIG};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEEDS: std::ops::Range<u64> = 2000..2010;

struct Fixture {
    states: Vec<AmprState>,
    se: SeState,
    model: SeModel,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let model = FIG.se_model();
        let se = run_se(&model, &SeInit::standard(&model.prior), &SeOptions::default()).unwrap();
        let states = SEEDS
            .map(|s| run_ampr(&FIG.instance(s), &FIG.params(), FIG.mu(), &SolverOptions::default()).unwrap())
            .collect();
        Fixture { states, se, model }
    })
}

fn averaged(phi: Phi, psi: Psi) -> (f64, f64) {
    let f = fixture();
    let pairs: Vec<(f64, f64)> = f
        .states
        .iter()
        .map(|s| decoupling_check(s, &f.se, &f.model, phi, psi).unwrap())
        .collect();
    (mean(pairs.iter().map(|p| p.0)), pairs[0].1)
}

#[test]
fn second_moment_of_bootstrap_mean() {
    let (lhs, rhs) = averaged(Phi::Square, Psi::Identity);
    assert!((lhs - rhs).abs() <= 0.05 * rhs, "{lhs} vs {rhs}");
}

#[test]
fn mean_of_bootstrap_second_moment() {
    let (lhs, rhs) = averaged(Phi::Identity, Psi::Square);
    assert!((lhs - rhs).abs() <= 0.05 * rhs, "{lhs} vs {rhs}");
}

#[test]
fn mean_of_bootstrap_mean() {
    // both sides vanish by symmetry of the prior, so the scale is the
    // root-mean-square of the statistic itself
    let (lhs, rhs) = averaged(Phi::Identity, Psi::Identity);
    let (_, scale2) = averaged(Phi::Square, Psi::Identity);
    assert!(rhs.abs() < 1e-12);
    assert!((lhs - rhs).abs() <= 0.05 * scale2.sqrt(), "{lhs} vs {rhs}");
}

#[test]
fn degenerate_noise_reduces_to_estimate() {
    let inst = FIG.instance(SEEDS.start);
    let s = run_ampr(&inst, &FIG.params(), BootstrapSize::INFINITE, &SolverOptions::default()).unwrap();
    let model = SeModel {
        mu_b: BootstrapSize::INFINITE,
        ..FIG.se_model()
    };
    let se = run_se(&model, &SeInit::standard(&model.prior), &SeOptions::default()).unwrap();
    let (lhs, _) = decoupling_check(&s, &se, &model, Phi::Square, Psi::Identity).unwrap();
    let direct = mean(s.w_hat.iter().map(|w| w * w));
    assert!((lhs - direct).abs() <= 1e-12 * direct);
}

#[test]
fn unsupported_selector_and_unconverged_inputs() {
    let f = fixture();
    assert!(matches!(
        decoupling_check(&f.states[0], &f.se, &f.model, Phi::Square, Psi::Square),
        Err(Error::InvalidArgument(_))
    ));
    let mut s = f.states[0].clone();
    s.converged = false;
    assert!(decoupling_check(&s, &f.se, &f.model, Phi::Square, Psi::Identity).is_err());
}

#[test]
fn matching_normal_sample_has_unit_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sd = 1.7;
    let s: Vec<f64> = (0..100_000)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let t = qq_against_normal(&s, sd * sd).unwrap();
    assert!((0.99..=1.01).contains(&t.slope), "slope {}", t.slope);
    assert!(t.theoretical.windows(2).all(|w| w[0] < w[1]));
    assert!(ks_statistic(&s, sd * sd).unwrap() < 0.01);
}

#[test]
fn uniform_sample_shows_mismatch() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let t = qq_against_normal(&s, 1.0 / 3.0).unwrap();
    // light tails: the extreme sample quantiles fall short of the normal ones
    assert!(t.sample[0] > t.theoretical[0] && t.sample[s.len() - 1] < t.theoretical[s.len() - 1]);
    assert!(ks_statistic(&s, 1.0 / 3.0).unwrap() > 0.02);
}
