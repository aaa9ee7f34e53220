use proptest::prelude::*;
use skewfbm::fbm::{
    covariance, covariance_matrix, kernel_k, kernel_k_quadrature, simulate_fbm, FbmSpec, Method,
};
use skewfbm::harness::{map_paths, Domain};
use skewfbm::linalg::{cholesky_jitter, min_eigenvalue};
use skewfbm::stats::{ks_two_sample, EstimatorResult};
use skewfbm::SeedSpec;

const SEED: u64 = 99;

fn paths(spec: &FbmSpec, n: usize, domain: Domain) -> Vec<skewfbm::fbm::PathMatrix> {
    map_paths(n, 1, |i| {
        simulate_fbm(spec, SeedSpec::new(SEED, i), Method::Cholesky, domain).unwrap()
    })
}

#[test]
fn scaled_time_agrees_in_law_with_scaled_path() {
    // B_{g t} and g^H B_t at t = 1, g = 1/2, from independent samples
    let h = 0.2;
    let spec = FbmSpec::new(h, 1, 1.0, 64).unwrap();
    let a: Vec<f64> = paths(&spec, 2000, Domain::Fbm)
        .iter()
        .map(|p| p.at(32, 0))
        .collect();
    let b: Vec<f64> = paths(&spec, 2000, Domain::FbmAlt)
        .iter()
        .map(|p| 0.5f64.powf(h) * p.at(64, 0))
        .collect();
    let ks = ks_two_sample(&a, &b);
    assert!(ks.p_value > 0.01, "{ks:?}");
    // negative control: without the g^H factor the laws differ
    let unscaled: Vec<f64> = b.iter().map(|x| x / 0.5f64.powf(h)).collect();
    assert!(ks_two_sample(&a, &unscaled).p_value < 0.01);
}

#[test]
fn increment_variance_and_component_independence() {
    let (h, d) = (0.3, 2);
    let spec = FbmSpec::new(h, d, 1.0, 64).unwrap();
    let ps = paths(&spec, 4000, Domain::Fbm);
    let (s, t) = (16, 48);
    let inc: Vec<f64> = ps
        .iter()
        .map(|p| (0..d).map(|c| (p.at(t, c) - p.at(s, c)).powi(2)).sum())
        .collect();
    let e = EstimatorResult::from_samples(&inc);
    let target = d as f64 * 0.5f64.powf(2.0 * h);
    assert!(e.within(target, 3.0), "{e:?} vs {target}");
    let cross: Vec<f64> = ps.iter().map(|p| p.at(t, 0) * p.at(t, 1)).collect();
    let c = EstimatorResult::from_samples(&cross);
    assert!(c.within(0.0, 3.0), "{c:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_is_symmetric(h in 0.01..0.49f64, t in 0.0..3.0f64, s in 0.0..3.0f64) {
        prop_assert_eq!(covariance(h, t, s), covariance(h, s, t));
    }

    #[test]
    fn gram_matrix_is_psd(h in 0.02..0.48f64, mut times in prop::collection::vec(0.01..2.0f64, 1..12)) {
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let m = covariance_matrix(h, &times);
        prop_assert!(m == m.transpose());
        prop_assert!(cholesky_jitter(&m).is_ok());
        prop_assert!(min_eigenvalue(&m) > -1e-12 * m.norm());
    }

    #[test]
    fn kernel_is_positive_and_matches_quadrature(h in 0.02..0.48f64, t in 0.05..2.0f64, frac in 0.01..0.99f64) {
        let s = frac * t;
        let k = kernel_k(h, t, s).unwrap();
        prop_assert!(k > 0.0);
        let q = kernel_k_quadrature(h, t, s).unwrap();
        prop_assert!((k - q).abs() <= 1e-7 * k, "closed {} vs quadrature {}", k, q);
    }
}
