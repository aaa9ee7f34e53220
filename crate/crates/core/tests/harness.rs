use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use skewfbm::fbm::{simulate_fbm, FbmSpec, Method};
use skewfbm::harness::{map_paths, Domain};
use skewfbm::stats::{sum, EstimatorResult};
use skewfbm::SeedSpec;

const DOMAINS: [Domain; 5] = [
    Domain::Fbm,
    Domain::FbmAlt,
    Domain::Audit,
    Domain::Gaussian,
    Domain::Generic,
];

fn first_words(seed: SeedSpec, domain: Domain) -> [u64; 2] {
    let mut r = seed.rng(domain);
    [r.random(), r.random()]
}

#[test]
fn se_scales_as_inverse_sqrt_n() {
    let f = |i: u64| {
        let z: f64 = SeedSpec::new(17, i)
            .rng(Domain::Generic)
            .sample(StandardNormal);
        (0.5 * z).exp() + z * z
    };
    let se = |n: usize| EstimatorResult::from_samples(&map_paths(n, 1, f)).se;
    let (a, b, c) = (se(1_000), se(10_000), se(100_000));
    let root10 = 10f64.sqrt();
    for r in [a / b, b / c] {
        assert!(
            (r / root10 - 1.0).abs() <= 0.2,
            "ratios {} {}",
            a / b,
            b / c
        );
    }
}

#[test]
fn worker_count_changes_nothing() {
    let spec = FbmSpec::new(0.25, 2, 1.0, 64).unwrap();
    let run = |w: usize| {
        map_paths(200, w, |i| {
            simulate_fbm(&spec, SeedSpec::new(8, i), Method::default(), Domain::Fbm)
                .unwrap()
                .values
        })
    };
    let (one, eight) = (run(1), run(8));
    assert_eq!(one, eight);
    assert_eq!(one, run(1));
    let mean = |v: &[Vec<f64>]| sum(v.iter().map(|p| p[64 * 2])) / v.len() as f64;
    let (m1, m8) = (mean(&one), mean(&eight));
    assert!((m1 - m8).abs() <= 1e-12 * m1.abs().max(1e-300));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn substreams_are_injective(
        s1 in any::<u64>(), i1 in any::<u64>(), d1 in 0usize..5,
        s2 in any::<u64>(), i2 in any::<u64>(), d2 in 0usize..5,
    ) {
        let a = first_words(SeedSpec::new(s1, i1), DOMAINS[d1]);
        let b = first_words(SeedSpec::new(s2, i2), DOMAINS[d2]);
        if (s1, i1, d1) == (s2, i2, d2) {
            prop_assert_eq!(a, b);
        } else {
            prop_assert_ne!(a, b);
        }
    }

    #[test]
    fn neighbouring_substreams_differ(seed in any::<u64>(), i in 0u64..u64::MAX, d in 0usize..5) {
        let here = first_words(SeedSpec::new(seed, i), DOMAINS[d]);
        prop_assert_ne!(here, first_words(SeedSpec::new(seed, i + 1), DOMAINS[d]));
        prop_assert_ne!(here, first_words(SeedSpec::new(seed.wrapping_add(1), i), DOMAINS[d]));
        prop_assert_ne!(here, first_words(SeedSpec::new(seed, i), DOMAINS[(d + 1) % 5]));
    }
}
