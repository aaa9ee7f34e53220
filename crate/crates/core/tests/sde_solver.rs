use proptest::prelude::*;
use skewfbm::fbm::{simulate_fbm, FbmSpec, Method, PathMatrix};
use skewfbm::harness::{map_paths, Domain};
use skewfbm::sde::{
    holder_moment_check, kernel_difference_sum, solution_ensemble, solve_mollified,
    terminal_ladder, SdeSpec,
};
use skewfbm::stats::ks_two_sample;
use skewfbm::SeedSpec;

fn negate(p: &PathMatrix) -> PathMatrix {
    PathMatrix {
        values: p.values.iter().map(|v| -v).collect(),
        driver: None,
        ..p.clone()
    }
}

#[test]
fn sign_flip_symmetry() {
    let fbm = FbmSpec::new(0.1, 1, 1.0, 128).unwrap();
    let plus = SdeSpec::new(vec![0.0], 1.3, fbm, 0.05).unwrap();
    let minus = SdeSpec::new(vec![0.0], -1.3, fbm, 0.05).unwrap();
    // pathwise: X^(a)[B] = -X^(-a)[-B] because phi is even
    for i in 0..20 {
        let p = simulate_fbm(&fbm, SeedSpec::new(4, i), Method::default(), Domain::Fbm).unwrap();
        let x = solve_mollified(&plus, &p).unwrap();
        let y = solve_mollified(&minus, &negate(&p)).unwrap();
        assert!(x.values.iter().zip(&y.values).all(|(a, b)| *a == -*b));
    }
    // in law, from independent drivers
    let a: Vec<f64> = map_paths(2000, 1, |i| {
        let p = simulate_fbm(&fbm, SeedSpec::new(4, i), Method::default(), Domain::Fbm).unwrap();
        *solve_mollified(&plus, &p).unwrap().values.last().unwrap()
    });
    let b: Vec<f64> = map_paths(2000, 1, |i| {
        let p = simulate_fbm(&fbm, SeedSpec::new(4, i), Method::default(), Domain::FbmAlt).unwrap();
        -*solve_mollified(&minus, &p).unwrap().values.last().unwrap()
    });
    assert!(ks_two_sample(&a, &b).p_value > 0.01);
    // the drift is visible: X^(a) and X^(-a) differ in law
    let c: Vec<f64> = b.iter().map(|v| -v).collect();
    assert!(ks_two_sample(&a, &c).p_value < 0.01);
}

#[test]
fn coupled_ladder_is_a_function_of_the_driver() {
    let fbm = FbmSpec::new(0.15, 2, 1.0, 64).unwrap();
    let spec = SdeSpec::new(vec![0.1, -0.2], 1.0, fbm, 0.5).unwrap();
    let ladder = [0.5, 0.25, 0.125];
    let p = simulate_fbm(&fbm, SeedSpec::new(2, 9), Method::default(), Domain::Fbm).unwrap();
    let q = simulate_fbm(&fbm, SeedSpec::new(2, 9), Method::default(), Domain::Fbm).unwrap();
    assert_eq!(
        terminal_ladder(&spec, &p, &ladder).unwrap(),
        terminal_ladder(&spec, &q, &ladder).unwrap()
    );
    // each rung equals a standalone solve on the same driver
    let rungs = terminal_ladder(&spec, &p, &ladder).unwrap();
    for (e, r) in ladder.iter().zip(&rungs) {
        let x = solve_mollified(&spec.with_epsilon(*e), &p).unwrap();
        assert_eq!(x.row(64), r.as_slice());
    }
}

#[test]
fn holder_slope_at_least_small_lag_exponent() {
    let (h, d, m) = (0.1, 1, 2);
    let fbm = FbmSpec::new(h, d, 1.0, 256).unwrap();
    let spec = SdeSpec::new(vec![0.0], 1.0, fbm, 2f64.powi(-6)).unwrap();
    let ens = solution_ensemble(&spec, 200, 3, 1, Method::default()).unwrap();
    let lags: Vec<usize> = (0..8).map(|k| 1 << k).collect();
    let r = holder_moment_check(&ens, m, &lags, h).unwrap();
    let floor = (2.0 * h).min(1.0 - h * d as f64) - 0.05;
    assert!(r.slope >= floor, "slope {} < {floor}", r.slope);
    assert!(r.fitted_c.is_finite() && r.fitted_c > 0.0);
}

#[test]
fn band_refinement_diverges_near_half() {
    // near each endpoint K_H(t, .) has a power singularity of order H - 1/2,
    // so the banded double sum behaves like M^{2 beta - 2H}: it settles for
    // beta < H and grows at that rate otherwise
    let sums = |h: f64, beta: f64| -> Vec<f64> {
        [128, 256, 512, 1024]
            .iter()
            .map(|&m| kernel_difference_sum(h, 1, 1.0, m, beta).unwrap())
            .collect()
    };
    let rates = |s: &[f64]| {
        s.windows(2)
            .map(|w| (w[1] / w[0]).log2())
            .collect::<Vec<_>>()
    };
    // settling: the doubling rate log2(S_2M / S_M) falls toward zero
    let settle = rates(&sums(0.3, 0.05));
    assert!(
        settle.windows(2).all(|w| w[1] < w[0]) && settle[2] < 0.25,
        "{settle:?}"
    );
    // diverging: the rate approaches 2 beta - 2H from above
    let blow = rates(&sums(0.1, 0.49));
    let expected = 2.0 * 0.49 - 2.0 * 0.1;
    assert!(
        blow.iter()
            .all(|&r| r > expected - 0.05 && r < expected + 0.25),
        "{blow:?}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zero_drift_is_shift_of_the_driver(idx in 0u64..1000, x0 in -2.0..2.0f64, e in 0.01..1.0f64) {
        let fbm = FbmSpec::new(0.2, 1, 1.0, 32).unwrap();
        let spec = SdeSpec::new(vec![x0], 0.0, fbm, e).unwrap();
        let p = simulate_fbm(&fbm, SeedSpec::new(1, idx), Method::default(), Domain::Fbm).unwrap();
        let x = solve_mollified(&spec, &p).unwrap();
        prop_assert!(x.values.iter().zip(&p.values).all(|(a, b)| a.to_bits() == (x0 + b).to_bits()));
    }
}
