use proptest::prelude::*;
use skewfbm::fbm::{simulate_fbm_volterra, FbmSpec};
use skewfbm::girsanov::{
    doleans_exponential, kh_inverse_bare, kh_inverse_from_derivative, mean_one_study,
    measure_change_covariance_test, Verdict,
};
use skewfbm::local_time::MollifierSpec;
use skewfbm::special::gamma;
use skewfbm::{SeedSpec, TimeGrid};

#[test]
fn constant_drift_closed_form() {
    // bare inverse of int_0^s c = c s^{H-1/2} I^{1/2-H}[r^{1/2-H}](s)
    //   = c Gamma(3/2-H) / Gamma(2-2H) s^{1/2-H}
    let (h, c) = (0.2, 1.7);
    let grid = TimeGrid::new(1.0, 512).unwrap();
    let out = kh_inverse_bare(h, &grid, &vec![c; 513]).unwrap();
    let k = c * gamma(1.5 - h) / gamma(2.0 - 2.0 * h);
    for (s, v) in out.defined() {
        assert!((v - k * s.powf(0.5 - h)).abs() < 1e-6, "s = {s}: {v}");
    }
}

#[test]
fn log_density_second_moment_stable_under_refinement() {
    let spec = MollifierSpec::origin(0.5, 1).unwrap();
    let m: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&n| {
            let fbm = FbmSpec::new(0.1, 1, 1.0, n).unwrap();
            let r = mean_one_study(&fbm, &spec, 1.0, 2000, 6, 1).unwrap();
            assert!(r.log_second_moment.mean.is_finite());
            r.log_second_moment.mean
        })
        .collect();
    for w in m.windows(2) {
        assert!((w[1] / w[0] - 1.0).abs() <= 0.1, "{m:?}");
    }
}

#[test]
fn tilted_process_is_centered() {
    let fbm = FbmSpec::new(0.1, 1, 1.0, 128).unwrap();
    let spec = MollifierSpec::origin(0.5, 1).unwrap();
    let c =
        measure_change_covariance_test(&fbm, &spec, 1.0, &[(0.5, 1.0), (1.0, 1.0)], 4000, 12, 1)
            .unwrap();
    assert_ne!(c.verdict, Verdict::Inconclusive);
    for r in &c.means {
        assert!(r.z().abs() <= 3.0, "t = {}: z = {}", r.t, r.z());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn density_is_positive(idx in 0u64..500, amp in -3.0..3.0f64, e in 0.01..1.0f64, h in 0.05..0.45f64) {
        let fbm = FbmSpec::new(h, 1, 1.0, 32).unwrap();
        let p = simulate_fbm_volterra(&fbm, SeedSpec::new(3, idx)).unwrap();
        let drv = p.driver.clone().unwrap();
        let s = doleans_exponential(h, &p, &MollifierSpec::origin(e, 1).unwrap(), amp, &drv).unwrap();
        prop_assert!(s.xi > 0.0 && s.xi.is_finite());
        prop_assert!((s.xi.ln() - s.log_xi).abs() <= 1e-12 * (1.0 + s.log_xi.abs()));
    }

    #[test]
    fn inverse_is_linear(h in 0.05..0.45f64, c in -4.0..4.0f64, u in prop::collection::vec(-2.0..2.0f64, 33)) {
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let base = kh_inverse_from_derivative(h, &grid, &u).unwrap();
        let scaled: Vec<f64> = u.iter().map(|v| c * v).collect();
        let out = kh_inverse_from_derivative(h, &grid, &scaled).unwrap();
        let scale = 1.0 + c.abs() * base.defined().map(|(_, a)| a.abs()).fold(0.0, f64::max);
        for ((_, a), (_, b)) in base.defined().zip(out.defined()) {
            prop_assert!((b - c * a).abs() <= 1e-13 * scale);
        }
    }
}
