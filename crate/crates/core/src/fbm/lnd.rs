//! Local non-determinism: conditional variances of fBm given far-away
//! observations, and the determinant chain rule.

use crate::error::{invalid, Result};
use crate::linalg::{conditional_variance, determinant};

use super::covariance::covariance_matrix;
use super::FbmSpec;

/// `Var[B_t | B_s, s in times]` for one component.
pub fn conditional_variance_given(h: f64, t: f64, times: &[f64]) -> Result<f64> {
    let mut all = Vec::with_capacity(times.len() + 1);
    all.push(t);
    all.extend_from_slice(times);
    let cov = covariance_matrix(h, &all);
    let given: Vec<usize> = (1..all.len()).collect();
    conditional_variance(&cov, 0, &given)
}

/// `Var[B_t | B_s : s a grid node, |t - s| >= r] / r^{2H}`.
pub fn local_nondeterminism_ratio(spec: &FbmSpec, t: f64, r: f64) -> Result<f64> {
    spec.validate()?;
    if !(r > 0.0 && r < t && t <= spec.horizon) {
        return Err(invalid(
            "r",
            format!("need 0 < r < t <= T, got r = {r}, t = {t}"),
        ));
    }
    let grid = spec.grid();
    let far: Vec<f64> = (1..=spec.steps)
        .map(|i| grid.node(i))
        .filter(|&s| (t - s).abs() >= r * (1.0 - 1e-12))
        .collect();
    let v = conditional_variance_given(spec.hurst, t, &far)?;
    Ok(v / r.powf(2.0 * spec.hurst))
}

/// Smallest [`local_nondeterminism_ratio`] over the `(t, r)` lattice,
/// skipping pairs with `r >= t`. This is the empirical stand-in for the
/// unknown local non-determinism constant.
pub fn min_nondeterminism_ratio(spec: &FbmSpec, ts: &[f64], rs: &[f64]) -> Result<f64> {
    let mut best = f64::INFINITY;
    for &t in ts {
        for &r in rs.iter().filter(|&&r| r < t) {
            best = best.min(local_nondeterminism_ratio(spec, t, r)?);
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(invalid("lattice", "no pair with 0 < r < t"))
    }
}

/// Determinant of a covariance matrix next to the product of successive
/// conditional variances `Var[X_1] Var[X_2|X_1] ...`.
#[derive(Clone, Copy, Debug)]
pub struct DetChain {
    pub determinant: f64,
    pub product: f64,
}

pub fn det_chain(h: f64, times: &[f64]) -> Result<DetChain> {
    let cov = covariance_matrix(h, times);
    let mut product = 1.0;
    for k in 0..times.len() {
        let given: Vec<usize> = (0..k).collect();
        product *= conditional_variance(&cov, k, &given)?;
    }
    Ok(DetChain {
        determinant: determinant(&cov),
        product,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_positive_and_bounded() {
        let spec = FbmSpec::new(0.2, 1, 1.0, 64).unwrap();
        for &t in &[0.25, 0.5, 1.0] {
            for &r in &[0.05, 0.1, 0.2] {
                let q = local_nondeterminism_ratio(&spec, t, r).unwrap();
                assert!(q > 0.0 && q <= 1.0 + 1e-9, "t={t} r={r}: {q}");
            }
        }
    }

    #[test]
    fn lattice_minimum_stable_under_refinement() {
        let (ts, rs) = ([0.25, 0.5, 0.75, 1.0], [0.0625, 0.125, 0.25]);
        let a =
            min_nondeterminism_ratio(&FbmSpec::new(0.2, 1, 1.0, 32).unwrap(), &ts, &rs).unwrap();
        let b =
            min_nondeterminism_ratio(&FbmSpec::new(0.2, 1, 1.0, 64).unwrap(), &ts, &rs).unwrap();
        let c =
            min_nondeterminism_ratio(&FbmSpec::new(0.2, 1, 1.0, 128).unwrap(), &ts, &rs).unwrap();
        assert!(c > 0.0 && a / c < 2.0 && b / c < 2.0, "{a} {b} {c}");
        assert!(
            min_nondeterminism_ratio(&FbmSpec::new(0.2, 1, 1.0, 8).unwrap(), &[0.25], &[0.5])
                .is_err()
        );
    }

    #[test]
    fn fewer_observations_never_lower_variance() {
        let h = 0.15;
        let big = [0.1, 0.2, 0.3, 0.7, 0.9];
        let small = [0.2, 0.9];
        let vb = conditional_variance_given(h, 0.5, &big).unwrap();
        let vs = conditional_variance_given(h, 0.5, &small).unwrap();
        assert!(vs >= vb - 1e-14);
    }

    #[test]
    fn determinant_chain() {
        let c = det_chain(0.3, &[0.1, 0.35, 0.5, 0.8, 1.0]).unwrap();
        assert!((c.determinant - c.product).abs() < 1e-10 * c.determinant.abs().max(1e-300));
    }
}
