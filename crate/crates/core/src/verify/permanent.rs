//! Permanents, the `n! prod a_ii` bound for positive semidefinite matrices
//! and the Gaussian absolute-moment bound `E|X_1...X_n| <= sqrt(perm)`.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harness::{Domain, SeedSpec};
use crate::special::factorial;
use crate::stats::EstimatorResult;

pub const MAX_PERMANENT_SIZE: usize = 10;
/// Eigenvalues above `-PSD_TOL` count as nonnegative.
pub const PSD_TOL: f64 = 1e-10;

fn square(m: &DMatrix<f64>) -> Result<usize> {
    if !m.is_square() {
        return Err(invalid("matrix", "must be square"));
    }
    if m.nrows() > MAX_PERMANENT_SIZE {
        return Err(Error::SizeGuard(format!(
            "permanent supports n <= {MAX_PERMANENT_SIZE}, got {}",
            m.nrows()
        )));
    }
    Ok(m.nrows())
}

/// Ryser's formula with Gray-code subset updates, `O(2^n n)`.
pub fn permanent(m: &DMatrix<f64>) -> Result<f64> {
    let n = square(m)?;
    if n == 0 {
        return Ok(1.0);
    }
    let mut row_sums = vec![0.0; n];
    let mut total = 0.0;
    let mut gray = 0usize;
    for k in 1..(1usize << n) {
        let next = k ^ (k >> 1);
        let col = (gray ^ next).trailing_zeros() as usize;
        let sign = if next & (1 << col) != 0 { 1.0 } else { -1.0 };
        for (i, s) in row_sums.iter_mut().enumerate() {
            *s += sign * m[(i, col)];
        }
        gray = next;
        let prod: f64 = row_sums.iter().product();
        let parity = if (n - next.count_ones() as usize).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        total += parity * prod;
    }
    Ok(total)
}

/// Sum over all `n!` permutations.
pub fn permanent_brute(m: &DMatrix<f64>) -> Result<f64> {
    let n = square(m)?;
    Ok((0..n)
        .permutations(n)
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(i, &j)| m[(i, j)])
                .product::<f64>()
        })
        .sum())
}

/// Checks symmetry and `min eig >= -PSD_TOL`.
pub fn validate_psd(m: &DMatrix<f64>) -> Result<f64> {
    square(m)?;
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-12 * m.abs().max().max(1.0) {
        return Err(invalid(
            "matrix",
            format!("not symmetric (max asymmetry {asym:e})"),
        ));
    }
    let min = crate::linalg::min_eigenvalue(m);
    if min < -PSD_TOL {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    Ok(min)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PermanentBound {
    pub n: usize,
    pub permanent: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `perm(A) <= n! prod a_ii` for a PSD matrix.
pub fn psd_permanent_bound_check(m: &DMatrix<f64>) -> Result<PermanentBound> {
    validate_psd(m)?;
    let n = m.nrows();
    let permanent = permanent(m)?;
    let bound = factorial(n) * m.diagonal().iter().product::<f64>();
    // Ryser's alternating sum can cancel down to the equality case (rank
    // one), so the slack is its forward error scale, not a relative epsilon
    let rows: f64 = m
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .product();
    let slack = (1u64 << n) as f64 * n as f64 * f64::EPSILON * rows;
    Ok(PermanentBound {
        n,
        permanent,
        bound,
        holds: permanent >= -slack && permanent <= bound + slack,
    })
}

/// Covariance of the vector that repeats the `j`-th coordinate of a
/// Gaussian with covariance `base` `multiplicity[j]` times.
pub fn repeated_row_matrix(base: &DMatrix<f64>, multiplicity: &[usize]) -> Result<DMatrix<f64>> {
    if !base.is_square() || base.nrows() != multiplicity.len() {
        return Err(invalid("multiplicity", "one entry per coordinate"));
    }
    let idx: Vec<usize> = multiplicity
        .iter()
        .enumerate()
        .flat_map(|(j, &k)| std::iter::repeat_n(j, k))
        .collect();
    Ok(DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
        base[(idx[a], idx[b])]
    }))
}

/// Gram matrix `G^T G / k` of `k` random Gaussian vectors in `R^n`;
/// rank-deficient when `k < n`.
pub fn random_gram(rng: &mut impl Rng, n: usize, k: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.transpose() * g / k as f64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AbsMomentReport {
    pub estimate: EstimatorResult,
    pub sqrt_perm: f64,
    pub holds: bool,
    pub degenerate: bool,
}

/// Monte Carlo `E prod |X_i|` for `X ~ N(0, cov)` against `sqrt(perm(cov))`.
/// Sampling goes through the eigendecomposition so singular covariances are
/// allowed; they are flagged as degenerate.
pub fn gaussian_abs_moment_bound_check(
    cov: &DMatrix<f64>,
    n_samples: usize,
    seed: SeedSpec,
) -> Result<AbsMomentReport> {
    let min = validate_psd(cov)?;
    let n = cov.nrows();
    if n > 6 {
        return Err(Error::SizeGuard(format!("n = {n} > 6")));
    }
    crate::harness::require_paths(n_samples)?;
    let eig = SymmetricEigen::new(cov.clone());
    let root =
        &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let mut rng = seed.rng(Domain::Gaussian);
    let xs: Vec<f64> = (0..n_samples)
        .map(|_| {
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            (&root * z).iter().map(|x| x.abs()).product()
        })
        .collect();
    let estimate = EstimatorResult::from_samples(&xs);
    let sqrt_perm = permanent(cov)?.max(0.0).sqrt();
    Ok(AbsMomentReport {
        estimate,
        sqrt_perm,
        holds: estimate.mean <= sqrt_perm + 3.0 * estimate.se,
        degenerate: min <= 1e-12 * cov.trace().max(f64::MIN_POSITIVE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn small_cases() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(permanent(&m).unwrap(), 10.0);
        assert_eq!(permanent(&DMatrix::identity(5, 5)).unwrap(), 1.0);
        let ones = DMatrix::from_element(3, 3, 1.0);
        assert!((permanent(&ones).unwrap() - 6.0).abs() < 1e-12);
        let r = psd_permanent_bound_check(&ones).unwrap();
        assert!(r.holds && (r.bound - 6.0).abs() < 1e-12);
        assert!(matches!(
            permanent(&DMatrix::zeros(11, 11)),
            Err(Error::SizeGuard(_))
        ));
    }

    #[test]
    fn ryser_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for n in 1..=6 {
            let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let (a, b) = (permanent(&m).unwrap(), permanent_brute(&m).unwrap());
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{n}: {a} {b}");
        }
    }

    #[test]
    fn non_psd_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            psd_permanent_bound_check(&m),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn diagonal_is_product() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0, 3.0]));
        let r = psd_permanent_bound_check(&m).unwrap();
        assert!((r.permanent - 3.0).abs() < 1e-12 && r.holds);
    }

    #[test]
    fn one_dimensional_abs_moment() {
        let cov = DMatrix::from_element(1, 1, 4.0);
        let r = gaussian_abs_moment_bound_check(&cov, 200_000, SeedSpec::new(1, 0)).unwrap();
        let exact = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
        assert!(r.estimate.within(exact, 4.0), "{:?}", r.estimate);
        assert!(r.holds && (r.sqrt_perm - 2.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_rows() {
        let base = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s = repeated_row_matrix(&base, &[2, 1]).unwrap();
        assert_eq!(s.nrows(), 3);
        assert_eq!(s[(0, 1)], 2.0);
        assert_eq!(s[(1, 2)], 0.5);
        assert!(psd_permanent_bound_check(&s).unwrap().holds);
    }
}
