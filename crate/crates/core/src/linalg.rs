//! Dense linear algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const JITTER: f64 = 1e-12;

/// Lower Cholesky factor together with the jitter that was needed.
#[derive(Clone, Debug)]
pub struct CholFactor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl CholFactor {
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// Cholesky with the one-shot jitter policy: on failure add `1e-12 I` once
/// and retry; a second failure is an error.
pub fn cholesky_jitter(m: &DMatrix<f64>) -> Result<CholFactor> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(CholFactor { chol, jitter: 0.0 });
    }
    let n = m.nrows();
    let jittered = m + DMatrix::<f64>::identity(n, n) * JITTER;
    match Cholesky::new(jittered) {
        Some(chol) => Ok(CholFactor {
            chol,
            jitter: JITTER,
        }),
        None => Err(Error::NotPositiveDefinite {
            pivot: first_bad_pivot(m),
            jitter: JITTER,
        }),
    }
}

fn first_bad_pivot(m: &DMatrix<f64>) -> usize {
    (1..=m.nrows())
        .find(|&k| Cholesky::new(m.view((0, 0), (k, k)).into_owned()).is_none())
        .map_or(m.nrows(), |k| k - 1)
}

/// Conditional variance of coordinate `target` given coordinates `given`
/// (Schur complement).
pub fn conditional_variance(cov: &DMatrix<f64>, target: usize, given: &[usize]) -> Result<f64> {
    let v = cov[(target, target)];
    if given.is_empty() {
        return Ok(v);
    }
    let k = given.len();
    let sub = DMatrix::from_fn(k, k, |i, j| cov[(given[i], given[j])]);
    let c = DVector::from_fn(k, |i, _| cov[(given[i], target)]);
    let f = cholesky_jitter(&sub)?;
    let x = f.chol.solve(&c);
    Ok(v - c.dot(&x))
}

pub fn determinant(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
