//! Gaussian integral identities: the one-coordinate marginalization
//! `int g(v_1) exp(-Var[sum v_j Z_j]/2) dv` and the conditional-variance
//! factorization of `det Cov`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{conditional_variance, determinant};
use crate::quadrature::integrate;

/// Bounded test functions of one variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    One,
    /// `exp(-(x - center)^2 / (2 width^2))`.
    Bump {
        center: f64,
        width: f64,
    },
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::One => 1.0,
            TestFunction::Bump { center, width } => {
                (-(x - center).powi(2) / (2.0 * width * width)).exp()
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarginalReport {
    pub lhs: f64,
    pub rhs: f64,
    pub relative_residual: f64,
    pub sigma1: f64,
}

/// Truncation in units of the marginal standard deviation of `v`.
const HALF_WIDTH_SD: f64 = 12.0;

fn nested(
    cov: &DMatrix<f64>,
    g: TestFunction,
    box_half: &[f64],
    fixed: &[f64],
    tol: f64,
) -> Result<f64> {
    let n = cov.nrows();
    let k = fixed.len();
    if k == n {
        let v = nalgebra::DVector::from_column_slice(fixed);
        return Ok(g.eval(fixed[0]) * (-0.5 * v.dot(&(cov * &v))).exp());
    }
    let cell = std::cell::RefCell::new(fixed.to_vec());
    let err = std::cell::Cell::new(None);
    let f = |x: f64| {
        let mut v = cell.borrow_mut();
        v.push(x);
        let inner = v.clone();
        v.pop();
        drop(v);
        match nested(cov, g, box_half, &inner, tol) {
            Ok(y) => y,
            Err(e) => {
                err.set(Some(e));
                0.0
            }
        }
    };
    let r = integrate(&f, -box_half[k], box_half[k], tol)?;
    match err.take() {
        Some(e) => Err(e),
        None => Ok(r),
    }
}

/// Numeric left side by nested adaptive quadrature (tolerance `tol` at
/// every level) against the closed right side with
/// `sigma_1^2 = Var[Z_1 | Z_2, ..., Z_n]`.
pub fn gaussian_marginal_identity_check(
    cov: &DMatrix<f64>,
    g: TestFunction,
    tol: f64,
) -> Result<MarginalReport> {
    let n = cov.nrows();
    if !(2..=3).contains(&n) || !cov.is_square() {
        return Err(invalid(
            "cov",
            format!(
                "need a 2x2 or 3x3 covariance, got {}x{}",
                cov.nrows(),
                cov.ncols()
            ),
        ));
    }
    let det = determinant(cov);
    if det <= 0.0 {
        return Err(invalid("cov", "variables must be linearly independent"));
    }
    let prec = cov
        .clone()
        .try_inverse()
        .ok_or_else(|| invalid("cov", "singular"))?;
    let box_half: Vec<f64> = (0..n)
        .map(|j| HALF_WIDTH_SD * prec[(j, j)].sqrt())
        .collect();
    let lhs = nested(cov, g, &box_half, &[], tol)?;
    let given: Vec<usize> = (1..n).collect();
    let sigma1 = conditional_variance(cov, 0, &given)?.sqrt();
    let one_d = integrate(
        &|v: f64| g.eval(v / sigma1) * (-0.5 * v * v).exp(),
        -40.0,
        40.0,
        1e-14,
    )?;
    let rhs = (2.0 * std::f64::consts::PI).powf(0.5 * (n as f64 - 1.0)) / det.sqrt() * one_d;
    if !(lhs.is_finite() && rhs.is_finite()) {
        return Err(Error::QuadratureFailed("marginal identity".into()));
    }
    Ok(MarginalReport {
        lhs,
        rhs,
        relative_residual: ((lhs - rhs) / rhs).abs(),
        sigma1,
    })
}

/// `|det C - prod_j Var[X_j | X_1..X_{j-1}]| / det C`.
pub fn determinant_chain_residual(cov: &DMatrix<f64>) -> Result<f64> {
    let n = cov.nrows();
    let det = determinant(cov);
    let mut prod = 1.0;
    for j in 0..n {
        let given: Vec<usize> = (0..j).collect();
        prod *= if j == 0 {
            cov[(0, 0)]
        } else {
            conditional_variance(cov, j, &given)?
        };
    }
    Ok(((det - prod) / det).abs())
}
