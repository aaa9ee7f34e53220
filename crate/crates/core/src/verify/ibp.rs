//! Monte Carlo check of the integration-by-parts estimate for `m = 1`,
//! `d = 1`: `|E int_theta^t f^{(alpha)}(B_s) kappa(s) ds|` against its
//! closed-form right side, with the constant reported rather than assumed.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::fbm::{covariance_matrix, kernel_k_offset};
use crate::harness::{map_paths, Domain, SeedSpec};
use crate::linalg::cholesky_jitter;
use crate::quadrature::{endpoint_graded, integrate_split};
use crate::special::factorial;
use crate::stats::EstimatorResult;

/// `psi(z) = exp(-1/(1-z^2))` on `(-1, 1)`.
fn psi(z: f64) -> f64 {
    if z.abs() < 1.0 {
        (-1.0 / (1.0 - z * z)).exp()
    } else {
        0.0
    }
}

fn psi_prime(z: f64) -> f64 {
    if z.abs() < 1.0 {
        let q = 1.0 - z * z;
        -2.0 * z / (q * q) * psi(z)
    } else {
        0.0
    }
}

/// Compactly supported test functions built from the standard bump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Bump {
    /// `psi(z - c)`.
    Shifted { center: f64 },
    /// `psi(z - c) - psi(z + c)`, odd in `z`.
    Odd { center: f64 },
}

impl Bump {
    /// `f^{(alpha)}(z)` for `alpha` in `{0, 1}`.
    pub fn derivative(&self, alpha: usize, z: f64) -> f64 {
        let p = if alpha == 0 { psi } else { psi_prime };
        match *self {
            Bump::Shifted { center } => p(z - center),
            Bump::Odd { center } => p(z - center) - p(z + center),
        }
    }

    fn support_breaks(&self) -> Vec<f64> {
        let c = match *self {
            Bump::Shifted { center } | Bump::Odd { center } => center,
        };
        let mut b = vec![c - 1.0, c, c + 1.0, -c - 1.0, -c, -c + 1.0];
        b.sort_by(f64::total_cmp);
        b
    }

    fn support(&self) -> (f64, f64) {
        let b = self.support_breaks();
        (b[0], b[b.len() - 1])
    }

    /// `||f||_{L^1}` (time-independent `f`, so the sup over time is trivial).
    pub fn l1_norm(&self) -> Result<f64> {
        let (lo, hi) = self.support();
        integrate_split(
            &|z: f64| self.derivative(0, z).abs(),
            lo,
            hi,
            &self.support_breaks(),
            1e-13,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbpSetup {
    pub h: f64,
    pub gamma: f64,
    pub theta: f64,
    /// `0 <= theta' < theta`; `theta' = 0` selects `kappa = K_H(s, theta)`.
    pub theta_prime: f64,
    pub t: f64,
    /// Order of the spatial derivative, 0 or 1.
    pub alpha: usize,
    pub eps: bool,
    pub f: Bump,
}

impl IbpSetup {
    fn b(&self) -> f64 {
        self.h - 0.5 - self.gamma
    }

    pub fn validate(&self) -> Result<()> {
        crate::fbm::check_hurst(self.h)?;
        if self.alpha > 1 {
            return Err(invalid(
                "alpha",
                "only derivative orders 0 and 1 are supported",
            ));
        }
        if !(self.gamma > 0.0 && self.gamma < self.h) {
            return Err(Error::Hypothesis(format!(
                "gamma = {} must lie in (0, H)",
                self.gamma
            )));
        }
        if !(0.0 <= self.theta_prime && self.theta_prime < self.theta && self.theta < self.t) {
            return Err(invalid("theta", "need 0 <= theta' < theta < t"));
        }
        let limit = (0.5 - self.gamma) / (1.0 + 2.0 * self.alpha as f64);
        if self.h >= limit {
            return Err(Error::Hypothesis(format!(
                "need H < (1/2 - gamma)/(d + 2|alpha|) = {limit}, got {}",
                self.h
            )));
        }
        Ok(())
    }

    /// `kappa(theta + r)`.
    fn kappa(&self, r: f64) -> f64 {
        if !self.eps {
            return 1.0;
        }
        let near = kernel_k_offset(self.h, self.theta, r);
        if self.theta_prime == 0.0 {
            return near;
        }
        near - kernel_k_offset(self.h, self.theta_prime, self.theta - self.theta_prime + r)
    }

    fn kappa_exponent(&self) -> f64 {
        if self.eps {
            self.h - 0.5
        } else {
            0.0
        }
    }

    /// `E f^{(alpha)}(B_s)` with `B_s ~ N(0, s^{2H})`.
    fn marginal_mean(&self, s: f64) -> Result<f64> {
        let sd = s.powf(self.h);
        let (lo, hi) = self.f.support();
        let dens =
            |z: f64| (-0.5 * (z / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        integrate_split(
            &|z: f64| self.f.derivative(self.alpha, z) * dens(z),
            lo,
            hi,
            &self.f.support_breaks(),
            1e-14,
        )
    }

    /// Closed-form right side with `C = 1`; the `(t - theta)` exponent
    /// carries `+ b eps`, as the kernel estimate produces it.
    pub fn rhs_unit(&self) -> Result<f64> {
        let b = self.b();
        let e = if self.eps { 1.0 } else { 0.0 };
        let a = self.alpha as f64;
        let theta_factor = if self.eps && self.theta_prime > 0.0 {
            ((self.theta - self.theta_prime) / (self.theta * self.theta_prime)).powf(self.gamma)
        } else {
            1.0
        };
        let g = gamma(-self.h * (2.0 + 4.0 * a) + 2.0 * b * e + 2.0);
        Ok(self.f.l1_norm()?
            * theta_factor
            * self.theta.powf(b * e)
            * factorial(2 * self.alpha).powf(0.25)
            * (self.t - self.theta).powf(-self.h * (1.0 + 2.0 * a) + b * e + 1.0)
            / g.sqrt())
    }
}

/// `int_theta^t kappa(s) E f^{(alpha)}(B_s) ds` from the Gaussian marginals.
pub fn ibp_oracle(setup: &IbpSetup) -> Result<f64> {
    setup.validate()?;
    let failed = std::cell::Cell::new(None);
    let v = endpoint_graded(
        |_, r, _| {
            let m = setup.marginal_mean(setup.theta + r).unwrap_or_else(|e| {
                failed.set(Some(e));
                0.0
            });
            setup.kappa(r) * m
        },
        0.0,
        setup.t - setup.theta,
        setup.kappa_exponent(),
        0.0,
        48,
    );
    match failed.take() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IbpReport {
    pub mc: EstimatorResult,
    pub oracle: f64,
    pub rhs_unit: f64,
    /// `(|LHS| / RHS(1))^{1/(1+|alpha|)}` from the MC estimate.
    pub implied_c: f64,
    /// `|mc - oracle| <= 3 se`.
    pub agrees: bool,
}

/// MC over `n_paths` fBm paths sampled on `steps` cells of `[theta, t]`
/// from the exact covariance; the time integral uses cell-integrated
/// `kappa` weights and the trapezoid average of `f^{(alpha)}(B)`.
pub fn ibp_bound_mc_check(
    setup: &IbpSetup,
    steps: usize,
    n_paths: usize,
    seed: u64,
    workers: usize,
) -> Result<IbpReport> {
    setup.validate()?;
    crate::harness::require_paths(n_paths)?;
    if steps < 2 {
        return Err(invalid("steps", "need at least 2 cells"));
    }
    let span = setup.t - setup.theta;
    let dt = span / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|k| setup.theta + k as f64 * dt).collect();
    let chol = cholesky_jitter(&covariance_matrix(setup.h, &times))?.l();
    let weights: Vec<f64> = (0..steps)
        .map(|k| {
            let (lo, hi) = (k as f64 * dt, (k + 1) as f64 * dt);
            let ea = if k == 0 { setup.kappa_exponent() } else { 0.0 };
            endpoint_graded(|r, _, _| setup.kappa(r), lo, hi, ea, 0.0, 16)
        })
        .collect();
    let samples = map_paths(n_paths, workers, |i| {
        let mut rng = SeedSpec::new(seed, i).rng(Domain::Gaussian);
        let z = DVector::from_fn(steps + 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = &chol * z;
        let vals: Vec<f64> = b
            .iter()
            .map(|&x| setup.f.derivative(setup.alpha, x))
            .collect();
        crate::stats::sum(
            weights
                .iter()
                .enumerate()
                .map(|(k, w)| w * 0.5 * (vals[k] + vals[k + 1])),
        )
    });
    let mc = EstimatorResult::from_samples(&samples);
    let oracle = ibp_oracle(setup)?;
    let rhs_unit = setup.rhs_unit()?;
    Ok(IbpReport {
        mc,
        oracle,
        rhs_unit,
        implied_c: (mc.mean.abs() / rhs_unit).powf(1.0 / (1.0 + setup.alpha as f64)),
        agrees: mc.within(oracle, 3.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(alpha: usize, eps: bool, f: Bump) -> IbpSetup {
        IbpSetup {
            h: 0.05,
            gamma: 0.02,
            theta: 0.3,
            theta_prime: 0.1,
            t: 1.0,
            alpha,
            eps,
            f,
        }
    }

    #[test]
    fn bump_norm() {
        // int psi = 0.4439938161680794
        let n = Bump::Shifted { center: 0.3 }.l1_norm().unwrap();
        assert!((n - 0.443_993_816_168_079_4).abs() < 1e-10, "{n}");
    }

    #[test]
    fn flat_kappa_matches_marginals() {
        let s = setup(0, false, Bump::Shifted { center: 0.5 });
        let r = ibp_bound_mc_check(&s, 64, 4000, 3, 1).unwrap();
        assert!(r.agrees, "{r:?}");
    }

    #[test]
    fn odd_function_vanishes() {
        let s = setup(0, true, Bump::Odd { center: 0.5 });
        let r = ibp_bound_mc_check(&s, 64, 2000, 4, 1).unwrap();
        assert!(r.oracle.abs() < 1e-12 && r.mc.within(0.0, 3.0), "{r:?}");
    }

    #[test]
    fn derivative_with_kernel_difference() {
        let s = setup(1, true, Bump::Shifted { center: 0.5 });
        let r = ibp_bound_mc_check(&s, 64, 4000, 5, 1).unwrap();
        assert!(
            r.agrees && r.implied_c.is_finite() && r.implied_c > 0.0,
            "{r:?}"
        );
    }

    #[test]
    fn hypothesis_enforced() {
        let mut s = setup(1, true, Bump::Shifted { center: 0.5 });
        s.h = 0.2;
        s.gamma = 0.1;
        assert!(matches!(ibp_oracle(&s), Err(Error::Hypothesis(_))));
    }
}
