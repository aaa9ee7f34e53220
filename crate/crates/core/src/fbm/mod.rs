//! Fractional Brownian motion with Hurst index `H < 1/2`: covariance and
//! Volterra kernel analytics, exact and kernel-based path samplers, the
//! adjoint operator `K*` and local non-determinism diagnostics.

mod covariance;
mod kernel;
mod kstar;
mod lnd;
mod simulate;

pub use covariance::{covariance, covariance_matrix, increment_variance};
pub use kernel::{
    c_h, kernel_dt, kernel_k, kernel_k_offset, kernel_k_quadrature, kernel_primitive,
    kernel_product_integral,
};
pub use kstar::{kstar_apply, kstar_apply_at};
pub use lnd::{
    conditional_variance_given, det_chain, local_nondeterminism_ratio, min_nondeterminism_ratio,
    DetChain,
};
pub use simulate::{
    prepare_sampler, simulate_fbm, simulate_fbm_cholesky, simulate_fbm_volterra, Driver, Method,
    PathMatrix, VolterraScheme, MAX_CHOLESKY_STEPS,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::TimeGrid;

/// Hurst index, dimension, horizon and step count of a simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FbmSpec {
    pub hurst: f64,
    pub dim: usize,
    pub horizon: f64,
    pub steps: usize,
}

impl FbmSpec {
    pub fn new(hurst: f64, dim: usize, horizon: f64, steps: usize) -> Result<Self> {
        let s = Self {
            hurst,
            dim,
            horizon,
            steps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        check_hurst(self.hurst)?;
        if self.dim < 1 {
            return Err(invalid("d", "dimension must be at least 1"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid("T", "horizon must be positive"));
        }
        if self.steps < 2 {
            return Err(invalid("n", "need at least 2 steps"));
        }
        Ok(())
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.horizon, self.steps).expect("validated spec")
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn with_steps(&self, steps: usize) -> Self {
        Self { steps, ..*self }
    }
}

pub(crate) fn check_hurst(h: f64) -> Result<()> {
    if h > 0.0 && h < 0.5 {
        Ok(())
    } else {
        Err(invalid("H", format!("H must lie in (0, 1/2), got {h}")))
    }
}
