//! Path samplers.
//!
//! * Cholesky: exact Gaussian sampling from the grid covariance; the law
//!   oracle.
//! * Volterra: `B_{t_i} = sum_j A_ij dW_j` from Brownian increments `dW_j`.
//!   With [`VolterraScheme::MidpointOnly`] the weights are `K_H(t_i, m_j)` at
//!   cell midpoints. [`VolterraScheme::Completed`] (the default) uses the
//!   cell averages `A_ij = (1/dt) int_{cell j} K_H(t_i, s) ds = E[B_{t_i} | dW]`
//!   and adds an independent Gaussian with the residual covariance
//!   `R - dt A A^T`, so the grid values have exactly the fBm law while the
//!   increments `dW` remain the driving Brownian motion.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::harness::{Domain, SeedSpec};
use crate::linalg::cholesky_jitter;

use super::covariance::covariance;
use super::kernel::{kernel_primitive, kernel_unchecked};
use super::FbmSpec;

/// Largest step count accepted by the Cholesky sampler (an `n x n` dense
/// factor, 128 MiB at the limit).
pub const MAX_CHOLESKY_STEPS: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum VolterraScheme {
    #[default]
    Completed,
    MidpointOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cholesky,
    Volterra(VolterraScheme),
}

impl Default for Method {
    fn default() -> Self {
        Method::Volterra(VolterraScheme::Completed)
    }
}

impl Method {
    pub const NAMES: [&'static str; 3] = ["volterra", "volterra-midpoint", "cholesky"];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Volterra(VolterraScheme::Completed) => "volterra",
            Method::Volterra(VolterraScheme::MidpointOnly) => "volterra-midpoint",
            Method::Cholesky => "cholesky",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "volterra" => Ok(Method::Volterra(VolterraScheme::Completed)),
            "volterra-midpoint" => Ok(Method::Volterra(VolterraScheme::MidpointOnly)),
            "cholesky" => Ok(Method::Cholesky),
            _ => Err(crate::error::invalid(
                "method",
                format!("unknown method `{s}`; known: {}", Method::NAMES.join(", ")),
            )),
        }
    }
}

/// Brownian increments that built a Volterra path.
#[derive(Clone, Debug, PartialEq)]
pub struct Driver {
    pub seed: SeedSpec,
    /// `n x d` row-major increments `W_{t_{j+1}} - W_{t_j}`.
    pub dw: Vec<f64>,
    path_checksum: u64,
}

impl Driver {
    /// Whether this driver built `path`.
    pub fn matches(&self, path: &PathMatrix) -> bool {
        self.dw.len() == path.grid.steps() * path.dim
            && self.path_checksum == checksum(&path.values)
    }
}

/// Grid values of a `d`-dimensional path, `(n + 1) x d` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PathMatrix {
    pub grid: TimeGrid,
    pub dim: usize,
    pub values: Vec<f64>,
    pub hurst: f64,
    pub method: Method,
    pub driver: Option<Driver>,
}

impl PathMatrix {
    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn at(&self, i: usize, c: usize) -> f64 {
        self.values[i * self.dim + c]
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        (0..=self.steps()).map(|i| self.at(i, c)).collect()
    }
}

fn checksum(values: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for v in values {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Lower-triangular matrix stored row by row.
struct Packed {
    data: Vec<f64>,
}

impl Packed {
    fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        Self {
            data: rows.into_iter().flatten().collect(),
        }
    }

    fn from_lower(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        Self::from_rows(
            (0..n)
                .map(|r| (0..=r).map(|k| m[(r, k)]).collect())
                .collect(),
        )
    }

    #[inline]
    fn row(&self, r: usize) -> &[f64] {
        let s = r * (r + 1) / 2;
        &self.data[s..s + r + 1]
    }

    /// `out[(r+1) d + c] += sum_k L[r][k] x[k d + c]`.
    fn apply_add(&self, n: usize, d: usize, x: &[f64], out: &mut [f64]) {
        let mut acc = vec![0.0; d];
        for r in 0..n {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (k, &w) in self.row(r).iter().enumerate() {
                let xs = &x[k * d..(k + 1) * d];
                for c in 0..d {
                    acc[c] += w * xs[c];
                }
            }
            for c in 0..d {
                out[(r + 1) * d + c] += acc[c];
            }
        }
    }
}

struct CholeskyPlan {
    l: Packed,
}

struct VolterraPlan {
    weights: Packed,
    residual: Option<Packed>,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct PlanKey {
    hurst: u64,
    horizon: u64,
    steps: usize,
    method: Method,
}

impl PlanKey {
    fn new(spec: &FbmSpec, method: Method) -> Self {
        Self {
            hurst: spec.hurst.to_bits(),
            horizon: spec.horizon.to_bits(),
            steps: spec.steps,
            method,
        }
    }
}

enum Plan {
    Cholesky(CholeskyPlan),
    Volterra(VolterraPlan),
}

fn plan(spec: &FbmSpec, method: Method) -> Result<Arc<Plan>> {
    static CACHE: OnceLock<Mutex<HashMap<PlanKey, Arc<Plan>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = PlanKey::new(spec, method);
    // The lock is held for the whole build. Inside a rayon worker the build
    // runs sequentially: a worker blocked in a parallel join could otherwise
    // steal another path task that waits on this same lock.
    let mut guard = cache.lock().unwrap();
    if let Some(p) = guard.get(&key) {
        return Ok(p.clone());
    }
    let p = Arc::new(match method {
        Method::Cholesky => Plan::Cholesky(cholesky_plan(spec)?),
        Method::Volterra(scheme) => Plan::Volterra(volterra_plan(spec, scheme)?),
    });
    guard.insert(key, p.clone());
    Ok(p)
}

fn grid_covariance(spec: &FbmSpec) -> DMatrix<f64> {
    let g = spec.grid();
    let n = spec.steps;
    DMatrix::from_fn(n, n, |i, j| {
        covariance(spec.hurst, g.node(i + 1), g.node(j + 1))
    })
}

fn cholesky_plan(spec: &FbmSpec) -> Result<CholeskyPlan> {
    if spec.steps > MAX_CHOLESKY_STEPS {
        return Err(Error::SizeGuard(format!(
            "Cholesky sampler supports n <= {MAX_CHOLESKY_STEPS}, got {}",
            spec.steps
        )));
    }
    let f = cholesky_jitter(&grid_covariance(spec))?;
    Ok(CholeskyPlan {
        l: Packed::from_lower(&f.l()),
    })
}

fn volterra_plan(spec: &FbmSpec, scheme: VolterraScheme) -> Result<VolterraPlan> {
    let h = spec.hurst;
    let g = spec.grid();
    let n = spec.steps;
    let dt = spec.dt();
    let row = |r: usize| -> Vec<f64> {
        let ti = g.node(r + 1);
        match scheme {
            VolterraScheme::MidpointOnly => (0..=r)
                .map(|j| kernel_unchecked(h, ti, 0.5 * (g.node(j) + g.node(j + 1))))
                .collect(),
            VolterraScheme::Completed => {
                let prim: Vec<f64> = (0..=r + 1)
                    .map(|j| kernel_primitive(h, ti, g.node(j)))
                    .collect();
                prim.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
            }
        }
    };
    let rows: Vec<Vec<f64>> = if rayon::current_thread_index().is_none() {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    };
    let residual = match scheme {
        VolterraScheme::MidpointOnly => None,
        VolterraScheme::Completed => {
            let a = DMatrix::from_fn(n, n, |i, j| if j <= i { rows[i][j] } else { 0.0 });
            let c = grid_covariance(spec) - (&a * a.transpose()) * dt;
            let c = (&c + c.transpose()) * 0.5;
            Some(Packed::from_lower(&cholesky_jitter(&c)?.l()))
        }
    };
    Ok(VolterraPlan {
        weights: Packed::from_rows(rows),
        residual,
    })
}

fn normals(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Builds and caches the sampler for `spec` ahead of a parallel study.
pub fn prepare_sampler(spec: &FbmSpec, method: Method) -> Result<()> {
    plan(spec, method).map(|_| ())
}

/// Exact-in-law sample on the grid from the Cholesky factor of `R_H`.
pub fn simulate_fbm_cholesky(spec: &FbmSpec, seed: SeedSpec) -> Result<PathMatrix> {
    simulate_fbm(spec, seed, Method::Cholesky, Domain::Fbm)
}

/// Completed Volterra sample; the Brownian driver is stored on the path.
pub fn simulate_fbm_volterra(spec: &FbmSpec, seed: SeedSpec) -> Result<PathMatrix> {
    simulate_fbm(
        spec,
        seed,
        Method::Volterra(VolterraScheme::Completed),
        Domain::Fbm,
    )
}

pub fn simulate_fbm(
    spec: &FbmSpec,
    seed: SeedSpec,
    method: Method,
    domain: Domain,
) -> Result<PathMatrix> {
    spec.validate()?;
    let p = plan(spec, method)?;
    let n = spec.steps;
    let d = spec.dim;
    let mut rng = seed.rng(domain);
    let mut values = vec![0.0; (n + 1) * d];
    let driver = match &*p {
        Plan::Cholesky(c) => {
            let z = normals(&mut rng, n * d);
            c.l.apply_add(n, d, &z, &mut values);
            None
        }
        Plan::Volterra(v) => {
            let sd = spec.dt().sqrt();
            let dw: Vec<f64> = normals(&mut rng, n * d)
                .into_iter()
                .map(|z| z * sd)
                .collect();
            v.weights.apply_add(n, d, &dw, &mut values);
            if let Some(res) = &v.residual {
                let zeta = normals(&mut rng, n * d);
                res.apply_add(n, d, &zeta, &mut values);
            }
            Some(dw)
        }
    };
    let path_checksum = checksum(&values);
    Ok(PathMatrix {
        grid: spec.grid(),
        dim: d,
        values,
        hurst: spec.hurst,
        method,
        driver: driver.map(|dw| Driver {
            seed,
            dw,
            path_checksum,
        }),
    })
}
