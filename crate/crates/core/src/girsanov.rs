//! Change of measure removing a mollified local-time drift: the inverse
//! kernel operator applied to running integrals, Doleans-Dade exponentials,
//! exponential moments and an importance-sampling covariance test.
//!
//! With the kernel normalized as in [`crate::fbm::kernel_k`], the operator
//! `(K h)(t) = int_0^t K_H(t,s) h(s) ds` factors as
//! `c_H Gamma(H+1/2) I^{2H} s^{1/2-H} I^{1/2-H} s^{H-1/2}`, so for an
//! absolutely continuous `phi` with `phi(0) = 0`
//!
//! `K^{-1} phi (s) = s^{H-1/2} I^{1/2-H}[r^{1/2-H} phi'(r)](s) / (c_H Gamma(H+1/2))`.
//!
//! The bare operator (without the constant) is available through
//! [`kh_inverse_bare`].

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fbm::{
    c_h, covariance, prepare_sampler, simulate_fbm, Driver, FbmSpec, Method, PathMatrix,
    VolterraScheme,
};
use crate::frac_calculus::integral_left_values;
use crate::grid::{EndpointSingular, GridFunction, TimeGrid};
use crate::harness::{map_paths, require_paths, Domain, SeedSpec};
use crate::local_time::{exponential_moment, mollifier_eval, MollifierSpec};
use crate::special::{gamma, incomplete_beta};
use crate::stats::{sum, EstimatorResult};

/// `c_H Gamma(H + 1/2)`: the kernel operator is this constant times the
/// bare fractional-integral composition.
pub fn kernel_operator_constant(h: f64) -> f64 {
    c_h(h) * gamma(h + 0.5)
}

/// Regime of the uniform exponential-moment bound, `H < 1/(2(1+d))`.
pub fn expmom_threshold(d: usize) -> f64 {
    1.0 / (2.0 * (1.0 + d as f64))
}

/// Per-node values of `phi_eps(B_s - x)`, the derivative of the running
/// integral shifted into the path (the same in every component).
#[derive(Clone, Debug)]
pub struct DriftFunctional {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub spec: MollifierSpec,
}

pub fn drift_functional(path: &PathMatrix, spec: &MollifierSpec) -> Result<DriftFunctional> {
    if spec.dim() != path.dim {
        return Err(invalid("center", "mollifier and path dimensions differ"));
    }
    let values = (0..=path.steps())
        .map(|i| mollifier_eval(spec, path.row(i)))
        .collect();
    Ok(DriftFunctional {
        grid: path.grid,
        values,
        spec: spec.clone(),
    })
}

/// Exact product-integration weights for `u -> K^{-1}(int_0^. u)` with `u`
/// interpolated linearly between nodes: `theta_i = sum_k w[i][k] u_k`.
struct InverseWeights {
    rows: Vec<Vec<f64>>,
}

impl InverseWeights {
    fn build(h: f64, grid: &TimeGrid) -> Self {
        let n = grid.steps();
        let dt = grid.dt();
        let p = 0.5 - h;
        let q = -0.5 - h;
        // int_{r1}^{r2} r^a (t-r)^q dr = t^{a+q+1} [B(x; a+1, q+1)]_{r1/t}^{r2/t}
        let seg = |t: f64, r1: f64, r2: f64, a: f64| {
            let (x1, x2) = (r1 / t, (r2 / t).min(1.0));
            let (ba, bb) = (a + 1.0, q + 1.0);
            let diff = if x1 > 0.5 {
                incomplete_beta(1.0 - x1, bb, ba) - incomplete_beta(1.0 - x2, bb, ba)
            } else {
                incomplete_beta(x2, ba, bb) - incomplete_beta(x1, ba, bb)
            };
            t.powf(a + q + 1.0) * diff
        };
        let scale = 1.0 / (gamma(0.5 - h) * kernel_operator_constant(h));
        let mut rows = vec![Vec::new(); n + 1];
        rows[1..].iter_mut().enumerate().for_each(|(im1, row)| {
            let i = im1 + 1;
            let t = grid.node(i);
            let mut w = vec![0.0; i + 1];
            for j in 0..i {
                let (tj, tj1) = (grid.node(j), if j + 1 == i { t } else { grid.node(j + 1) });
                let a0 = seg(t, tj, tj1, p);
                let a1 = seg(t, tj, tj1, p + 1.0);
                // u(r) = u_j + (u_{j+1} - u_j)(r - t_j)/dt
                let lin = (a1 - tj * a0) / dt;
                w[j] += a0 - lin;
                w[j + 1] += lin;
            }
            let pre = scale * t.powf(h - 0.5);
            w.iter_mut().for_each(|x| *x *= pre);
            *row = w;
        });
        Self { rows }
    }

    fn cached(h: f64, grid: &TimeGrid) -> Arc<Self> {
        type Key = (u64, u64, usize);
        static CACHE: OnceLock<Mutex<HashMap<Key, Arc<InverseWeights>>>> = OnceLock::new();
        let key = (h.to_bits(), grid.horizon().to_bits(), grid.steps());
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(w) = cache.lock().unwrap().get(&key) {
            return w.clone();
        }
        let w = Arc::new(Self::build(h, grid));
        cache.lock().unwrap().insert(key, w.clone());
        w
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![f64::NAN; u.len()];
        for (i, row) in self.rows.iter().enumerate().skip(1) {
            out[i] = sum(row.iter().zip(u).map(|(w, v)| w * v));
        }
        out
    }
}

/// `K^{-1}(int_0^. u)` on the grid from the derivative values `u`.
/// The value at `s = 0` is reported as undefined; its limit is 0 for
/// bounded `u`.
pub fn kh_inverse_from_derivative(h: f64, grid: &TimeGrid, u: &[f64]) -> Result<EndpointSingular> {
    crate::fbm::check_hurst(h)?;
    if u.len() != grid.steps() + 1 {
        return Err(Error::GridMismatch(format!(
            "{} values for {} nodes",
            u.len(),
            grid.steps() + 1
        )));
    }
    let values = InverseWeights::cached(h, grid).apply(u);
    Ok(EndpointSingular {
        nodes: grid.nodes(),
        values,
        singular_node: 0,
    })
}

/// The same without the `1 / (c_H Gamma(H+1/2))` normalization:
/// `s^{H-1/2} I^{1/2-H}[r^{1/2-H} u(r)](s)`.
pub fn kh_inverse_bare(h: f64, grid: &TimeGrid, u: &[f64]) -> Result<EndpointSingular> {
    let mut out = kh_inverse_from_derivative(h, grid, u)?;
    let c = kernel_operator_constant(h);
    out.values.iter_mut().for_each(|v| *v *= c);
    Ok(out)
}

/// `K^{-1}` of the running integral `int_0^t phi_eps(B_r - x) dr`.
pub fn kh_inverse_of_running_integral(
    h: f64,
    path: &PathMatrix,
    spec: &MollifierSpec,
) -> Result<EndpointSingular> {
    let u = drift_functional(path, spec)?;
    kh_inverse_from_derivative(h, &path.grid, &u.values)
}

/// Forward map `c_H Gamma(H+1/2) I^{2H} s^{1/2-H} I^{1/2-H} s^{H-1/2} theta`
/// by product integration. The grid must start at 0; the value of
/// `s^{H-1/2} theta` at 0 is taken from the first interior node.
pub fn kh_forward(h: f64, theta: &GridFunction) -> Result<GridFunction> {
    crate::fbm::check_hurst(h)?;
    let x = theta.nodes();
    if x[0] != 0.0 {
        return Err(invalid("theta", "grid must start at 0"));
    }
    let mut inner: Vec<f64> = x
        .iter()
        .zip(theta.values())
        .map(|(s, v)| s.powf(h - 0.5) * v)
        .collect();
    inner[0] = inner[1];
    let mid = integral_left_values(x, &inner, 0.5 - h);
    let weighted: Vec<f64> = x
        .iter()
        .zip(&mid)
        .map(|(s, v)| s.powf(0.5 - h) * v)
        .collect();
    let c = kernel_operator_constant(h);
    let out = integral_left_values(x, &weighted, 2.0 * h)
        .into_iter()
        .map(|v| c * v)
        .collect();
    theta.with_values(out)
}

/// One realization of the density and the two integrals in its exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySample {
    pub xi: f64,
    pub log_xi: f64,
    /// `sum_j theta_j . dW_j` (left point).
    pub ito_integral: f64,
    /// `sum_j |theta_j|^2 dt` (left point).
    pub quadratic_variation: f64,
}

/// `xi_T = exp(-int theta . dW - 1/2 int |theta|^2 ds)` with
/// `theta = K^{-1}(int_0^. u)` and `u = amplitude * phi_eps(B - x) 1_d`.
///
/// Under the reweighted measure `B + amplitude * int phi_eps(B - x) ds 1_d`
/// is an fBm. Both sums are left-point, so each factor
/// `exp(-theta_j dW_j - theta_j^2 dt / 2)` has conditional mean exactly 1
/// and the discrete density keeps mean one on every grid.
pub fn doleans_exponential(
    h: f64,
    path: &PathMatrix,
    spec: &MollifierSpec,
    amplitude: f64,
    driver: &Driver,
) -> Result<DensitySample> {
    if !driver.matches(path) {
        return Err(Error::DriverMismatch(format!(
            "driver from seed {:?} did not generate this path",
            driver.seed
        )));
    }
    let d = path.dim;
    let n = path.steps();
    let dt = path.grid.dt();
    if amplitude == 0.0 {
        return Ok(DensitySample {
            xi: 1.0,
            log_xi: 0.0,
            ito_integral: 0.0,
            quadratic_variation: 0.0,
        });
    }
    let theta = kh_inverse_of_running_integral(h, path, spec)?;
    // theta(0) = 0 by continuity
    let th = |j: usize| {
        if j == 0 {
            0.0
        } else {
            amplitude * theta.values[j]
        }
    };
    let ito = sum((0..n).map(|j| th(j) * driver.dw[j * d..(j + 1) * d].iter().sum::<f64>()));
    let qv = sum((0..n).map(|j| d as f64 * th(j) * th(j) * dt));
    let log_xi = -ito - 0.5 * qv;
    Ok(DensitySample {
        xi: log_xi.exp(),
        log_xi,
        ito_integral: ito,
        quadratic_variation: qv,
    })
}

fn warm(fbm: &FbmSpec, method: Method) -> Result<()> {
    crate::fbm::check_hurst(fbm.hurst)?;
    InverseWeights::cached(fbm.hurst, &fbm.grid());
    prepare_sampler(fbm, method)
}

fn volterra_path(fbm: &FbmSpec, seed: SeedSpec) -> Result<(PathMatrix, Driver)> {
    let p = simulate_fbm(
        fbm,
        seed,
        Method::Volterra(VolterraScheme::Completed),
        Domain::Fbm,
    )?;
    let drv = p
        .driver
        .clone()
        .ok_or_else(|| Error::DriverMismatch("path has no driver".into()))?;
    Ok((p, drv))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeanOneReport {
    pub mean: EstimatorResult,
    /// `E[(log xi)^2]`.
    pub log_second_moment: EstimatorResult,
    pub min_xi: f64,
    pub ess: f64,
}

/// One density sample per Volterra path `0..n_paths`.
pub fn density_samples(
    fbm: &FbmSpec,
    spec: &MollifierSpec,
    amplitude: f64,
    n_paths: usize,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<DensitySample>> {
    require_paths(n_paths)?;
    warm(fbm, Method::default())?;
    map_paths(n_paths, workers, |i| {
        let (p, drv) = volterra_path(fbm, SeedSpec::new(master_seed, i))?;
        doleans_exponential(fbm.hurst, &p, spec, amplitude, &drv)
    })
    .into_iter()
    .collect()
}

pub fn mean_one_study(
    fbm: &FbmSpec,
    spec: &MollifierSpec,
    amplitude: f64,
    n_paths: usize,
    master_seed: u64,
    workers: usize,
) -> Result<MeanOneReport> {
    let samples = density_samples(fbm, spec, amplitude, n_paths, master_seed, workers)?;
    Ok(mean_one_report(&samples))
}

pub fn mean_one_report(samples: &[DensitySample]) -> MeanOneReport {
    let xi: Vec<f64> = samples.iter().map(|s| s.xi).collect();
    let l2: Vec<f64> = samples.iter().map(|s| s.log_xi * s.log_xi).collect();
    MeanOneReport {
        mean: EstimatorResult::from_samples(&xi),
        log_second_moment: EstimatorResult::from_samples(&l2),
        min_xi: xi.iter().copied().fold(f64::INFINITY, f64::min),
        ess: crate::stats::ess(&xi),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpMomentRow {
    pub epsilon: f64,
    pub estimate: EstimatorResult,
    /// `log` of the estimate, finite even when the estimate overflows.
    pub log_estimate: f64,
    pub heavy_tail: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpMomentTable {
    pub mu: f64,
    pub rows: Vec<ExpMomentRow>,
    pub sup: f64,
    pub regime_flag: Option<String>,
    pub warnings: Vec<String>,
}

impl ExpMomentTable {
    /// The supremum over the finer half of the ladder is within `factor` of
    /// the supremum over the coarser half.
    pub fn non_exploding(&self, factor: f64) -> bool {
        let k = self.rows.len() / 2;
        let sup = |r: &[ExpMomentRow]| r.iter().map(|x| x.estimate.mean).fold(0.0, f64::max);
        let (coarse, fine) = self.rows.split_at(k.max(1));
        self.rows.iter().all(|r| r.estimate.mean.is_finite()) && sup(fine) <= factor * sup(coarse)
    }
}

/// A sample mean is flagged unstable when one sample carries more than this
/// share of the total or the relative standard error exceeds one half.
const HEAVY_TAIL_SHARE: f64 = 0.05;

/// `E exp(mu int_0^T theta_eps(t)^2 dt)` per bandwidth, all rungs sharing
/// the same paths.
#[allow(clippy::too_many_arguments)]
pub fn exponential_moment_estimate(
    fbm: &FbmSpec,
    center: &[f64],
    ladder: &[f64],
    mu: f64,
    n_paths: usize,
    master_seed: u64,
    workers: usize,
) -> Result<ExpMomentTable> {
    require_paths(n_paths)?;
    fbm.validate()?;
    if center.len() != fbm.dim {
        return Err(invalid("center", "dimension differs from the fBm"));
    }
    let grid = fbm.grid();
    let dt = grid.dt();
    warm(fbm, Method::default())?;
    let per_path: Vec<Vec<f64>> = map_paths(n_paths, workers, |i| {
        let p = simulate_fbm(
            fbm,
            SeedSpec::new(master_seed, i),
            Method::default(),
            Domain::Fbm,
        )?;
        ladder
            .iter()
            .map(|&e| {
                let spec = MollifierSpec::new(e, center.to_vec())?;
                let th = kh_inverse_of_running_integral(fbm.hurst, &p, &spec)?;
                // trapezoid in t, theta(0) = 0
                let n = grid.steps();
                let inner = sum((1..n).map(|j| th.values[j] * th.values[j]));
                Ok((inner + 0.5 * th.values[n] * th.values[n]) * dt)
            })
            .collect::<Result<Vec<f64>>>()
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let rows: Vec<ExpMomentRow> = ladder
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let q: Vec<f64> = per_path.iter().map(|v| v[k]).collect();
            let estimate = exponential_moment(&q, mu);
            let shift = q.iter().map(|x| mu * x).fold(f64::NEG_INFINITY, f64::max);
            let total = sum(q.iter().map(|x| (mu * x - shift).exp()));
            let share = 1.0 / total;
            let heavy_tail =
                mu > 0.0 && (share > HEAVY_TAIL_SHARE || estimate.se > 0.5 * estimate.mean);
            if heavy_tail {
                warnings.push(format!(
                    "eps = {e}: heavy tail, largest sample carries {:.1}% of the mean",
                    100.0 * share
                ));
            }
            let log_estimate = shift + (total / q.len() as f64).ln();
            ExpMomentRow {
                epsilon: e,
                estimate,
                log_estimate,
                heavy_tail,
            }
        })
        .collect();
    let sup = rows
        .iter()
        .map(|r| r.estimate.mean)
        .fold(f64::NEG_INFINITY, f64::max);
    let regime_flag = (fbm.hurst >= expmom_threshold(fbm.dim)).then(|| {
        format!(
            "H >= 1/(2(1+d)) = {}: finiteness not asserted",
            expmom_threshold(fbm.dim)
        )
    });
    Ok(ExpMomentTable {
        mu,
        rows,
        sup,
        regime_flag,
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CovarianceRow {
    pub t: f64,
    pub s: f64,
    pub estimate: EstimatorResult,
    pub target: f64,
}

impl CovarianceRow {
    pub fn z(&self) -> f64 {
        (self.estimate.mean - self.target) / self.estimate.se
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CovarianceTest {
    pub verdict: Verdict,
    pub ess: f64,
    pub n: usize,
    pub covariances: Vec<CovarianceRow>,
    pub means: Vec<CovarianceRow>,
    pub note: String,
}

/// Minimum effective sample share for a conclusive covariance test.
pub const MIN_ESS_SHARE: f64 = 0.05;

/// Reweights `Y = B + amplitude * int_0^. phi_eps(B_r - x) dr` (first
/// component) by `xi_T` and compares weighted means with 0 and weighted
/// second moments with `R_H` at the checkpoint pairs.
#[allow(clippy::too_many_arguments)]
pub fn measure_change_covariance_test(
    fbm: &FbmSpec,
    spec: &MollifierSpec,
    amplitude: f64,
    checkpoints: &[(f64, f64)],
    n_paths: usize,
    master_seed: u64,
    workers: usize,
) -> Result<CovarianceTest> {
    require_paths(n_paths)?;
    let grid = fbm.grid();
    let idx = |t: f64| {
        grid.index_of(t)
            .ok_or_else(|| invalid("checkpoints", format!("{t} is not a grid node")))
    };
    let pairs: Vec<(usize, usize)> = checkpoints
        .iter()
        .map(|&(t, s)| Ok((idx(t)?, idx(s)?)))
        .collect::<Result<_>>()?;
    let dt = grid.dt();
    warm(fbm, Method::default())?;
    let per_path: Vec<(f64, Vec<f64>)> = map_paths(n_paths, workers, |i| {
        let (p, drv) = volterra_path(fbm, SeedSpec::new(master_seed, i))?;
        let xi = doleans_exponential(fbm.hurst, &p, spec, amplitude, &drv)?.xi;
        let u = drift_functional(&p, spec)?.values;
        let mut y = vec![0.0; p.steps() + 1];
        let mut run = 0.0;
        for k in 0..=p.steps() {
            if k > 0 {
                run += 0.5 * (u[k - 1] + u[k]) * dt;
            }
            y[k] = p.at(k, 0) + amplitude * run;
        }
        Ok((xi, y))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let w: Vec<f64> = per_path.iter().map(|r| r.0).collect();
    let ess = crate::stats::ess(&w);
    let h = fbm.hurst;
    let covariances: Vec<CovarianceRow> = pairs
        .iter()
        .zip(checkpoints)
        .map(|(&(a, b), &(t, s))| {
            let v: Vec<f64> = per_path.iter().map(|r| r.1[a] * r.1[b]).collect();
            CovarianceRow {
                t,
                s,
                estimate: EstimatorResult::weighted(&v, &w),
                target: covariance(h, t, s),
            }
        })
        .collect();
    let mut mean_times: Vec<f64> = checkpoints.iter().flat_map(|&(t, s)| [t, s]).collect();
    mean_times.sort_by(f64::total_cmp);
    mean_times.dedup();
    let means: Vec<CovarianceRow> = mean_times
        .iter()
        .map(|&t| {
            let k = grid.index_of(t).expect("checked");
            let v: Vec<f64> = per_path.iter().map(|r| r.1[k]).collect();
            CovarianceRow {
                t,
                s: t,
                estimate: EstimatorResult::weighted(&v, &w),
                target: 0.0,
            }
        })
        .collect();
    let (verdict, note) = if ess < MIN_ESS_SHARE * n_paths as f64 {
        (
            Verdict::Inconclusive,
            format!(
                "effective sample size {ess:.0} below {:.0}% of {n_paths}",
                100.0 * MIN_ESS_SHARE
            ),
        )
    } else if covariances
        .iter()
        .chain(&means)
        .all(|r| r.estimate.within(r.target, 3.0))
    {
        (Verdict::Pass, String::new())
    } else {
        let worst = covariances
            .iter()
            .chain(&means)
            .map(|r| r.z().abs())
            .fold(0.0, f64::max);
        (
            Verdict::Fail,
            format!("largest deviation {worst:.2} weighted se"),
        )
    };
    Ok(CovarianceTest {
        verdict,
        ess,
        n: n_paths,
        covariances,
        means,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{kernel_k, simulate_fbm_cholesky, simulate_fbm_volterra};
    use crate::quadrature::integrate_split;

    #[test]
    fn constant_derivative_power_rule() {
        let h = 0.2;
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let c = 0.7;
        let out = kh_inverse_bare(h, &grid, &vec![c; 65]).unwrap();
        assert!(out.values[0].is_nan());
        let k = gamma(1.5 - h) / gamma(2.0 - 2.0 * h);
        for (s, v) in out.defined() {
            let exact = c * k * s.powf(0.5 - h);
            assert!(
                (v - exact).abs() < 1e-12 * exact.abs().max(1.0),
                "{s}: {v} vs {exact}"
            );
        }
    }

    #[test]
    fn normalized_inverse_inverts_the_kernel() {
        // int_0^t K(t,s) theta(s) ds must return c t for u = c
        let h = 0.15;
        let c = 1.3;
        let k = c * gamma(1.5 - h) / gamma(2.0 - 2.0 * h) / kernel_operator_constant(h);
        for t in [0.3, 1.0] {
            let f = |s: f64| {
                if s <= 0.0 || s >= t {
                    0.0
                } else {
                    kernel_k(h, t, s).unwrap() * k * s.powf(0.5 - h)
                }
            };
            let v = integrate_split(&f, 0.0, t, &[0.5 * t], 1e-12).unwrap();
            assert!((v - c * t).abs() < 1e-8, "{t}: {v}");
        }
    }

    #[test]
    fn zero_drift_gives_zero_and_unit_density() {
        let fbm = FbmSpec::new(0.1, 1, 1.0, 32).unwrap();
        let p = simulate_fbm_volterra(&fbm, SeedSpec::new(3, 0)).unwrap();
        let grid = p.grid;
        let z = kh_inverse_from_derivative(0.1, &grid, &[0.0; 33]).unwrap();
        assert!(z.defined().all(|(_, v)| v == 0.0));
        let spec = MollifierSpec::origin(0.5, 1).unwrap();
        let s = doleans_exponential(0.1, &p, &spec, 0.0, p.driver.as_ref().unwrap()).unwrap();
        assert_eq!(s.xi, 1.0);
    }

    #[test]
    fn foreign_driver_rejected() {
        let fbm = FbmSpec::new(0.1, 1, 1.0, 32).unwrap();
        let a = simulate_fbm_volterra(&fbm, SeedSpec::new(3, 0)).unwrap();
        let b = simulate_fbm_volterra(&fbm, SeedSpec::new(3, 1)).unwrap();
        let spec = MollifierSpec::origin(0.5, 1).unwrap();
        let r = doleans_exponential(0.1, &a, &spec, 1.0, b.driver.as_ref().unwrap());
        assert!(matches!(r, Err(Error::DriverMismatch(_))));
        assert!(simulate_fbm_cholesky(&fbm, SeedSpec::new(3, 0))
            .unwrap()
            .driver
            .is_none());
    }

    #[test]
    fn inverse_is_linear() {
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let u: Vec<f64> = (0..=40).map(|i| (i as f64 * 0.3).sin().abs()).collect();
        let a = kh_inverse_from_derivative(0.2, &grid, &u).unwrap();
        let u3: Vec<f64> = u.iter().map(|x| 3.0 * x).collect();
        let b = kh_inverse_from_derivative(0.2, &grid, &u3).unwrap();
        for ((_, x), (_, y)) in a.defined().zip(b.defined()) {
            assert!((3.0 * x - y).abs() <= 1e-14 * y.abs().max(1.0));
        }
    }

    #[test]
    fn forward_round_trip_constant() {
        let h = 0.2;
        let err = |n: usize| {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let th = kh_inverse_from_derivative(h, &grid, &vec![1.0; n + 1]).unwrap();
            let f = kh_forward(h, &th.complete_with(0.0).unwrap()).unwrap();
            let e: Vec<f64> = f
                .nodes()
                .iter()
                .zip(f.values())
                .map(|(s, v)| (v - s).abs())
                .collect();
            (e.iter().cloned().fold(0.0, f64::max), e[n])
        };
        let (a, ta) = err(256);
        let (b, tb) = err(512);
        assert!(a < 1e-3 && b < a && tb < ta);
    }

    #[test]
    fn mean_one_small() {
        let fbm = FbmSpec::new(0.1, 1, 1.0, 64).unwrap();
        let spec = MollifierSpec::origin(0.5, 1).unwrap();
        let r = mean_one_study(&fbm, &spec, 1.0, 2000, 11, 4).unwrap();
        assert!(r.mean.within(1.0, 3.0), "{:?}", r.mean);
        assert!(r.min_xi > 0.0);
    }

    #[test]
    fn exponential_moment_trivial_cases() {
        let fbm = FbmSpec::new(0.1, 1, 1.0, 32).unwrap();
        let t = exponential_moment_estimate(&fbm, &[0.0], &[0.5, 0.25], 0.0, 50, 1, 1).unwrap();
        assert!(t.rows.iter().all(|r| r.estimate.mean == 1.0));
        let t = exponential_moment_estimate(&fbm, &[0.0], &[0.5, 0.25], -0.5, 50, 1, 1).unwrap();
        assert!(t.rows.iter().all(|r| r.estimate.mean <= 1.0));
        assert!(t.regime_flag.is_none());
    }
}
