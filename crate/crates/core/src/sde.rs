//! The mollified SDE `dX = alpha phi_eps(X) 1_d dt + dB^H`, its coupled
//! bandwidth ladder, Hoelder moments, the Malliavin derivative equation and
//! the relative-compactness diagnostic.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fbm::{kernel_k, prepare_sampler, simulate_fbm, FbmSpec, Method, PathMatrix};
use crate::grid::TimeGrid;
use crate::harness::{map_paths, require_paths, Domain, SeedSpec};
use crate::local_time::{mollifier_eval, mollifier_grad, MollifierSpec};
use crate::quadrature::{gauss_legendre, integrate};
use crate::stats::{linear_fit, sum, EstimatorResult};

pub const OUTSIDE_REGIME: &str = "outside proven regime";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeSpec {
    pub x0: Vec<f64>,
    pub alpha: f64,
    pub fbm: FbmSpec,
    pub epsilon: f64,
}

impl SdeSpec {
    pub fn new(x0: Vec<f64>, alpha: f64, fbm: FbmSpec, epsilon: f64) -> Result<Self> {
        fbm.validate()?;
        if x0.len() != fbm.dim {
            return Err(invalid(
                "x0",
                format!("length {} but d = {}", x0.len(), fbm.dim),
            ));
        }
        if !alpha.is_finite() {
            return Err(invalid("alpha", "must be finite"));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid("epsilon", "bandwidth must be positive"));
        }
        Ok(Self {
            x0,
            alpha,
            fbm,
            epsilon,
        })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    /// `1 / (2 (2 + d))`, the Hurst threshold of the strong existence result.
    pub fn regime_threshold(&self) -> f64 {
        regime_threshold(self.fbm.dim)
    }

    pub fn in_proven_regime(&self) -> bool {
        self.fbm.hurst < self.regime_threshold()
    }

    pub fn regime_flag(&self) -> Option<&'static str> {
        (!self.in_proven_regime()).then_some(OUTSIDE_REGIME)
    }

    fn mollifier(&self) -> MollifierSpec {
        MollifierSpec::origin(self.epsilon, self.fbm.dim).expect("validated")
    }
}

pub fn regime_threshold(d: usize) -> f64 {
    1.0 / (2.0 * (2.0 + d as f64))
}

fn check_grid(spec: &SdeSpec, path: &PathMatrix) -> Result<()> {
    if path.grid != spec.fbm.grid() || path.dim != spec.fbm.dim {
        return Err(Error::GridMismatch(format!(
            "path has {} steps on [0, {}] in d = {}, spec wants {} on [0, {}] in d = {}",
            path.steps(),
            path.grid.horizon(),
            path.dim,
            spec.fbm.steps,
            spec.fbm.horizon,
            spec.fbm.dim
        )));
    }
    Ok(())
}

/// Explicit Euler on the frozen path:
/// `X_{i+1} = X_i + alpha phi_eps(X_i) 1_d dt + (B_{i+1} - B_i)`.
///
/// Stored as `X_i = x0 + B_i + D_i` with the accumulated drift `D_i`, which
/// is algebraically the same recursion and makes `alpha = 0` reproduce
/// `x0 + B` bit for bit.
pub fn solve_mollified(spec: &SdeSpec, path: &PathMatrix) -> Result<PathMatrix> {
    check_grid(spec, path)?;
    let d = spec.fbm.dim;
    let n = spec.fbm.steps;
    let dt = spec.fbm.dt();
    let moll = spec.mollifier();
    let mut values = vec![0.0; (n + 1) * d];
    let mut drift = 0.0;
    for i in 0..=n {
        for c in 0..d {
            values[i * d + c] = spec.x0[c] + path.at(i, c) + drift;
        }
        if i < n && spec.alpha != 0.0 {
            drift += spec.alpha * mollifier_eval(&moll, &values[i * d..(i + 1) * d]) * dt;
        }
    }
    Ok(PathMatrix {
        values,
        driver: None,
        ..path.clone()
    })
}

/// `eps_k = 2^{-k}` for `k = 1..=k_max`.
pub fn dyadic_ladder(k_max: i32) -> Vec<f64> {
    (1..=k_max).map(|k| 2f64.powi(-k)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadderStudy {
    pub ladder: Vec<f64>,
    /// `E|X^{eps_k}_T - X^{eps_{k+1}}_T|^2`.
    pub gaps: Vec<EstimatorResult>,
    /// Paired `gap_{k+1} - gap_k`.
    pub gap_changes: Vec<EstimatorResult>,
    pub warnings: Vec<String>,
    pub regime_flag: Option<String>,
}

impl LadderStudy {
    pub fn decreasing_within(&self, k_sigma: f64) -> bool {
        self.gap_changes.iter().all(|c| c.mean < k_sigma * c.se)
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.gaps.windows(2).all(|w| w[1].mean < w[0].mean)
    }
}

/// Terminal values `X^{eps}_T` for every rung, all rungs driven by the same
/// fBm path (common random numbers).
pub fn terminal_ladder(spec: &SdeSpec, path: &PathMatrix, ladder: &[f64]) -> Result<Vec<Vec<f64>>> {
    ladder
        .iter()
        .map(|&e| {
            let x = solve_mollified(&spec.with_epsilon(e), path)?;
            Ok(x.row(x.steps()).to_vec())
        })
        .collect()
}

pub fn convergence_ladder(
    spec: &SdeSpec,
    ladder: &[f64],
    n_paths: usize,
    master_seed: u64,
    workers: usize,
    method: Method,
) -> Result<LadderStudy> {
    require_paths(n_paths)?;
    if ladder.len() < 2 {
        return Err(invalid("ladder", "need at least two bandwidths"));
    }
    prepare_sampler(&spec.fbm, method)?;
    let per_path: Vec<Vec<Vec<f64>>> = map_paths(n_paths, workers, |i| {
        let p = simulate_fbm(
            &spec.fbm,
            SeedSpec::new(master_seed, i),
            method,
            Domain::Fbm,
        )?;
        terminal_ladder(spec, &p, ladder)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let rungs = ladder.len();
    let gap_samples: Vec<Vec<f64>> = per_path
        .iter()
        .map(|v| (0..rungs - 1).map(|k| sq(&v[k], &v[k + 1])).collect())
        .collect();
    let gaps: Vec<EstimatorResult> = (0..rungs - 1)
        .map(|k| {
            EstimatorResult::from_samples(&gap_samples.iter().map(|g| g[k]).collect::<Vec<_>>())
        })
        .collect();
    let gap_changes: Vec<EstimatorResult> = (0..rungs.saturating_sub(2))
        .map(|k| {
            EstimatorResult::from_samples(
                &gap_samples
                    .iter()
                    .map(|g| g[k + 1] - g[k])
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let warnings = gap_changes
        .iter()
        .enumerate()
        .filter(|(_, c)| c.mean > 3.0 * c.se)
        .map(|(k, c)| {
            format!(
                "gap increases from rung {} to {} by {:e} ({:.1} se): regime or grid resolution limit",
                k + 1,
                k + 2,
                c.mean,
                c.mean / c.se
            )
        })
        .collect();
    Ok(LadderStudy {
        ladder: ladder.to_vec(),
        gaps,
        gap_changes,
        warnings,
        regime_flag: spec.regime_flag().map(str::to_string),
    })
}

/// Solutions for one bandwidth over `n_paths` driving paths.
pub fn solution_ensemble(
    spec: &SdeSpec,
    n_paths: usize,
    master_seed: u64,
    workers: usize,
    method: Method,
) -> Result<Vec<PathMatrix>> {
    require_paths(n_paths)?;
    prepare_sampler(&spec.fbm, method)?;
    map_paths(n_paths, workers, |i| {
        let p = simulate_fbm(
            &spec.fbm,
            SeedSpec::new(master_seed, i),
            method,
            Domain::Fbm,
        )?;
        solve_mollified(spec, &p)
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolderRow {
    pub lag: f64,
    pub moment: EstimatorResult,
    pub bound_shape: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolderReport {
    pub m: u32,
    pub rows: Vec<HolderRow>,
    /// Least-squares slope of `log E|X_t - X_s|^m` against `log |t - s|`.
    pub slope: f64,
    pub slope_se: f64,
    /// Smallest `C` with `E|X_t - X_s|^m <= C (|t-s|^{m(1-Hd)/2} + |t-s|^{mH})`
    /// at every tested lag.
    pub fitted_c: f64,
    /// `min(mH, m(1-Hd)/2)`, the small-lag exponent of the bound.
    pub bound_exponent: f64,
}

/// `E|X_t - X_s|^m` at one pair of node indices.
pub fn moment_at(ensemble: &[PathMatrix], m: u32, s_idx: usize, t_idx: usize) -> EstimatorResult {
    let xs: Vec<f64> = ensemble
        .iter()
        .map(|p| {
            let r2: f64 = p
                .row(t_idx)
                .iter()
                .zip(p.row(s_idx))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            r2.sqrt().powi(m as i32)
        })
        .collect();
    EstimatorResult::from_samples(&xs)
}

/// Fits the moment of increments against the two-term Hoelder bound.
/// For each lag (in grid steps) the per-path statistic averages
/// `|X_{s+lag} - X_s|^m` over all start nodes `s`.
pub fn holder_moment_check(
    ensemble: &[PathMatrix],
    m: u32,
    lags: &[usize],
    h: f64,
) -> Result<HolderReport> {
    let first = ensemble.first().ok_or(Error::EmptyStudy)?;
    let n = first.steps();
    let d = first.dim;
    let dt = first.grid.dt();
    if lags.iter().any(|&l| l == 0 || l > n) {
        return Err(invalid("lags", format!("lags must lie in 1..={n}")));
    }
    let hd = h * d as f64;
    let (mf, e1, e2) = (m as f64, 0.5 * m as f64 * (1.0 - hd), m as f64 * h);
    let rows: Vec<HolderRow> = lags
        .iter()
        .map(|&lag| {
            let xs: Vec<f64> = ensemble
                .iter()
                .map(|p| {
                    let terms = (0..=n - lag).map(|s| {
                        let r2: f64 = p
                            .row(s + lag)
                            .iter()
                            .zip(p.row(s))
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        r2.powf(0.5 * mf)
                    });
                    sum(terms) / (n - lag + 1) as f64
                })
                .collect();
            let delta = lag as f64 * dt;
            HolderRow {
                lag: delta,
                moment: EstimatorResult::from_samples(&xs),
                bound_shape: delta.powf(e1) + delta.powf(e2),
            }
        })
        .collect();
    let lx: Vec<f64> = rows.iter().map(|r| r.lag.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.moment.mean.ln()).collect();
    let (_, slope, slope_se) = linear_fit(&lx, &ly);
    let fitted_c = rows
        .iter()
        .map(|r| r.moment.mean / r.bound_shape)
        .fold(0.0, f64::max);
    Ok(HolderReport {
        m,
        rows,
        slope,
        slope_se,
        fitted_c,
        bound_exponent: e1.min(e2),
    })
}

/// Kernel values needed to differentiate at `s = t_k`: `K_H(t_i, s)` for
/// `i > k` and the cell integrals `int_{t_i}^{t_{i+1}} K_H(u, s) du` for
/// `i >= k`.
#[derive(Clone, Debug)]
pub struct MalliavinKernel {
    pub s_index: usize,
    /// `k_at[i - k - 1] = K_H(t_i, s)` for `i = k+1..=n`.
    pub k_at: Vec<f64>,
    /// `k_cell[i - k] = int_{t_i}^{t_{i+1}} K_H(u, s) du` for `i = k..n`.
    pub k_cell: Vec<f64>,
}

impl MalliavinKernel {
    pub fn new(h: f64, grid: &TimeGrid, s_index: usize) -> Result<Self> {
        let n = grid.steps();
        if s_index == 0 || s_index >= n {
            return Err(invalid(
                "s",
                "differentiation time must be an interior grid node",
            ));
        }
        let s = grid.node(s_index);
        let k_at = (s_index + 1..=n)
            .map(|i| kernel_k(h, grid.node(i), s))
            .collect::<Result<_>>()?;
        // u = s + v^{1/p}, p = H + 1/2, absorbs the (u - s)^{H-1/2} singularity
        let p = h + 0.5;
        let q = 1.0 / p;
        let rule = gauss_legendre(24);
        let piece = |v0: f64, v1: f64| {
            rule.on(v0, v1)
                .map(|(v, w)| {
                    let u = s + v.powf(q);
                    Ok(w * kernel_k(h, u, s)? * q * v.powf(q - 1.0))
                })
                .sum::<Result<f64>>()
        };
        let k_cell = (s_index..n)
            .map(|i| {
                let v0 = (grid.node(i) - s).max(0.0).powf(p);
                let v1 = (grid.node(i + 1) - s).powf(p);
                if i == s_index {
                    // graded panels toward the remaining weak singularity at u = s
                    let mut acc = 0.0;
                    let mut hi = v1;
                    for _ in 0..6 {
                        acc += piece(0.25 * hi, hi)?;
                        hi *= 0.25;
                    }
                    Ok(acc + piece(0.0, hi)?)
                } else {
                    piece(v0, v1)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            s_index,
            k_at,
            k_cell,
        })
    }

    fn cached(h: f64, grid: &TimeGrid, s_index: usize) -> Result<Arc<Self>> {
        type Key = (u64, u64, usize, usize);
        static CACHE: OnceLock<Mutex<HashMap<Key, Arc<MalliavinKernel>>>> = OnceLock::new();
        let key = (h.to_bits(), grid.horizon().to_bits(), grid.steps(), s_index);
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(k) = cache.lock().unwrap().get(&key) {
            return Ok(k.clone());
        }
        let k = Arc::new(Self::new(h, grid, s_index)?);
        cache.lock().unwrap().insert(key, k.clone());
        Ok(k)
    }
}

/// `D_s X_t` for `t = t_{k+1}, ..., t_n` as `d x d` row-major matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MalliavinPath {
    pub s: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub dim: usize,
}

/// Solves `D_s X_t = K_H(t,s) I + int_s^t J(u) D_s X_u du` with
/// `J = alpha 1_d grad(phi_eps)(X_u)^T`.
///
/// Writing `D_s X_t = K_H(t,s) I + Z_t`, the integral term is advanced by
/// `Z_{i+1} = Z_i + J(X_i) (Kc_i I + Z_i dt)` where `Kc_i` integrates the
/// kernel exactly over the cell. The singular `K_H(s,s)` is never formed and
/// `D_s X_s` is left undefined.
pub fn solve_malliavin(spec: &SdeSpec, solution: &PathMatrix, s: f64) -> Result<MalliavinPath> {
    check_grid(spec, solution)?;
    let grid = solution.grid;
    let k = grid
        .index_of(s)
        .ok_or_else(|| invalid("s", format!("{s} is not a grid node")))?;
    let kern = MalliavinKernel::cached(spec.fbm.hurst, &grid, k)?;
    let values = malliavin_core(spec, solution, &kern, 1.0);
    Ok(MalliavinPath {
        s,
        times: (k + 1..=grid.steps()).map(|i| grid.node(i)).collect(),
        values,
        dim: spec.fbm.dim,
    })
}

/// The recursion with the inhomogeneous term scaled by `scale`.
pub fn malliavin_core(
    spec: &SdeSpec,
    x: &PathMatrix,
    kern: &MalliavinKernel,
    scale: f64,
) -> Vec<Vec<f64>> {
    let d = spec.fbm.dim;
    let n = x.steps();
    let dt = x.grid.dt();
    let k = kern.s_index;
    let moll = spec.mollifier();
    let mut z = vec![0.0; d * d];
    let mut out = Vec::with_capacity(n - k);
    for i in k..n {
        if spec.alpha != 0.0 {
            let g = mollifier_grad(&moll, x.row(i));
            // every row of J equals alpha * grad^T, so J (c I + Z dt) has
            // identical rows: row_b = alpha * (c grad_b + dt * sum_a grad_a Z[a][b])
            let c = scale * kern.k_cell[i - k];
            let mut row = vec![0.0; d];
            for (b, r) in row.iter_mut().enumerate() {
                let mut acc = c * g[b];
                for a in 0..d {
                    acc += dt * g[a] * z[a * d + b];
                }
                *r = spec.alpha * acc;
            }
            for a in 0..d {
                for b in 0..d {
                    z[a * d + b] += row[b];
                }
            }
        }
        let kv = scale * kern.k_at[i - k];
        let mut m = z.clone();
        for a in 0..d {
            m[a * d + a] += kv;
        }
        out.push(m);
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompactnessReport {
    pub epsilon: f64,
    pub beta: f64,
    pub subgrid_steps: usize,
    /// Banded double integral of `E||D_a X_T - D_b X_T||^2 / |a - b|^{1+2 beta}`.
    pub double_integral: EstimatorResult,
    /// `E int_0^T ||D_a X_T||^2 da`.
    pub l2_norm_sq: EstimatorResult,
    pub regime_flag: Option<String>,
}

/// Weights for the banded double sum on subgrid nodes `1..M-1`:
/// trapezoid weights per node, halved again for nearest neighbours.
fn banded_sum(m: usize, dtheta: f64, beta: f64, dist2: impl Fn(usize, usize) -> f64) -> f64 {
    let w = |k: usize| if k == 1 || k == m - 1 { 0.5 } else { 1.0 };
    let mut acc = crate::stats::NeumaierSum::default();
    for a in 1..m {
        for b in a + 1..m {
            let pair = if b - a == 1 { 0.5 } else { 1.0 };
            let gap = (b - a) as f64 * dtheta;
            acc.add(2.0 * pair * w(a) * w(b) * dist2(a, b) / gap.powf(1.0 + 2.0 * beta));
        }
    }
    acc.value() * dtheta * dtheta
}

/// Deterministic `alpha = 0` value of the banded sum:
/// `d * |K_H(t, a) - K_H(t, b)|^2` on the subgrid.
pub fn kernel_difference_sum(h: f64, d: usize, t: f64, m: usize, beta: f64) -> Result<f64> {
    let dtheta = t / m as f64;
    let k: Vec<f64> = (0..m)
        .map(|j| {
            if j == 0 {
                Ok(0.0)
            } else {
                kernel_k(h, t, j as f64 * dtheta)
            }
        })
        .collect::<Result<_>>()?;
    Ok(banded_sum(m, dtheta, beta, |a, b| {
        d as f64 * (k[a] - k[b]).powi(2)
    }))
}

/// `d * int int_{D} |K_H(t,a) - K_H(t,b)|^2 / |a - b|^{1+2 beta}` over
/// `D = {a, b in [band, t - band], |a - b| >= band}` by nested adaptive
/// quadrature.
pub fn kernel_difference_integral(h: f64, d: usize, t: f64, band: f64, beta: f64) -> Result<f64> {
    let k = |u: f64| crate::fbm::kernel_k(h, t, u);
    let outer = |a: f64| {
        let ka = k(a).unwrap_or(f64::NAN);
        let inner =
            |b: f64| (ka - k(b).unwrap_or(f64::NAN)).powi(2) / (b - a).powf(1.0 + 2.0 * beta);
        integrate(&inner, a + band, t - band, 1e-11).unwrap_or(f64::NAN)
    };
    let v = integrate(&outer, band, t - 2.0 * band, 1e-9)?;
    if !v.is_finite() {
        return Err(Error::QuadratureFailed("kernel difference integral".into()));
    }
    Ok(2.0 * d as f64 * v)
}

/// Monte Carlo estimate of the banded compactness integral at `t = T` on a
/// subgrid of `subgrid_steps` cells (must divide the path step count).
pub fn compactness_diagnostic(
    spec: &SdeSpec,
    n_paths: usize,
    beta: f64,
    subgrid_steps: usize,
    master_seed: u64,
    workers: usize,
    method: Method,
) -> Result<CompactnessReport> {
    require_paths(n_paths)?;
    if !(beta > 0.0 && beta < 0.5) {
        return Err(invalid("beta", format!("need 0 < beta < 1/2, got {beta}")));
    }
    let n = spec.fbm.steps;
    let m = subgrid_steps;
    if m < 3 || !n.is_multiple_of(m) {
        return Err(invalid(
            "subgrid_steps",
            format!("{m} must be >= 3 and divide n = {n}"),
        ));
    }
    let stride = n / m;
    let grid = spec.fbm.grid();
    let d = spec.fbm.dim;
    let kernels: Vec<Arc<MalliavinKernel>> = (1..m)
        .map(|j| MalliavinKernel::cached(spec.fbm.hurst, &grid, j * stride))
        .collect::<Result<_>>()?;
    let dtheta = spec.fbm.horizon / m as f64;
    prepare_sampler(&spec.fbm, method)?;
    let per_path: Vec<(f64, f64)> = map_paths(n_paths, workers, |i| {
        let p = simulate_fbm(
            &spec.fbm,
            SeedSpec::new(master_seed, i),
            method,
            Domain::Fbm,
        )?;
        let x = solve_mollified(spec, &p)?;
        // terminal D_theta X_T for theta on the subgrid (index 1..m-1)
        let mut dt_vals = vec![vec![0.0; d * d]; m];
        for (j, kern) in kernels.iter().enumerate() {
            dt_vals[j + 1] = malliavin_core(spec, &x, kern, 1.0).pop().unwrap();
        }
        let dist2 = |a: usize, b: usize| -> f64 {
            dt_vals[a]
                .iter()
                .zip(&dt_vals[b])
                .map(|(u, v)| (u - v) * (u - v))
                .sum()
        };
        let dbl = banded_sum(m, dtheta, beta, dist2);
        let l2 = (1..m)
            .map(|j| {
                let w = if j == 1 || j == m - 1 { 0.5 } else { 1.0 };
                w * dt_vals[j].iter().map(|v| v * v).sum::<f64>()
            })
            .sum::<f64>()
            * dtheta;
        Ok((dbl, l2))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let dbl: Vec<f64> = per_path.iter().map(|r| r.0).collect();
    let l2: Vec<f64> = per_path.iter().map(|r| r.1).collect();
    Ok(CompactnessReport {
        epsilon: spec.epsilon,
        beta,
        subgrid_steps: m,
        double_integral: EstimatorResult::from_samples(&dbl),
        l2_norm_sq: EstimatorResult::from_samples(&l2),
        regime_flag: spec.regime_flag().map(str::to_string),
    })
}
