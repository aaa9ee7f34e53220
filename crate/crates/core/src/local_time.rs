//! Gaussian-mollifier local times `L^x_t(B, eps) = int_0^t phi_eps(B_s - x) ds`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fbm::{prepare_sampler, simulate_fbm, FbmSpec, Method, PathMatrix};
use crate::harness::{map_paths, require_paths, Domain, SeedSpec};
use crate::special::{beta, factorial};
use crate::stats::{ks_two_sample, linear_fit, EstimatorResult, KsReport};

/// Gaussian kernel `phi_eps(y - x) = (2 pi eps)^{-d/2} exp(-|y - x|^2 / (2 eps))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub epsilon: f64,
    pub center: Vec<f64>,
}

impl MollifierSpec {
    pub fn new(epsilon: f64, center: Vec<f64>) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid(
                "epsilon",
                format!("bandwidth must be positive, got {epsilon}"),
            ));
        }
        if center.is_empty() {
            return Err(invalid("center", "need at least one coordinate"));
        }
        Ok(Self { epsilon, center })
    }

    /// Centered at the origin of `R^d`.
    pub fn origin(epsilon: f64, d: usize) -> Result<Self> {
        Self::new(epsilon, vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(epsilon, self.center.clone())
    }
}

#[inline]
fn sq_dist(y: &[f64], x: &[f64]) -> f64 {
    y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn mollifier_eval(spec: &MollifierSpec, y: &[f64]) -> f64 {
    let e = spec.epsilon;
    let d = spec.dim() as f64;
    (2.0 * std::f64::consts::PI * e).powf(-0.5 * d) * (-0.5 * sq_dist(y, &spec.center) / e).exp()
}

/// Gradient of `y -> phi_eps(y - x)`.
pub fn mollifier_grad(spec: &MollifierSpec, y: &[f64]) -> Vec<f64> {
    let p = mollifier_eval(spec, y);
    y.iter()
        .zip(&spec.center)
        .map(|(a, b)| -(a - b) / spec.epsilon * p)
        .collect()
}

/// Running local time at every grid node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeEstimate {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub spec: MollifierSpec,
}

impl LocalTimeEstimate {
    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// Trapezoid-rule running integral of `phi_eps(B_s - x)`.
pub fn smoothed_local_time(path: &PathMatrix, spec: &MollifierSpec) -> Result<LocalTimeEstimate> {
    check_dims(path, spec)?;
    let n = path.steps();
    let dt = path.grid.dt();
    let mut values = Vec::with_capacity(n + 1);
    values.push(0.0);
    let mut prev = mollifier_eval(spec, path.row(0));
    let mut acc = 0.0;
    for i in 1..=n {
        let cur = mollifier_eval(spec, path.row(i));
        acc += 0.5 * dt * (prev + cur);
        values.push(acc);
        prev = cur;
    }
    Ok(LocalTimeEstimate {
        times: path.grid.nodes(),
        values,
        spec: spec.clone(),
    })
}

fn check_dims(path: &PathMatrix, spec: &MollifierSpec) -> Result<()> {
    if spec.dim() != path.dim {
        return Err(invalid(
            "center",
            format!("dimension {} but path has {}", spec.dim(), path.dim),
        ));
    }
    Ok(())
}

/// Terminal local time for several bandwidths on one path.
pub fn terminal_local_times(path: &PathMatrix, center: &[f64], ladder: &[f64]) -> Result<Vec<f64>> {
    ladder
        .iter()
        .map(|&e| {
            Ok(smoothed_local_time(path, &MollifierSpec::new(e, center.to_vec())?)?.terminal())
        })
        .collect()
}

/// Occupation-density estimate `|{s <= T : B_s in box}| / vol(box)` for the
/// cube of half-width `half_width` around `center`, by the trapezoid rule.
pub fn occupation_histogram(path: &PathMatrix, center: &[f64], half_width: f64) -> f64 {
    let inside = |i: usize| {
        path.row(i)
            .iter()
            .zip(center)
            .all(|(y, x)| (y - x).abs() < half_width) as u8 as f64
    };
    let n = path.steps();
    let dt = path.grid.dt();
    let mut acc = 0.0;
    for i in 0..n {
        acc += 0.5 * dt * (inside(i) + inside(i + 1));
    }
    acc / (2.0 * half_width).powi(path.dim as i32)
}

/// `eps_k = 2^{-k}`, `k = 1..=8`.
pub fn default_ladder() -> Vec<f64> {
    (1..=8).map(|k| 2f64.powi(-k)).collect()
}

/// Per-rung L^2 gaps of a coupled bandwidth ladder.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CauchyStudy {
    pub ladder: Vec<f64>,
    /// `E|L(eps_k) - L(eps_{k+1})|^2` for each consecutive pair.
    pub gaps: Vec<EstimatorResult>,
    /// Paired estimate of `gap_{k+1} - gap_k` (one fewer than `gaps`).
    pub gap_changes: Vec<EstimatorResult>,
    pub warning: Option<String>,
}

impl CauchyStudy {
    /// Every gap is below its predecessor up to `k_sigma` paired standard
    /// errors.
    pub fn decreasing_within(&self, k_sigma: f64) -> bool {
        self.gap_changes.iter().all(|c| c.mean < k_sigma * c.se)
    }

    /// Every gap is below its predecessor outright.
    pub fn strictly_decreasing(&self) -> bool {
        self.gaps.windows(2).all(|w| w[1].mean < w[0].mean)
    }
}

/// Squared differences of consecutive rungs per path, aggregated to means
/// with standard errors.
pub fn ladder_gaps(per_path: &[Vec<f64>]) -> (Vec<EstimatorResult>, Vec<EstimatorResult>) {
    let rungs = per_path.first().map_or(0, |v| v.len());
    let sq: Vec<Vec<f64>> = per_path
        .iter()
        .map(|v| {
            v.windows(2)
                .map(|w| (w[0] - w[1]) * (w[0] - w[1]))
                .collect()
        })
        .collect();
    let gaps = (0..rungs.saturating_sub(1))
        .map(|k| EstimatorResult::from_samples(&sq.iter().map(|v| v[k]).collect::<Vec<_>>()))
        .collect();
    let changes = (0..rungs.saturating_sub(2))
        .map(|k| {
            EstimatorResult::from_samples(&sq.iter().map(|v| v[k + 1] - v[k]).collect::<Vec<_>>())
        })
        .collect();
    (gaps, changes)
}

pub fn hd_warning(h: f64, d: usize) -> Option<String> {
    (h * d as f64 >= 1.0).then(|| {
        format!(
            "Hd = {} >= 1: local time does not exist in this regime",
            h * d as f64
        )
    })
}

#[allow(clippy::too_many_arguments)]
pub fn local_time_cauchy_study(
    spec: &FbmSpec,
    center: &[f64],
    ladder: &[f64],
    n_paths: usize,
    master_seed: u64,
    workers: usize,
    method: Method,
) -> Result<CauchyStudy> {
    spec.validate()?;
    require_paths(n_paths)?;
    if ladder.len() < 2 {
        return Err(invalid("ladder", "need at least two bandwidths"));
    }
    prepare_sampler(spec, method)?;
    let per_path: Vec<Vec<f64>> = map_paths(n_paths, workers, |i| {
        let p = simulate_fbm(spec, SeedSpec::new(master_seed, i), method, Domain::Fbm)?;
        terminal_local_times(&p, center, ladder)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let (gaps, gap_changes) = ladder_gaps(&per_path);
    Ok(CauchyStudy {
        ladder: ladder.to_vec(),
        gaps,
        gap_changes,
        warning: hd_warning(spec.hurst, spec.dim),
    })
}

/// `m! (2 pi)^{-dm/2} K^{d(1-m)/2} prod_{j=1}^m B(j(1-Hd), 1-Hd) t^{m(1-Hd)}`.
pub fn moment_bound_rhs(h: f64, d: usize, t: f64, m: usize, k: f64) -> Result<f64> {
    let hd = h * d as f64;
    if hd >= 1.0 {
        return Err(invalid("H", format!("need Hd < 1, got {hd}")));
    }
    if m < 1 {
        return Err(invalid("m", "moment order must be at least 1"));
    }
    if k.is_nan() || k <= 0.0 {
        return Err(invalid("K", "constant must be positive"));
    }
    let (df, mf) = (d as f64, m as f64);
    let prod: f64 = (1..=m)
        .map(|j| beta(j as f64 * (1.0 - hd), 1.0 - hd))
        .product();
    Ok(factorial(m)
        * (2.0 * std::f64::consts::PI).powf(-0.5 * df * mf)
        * k.powf(0.5 * df * (1.0 - mf))
        * prod
        * t.powf(mf * (1.0 - hd)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentRow {
    pub m: usize,
    pub empirical: EstimatorResult,
    pub bound: f64,
    /// One-sided: the point estimate does not exceed the bound.
    pub holds: bool,
}

/// Empirical `E[L_T^x(eps)^m]` next to [`moment_bound_rhs`] at `t = T` for
/// a supplied constant `k` (see `min_nondeterminism_ratio`).
#[allow(clippy::too_many_arguments)]
pub fn moment_bound_check(
    spec: &FbmSpec,
    center: &[f64],
    epsilon: f64,
    orders: &[usize],
    k: f64,
    n_paths: usize,
    master_seed: u64,
    workers: usize,
    method: Method,
) -> Result<Vec<MomentRow>> {
    spec.validate()?;
    require_paths(n_paths)?;
    let moll = MollifierSpec::new(epsilon, center.to_vec())?;
    prepare_sampler(spec, method)?;
    let lt: Vec<f64> = map_paths(n_paths, workers, |i| {
        let p = simulate_fbm(spec, SeedSpec::new(master_seed, i), method, Domain::Fbm)?;
        Ok(smoothed_local_time(&p, &moll)?.terminal())
    })
    .into_iter()
    .collect::<Result<_>>()?;
    orders
        .iter()
        .map(|&m| {
            let bound = moment_bound_rhs(spec.hurst, spec.dim, spec.horizon, m, k)?;
            let xs: Vec<f64> = lt.iter().map(|l| l.powi(m as i32)).collect();
            let empirical = EstimatorResult::from_samples(&xs);
            Ok(MomentRow {
                m,
                empirical,
                bound,
                holds: empirical.mean <= bound,
            })
        })
        .collect()
}

/// Report of the self-similarity study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelfSimilarityReport {
    pub t: f64,
    pub epsilon: f64,
    /// `L_t(eps)` against `t^{1-Hd} L_1(eps t^{-2H})`: equal in law.
    pub ks_matched: KsReport,
    /// `L_t(eps)` against `t^{1-Hd} L_1(eps)`: equal only as `eps -> 0`.
    pub ks_unmatched: KsReport,
    /// `(t, E L_t)` used for the exponent regression.
    pub mean_curve: Vec<(f64, EstimatorResult)>,
    pub slope: f64,
    pub slope_se: f64,
    pub expected_slope: f64,
    pub warning: Option<String>,
}

/// Smallest sample size per arm for which the KS comparison is reported as
/// meaningful.
pub const MIN_KS_SAMPLES: usize = 100;

/// Compares `L_t^0` with `t^{1-Hd} L_1^0` by a two-sample KS test and fits
/// the exponent of `t -> E L_t^0`.
///
/// Both arms use `steps` grid steps; under the scaling `B_{t.} = t^H B_.`
/// a grid of `[0, t]` maps onto the grid of `[0, 1]`, so the bandwidth-
/// matched comparison is exact in law at every `eps`.
#[allow(clippy::too_many_arguments)]
pub fn self_similarity_test(
    h: f64,
    d: usize,
    t: f64,
    epsilon: f64,
    steps: usize,
    n_paths: usize,
    master_seed: u64,
    workers: usize,
    method: Method,
) -> Result<SelfSimilarityReport> {
    require_paths(n_paths)?;
    if !(t > 0.0 && t <= 1.0) {
        return Err(invalid("t", format!("need 0 < t <= 1, got {t}")));
    }
    let hd = h * d as f64;
    if hd >= 1.0 {
        return Err(invalid("H", format!("need Hd < 1, got {hd}")));
    }
    let short = FbmSpec::new(h, d, t, steps)?;
    let unit = FbmSpec::new(h, d, 1.0, steps)?;
    let origin = vec![0.0; d];
    let scale = t.powf(1.0 - hd);
    let eps_matched = epsilon * t.powf(-2.0 * h);
    prepare_sampler(&short, method)?;
    prepare_sampler(&unit, method)?;
    let arm_a: Vec<f64> = map_paths(n_paths, workers, |i| {
        let p = simulate_fbm(&short, SeedSpec::new(master_seed, i), method, Domain::Fbm)?;
        Ok(smoothed_local_time(&p, &MollifierSpec::new(epsilon, origin.clone())?)?.terminal())
    })
    .into_iter()
    .collect::<Result<_>>()?;
    // unit-horizon arm: matched and unmatched terminal values plus the
    // running curve at dyadic times for the regression
    let curve_nodes: Vec<usize> = (0..=4).map(|k| steps >> k).filter(|&i| i >= 1).collect();
    let arm_b: Vec<(f64, f64, Vec<f64>)> = map_paths(n_paths, workers, |i| {
        let p = simulate_fbm(&unit, SeedSpec::new(master_seed, i), method, Domain::FbmAlt)?;
        let matched =
            smoothed_local_time(&p, &MollifierSpec::new(eps_matched, origin.clone())?)?.terminal();
        let lt = smoothed_local_time(&p, &MollifierSpec::new(epsilon, origin.clone())?)?;
        let curve = curve_nodes.iter().map(|&k| lt.values[k]).collect();
        Ok((scale * matched, scale * lt.terminal(), curve))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let matched: Vec<f64> = arm_b.iter().map(|r| r.0).collect();
    let unmatched: Vec<f64> = arm_b.iter().map(|r| r.1).collect();
    let grid = unit.grid();
    let mean_curve: Vec<(f64, EstimatorResult)> = curve_nodes
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let xs: Vec<f64> = arm_b.iter().map(|r| r.2[j]).collect();
            (grid.node(k), EstimatorResult::from_samples(&xs))
        })
        .collect();
    let lx: Vec<f64> = mean_curve.iter().map(|(t, _)| t.ln()).collect();
    let ly: Vec<f64> = mean_curve.iter().map(|(_, e)| e.mean.ln()).collect();
    let (_, slope, slope_se) = linear_fit(&lx, &ly);
    let mut warning = hd_warning(h, d);
    if n_paths < MIN_KS_SAMPLES {
        warning = Some(format!(
            "only {n_paths} samples per arm; KS test has little power"
        ));
    }
    Ok(SelfSimilarityReport {
        t,
        epsilon,
        ks_matched: ks_two_sample(&arm_a, &matched),
        ks_unmatched: ks_two_sample(&arm_a, &unmatched),
        mean_curve,
        slope,
        slope_se,
        expected_slope: 1.0 - hd,
        warning,
    })
}

/// `E[exp(mu L)]` from samples of `L`, averaged in log-space.
pub fn exponential_moment(samples: &[f64], mu: f64) -> EstimatorResult {
    let shift = samples
        .iter()
        .map(|l| mu * l)
        .fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = samples.iter().map(|l| (mu * l - shift).exp()).collect();
    let r = EstimatorResult::from_samples(&scaled);
    let f = shift.exp();
    EstimatorResult {
        mean: r.mean * f,
        se: r.se * f,
        ..r
    }
}
