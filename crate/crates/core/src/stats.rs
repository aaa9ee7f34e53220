//! Estimators, compensated sums, regression and Kolmogorov-Smirnov tests.

use serde::{Deserialize, Serialize};

/// Neumaier compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = NeumaierSum::default();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    /// Effective sample size, only for weighted estimators.
    pub ess: Option<f64>,
}

impl EstimatorResult {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                n,
                ess: None,
            };
        }
        let mean = sum(xs.iter().copied()) / n as f64;
        let se = if n > 1 {
            let var = sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self {
            mean,
            se,
            n,
            ess: None,
        }
    }

    /// Self-normalized importance-sampling estimate of `E_Q[f]` with
    /// delta-method standard error.
    pub fn weighted(values: &[f64], weights: &[f64]) -> Self {
        let n = values.len();
        let sw = sum(weights.iter().copied());
        let sw2 = sum(weights.iter().map(|w| w * w));
        let mean = sum(values.iter().zip(weights).map(|(v, w)| v * w)) / sw;
        let var = sum(values
            .iter()
            .zip(weights)
            .map(|(v, w)| w * w * (v - mean) * (v - mean)));
        Self {
            mean,
            se: var.sqrt() / sw,
            n,
            ess: Some(sw * sw / sw2),
        }
    }

    /// `|mean - target| <= k * se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

/// Effective sample size `(sum w)^2 / sum w^2`.
pub fn ess(weights: &[f64]) -> f64 {
    let s = sum(weights.iter().copied());
    s * s / sum(weights.iter().map(|w| w * w))
}

/// Ordinary least squares fit `y = a + b x`; returns `(a, b, se_b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = sum(x.iter().copied()) / n;
    let my = sum(y.iter().copied()) / n;
    let sxx = sum(x.iter().map(|v| (v - mx) * (v - mx)));
    let sxy = sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss = sum(x.iter().zip(y).map(|(u, v)| {
        let r = v - a - b * u;
        r * r
    }));
    let se_b = if x.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (a, b, se_b)
}

/// Result of a two-sample Kolmogorov-Smirnov test.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
    pub n1: usize,
    pub n2: usize,
}

/// Sample sizes above this use the asymptotic Kolmogorov distribution.
pub const KS_EXACT_LIMIT: usize = 10_000;

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsReport {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n1, n2) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let v = x[i].min(y[j]);
        while i < n1 && x[i] <= v {
            i += 1;
        }
        while j < n2 && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let exact = n1.max(n2) <= KS_EXACT_LIMIT;
    let p_value = if exact {
        (1.0 - smirnov_cdf(d, n1, n2)).clamp(0.0, 1.0)
    } else {
        let en = (n1 as f64 * n2 as f64 / (n1 + n2) as f64).sqrt();
        kolmogorov_sf((en + 0.12 + 0.11 / en) * d)
    };
    KsReport {
        statistic: d,
        p_value,
        exact,
        n1,
        n2,
    }
}

/// `P(D < d)` for the two-sample statistic under the null, by counting
/// lattice paths that stay inside the band (normalized forward recursion).
fn smirnov_cdf(d: f64, m: usize, n: usize) -> f64 {
    let (m, n) = if m > n { (n, m) } else { (m, n) };
    let (md, nd) = (m as f64, n as f64);
    let q = (0.5 + (d * md * nd - 1e-7).floor()) / (md * nd);
    let mut u: Vec<f64> = (0..=n)
        .map(|j| if j as f64 / nd > q { 0.0 } else { 1.0 })
        .collect();
    for i in 1..=m {
        let w = i as f64 / (i + n) as f64;
        let fi = i as f64 / md;
        u[0] = if fi > q { 0.0 } else { w * u[0] };
        for j in 1..=n {
            u[j] = if (fi - j as f64 / nd).abs() > q {
                0.0
            } else {
                w * u[j] + u[j - 1]
            };
        }
    }
    u[n]
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_beats_naive() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(sum(xs), 2.0);
    }

    #[test]
    fn smirnov_small_case_by_enumeration() {
        // m = n = 2: the 6 equally likely orderings give D = 1 in 2 of them.
        let p = 1.0 - smirnov_cdf(1.0, 2, 2);
        assert!((p - 2.0 / 6.0).abs() < 1e-12);
        let p = 1.0 - smirnov_cdf(0.5, 2, 2);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_samples_have_unit_p() {
        let a: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let r = ks_two_sample(&a, &a);
        assert_eq!(r.statistic, 0.0);
        assert!(r.p_value > 0.999);
    }

    #[test]
    fn exact_and_asymptotic_roughly_agree() {
        let p_exact = 1.0 - smirnov_cdf(0.1, 400, 400);
        let en = (200.0f64).sqrt();
        let p_asym = kolmogorov_sf((en + 0.12 + 0.11 / en) * 0.1);
        assert!((p_exact - p_asym).abs() < 0.01, "{p_exact} {p_asym}");
    }

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (a, b, _) = linear_fit(&x, &y);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_with_unit_weights_is_plain_mean() {
        let v = [1.0, 2.0, 4.0];
        let r = EstimatorResult::weighted(&v, &[1.0; 3]);
        assert!((r.mean - 7.0 / 3.0).abs() < 1e-15);
        assert!((r.ess.unwrap() - 3.0).abs() < 1e-12);
    }
}
