//! Iterated singular integrals: the kernel-difference simplex bound with
//! its `Pi_gamma` product, and the Beta-product bound on the weighted
//! determinant integral over `T_{2m}(0, 1)`.
//!
//! Simplex convention here: `theta = s_0 < s_1 < ... < s_m < t`, so the
//! weight `|s_j - s_{j-1}|^{w_j}` couples neighbours and the `Pi_gamma`
//! product telescopes when integrated from the inside out.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::fbm::kernel_k_offset;
use crate::quadrature::{endpoint_graded, integrate, integrate_split};
use crate::special::factorial;

/// Gauss-Legendre degree per half interval in the nested quadrature.
const DEGREE: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IteratedParams {
    pub h: f64,
    pub gamma: f64,
    pub theta: f64,
    /// `0 < theta' < theta`; only used when some `eps_j = 1`.
    pub theta_prime: f64,
    pub t: f64,
    pub w: Vec<f64>,
    pub eps: Vec<bool>,
}

impl IteratedParams {
    fn b(&self) -> f64 {
        self.h - 0.5 - self.gamma
    }

    fn n_eps(&self) -> f64 {
        self.eps.iter().filter(|&&e| e).count() as f64
    }

    pub fn validate(&self) -> Result<()> {
        crate::fbm::check_hurst(self.h)?;
        let m = self.w.len();
        if m == 0 || m != self.eps.len() {
            return Err(invalid("w", "need m >= 1 weights and one flag per weight"));
        }
        if !(self.gamma > 0.0 && self.gamma < self.h) {
            return Err(Error::Hypothesis(format!(
                "gamma = {} must lie in (0, H)",
                self.gamma
            )));
        }
        if !(self.theta > 0.0 && self.theta < self.t) {
            return Err(invalid("theta", "need 0 < theta < t"));
        }
        if self.n_eps() > 0.0 && !(self.theta_prime > 0.0 && self.theta_prime < self.theta) {
            return Err(invalid("theta_prime", "need 0 < theta' < theta"));
        }
        for (j, (&w, &e)) in self.w.iter().zip(&self.eps).enumerate() {
            let lhs = w + if e { self.b() } else { 0.0 };
            if lhs <= -1.0 {
                return Err(Error::Hypothesis(format!(
                    "w_{} + (H - 1/2 - gamma) eps_{} = {lhs} must exceed -1",
                    j + 1,
                    j + 1
                )));
            }
        }
        Ok(())
    }

    /// `kappa_j` as a function of the offset `r = s - theta`.
    fn kappa(&self, e: bool, r: f64) -> f64 {
        if !e {
            return 1.0;
        }
        let near = kernel_k_offset(self.h, self.theta, r);
        let far = kernel_k_offset(self.h, self.theta_prime, self.theta - self.theta_prime + r);
        (near - far).abs()
    }
}

/// `Pi_gamma(m)`; the empty product for `m = 1`.
pub fn pi_gamma(h: f64, gamma: f64, w: &[f64], eps: &[bool]) -> f64 {
    let b = h - 0.5 - gamma;
    let mut ln = 0.0;
    let (mut sw, mut se) = (0.0, 0.0);
    for j in 1..w.len() {
        sw += w[j - 1];
        se += if eps[j - 1] { 1.0 } else { 0.0 };
        let jf = j as f64;
        ln += ln_gamma(sw + b * se + jf) + ln_gamma(w[j] + 1.0)
            - ln_gamma(sw + w[j] + b * se + jf + 1.0);
    }
    ln.exp()
}

/// `prod Gamma(w_j + 1) / Gamma(sum w + m + 1) (t - theta)^{sum w + m}`,
/// the exact iterated integral without kernel factors.
pub fn dirichlet_integral(w: &[f64], span: f64) -> f64 {
    let sw: f64 = w.iter().sum();
    let m = w.len() as f64;
    let ln = w.iter().map(|&x| ln_gamma(x + 1.0)).sum::<f64>() - ln_gamma(sw + m + 1.0);
    ln.exp() * span.powf(sw + m)
}

/// Smallest `C_K` on a log-spaced grid of `s in (theta, t]` with
/// `|K(s,theta) - K(s,theta')| <= C_K ((theta-theta')/(theta theta'))^gamma
/// theta^b (s-theta)^b`, `b = H - 1/2 - gamma`. The ratio vanishes as
/// `s -> theta`, so the grid sup is attained in the interior.
pub fn kernel_difference_constant(p: &IteratedParams) -> f64 {
    let b = p.b();
    let scale =
        ((p.theta - p.theta_prime) / (p.theta * p.theta_prime)).powf(p.gamma) * p.theta.powf(b);
    let span = p.t - p.theta;
    let n = 400;
    (0..=n)
        .map(|i| {
            let r = span * 10f64.powf(-10.0 * (1.0 - i as f64 / n as f64));
            p.kappa(true, r) / (scale * r.powf(b))
        })
        .fold(0.0, f64::max)
}

/// Leading exponent of the level-`j` partial integral at `theta`.
fn exponents(p: &IteratedParams) -> Vec<f64> {
    let a = p.h - 0.5;
    let mut out = Vec::with_capacity(p.w.len());
    let mut prev = -1.0;
    for (&w, &e) in p.w.iter().zip(&p.eps) {
        let k = if e { a } else { 0.0 };
        prev = k + w + prev + 1.0;
        out.push(prev);
    }
    out
}

/// `F_j(r) = kappa_j(r) int_0^r (r - rho)^{w_j} F_{j-1}(rho) d rho` with
/// `F_0 = delta_0`, so `F_1(r) = kappa_1(r) r^{w_1}`.
fn level(p: &IteratedParams, ex: &[f64], j: usize, r: f64) -> f64 {
    let k = p.kappa(p.eps[j], r);
    if j == 0 {
        return k * r.powf(p.w[0]);
    }
    let inner = endpoint_graded(
        |rho, _, right| right.powf(p.w[j]) * level(p, ex, j - 1, rho),
        0.0,
        r,
        ex[j - 1],
        p.w[j],
        DEGREE,
    );
    k * inner
}

/// The left side by nested singular quadrature. Cost grows like
/// `(2 DEGREE)^m`, hence the cap `m <= 3`.
pub fn iterated_integral_numeric(p: &IteratedParams) -> Result<f64> {
    p.validate()?;
    let m = p.w.len();
    if m > 3 {
        return Err(Error::SizeGuard(format!(
            "direct quadrature supports m <= 3, got {m}"
        )));
    }
    let ex = exponents(p);
    Ok(endpoint_graded(
        |r, _, _| level(p, &ex, m - 1, r),
        0.0,
        p.t - p.theta,
        ex[m - 1],
        0.0,
        DEGREE,
    ))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IteratedBound {
    pub m: usize,
    pub lhs: f64,
    /// `C_K^{sum eps} (..)^{gamma sum eps} theta^{b sum eps} Pi_gamma (t-theta)^E / E`.
    pub bound: f64,
    pub pi_gamma: f64,
    /// `E = sum w + b sum eps + m`.
    pub exponent: f64,
    pub c_k: f64,
    /// Smallest `C` for which the lemma's displayed right side (with
    /// `C^m` in front) dominates the computed left side.
    pub implied_c: f64,
    /// Exact Dirichlet value when every `eps_j = 0`.
    pub classical: Option<f64>,
    pub holds: bool,
}

/// Quadrature slack on the one-sided comparison.
pub const BOUND_SLACK: f64 = 0.05;

pub fn iterated_integral_bound(p: &IteratedParams) -> Result<IteratedBound> {
    let lhs = iterated_integral_numeric(p)?;
    let m = p.w.len();
    let ne = p.n_eps();
    let b = p.b();
    let span = p.t - p.theta;
    let exponent = p.w.iter().sum::<f64>() + b * ne + m as f64;
    let pi = pi_gamma(p.h, p.gamma, &p.w, &p.eps);
    let (c_k, prefactor) = if ne > 0.0 {
        let c_k = kernel_difference_constant(p);
        let theta_part = ((p.theta - p.theta_prime) / (p.theta * p.theta_prime)).powf(p.gamma * ne)
            * p.theta.powf(b * ne);
        (c_k, theta_part)
    } else {
        (1.0, 1.0)
    };
    let lemma_unit = prefactor * pi * span.powf(exponent);
    let bound = c_k.powf(ne) * lemma_unit / exponent;
    Ok(IteratedBound {
        m,
        lhs,
        bound,
        pi_gamma: pi,
        exponent,
        c_k,
        implied_c: (lhs / lemma_unit).powf(1.0 / m as f64),
        classical: (ne == 0.0).then(|| dirichlet_integral(&p.w, span)),
        holds: lhs <= bound * (1.0 + BOUND_SLACK),
    })
}

/// A random parameter set satisfying the hypothesis, with `m` levels.
pub fn random_iterated_params(rng: &mut impl Rng, m: usize) -> IteratedParams {
    let h = rng.random_range(0.05..0.45);
    let gamma = h * rng.random_range(0.05..0.9);
    let theta = rng.random_range(0.1..0.8);
    let theta_prime = theta * rng.random_range(0.05..0.95);
    let t = theta + (1.0 - theta) * rng.random_range(0.05..1.0);
    let b = h - 0.5 - gamma;
    let eps: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
    let w = eps
        .iter()
        .map(|&e| {
            let lower = -1.0 - if e { b } else { 0.0 } + 0.05;
            rng.random_range(lower..0.5)
        })
        .collect();
    IteratedParams {
        h,
        gamma,
        theta,
        theta_prime,
        t,
        w,
        eps,
    }
}

// ---- weighted determinant integral over T_{2m}(0, 1) ----

fn simplex_regime(h: f64, d: usize) -> Result<(f64, f64)> {
    crate::fbm::check_hurst(h)?;
    if d == 0 {
        return Err(invalid("d", "dimension must be at least 1"));
    }
    let limit = 1.0 / (2.0 * (1.0 + d as f64));
    if h >= limit {
        return Err(Error::Hypothesis(format!(
            "need H < 1/(2(1+d)) = {limit}, got {h}"
        )));
    }
    let a = 0.5 - h * (1.0 + d as f64);
    Ok((a, a + 1.0))
}

fn ln_beta(x: f64, y: f64) -> f64 {
    ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)
}

/// `(2m)! prod_{j=1}^{2m} B(a, j b)` with `a = 1/2 - H(1+d)`, `b = a + 1`.
pub fn beta_product_bound(h: f64, d: usize, m: usize) -> Result<f64> {
    let (a, b) = simplex_regime(h, d)?;
    let ln: f64 = (1..=2 * m).map(|j| ln_beta(a, j as f64 * b)).sum();
    Ok((ln_gamma(2.0 * m as f64 + 1.0) + ln).exp())
}

/// The same bound after telescoping, using `Gamma((j+1) b) = (a + j b) Gamma(a + j b)`:
/// `Gamma(a)^{2m} Gamma(b) (2m)! / Gamma(a + 2mb) prod_{j<2m} (a + j b)`.
pub fn beta_product_gamma_form(h: f64, d: usize, m: usize) -> Result<f64> {
    let (a, b) = simplex_regime(h, d)?;
    let mf = m as f64;
    let ln = 2.0 * mf * ln_gamma(a) + ln_gamma(b) + ln_gamma(2.0 * mf + 1.0)
        - ln_gamma(a + 2.0 * mf * b)
        + (1..2 * m).map(|j| (a + j as f64 * b).ln()).sum::<f64>();
    Ok(ln.exp())
}

/// Closed form with the product written as a Gamma ratio,
/// `prod_{j<2m} (a + j b) = b^{2m-1} Gamma(2m + a/b) / Gamma(1 + a/b)`.
pub fn beta_product_ratio_form(h: f64, d: usize, m: usize) -> Result<f64> {
    let (a, b) = simplex_regime(h, d)?;
    let mf = m as f64;
    let k = h * (1.0 + d as f64);
    let ln = 2.0 * mf * ln_gamma(a) + ln_gamma(b) + ln_gamma(2.0 * mf + 1.0)
        - ln_gamma(-(0.5 + k) + mf * (3.0 - 2.0 * k) + 1.0)
        + (2.0 * mf - 1.0) * b.ln()
        + ln_gamma(-2.0 / (3.0 - 2.0 * k) + 2.0 * mf + 1.0)
        - ln_gamma(4.0 * (1.0 - k) / (3.0 - 2.0 * k));
    Ok(ln.exp())
}

/// `det Cov(B_u1, B_u2)` of one fBm component, in a cancellation-free
/// factored form: `4 det = (c - (sb - sa)^2)((sa + sb)^2 - c)` with
/// `sa = u1^H`, `sb = u2^H`, `c = (u2 - u1)^{2H}`; `c - sb^2` is formed
/// with `expm1` so both factors keep their accuracy as `u1 -> 0`.
fn det2(h: f64, u1: f64, u2: f64, gap: f64) -> f64 {
    let (sa, sb) = (u1.powf(h), u2.powf(h));
    let ln_ratio = if u1 < 0.5 * u2 {
        (-u1 / u2).ln_1p()
    } else {
        (gap / u2).ln()
    };
    let c_minus_b = u2.powf(2.0 * h) * (2.0 * h * ln_ratio).exp_m1();
    let cross = 2.0 * sa * sb;
    0.25 * (c_minus_b + cross - sa * sa) * (sa * sa + cross - c_minus_b)
}

/// Direct 2-fold adaptive quadrature of the `m = 1` integral
/// `2 int_{0<u1<u2<1} g(u1) g(u2) det^{-d/2} du`, `g(u) = (1-u)^{-1/2-H} u^{1/2-H}`.
/// The inner integrand also peaks near `u1 = 1` when `u2` is close to 1,
/// which fixed mapped rules miss; adaptive subdivision handles both.
pub fn simplex_integral_m1(h: f64, d: usize) -> Result<f64> {
    simplex_regime(h, d)?;
    let pw = -0.5 * d as f64;
    // g written with 1 - u passed separately, so both ends stay accurate
    let g = |u: f64, om: f64| om.powf(-0.5 - h) * u.powf(0.5 - h);
    let failed = std::cell::Cell::new(None);
    let guard = |r: Result<f64>| {
        r.unwrap_or_else(|e| {
            failed.set(Some(e));
            f64::NAN
        })
    };
    // near u1 = u2 integrate in the gap v = u2 - u1
    let inner = |u2: f64, om2: f64| {
        let lo = |u1: f64| g(u1, 1.0 - u1) * det2(h, u1, u2, u2 - u1).powf(pw);
        let hi = |v: f64| g(u2 - v, om2 + v) * det2(h, u2 - v, u2, v).powf(pw);
        // (om2 + v)^{-1/2-H} varies on the scale om2: geometric breakpoints
        let breaks: Vec<f64> = (0..40)
            .map(|k| om2 * 4f64.powi(k))
            .take_while(|&b| b < 0.5 * u2)
            .collect();
        guard(integrate(&lo, 0.0, 0.5 * u2, 1e-11))
            + guard(integrate_split(&hi, 0.0, 0.5 * u2, &breaks, 1e-11))
    };
    let left = integrate(
        &|u2: f64| g(u2, 1.0 - u2) * inner(u2, 1.0 - u2),
        0.0,
        0.5,
        1e-11,
    );
    let right = integrate(&|w: f64| g(1.0 - w, w) * inner(1.0 - w, w), 0.0, 0.5, 1e-11);
    if let Some(e) = failed.take() {
        return Err(e);
    }
    Ok(factorial(2) * (left? + right?))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimplexMomentReport {
    pub m: usize,
    pub bound: f64,
    pub gamma_form: f64,
    pub ratio_form: f64,
    /// Direct quadrature, `m = 1` only.
    pub direct: Option<f64>,
    pub forms_agree: bool,
    pub direct_below_bound: Option<bool>,
}

pub fn simplex_moment_bound_check(m: usize, h: f64, d: usize) -> Result<SimplexMomentReport> {
    if m == 0 {
        return Err(invalid("m", "need m >= 1"));
    }
    let bound = beta_product_bound(h, d, m)?;
    let gamma_form = beta_product_gamma_form(h, d, m)?;
    let ratio_form = beta_product_ratio_form(h, d, m)?;
    let direct = if m == 1 {
        Some(simplex_integral_m1(h, d)?)
    } else {
        None
    };
    let rel = |x: f64| ((x - bound) / bound).abs();
    Ok(SimplexMomentReport {
        m,
        bound,
        gamma_form,
        ratio_form,
        direct,
        forms_agree: rel(gamma_form) < 1e-10 && rel(ratio_form) < 1e-10,
        direct_below_bound: direct.map(|v| v <= bound),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthAudit {
    /// `bound(m+1) / bound(m)` for `m = 1..`.
    pub ratios: Vec<f64>,
    /// `ratio / (m+1)^{2H(1+d)}`.
    pub stated_constants: Vec<f64>,
    /// `ratio / (m+1)^{1+2H(1+d)}`.
    pub corrected_constants: Vec<f64>,
    pub stated_consistent: bool,
    pub corrected_consistent: bool,
}

/// Largest spread `max/min` of implied constants that counts as a trend.
pub const GROWTH_SPREAD: f64 = 1.25;

/// Ratio audit of the Beta-product bound for `m = 1..=m_max`. The bound
/// behaves like `K^m (m!)^{1 + 2H(1+d)}`: `(2m)!` contributes `(m!)^2`
/// and `prod B(a, jb) ~ ((2m)!)^{-a}`. Implied constants are reported for
/// both that exponent and `2H(1+d)`.
pub fn simplex_growth_audit(h: f64, d: usize, m_max: usize) -> Result<GrowthAudit> {
    let k = 2.0 * h * (1.0 + d as f64);
    let bounds: Vec<f64> = (1..=m_max + 1)
        .map(|m| beta_product_bound(h, d, m))
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = bounds.windows(2).map(|w| w[1] / w[0]).collect();
    let scaled = |e: f64| -> Vec<f64> {
        ratios
            .iter()
            .enumerate()
            .map(|(i, r)| r / ((i + 2) as f64).powf(e))
            .collect()
    };
    let spread = |v: &[f64]| {
        let hi = v.iter().copied().fold(f64::MIN, f64::max);
        let lo = v.iter().copied().fold(f64::MAX, f64::min);
        hi / lo
    };
    let stated_constants = scaled(k);
    let corrected_constants = scaled(1.0 + k);
    Ok(GrowthAudit {
        stated_consistent: spread(&stated_constants) <= GROWTH_SPREAD,
        corrected_consistent: spread(&corrected_constants) <= GROWTH_SPREAD,
        ratios,
        stated_constants,
        corrected_constants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn params(w: Vec<f64>, eps: Vec<bool>) -> IteratedParams {
        IteratedParams {
            h: 0.1,
            gamma: 0.05,
            theta: 0.4,
            theta_prime: 0.2,
            t: 1.0,
            w,
            eps,
        }
    }

    #[test]
    fn single_flat_level() {
        let r = iterated_integral_bound(&params(vec![0.0], vec![false])).unwrap();
        assert!((r.lhs - 0.6).abs() < 1e-13 && (r.bound - 0.6).abs() < 1e-13);
    }

    #[test]
    fn classical_formula() {
        let r = iterated_integral_bound(&params(vec![-0.3, -0.6], vec![false, false])).unwrap();
        let exact = r.classical.unwrap();
        assert!(((r.lhs - exact) / exact).abs() < 1e-8, "{} {exact}", r.lhs);
        assert!(((r.bound - exact) / exact).abs() < 1e-12);
        let p3 = params(vec![0.2, -0.5, -0.1], vec![false; 3]);
        let r = iterated_integral_bound(&p3).unwrap();
        assert!(
            ((r.lhs - r.classical.unwrap()) / r.lhs).abs() < 1e-7,
            "{r:?}"
        );
    }

    #[test]
    fn pi_gamma_telescopes_without_kernels() {
        // Pi(m) = prod Gamma(w_j+1) / Gamma(sum w + m)
        let w = [0.3, -0.2, 0.5];
        let pi = pi_gamma(0.2, 0.1, &w, &[false; 3]);
        let direct = w
            .iter()
            .map(|x| statrs::function::gamma::gamma(x + 1.0))
            .product::<f64>()
            / statrs::function::gamma::gamma(0.6 + 3.0);
        assert!((pi - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn documented_kernel_instance() {
        let r = iterated_integral_bound(&params(vec![-0.3, -0.3], vec![true, false])).unwrap();
        assert!(r.holds && r.lhs > 0.0, "{r:?}");
        assert!(r.implied_c.is_finite());
    }

    #[test]
    fn hypothesis_enforced() {
        let bad = params(vec![-0.6], vec![true]);
        assert!(matches!(
            iterated_integral_bound(&bad),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn random_draws_hold() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for m in 1..=2 {
            for _ in 0..4 {
                let p = random_iterated_params(&mut rng, m);
                let r = iterated_integral_bound(&p).unwrap();
                assert!(r.holds, "{p:?} {r:?}");
            }
        }
    }

    #[test]
    fn beta_product_forms_agree() {
        for (h, d) in [(0.1, 1), (0.05, 2), (0.2, 1)] {
            for m in 1..=3 {
                let r = simplex_moment_bound_check(m, h, d).unwrap();
                assert!(r.forms_agree, "{r:?}");
            }
        }
        // m = 1 by hand: 2 B(0.3, 1.3) B(0.3, 2.6)
        let b = |x: f64, y: f64| crate::special::beta(x, y);
        let want = 2.0 * b(0.3, 1.3) * b(0.3, 2.6);
        assert!((beta_product_bound(0.1, 1, 1).unwrap() - want).abs() < 1e-12 * want);
    }

    #[test]
    fn direct_m1_below_bound() {
        // independent tanh-sinh evaluation: 6.3480597354 for H = 0.1, d = 1
        let r = simplex_moment_bound_check(1, 0.1, 1).unwrap();
        let v = r.direct.unwrap();
        assert!((v - 6.3480597354).abs() < 1e-6, "{v}");
        assert_eq!(r.direct_below_bound, Some(true));
        assert!(simplex_moment_bound_check(1, 0.05, 2)
            .unwrap()
            .direct_below_bound
            .unwrap());
    }

    #[test]
    fn growth_trend() {
        let g = simplex_growth_audit(0.1, 1, 3).unwrap();
        assert!(g.corrected_consistent, "{g:?}");
        assert!(!g.stated_consistent);
        assert!(matches!(
            simplex_moment_bound_check(1, 0.3, 1),
            Err(Error::Hypothesis(_))
        ));
    }
}
