//! Quadrature rules: fixed Gauss-Legendre panels and adaptive Gauss-Kronrod.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;

use gkquad::single::Integrator;
use gkquad::{RuntimeError, Tolerance};

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GlRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GlRule {
    fn build(degree: usize) -> Self {
        let rule = GaussLegendre::new(NonZeroUsize::new(degree.max(1)).unwrap());
        let (nodes, weights) = rule.iter().map(|(x, w)| (*x, *w)).unzip();
        Self { nodes, weights }
    }

    pub fn degree(&self) -> usize {
        self.nodes.len()
    }

    /// Iterates `(x, w)` mapped onto `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (b - a);
        let m = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (m + c * x, c * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Shared Gauss-Legendre rule of the given degree (cached).
pub fn gauss_legendre(degree: usize) -> Arc<GlRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GlRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(degree)
        .or_insert_with(|| Arc::new(GlRule::build(degree)))
        .clone()
}

/// Adaptive Gauss-Kronrod integration with Wynn extrapolation (QUADPACK
/// QAGS/QAGP). Handles integrable endpoint singularities; interior ones
/// should be passed as breakpoints to [`integrate_split`]. A strong
/// singularity at a nonzero endpoint loses accuracy to floating-point
/// resolution of `x`; callers shift such integrands so it sits at 0.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    integrate_split(f, a, b, &[], tol)
}

/// Relative accuracy requested alongside every absolute tolerance.
const REL_TOL: f64 = 1e-13;

/// Integrates over `[a, b]` with known difficult interior points.
pub fn integrate_split(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    let run = |abs: f64, rel: f64| {
        Integrator::new(|x: f64| f(x))
            .tolerance(Tolerance::AbsOrRel(abs, rel))
            .max_iters(4000)
            .points(&pts)
            .run(a..b)
            .estimate()
    };
    match run(tol, REL_TOL) {
        Ok(v) if v.is_finite() => Ok(v),
        // Roundoff-limited: accept what a 100x looser request can certify.
        Err(RuntimeError::RoundoffError) => match run(100.0 * tol, 100.0 * REL_TOL) {
            Ok(v) if v.is_finite() => Ok(v),
            other => Err(Error::QuadratureFailed(format!("[{a}, {b}]: {other:?}"))),
        },
        other => Err(Error::QuadratureFailed(format!("[{a}, {b}]: {other:?}"))),
    }
}

/// Integrates a function with an algebraic endpoint singularity at `a`
/// on geometrically graded Gauss-Legendre panels. Cheap and deterministic,
/// for hot loops where adaptive integration would be too costly.
pub fn graded_left(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, degree: usize) -> f64 {
    let rule = gauss_legendre(degree);
    let mut total = 0.0;
    let mut hi = b;
    let ratio = 0.15;
    for _ in 0..panels {
        let lo = a + (hi - a) * ratio;
        total += rule.integrate(lo, hi, &f);
        hi = lo;
    }
    // innermost panel: integrate the leftover sliver too
    total + rule.integrate(a, hi, &f)
}

/// `int_a^b f` where `f ~ (x-a)^{ea}` near `a` and `f ~ (b-x)^{eb}` near
/// `b` (exponents > -1). Each half of the interval is mapped by
/// `x = end + h y^q` with `q = 1/(1+e)`, which turns the leading power
/// into a constant, then integrated with `degree`-point Gauss-Legendre.
///
/// `f` receives `(x, x - a, b - x)` with both distances computed without
/// cancellation, so singular factors should be written in terms of them.
pub fn endpoint_graded(
    f: impl Fn(f64, f64, f64) -> f64,
    a: f64,
    b: f64,
    ea: f64,
    eb: f64,
    degree: usize,
) -> f64 {
    let rule = gauss_legendre(degree);
    let h = 0.5 * (b - a);
    let q = |e: f64| 1.0 / (1.0 + e);
    let (qa, qb) = (q(ea), q(eb));
    let left = rule.integrate(0.0, 1.0, |y| {
        let r = h * y.powf(qa);
        f(a + r, r, 2.0 * h - r) * h * qa * y.powf(qa - 1.0)
    });
    let right = rule.integrate(0.0, 1.0, |y| {
        let r = h * y.powf(qb);
        f(b - r, 2.0 * h - r, r) * h * qb * y.powf(qb - 1.0)
    });
    left + right
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_is_exact_on_polynomials() {
        let r = gauss_legendre(5);
        let v = r.integrate(0.0, 2.0, |x| x.powi(9));
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-11);
    }

    #[test]
    fn adaptive_endpoint_singularity() {
        let v = integrate(&|x: f64| x.powf(-0.7), 0.0, 1.0, 1e-11).unwrap();
        assert!((v - 1.0 / 0.3).abs() < 1e-9);
        let v = integrate(
            &|x: f64| x.powf(-0.7) * (1.0 - x).powf(-0.3),
            0.0,
            1.0,
            1e-11,
        )
        .unwrap();
        let want = crate::special::beta(0.3, 0.7);
        assert!((v - want).abs() < 1e-9 * want, "{v} {want}");
    }

    #[test]
    fn split_at_kink() {
        let v = integrate_split(&|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], 1e-12).unwrap();
        assert!((v - (0.045 + 0.245)).abs() < 1e-12);
    }

    #[test]
    fn graded_handles_weak_singularity() {
        let v = graded_left(|x| x.powf(-0.4), 0.0, 1.0, 40, 20);
        assert!((v - 1.0 / 0.6).abs() < 1e-8, "{v}");
    }

    #[test]
    fn endpoint_graded_beta() {
        // int_0^1 x^-0.6 (1-x)^-0.8 = B(0.4, 0.2)
        let v = endpoint_graded(
            |_, l, r| l.powf(-0.6) * r.powf(-0.8),
            0.0,
            1.0,
            -0.6,
            -0.8,
            24,
        );
        let exact = crate::special::beta(0.4, 0.2);
        assert!((v - exact).abs() < 1e-10 * exact, "{v} {exact}");
    }
}
