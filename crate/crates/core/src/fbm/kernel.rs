//! The Volterra kernel
//!
//! `K_H(t,s) = c_H [ (t/s)^{H-1/2} (t-s)^{H-1/2}
//!             - (H-1/2) s^{1/2-H} int_s^t u^{H-3/2} (u-s)^{H-1/2} du ]`
//!
//! with `c_H = sqrt(2H / ((1-2H) B(1-2H, H+1/2)))`.
//!
//! The substitution `u = s / (1 - z)` turns the inner integral into
//! `s^{2H-1} B(1 - s/t; H+1/2, 1-2H)`, which gives a closed form used on
//! hot paths. [`kernel_k_quadrature`] evaluates the inner integral by
//! adaptive quadrature instead and serves as its oracle.

use crate::error::{invalid, Result};
use crate::quadrature::{gauss_legendre, integrate_split};
use crate::special::{beta, incomplete_beta};

use super::check_hurst;

pub fn c_h(h: f64) -> f64 {
    (2.0 * h / ((1.0 - 2.0 * h) * beta(1.0 - 2.0 * h, h + 0.5))).sqrt()
}

fn check_args(h: f64, t: f64, s: f64) -> Result<()> {
    check_hurst(h)?;
    if !(s > 0.0 && s < t) {
        return Err(invalid(
            "s",
            format!("need 0 < s < t, got s = {s}, t = {t}"),
        ));
    }
    Ok(())
}

/// `K_H(t, s)` for `0 < s < t`, closed form.
pub fn kernel_k(h: f64, t: f64, s: f64) -> Result<f64> {
    check_args(h, t, s)?;
    Ok(kernel_unchecked(h, t, s))
}

#[inline]
pub(crate) fn kernel_unchecked(h: f64, t: f64, s: f64) -> f64 {
    let a = h - 0.5;
    let first = (t / s).powf(a) * (t - s).powf(a);
    let inner = incomplete_beta(1.0 - s / t, h + 0.5, 1.0 - 2.0 * h);
    c_h(h) * (first - a * s.powf(a) * inner)
}

/// `K_H(s + r, s)` for `s, r > 0`, written in terms of the offset `r` so
/// that `r << s` keeps full relative accuracy.
pub fn kernel_k_offset(h: f64, s: f64, r: f64) -> f64 {
    let a = h - 0.5;
    let t = s + r;
    let first = (t / s).powf(a) * r.powf(a);
    let inner = incomplete_beta(r / t, h + 0.5, 1.0 - 2.0 * h);
    c_h(h) * (first - a * s.powf(a) * inner)
}

/// `K_H(t, s)` with the inner integral computed by adaptive quadrature.
pub fn kernel_k_quadrature(h: f64, t: f64, s: f64) -> Result<f64> {
    check_args(h, t, s)?;
    let a = h - 0.5;
    // r = u - s puts the (u - s)^{H-1/2} singularity at the origin; the
    // integrand changes scale at r = s.
    let f = |r: f64| (s + r).powf(h - 1.5) * r.powf(a);
    let scale = s.powf(2.0 * h - 1.0);
    let inner = integrate_split(&f, 0.0, t - s, &[s], 1e-14 * scale)?;
    let first = (t / s).powf(a) * (t - s).powf(a);
    Ok(c_h(h) * (first - a * s.powf(-a) * inner))
}

/// `d/dt K_H(t, s) = c_H (H - 1/2) (t/s)^{H-1/2} (t - s)^{H-3/2}`.
pub fn kernel_dt(h: f64, t: f64, s: f64) -> f64 {
    c_h(h) * (h - 0.5) * (t / s).powf(h - 0.5) * (t - s).powf(h - 1.5)
}

/// `G(t, s) = int_0^s K_H(t, r) dr` for `0 <= s <= t`.
///
/// By homogeneity `G(t, s) = t^{H+1/2} g(s/t)` where
/// `g(x) = c_H/(H+1/2) [B(x; 3/2-H, H+1/2) + (1/2-H) x^{H+1/2} B(1-x; H+1/2, 1-2H)]`.
pub fn kernel_primitive(h: f64, t: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let p = h + 0.5;
    let x = (s / t).min(1.0);
    let g = c_h(h) / p
        * (incomplete_beta(x, 1.5 - h, p)
            + (0.5 - h) * x.powf(p) * incomplete_beta(1.0 - x, p, 1.0 - 2.0 * h));
    t.powf(p) * g
}

/// `int_0^{min(t,s)} K_H(t,u) K_H(s,u) du`, which reproduces `R_H(t, s)`.
///
/// Both endpoint singularities are removed by the power substitutions
/// `u ~ w^{1/(2H)}` at the origin and `s - u ~ w^{1/(2H)}` at the upper end
/// (the latter covers the `(s-u)^{2H-1}` diagonal case `t = s`); each half is integrated with an `n/2`-point composite
/// Gauss-Legendre rule.
pub fn kernel_product_integral(h: f64, t: f64, s: f64, n: usize) -> Result<f64> {
    check_hurst(h)?;
    let (t, s) = if t >= s { (t, s) } else { (s, t) };
    if s <= 0.0 {
        return Ok(0.0);
    }
    let rule = gauss_legendre(8);
    let panels = (n / 2 / rule.degree()).max(1);
    let half = 0.5 * s;
    let q0 = 1.0 / (2.0 * h);
    let q1 = q0;
    // `gap = s - u` is carried separately: at small H the substitution
    // makes it far smaller than ulp(s)
    let kk = |u: f64, gap: f64| {
        if u <= 0.0 || gap <= 0.0 {
            return 0.0;
        }
        let a = if t > s {
            kernel_k_offset(h, u, t - s + gap)
        } else {
            kernel_k_offset(h, u, gap)
        };
        a * kernel_k_offset(h, u, gap)
    };
    let mut total = 0.0;
    for p in 0..panels {
        let (w0, w1) = (p as f64 / panels as f64, (p + 1) as f64 / panels as f64);
        for (w, wt) in rule.on(w0, w1) {
            // lower half, u = (s/2) w^{q0}
            let u = half * w.powf(q0);
            total += wt * kk(u, s - u) * half * q0 * w.powf(q0 - 1.0);
            // upper half, u = s - (s/2) w^{q1}
            let d = half * w.powf(q1);
            total += wt * kk(s - d, d) * half * q1 * w.powf(q1 - 1.0);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::covariance;
    use crate::quadrature::integrate;
    use crate::special::gamma;

    #[test]
    fn c_h_at_quarter_via_gamma() {
        let b = gamma(0.5) * gamma(0.75) / gamma(1.25);
        let want = (0.5 / (0.5 * b)).sqrt();
        assert!((c_h(0.25) - want).abs() < 1e-14);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for &h in &[0.05, 0.1, 0.25, 0.4] {
            for &(t, s) in &[(1.0, 0.5), (1.0, 0.01), (0.3, 0.29), (2.0, 1e-4)] {
                let a = kernel_k(h, t, s).unwrap();
                let b = kernel_k_quadrature(h, t, s).unwrap();
                assert!(
                    (a - b).abs() < 1e-10 * a.abs(),
                    "H={h} t={t} s={s}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn rejects_boundary() {
        assert!(kernel_k(0.2, 1.0, 1.0).is_err());
        assert!(kernel_k(0.2, 1.0, 0.0).is_err());
        assert!(kernel_k(0.6, 1.0, 0.5).is_err());
    }

    #[test]
    fn primitive_matches_quadrature() {
        for &h in &[0.1, 0.3] {
            let t = 0.8;
            for &s in &[0.1, 0.4, 0.8] {
                let q = integrate(&|r: f64| kernel_unchecked(h, t, r), 0.0, s, 1e-13).unwrap();
                let g = kernel_primitive(h, t, s);
                assert!((q - g).abs() < 1e-9 * g, "H={h} s={s}: {q} vs {g}");
            }
        }
    }

    #[test]
    fn product_integral_reproduces_covariance() {
        let h = 0.2;
        for &(t, s) in &[(1.0, 0.5), (0.7, 0.7), (0.9, 0.2)] {
            let v = kernel_product_integral(h, t, s, 4096).unwrap();
            let r = covariance(h, t, s);
            assert!((v - r).abs() < 1e-6 * r, "{t} {s}: {v} vs {r}");
        }
    }

    #[test]
    fn time_derivative_matches_difference() {
        let (h, t, s) = (0.2, 0.9, 0.4);
        let e = 1e-6;
        let fd = (kernel_unchecked(h, t + e, s) - kernel_unchecked(h, t - e, s)) / (2.0 * e);
        assert!((fd - kernel_dt(h, t, s)).abs() < 1e-6 * fd.abs());
    }
}
