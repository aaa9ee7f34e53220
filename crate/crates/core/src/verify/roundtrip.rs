//! Fractional-calculus round trips against power-rule closed forms.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::frac_calculus::{
    rl_derivative_left, rl_derivative_right, rl_integral_left, rl_integral_right, FracOrder,
};
use crate::grid::GridFunction;
use crate::special::gamma;

/// Max abs error of `I^a_{0+} x^mu` against `Gamma(mu+1)/Gamma(mu+1+a) x^{mu+a}` on `[0, 1]`.
pub fn power_rule_integral_error(alpha: f64, mu: f64, n: usize) -> Result<f64> {
    let a = FracOrder::new(alpha)?;
    let f = GridFunction::uniform(0.0, 1.0, n, |x| x.powf(mu))?;
    let c = gamma(mu + 1.0) / gamma(mu + 1.0 + alpha);
    let out = rl_integral_left(&f, a)?;
    Ok(out
        .nodes()
        .iter()
        .zip(out.values())
        .map(|(&x, &v)| (v - c * x.powf(mu + alpha)).abs())
        .fold(0.0, f64::max))
}

/// Max abs error of `D^a_{0+} x^mu` against `Gamma(mu+1)/Gamma(mu+1-a) x^{mu-a}`
/// over the defined nodes (`mu >= a` so the target stays bounded).
pub fn power_rule_derivative_error(alpha: f64, mu: f64, n: usize) -> Result<f64> {
    let a = FracOrder::new(alpha)?;
    let f = GridFunction::uniform(0.0, 1.0, n, |x| x.powf(mu))?;
    let c = gamma(mu + 1.0) / gamma(mu + 1.0 - alpha);
    let out = rl_derivative_left(&f, a)?;
    Ok(out
        .defined()
        .map(|(x, v)| (v - c * x.powf(mu - alpha)).abs())
        .fold(0.0, f64::max))
}

fn smooth(x: f64) -> f64 {
    (3.0 * x).sin() + x * x
}

/// `max |D^a(I^a f) - f|` over the interior nodes for a smooth `f`.
pub fn derivative_of_integral_error(alpha: f64, n: usize) -> Result<f64> {
    let a = FracOrder::new(alpha)?;
    let f = GridFunction::uniform(0.0, 1.0, n, smooth)?;
    let back = rl_derivative_left(&rl_integral_left(&f, a)?, a)?;
    let last = f.len() - 1;
    Ok(back
        .values
        .iter()
        .zip(f.values())
        .enumerate()
        .filter(|(i, _)| *i != 0 && *i != last)
        .map(|(_, (b, v))| (b - v).abs())
        .fold(0.0, f64::max))
}

/// `max |I^a_{1-}(D^a_{1-} f) - f|` for `f = (1-x)^mu`, `mu > a`, which
/// lies in the image class; the undefined endpoint value is the limit 0.
pub fn right_integral_of_derivative_error(alpha: f64, mu: f64, n: usize) -> Result<f64> {
    let a = FracOrder::new(alpha)?;
    let f = GridFunction::uniform(0.0, 1.0, n, |x| (1.0 - x).powf(mu))?;
    let d = rl_derivative_right(&f, a)?.complete_with(0.0)?;
    let back = rl_integral_right(&d, a)?;
    Ok(back.max_abs_diff(&f))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Refinement {
    pub coarse: f64,
    pub fine: f64,
    /// `coarse / fine`; at least 2 means the error halves.
    pub ratio: f64,
}

pub fn refine(f: impl Fn(usize) -> Result<f64>, n: usize) -> Result<Refinement> {
    let (coarse, fine) = (f(n)?, f(2 * n)?);
    Ok(Refinement {
        coarse,
        fine,
        ratio: coarse / fine,
    })
}
