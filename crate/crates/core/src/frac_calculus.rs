//! Riemann-Liouville fractional integrals and derivatives on grid functions.
//!
//! All four operators use product integration: the grid function is
//! interpolated linearly and integrated exactly against the singular
//! weight. Derivatives use the Marchaud form
//!
//! `D^a f(x) = [f(x)/(x-a)^a + a * int_a^x (f(x)-f(y))/(x-y)^{1+a} dy] / Gamma(1-a)`
//!
//! so no numerical differentiation is involved. The endpoint where the
//! `(x-a)^{-a}` term diverges is reported as undefined.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{EndpointSingular, GridFunction};
use crate::special::gamma;

/// Fractional order in `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(invalid("alpha", format!("{alpha} is not in (0, 1)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for FracOrder {
    type Error = crate::error::Error;
    fn try_from(a: f64) -> Result<Self> {
        Self::new(a)
    }
}

/// Moments of the weight `r^{beta-1}` over `[near, far]`, where `r` is the
/// distance to the singular point.
#[inline]
fn cell_moments(near: f64, far: f64, beta: f64) -> (f64, f64) {
    // m0 = int_near^far r^{beta-1} dr
    // m1 = int_near^far r^{beta-1} (far - r) dr
    let pn = near.powf(beta);
    let pf = far.powf(beta);
    let m0 = (pf - pn) / beta;
    let m1 = far * m0 - (pf * far - pn * near) / (beta + 1.0);
    (m0, m1)
}

/// Left integral `I^a_{a+} f` at every node.
pub fn rl_integral_left(f: &GridFunction, alpha: FracOrder) -> Result<GridFunction> {
    f.with_values(integral_left_values(f.nodes(), f.values(), alpha.value()))
}

pub(crate) fn integral_left_values(x: &[f64], v: &[f64], alpha: f64) -> Vec<f64> {
    let g = gamma(alpha);
    let mut out = vec![0.0; x.len()];
    for i in 1..x.len() {
        let b = x[i];
        let mut acc = 0.0;
        for j in 0..i {
            let h = x[j + 1] - x[j];
            // distance r = b - y; the cell [x_j, x_{j+1}] maps to [b - x_{j+1}, b - x_j],
            // and f_lin = v_j + (v_{j+1} - v_j) * ((b - x_j) - r) / h
            let (m0, m1) = cell_moments(b - x[j + 1], b - x[j], alpha);
            acc += v[j] * m0 + (v[j + 1] - v[j]) * m1 / h;
        }
        out[i] = acc / g;
    }
    out
}

/// Right integral `I^a_{b-} f` at every node.
pub fn rl_integral_right(f: &GridFunction, alpha: FracOrder) -> Result<GridFunction> {
    let x = f.nodes();
    let v = f.values();
    let a = alpha.value();
    let g = gamma(a);
    let n = x.len();
    let mut out = vec![0.0; n];
    for (i, slot) in out.iter_mut().enumerate().take(n - 1) {
        let s = x[i];
        let mut acc = 0.0;
        for j in i..n - 1 {
            let h = x[j + 1] - x[j];
            // r = y - s over [x_j - s, x_{j+1} - s]; f_lin = v_{j+1} - (v_{j+1} - v_j) * ((x_{j+1} - s) - r) / h
            let (m0, m1) = cell_moments(x[j] - s, x[j + 1] - s, a);
            acc += v[j + 1] * m0 - (v[j + 1] - v[j]) * m1 / h;
        }
        *slot = acc / g;
    }
    f.with_values(out)
}

/// Left Marchaud derivative `D^a_{a+} f`; the first node is undefined.
pub fn rl_derivative_left(f: &GridFunction, alpha: FracOrder) -> Result<EndpointSingular> {
    let x = f.nodes();
    let v = f.values();
    let a = alpha.value();
    let g = gamma(1.0 - a);
    let mut out = vec![f64::NAN; x.len()];
    for i in 1..x.len() {
        let b = x[i];
        let fi = v[i];
        let mut acc = 0.0;
        for j in 0..i - 1 {
            let h = x[j + 1] - x[j];
            // fi - f_lin = (fi - v_j) - (v_{j+1} - v_j) * ((b - x_j) - r) / h
            let (m0, m1) = cell_moments(b - x[j + 1], b - x[j], -a);
            acc += (fi - v[j]) * m0 - (v[j + 1] - v[j]) * m1 / h;
        }
        let h = x[i] - x[i - 1];
        acc += (fi - v[i - 1]) / h * h.powf(1.0 - a) / (1.0 - a);
        out[i] = (fi / (b - x[0]).powf(a) + a * acc) / g;
    }
    Ok(EndpointSingular {
        nodes: x.to_vec(),
        values: out,
        singular_node: 0,
    })
}

/// Right Marchaud derivative `D^a_{b-} f`; the last node is undefined.
pub fn rl_derivative_right(f: &GridFunction, alpha: FracOrder) -> Result<EndpointSingular> {
    let x = f.nodes();
    let v = f.values();
    let a = alpha.value();
    let g = gamma(1.0 - a);
    let n = x.len();
    let b = x[n - 1];
    let mut out = vec![f64::NAN; n];
    for i in 0..n - 1 {
        let s = x[i];
        let fi = v[i];
        let h = x[i + 1] - x[i];
        let mut acc = -(v[i + 1] - fi) / h * h.powf(1.0 - a) / (1.0 - a);
        for j in i + 1..n - 1 {
            let h = x[j + 1] - x[j];
            let (m0, m1) = cell_moments(x[j] - s, x[j + 1] - s, -a);
            acc += (fi - v[j + 1]) * m0 + (v[j + 1] - v[j]) * m1 / h;
        }
        out[i] = (fi / (b - s).powf(a) + a * acc) / g;
    }
    Ok(EndpointSingular {
        nodes: x.to_vec(),
        values: out,
        singular_node: n - 1,
    })
}
