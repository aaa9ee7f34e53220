//! The adjoint operator
//! `(K* phi)(s) = K_H(T,s) phi(s) + int_s^T (phi(t) - phi(s)) dK_H/dt(t,s) dt`.
//!
//! Grid values are read as a left-open step function, `phi = v_j` on
//! `(t_j, t_{j+1}]`. For such inputs the `dt` integral telescopes exactly:
//! for `s` in cell `i`,
//! `(K* phi)(s) = v_i K_H(t_{i+1}, s) + sum_{j>i} v_j (K_H(t_{j+1}, s) - K_H(t_j, s))`,
//! so no quadrature of the strongly singular `dK/dt` is needed and
//! indicators `1_{[0,t_m]}` map to `K_H(t_m, .)` without discretization error.

use crate::error::{invalid, Result};
use crate::grid::GridFunction;

use super::check_hurst;
use super::kernel::kernel_unchecked;

/// `K* phi` at the midpoints of the cells of `phi`'s grid (which must start
/// at 0); the last node is the horizon `T`.
pub fn kstar_apply(h: f64, phi: &GridFunction) -> Result<GridFunction> {
    let x = phi.nodes();
    let mids: Vec<f64> = x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let vals = kstar_apply_at(h, phi, &mids)?;
    GridFunction::new(mids, vals)
}

/// `K* phi` at arbitrary points in `(0, T)`.
pub fn kstar_apply_at(h: f64, phi: &GridFunction, points: &[f64]) -> Result<Vec<f64>> {
    check_hurst(h)?;
    let x = phi.nodes();
    if x[0] != 0.0 {
        return Err(invalid("phi", "grid must start at 0"));
    }
    // v_j is the value on (t_j, t_{j+1}], i.e. the right node value.
    let v = &phi.values()[1..];
    let n = v.len();
    points
        .iter()
        .map(|&s| {
            if !(s > 0.0 && s < phi.b()) {
                return Err(invalid("s", format!("{s} outside (0, T)")));
            }
            // a node is assigned to the cell on its right (a null set for K*)
            let i = x.partition_point(|&t| t <= s) - 1;
            let mut acc = v[i] * kernel_unchecked(h, x[i + 1], s);
            let mut prev = kernel_unchecked(h, x[i + 1], s);
            for j in i + 1..n {
                let next = kernel_unchecked(h, x[j + 1], s);
                acc += v[j] * (next - prev);
                prev = next;
            }
            Ok(acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::covariance;

    #[test]
    fn indicator_maps_to_kernel() {
        let h = 0.2;
        let tm = 0.625;
        let phi = GridFunction::uniform(0.0, 1.0, 16, |t| if t <= tm { 1.0 } else { 0.0 }).unwrap();
        let out = kstar_apply(h, &phi).unwrap();
        for (&s, &v) in out.nodes().iter().zip(out.values()) {
            let want = if s < tm {
                kernel_unchecked(h, tm, s)
            } else {
                0.0
            };
            assert!((v - want).abs() < 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let phi = GridFunction::uniform(0.0, 1.0, 8, |_| 0.0).unwrap();
        assert!(kstar_apply(0.3, &phi)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn isometry_on_indicators() {
        // <K* 1_[0,t], K* 1_[0,s]> = R_H(t, s)
        let h = 0.3;
        let (t, s) = (0.75, 0.5);
        let phi_t = GridFunction::uniform(0.0, 1.0, 4, |u| if u <= t { 1.0 } else { 0.0 }).unwrap();
        let phi_s = GridFunction::uniform(0.0, 1.0, 4, |u| if u <= s { 1.0 } else { 0.0 }).unwrap();
        // integrate the product on (0, s) with graded points away from both ends
        let v = crate::quadrature::integrate(
            &|u: f64| {
                let a = kstar_apply_at(h, &phi_t, &[u]).unwrap()[0];
                let b = kstar_apply_at(h, &phi_s, &[u]).unwrap()[0];
                a * b
            },
            0.0,
            s,
            1e-9,
        )
        .unwrap();
        let r = covariance(h, t, s);
        assert!((v - r).abs() < 1e-6, "{v} vs {r}");
    }
}
