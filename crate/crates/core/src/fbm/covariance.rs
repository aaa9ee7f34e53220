use nalgebra::DMatrix;

/// `R_H(t, s) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2`.
pub fn covariance(h: f64, t: f64, s: f64) -> f64 {
    let p = 2.0 * h;
    0.5 * (t.powf(p) + s.powf(p) - (t - s).abs().powf(p))
}

/// `E|B_t - B_s|^2` for one component.
pub fn increment_variance(h: f64, t: f64, s: f64) -> f64 {
    (t - s).abs().powf(2.0 * h)
}

pub fn covariance_matrix(h: f64, times: &[f64]) -> DMatrix<f64> {
    let n = times.len();
    DMatrix::from_fn(n, n, |i, j| covariance(h, times[i], times[j]))
}
