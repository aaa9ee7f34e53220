//! Gamma/Beta family used throughout.

pub use statrs::function::gamma::{gamma, ln_gamma};

pub fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// Unregularized lower incomplete Beta `B(x; a, b) = int_0^x z^{a-1} (1-z)^{b-1} dz`.
pub fn incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return beta(a, b);
    }
    statrs::function::beta::beta_reg(a, b, x) * beta(a, b)
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_matches_gamma_identity() {
        let (a, b) = (0.5, 0.75);
        let direct = gamma(a) * gamma(b) / gamma(a + b);
        assert!((beta(a, b) - direct).abs() < 1e-13 * direct);
    }

    #[test]
    fn incomplete_beta_limits() {
        assert_eq!(incomplete_beta(0.0, 0.6, 0.8), 0.0);
        assert!((incomplete_beta(1.0, 0.6, 0.8) - beta(0.6, 0.8)).abs() < 1e-14);
        // B(x; 1, 1) = x
        assert!((incomplete_beta(0.3, 1.0, 1.0) - 0.3).abs() < 1e-14);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(12, 6), 924);
    }
}
