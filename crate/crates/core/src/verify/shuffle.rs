//! Shuffle permutations and the product-of-simplices identity, checked in
//! exact rational arithmetic on monomial integrands.
//!
//! Simplex convention: `Delta^m_{theta,t} = {theta < s_m < ... < s_1 < t}`.
//! A shuffle `sigma` sends the `j`-th function to position `sigma(j)`, so
//! the right-hand side integrates `prod_j f_j(w_{sigma(j)})`.

use itertools::Itertools;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const MAX_SHUFFLE_SIZE: usize = 12;

/// One-line notation, 1-based: `positions[j]` is `sigma(j + 1)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Shuffle {
    pub m: usize,
    pub positions: Vec<usize>,
}

impl Shuffle {
    pub fn is_valid(&self) -> bool {
        let n = self.positions.len();
        let (a, b) = self.positions.split_at(self.m);
        let mut seen = vec![false; n + 1];
        let bijection = self.positions.iter().all(|&p| {
            let fresh = (1..=n).contains(&p) && !seen[p];
            if fresh {
                seen[p] = true;
            }
            fresh
        });
        bijection && a.windows(2).all(|w| w[0] < w[1]) && b.windows(2).all(|w| w[0] < w[1])
    }

    /// `sigma^{-1}`: which function sits at each position.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.positions.len()];
        for (j, &p) in self.positions.iter().enumerate() {
            inv[p - 1] = j + 1;
        }
        inv
    }
}

/// All `(m+n)! / (m! n!)` shuffles in lexicographic order.
pub fn enumerate_shuffles(m: usize, n: usize) -> Result<Vec<Shuffle>> {
    if m + n > MAX_SHUFFLE_SIZE {
        return Err(Error::SizeGuard(format!(
            "m + n = {} exceeds {MAX_SHUFFLE_SIZE}",
            m + n
        )));
    }
    Ok((1..=m + n)
        .combinations(m)
        .map(|first| {
            let rest = (1..=m + n).filter(|p| !first.contains(p));
            Shuffle {
                m,
                positions: first.iter().copied().chain(rest).collect(),
            }
        })
        .collect())
}

/// Dense polynomial with exact rational coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly(pub Vec<BigRational>);

impl Poly {
    pub fn monomial(p: u32) -> Self {
        let mut c = vec![BigRational::zero(); p as usize + 1];
        c[p as usize] = BigRational::one();
        Poly(c)
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut c = vec![BigRational::zero(); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly(c)
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        self.0
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| acc * x + c)
    }

    /// `x -> int_lo^x self(u) du`.
    pub fn integrate_from(&self, lo: &BigRational) -> Poly {
        let mut c = vec![BigRational::zero(); self.0.len() + 1];
        for (i, a) in self.0.iter().enumerate() {
            c[i + 1] = a / BigRational::from_integer(BigInt::from(i + 1));
        }
        let p = Poly(c);
        let shift = p.eval(lo);
        let mut c = p.0;
        c[0] -= shift;
        Poly(c)
    }
}

/// Exact `f64 -> rational` (every finite double is a dyadic rational).
pub fn exact(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| invalid("x", format!("{x} is not finite")))
}

/// `x -> int_{theta < w_k < ... < w_1 < x} prod_j w_j^{p_j} dw` as a
/// polynomial in `x`, with `exps[0]` attached to the outermost variable.
pub fn simplex_poly(exps: &[u32], theta: &BigRational) -> Poly {
    exps.iter()
        .rev()
        .fold(None::<Poly>, |inner, &p| {
            let integrand = match inner {
                None => Poly::monomial(p),
                Some(q) => Poly::monomial(p).mul(&q),
            };
            Some(integrand.integrate_from(theta))
        })
        .unwrap_or_else(|| Poly(vec![BigRational::one()]))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub terms: usize,
}

/// Product of the `f`- and `g`-simplex integrals against the shuffle sum,
/// for monomials `f_j(s) = s^{f_exps[j]}` and `g_j(s) = s^{g_exps[j]}`.
pub fn shuffle_integral_identity_check(
    f_exps: &[u32],
    g_exps: &[u32],
    theta: f64,
    t: f64,
) -> Result<IdentityResidual> {
    if theta >= t {
        return Err(invalid("theta", "need theta < t"));
    }
    let (th, tt) = (exact(theta)?, exact(t)?);
    let lhs = simplex_poly(f_exps, &th).eval(&tt) * simplex_poly(g_exps, &th).eval(&tt);
    let all: Vec<u32> = f_exps.iter().chain(g_exps).copied().collect();
    let shuffles = enumerate_shuffles(f_exps.len(), g_exps.len())?;
    let rhs = shuffles.iter().fold(BigRational::zero(), |acc, s| {
        let word: Vec<u32> = s.inverse().iter().map(|&j| all[j - 1]).collect();
        acc + simplex_poly(&word, &th).eval(&tt)
    });
    let (l, r) = (
        lhs.to_f64().unwrap_or(f64::NAN),
        rhs.to_f64().unwrap_or(f64::NAN),
    );
    Ok(IdentityResidual {
        lhs: l,
        rhs: r,
        residual: ((lhs - rhs).to_f64().unwrap_or(f64::NAN)).abs(),
        terms: shuffles.len(),
    })
}

/// Integrand labels in the partial-shuffle decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    F(usize),
    G(usize),
}

/// Words of the decomposition of
/// `int_{Delta^n} f_1..f_k [int_{Delta^p_{theta,s_k}} g] f_{k+1}..f_n`
/// into full simplex integrals: `f_1 .. f_k` stay on top and the remaining
/// `f`s are shuffled with the `g`s.
pub fn partial_shuffle_words(n: usize, p: usize, k: usize) -> Result<Vec<Vec<Label>>> {
    if k == 0 || k > n {
        return Err(invalid("k", format!("need 1 <= k <= n = {n}")));
    }
    let shuffles = enumerate_shuffles(n - k, p)?;
    Ok(shuffles
        .iter()
        .map(|s| {
            let tail = s.inverse().into_iter().map(|j| {
                if j <= n - k {
                    Label::F(k + j)
                } else {
                    Label::G(j - (n - k))
                }
            });
            (1..=k).map(Label::F).chain(tail).collect()
        })
        .collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartialShuffleReport {
    pub residual: f64,
    pub lhs: f64,
    pub set_size: usize,
    /// Smallest `C` with `#A <= C^{n+p}`.
    pub smallest_c: f64,
}

/// Exact check of the partial-shuffle decomposition on monomials.
pub fn partial_shuffle_check(
    f_exps: &[u32],
    g_exps: &[u32],
    k: usize,
    theta: f64,
    t: f64,
) -> Result<PartialShuffleReport> {
    let (n, p) = (f_exps.len(), g_exps.len());
    let words = partial_shuffle_words(n, p, k)?;
    let (th, tt) = (exact(theta)?, exact(t)?);
    // LHS from the inside out: Q(x) integrates f_{k+1..n}, G(x) the g-simplex
    let q = simplex_poly(&f_exps[k..], &th);
    let g = simplex_poly(g_exps, &th);
    let mut inner = Poly::monomial(f_exps[k - 1])
        .mul(&q)
        .mul(&g)
        .integrate_from(&th);
    for &e in f_exps[..k - 1].iter().rev() {
        inner = Poly::monomial(e).mul(&inner).integrate_from(&th);
    }
    let lhs = inner.eval(&tt);
    let rhs = words.iter().fold(BigRational::zero(), |acc, w| {
        let exps: Vec<u32> = w
            .iter()
            .map(|l| match *l {
                Label::F(j) => f_exps[j - 1],
                Label::G(i) => g_exps[i - 1],
            })
            .collect();
        acc + simplex_poly(&exps, &th).eval(&tt)
    });
    Ok(PartialShuffleReport {
        residual: (&lhs - rhs).to_f64().unwrap_or(f64::NAN).abs(),
        lhs: lhs.to_f64().unwrap_or(f64::NAN),
        set_size: words.len(),
        smallest_c: (words.len() as f64).powf(1.0 / (n + p) as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::binomial;

    #[test]
    fn counts_match_binomials() {
        assert_eq!(enumerate_shuffles(1, 1).unwrap().len(), 2);
        assert_eq!(enumerate_shuffles(2, 2).unwrap().len(), 6);
        assert_eq!(enumerate_shuffles(3, 2).unwrap().len(), 10);
        for m in 0..6 {
            for n in 0..6 {
                let s = enumerate_shuffles(m, n).unwrap();
                assert_eq!(s.len() as u64, binomial(m + n, m));
                assert!(s.iter().all(Shuffle::is_valid));
                assert!(s.windows(2).all(|w| w[0].positions < w[1].positions));
            }
        }
        assert!(matches!(enumerate_shuffles(7, 6), Err(Error::SizeGuard(_))));
    }

    #[test]
    fn constant_integrands() {
        let r = shuffle_integral_identity_check(&[0], &[0], 0.0, 1.0).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert!(r.residual < 1e-12);
    }

    #[test]
    fn simplex_volume() {
        // int over the 3-simplex of [0.5, 2] of 1 is 1.5^3 / 3!
        let v = simplex_poly(&[0, 0, 0], &exact(0.5).unwrap()).eval(&exact(2.0).unwrap());
        assert!((v.to_f64().unwrap() - 1.5f64.powi(3) / 6.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_monomials() {
        let r = shuffle_integral_identity_check(&[1, 2], &[1, 2], 0.25, 1.5).unwrap();
        assert!(r.residual <= 1e-10 && r.lhs > 0.0);
    }

    #[test]
    fn literal_position_reading_fails() {
        // prod f_{sigma(j)}(w_j) over the same index set is not the product
        // of the two simplex integrals once the integrands differ
        let (f, g) = ([0u32, 3], [1u32]);
        let (th, tt) = (exact(0.0).unwrap(), exact(1.0).unwrap());
        let all = [f[0], f[1], g[0]];
        let lhs = simplex_poly(&f, &th).eval(&tt) * simplex_poly(&g, &th).eval(&tt);
        let literal = enumerate_shuffles(2, 1)
            .unwrap()
            .iter()
            .fold(BigRational::zero(), |a, s| {
                let w: Vec<u32> = s.positions.iter().map(|&j| all[j - 1]).collect();
                a + simplex_poly(&w, &th).eval(&tt)
            });
        assert!((lhs - literal).to_f64().unwrap().abs() > 1e-3);
    }

    #[test]
    fn partial_shuffle_two_one() {
        let words = partial_shuffle_words(2, 1, 1).unwrap();
        assert_eq!(
            words,
            vec![
                vec![Label::F(1), Label::F(2), Label::G(1)],
                vec![Label::F(1), Label::G(1), Label::F(2)]
            ]
        );
        let r = partial_shuffle_check(&[1, 2], &[3], 1, 0.1, 1.0).unwrap();
        assert!(r.residual <= 1e-10);
        assert!(r.smallest_c <= 2.0);
    }
}
