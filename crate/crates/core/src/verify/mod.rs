//! Exact and Monte Carlo checks of the combinatorial and integral
//! identities behind the estimates, plus a suite runner that collects
//! them into one pass/fail table.

pub mod gaussian;
pub mod ibp;
pub mod integrals;
pub mod permanent;
pub mod roundtrip;
pub mod shuffle;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::harness::{map_paths, Cell, Domain, SeedSpec, Table};
use crate::special::binomial;

/// Suite groups, in run order. `--only` selects among these.
pub const GROUPS: [&str; 6] = [
    "frac_calculus",
    "shuffles",
    "permanents",
    "gaussian",
    "integrals",
    "ibp",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub group: String,
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    pub workers: usize,
    /// Groups to run; empty means all.
    pub only: Vec<String>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            workers: 1,
            only: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<CheckRow>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(
            "verify",
            &["group", "check", "value", "threshold", "passed", "detail"],
        );
        for r in &self.rows {
            t.push(vec![
                Cell::from(r.group.as_str()),
                Cell::from(r.check.as_str()),
                Cell::from(r.value),
                Cell::from(r.threshold),
                Cell::from(if r.passed { "PASS" } else { "FAIL" }),
                Cell::from(r.detail.as_str()),
            ]);
        }
        t
    }
}

struct Rows<'a> {
    group: &'a str,
    out: Vec<CheckRow>,
}

impl Rows<'_> {
    /// Records `value <= threshold`.
    fn at_most(&mut self, check: &str, value: f64, threshold: f64, detail: String) {
        self.push(check, value, threshold, value <= threshold, detail);
    }

    fn push(&mut self, check: &str, value: f64, threshold: f64, passed: bool, detail: String) {
        self.out.push(CheckRow {
            group: self.group.to_string(),
            check: check.to_string(),
            value,
            threshold,
            passed: passed && !value.is_nan(),
            detail,
        });
    }
}

pub fn run_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    for g in &opts.only {
        if !GROUPS.contains(&g.as_str()) {
            return Err(invalid(
                "only",
                format!("unknown group `{g}`; known: {}", GROUPS.join(", ")),
            ));
        }
    }
    let mut rows = Vec::new();
    for group in GROUPS {
        if !opts.only.is_empty() && !opts.only.iter().any(|g| g == group) {
            continue;
        }
        let mut r = Rows {
            group,
            out: Vec::new(),
        };
        match group {
            "frac_calculus" => frac_group(&mut r)?,
            "shuffles" => shuffle_group(&mut r)?,
            "permanents" => permanent_group(&mut r, opts)?,
            "gaussian" => gaussian_group(&mut r, opts)?,
            "integrals" => integrals_group(&mut r, opts)?,
            "ibp" => ibp_group(&mut r, opts)?,
            _ => unreachable!(),
        }
        rows.extend(r.out);
    }
    Ok(SuiteReport { rows })
}

fn frac_group(r: &mut Rows) -> Result<()> {
    let mut worst_i: f64 = 0.0;
    let mut worst_d: f64 = 0.0;
    for alpha in [0.3, 0.5, 0.7] {
        for mu in [0.0, 1.0, 2.0, 3.0] {
            worst_i = worst_i.max(roundtrip::power_rule_integral_error(alpha, mu, 4096)?);
        }
        for mu in [0.0, 1.0] {
            worst_d = worst_d.max(roundtrip::power_rule_derivative_error(alpha, mu, 4096)?);
        }
    }
    r.at_most(
        "integral power rule, n = 4096",
        worst_i,
        1e-6,
        "alpha in {.3,.5,.7}, mu in {0,1,2,3}".into(),
    );
    r.at_most(
        "derivative power rule, n = 4096",
        worst_d,
        1e-6,
        "alpha in {.3,.5,.7}, mu in {0,1}".into(),
    );
    let di = roundtrip::refine(|n| roundtrip::derivative_of_integral_error(0.4, n), 1024)?;
    r.push(
        "D(I f) = f, error ratio under doubling",
        di.ratio,
        2.0,
        di.ratio >= 2.0,
        format!("n = 1024: {:e}, n = 2048: {:e}", di.coarse, di.fine),
    );
    let id = roundtrip::refine(
        |n| roundtrip::right_integral_of_derivative_error(0.4, 1.5, n),
        1024,
    )?;
    r.push(
        "right I(D f) = f converges",
        id.fine,
        id.coarse,
        id.fine < id.coarse,
        format!("f = (1-x)^1.5, errors {:e} -> {:e}", id.coarse, id.fine),
    );
    Ok(())
}

fn shuffle_group(r: &mut Rows) -> Result<()> {
    let mut bad_counts = 0;
    for m in 0..=6 {
        for n in 0..=6 {
            let s = shuffle::enumerate_shuffles(m, n)?;
            if s.len() as u64 != binomial(m + n, m) || !s.iter().all(shuffle::Shuffle::is_valid) {
                bad_counts += 1;
            }
        }
    }
    r.at_most(
        "shuffle counts = binomial, m, n <= 6",
        bad_counts as f64,
        0.0,
        "49 (m, n) pairs".into(),
    );
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for m in 1..=4 {
        for n in 1..=(5 - m) {
            let f: Vec<u32> = (1..=m as u32).collect();
            let g: Vec<u32> = (0..n as u32).map(|j| 2 * j).collect();
            let res = shuffle::shuffle_integral_identity_check(&f, &g, 0.25, 1.5)?;
            worst = worst.max(res.residual);
            cases += 1;
        }
    }
    r.at_most(
        "shuffle identity, m + n <= 5",
        worst,
        1e-10,
        format!("{cases} monomial families, exact rationals"),
    );
    let p = shuffle::partial_shuffle_check(&[1, 2], &[3], 1, 0.1, 1.0)?;
    r.at_most(
        "partial shuffle decomposition n = 2, p = 1",
        p.residual,
        1e-10,
        format!("#A = {}, smallest C = {:.6}", p.set_size, p.smallest_c),
    );
    r.at_most(
        "partial shuffle constant C",
        p.smallest_c,
        2.0,
        "#A <= C^(n+p)".into(),
    );
    Ok(())
}

fn permanent_group(r: &mut Rows, opts: &SuiteOptions) -> Result<()> {
    let bounds = map_paths(1000, opts.workers, |i| {
        let mut rng = SeedSpec::new(opts.seed, i).rng(Domain::Audit);
        let n = rng.random_range(1..=6);
        let k = rng.random_range(1..=n + 2);
        permanent::psd_permanent_bound_check(&permanent::random_gram(&mut rng, n, k))
    });
    let bounds: Vec<_> = bounds.into_iter().collect::<Result<_>>()?;
    let violations = bounds.iter().filter(|b| !b.holds).count();
    let negative = bounds
        .iter()
        .filter(|b| b.permanent < -1e-12 * b.bound)
        .count();
    r.at_most(
        "perm <= n! prod a_ii, 1000 random PSD",
        violations as f64,
        0.0,
        format!("n <= 6, {negative} negative permanents"),
    );
    let mut rng = SeedSpec::new(opts.seed, 0).rng(Domain::Generic);
    let m = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
    let (a, b) = (permanent::permanent(&m)?, permanent::permanent_brute(&m)?);
    r.at_most(
        "Ryser vs permutation sum, 5x5",
        (a - b).abs() / b.abs().max(1e-300),
        1e-12,
        format!("perm = {a}"),
    );
    let base = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let rep = permanent::repeated_row_matrix(&base, &[2, 2])?;
    let rb = permanent::psd_permanent_bound_check(&rep)?;
    r.push(
        "repeated-row construction",
        rb.permanent,
        rb.bound,
        rb.holds,
        "rows (1,1,2,2) of a 2x2 covariance".into(),
    );
    let moments = map_paths(100, opts.workers, |i| {
        let mut rng = SeedSpec::new(opts.seed, 10_000 + i).rng(Domain::Audit);
        let n = rng.random_range(1..=4);
        let cov = permanent::random_gram(&mut rng, n, n + 2);
        permanent::gaussian_abs_moment_bound_check(&cov, 100_000, SeedSpec::new(opts.seed, i))
    });
    let moments: Vec<_> = moments.into_iter().collect::<Result<_>>()?;
    let fails = moments.iter().filter(|m| !m.holds).count();
    let worst_z = moments
        .iter()
        .map(|m| (m.estimate.mean - m.sqrt_perm) / m.estimate.se)
        .fold(f64::MIN, f64::max);
    r.at_most(
        "E prod |X_i| <= sqrt(perm) + 3 se, 100 covariances",
        fails as f64,
        0.0,
        format!("n <= 4, N = 1e5, max z = {worst_z:.2}"),
    );
    Ok(())
}

fn gaussian_group(r: &mut Rows, opts: &SuiteOptions) -> Result<()> {
    use gaussian::{determinant_chain_residual, gaussian_marginal_identity_check, TestFunction};
    let bump = TestFunction::Bump {
        center: 0.3,
        width: 0.8,
    };
    let one = gaussian_marginal_identity_check(
        &DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]),
        TestFunction::One,
        1e-12,
    )?;
    r.at_most(
        "CD identity, g = 1, n = 2",
        one.relative_residual,
        1e-8,
        "normalization case".into(),
    );
    let ind = gaussian_marginal_identity_check(
        &DMatrix::identity(2, 2),
        TestFunction::Bump {
            center: 0.0,
            width: 1.0,
        },
        1e-12,
    )?;
    r.at_most(
        "CD identity, independent, n = 2",
        ind.relative_residual,
        1e-6,
        format!("rhs = {}", ind.rhs),
    );
    let c3 = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.5, 1.0, 0.3, 0.2, 0.3, 1.0]);
    let fine = gaussian_marginal_identity_check(&c3, bump, 1e-10)?;
    r.at_most(
        "CD identity, correlated, n = 3",
        fine.relative_residual,
        1e-4,
        format!("sigma_1 = {:.6}", fine.sigma1),
    );
    let coarse = gaussian_marginal_identity_check(&c3, bump, 1e-4)?;
    r.push(
        "CD residual decreases under refinement",
        fine.relative_residual,
        coarse.relative_residual,
        fine.relative_residual <= coarse.relative_residual,
        "tolerance 1e-4 -> 1e-10".into(),
    );
    let worst = (0..50u64)
        .map(|i| {
            let mut rng = SeedSpec::new(opts.seed, 20_000 + i).rng(Domain::Audit);
            let n = rng.random_range(2..=6);
            determinant_chain_residual(&permanent::random_gram(&mut rng, n, n + 3))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    r.at_most(
        "det Cov = prod conditional variances",
        worst,
        1e-10,
        "50 random covariances, n <= 6".into(),
    );
    Ok(())
}

/// Random draws per `m` in the iterated-integral audit.
const DRAWS_PER_M: u64 = 12;

fn integrals_group(r: &mut Rows, opts: &SuiteOptions) -> Result<()> {
    use integrals::*;
    let base = |w: Vec<f64>, eps: Vec<bool>| IteratedParams {
        h: 0.1,
        gamma: 0.05,
        theta: 0.4,
        theta_prime: 0.2,
        t: 1.0,
        w,
        eps,
    };
    let flat = iterated_integral_bound(&base(vec![0.0], vec![false]))?;
    r.at_most(
        "iterated bound, m = 1 flat",
        (flat.lhs - 0.6).abs().max((flat.bound - 0.6).abs()),
        1e-12,
        "both equal t - theta".into(),
    );
    for w in [vec![-0.3, -0.6], vec![0.2, -0.5, -0.1]] {
        let m = w.len();
        let b = iterated_integral_bound(&base(w, vec![false; m]))?;
        let exact = b.classical.unwrap_or(f64::NAN);
        let err = ((b.lhs - exact) / exact)
            .abs()
            .max(((b.bound - exact) / exact).abs());
        r.at_most(
            &format!("classical formula, eps = 0, m = {m}"),
            err,
            1e-7,
            format!("exact {exact:.12}"),
        );
    }
    let doc = iterated_integral_bound(&base(vec![-0.3, -0.3], vec![true, false]))?;
    r.push(
        "iterated bound, eps = (1,0), w = (-.3,-.3)",
        doc.lhs,
        doc.bound * (1.0 + BOUND_SLACK),
        doc.holds,
        format!("C_K = {:.4}, implied C = {:.4}", doc.c_k, doc.implied_c),
    );
    let draws = map_paths(3 * DRAWS_PER_M as usize, opts.workers, |i| {
        let mut rng = SeedSpec::new(opts.seed, 30_000 + i).rng(Domain::Audit);
        let m = 1 + (i / DRAWS_PER_M) as usize;
        iterated_integral_bound(&random_iterated_params(&mut rng, m))
    });
    let draws: Vec<_> = draws.into_iter().collect::<Result<_>>()?;
    let fails = draws.iter().filter(|b| !b.holds).count();
    let worst = draws.iter().map(|b| b.lhs / b.bound).fold(0.0, f64::max);
    let max_c = draws.iter().map(|b| b.implied_c).fold(0.0, f64::max);
    r.at_most(
        "iterated bound, random draws m <= 3",
        fails as f64,
        0.0,
        format!(
            "{} draws, max lhs/bound = {worst:.4}, max implied C = {max_c:.4}",
            draws.len()
        ),
    );
    for (h, d) in [(0.1, 1), (0.05, 2)] {
        let mut worst: f64 = 0.0;
        for m in 1..=3 {
            let s = simplex_moment_bound_check(m, h, d)?;
            worst = worst.max(((s.gamma_form - s.bound) / s.bound).abs());
            worst = worst.max(((s.ratio_form - s.bound) / s.bound).abs());
        }
        r.at_most(
            &format!("Beta product vs Gamma forms, H = {h}, d = {d}"),
            worst,
            1e-10,
            "m = 1, 2, 3".into(),
        );
        let s = simplex_moment_bound_check(1, h, d)?;
        let direct = s.direct.unwrap_or(f64::NAN);
        r.at_most(
            &format!("m = 1 direct quadrature <= bound, H = {h}, d = {d}"),
            direct,
            s.bound,
            format!("bound {:.6}", s.bound),
        );
        let g = simplex_growth_audit(h, d, 3)?;
        let spread = |v: &[f64]| {
            v.iter().copied().fold(f64::MIN, f64::max) / v.iter().copied().fold(f64::MAX, f64::min)
        };
        r.at_most(
            &format!("growth trend C (m+1)^(1+2H(1+d)), H = {h}, d = {d}"),
            spread(&g.corrected_constants),
            GROWTH_SPREAD,
            format!(
                "constants {:?}; with exponent 2H(1+d) alone: {:?}",
                round4(&g.corrected_constants),
                round4(&g.stated_constants)
            ),
        );
    }
    Ok(())
}

fn round4(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}

/// Largest ratio between implied constants for two `(theta, theta')` choices.
pub const IMPLIED_C_SPREAD: f64 = 4.0;

fn ibp_group(r: &mut Rows, opts: &SuiteOptions) -> Result<()> {
    use ibp::*;
    let setup = |theta: f64, theta_prime: f64, alpha: usize, eps: bool, f: Bump| IbpSetup {
        h: 0.05,
        gamma: 0.02,
        theta,
        theta_prime,
        t: 1.0,
        alpha,
        eps,
        f,
    };
    let shifted = Bump::Shifted { center: 0.5 };
    let flat = ibp_bound_mc_check(
        &setup(0.3, 0.1, 0, false, shifted),
        64,
        20_000,
        opts.seed,
        opts.workers,
    )?;
    r.push(
        "alpha = 0, kappa = 1: MC vs marginal quadrature",
        (flat.mc.mean - flat.oracle).abs() / flat.mc.se,
        3.0,
        flat.agrees,
        format!(
            "mc {:.6} +- {:.2e}, oracle {:.6}",
            flat.mc.mean, flat.mc.se, flat.oracle
        ),
    );
    let odd = ibp_bound_mc_check(
        &setup(0.3, 0.1, 0, true, Bump::Odd { center: 0.5 }),
        64,
        20_000,
        opts.seed,
        opts.workers,
    )?;
    r.push(
        "odd f: expectation vanishes",
        odd.mc.mean.abs() / odd.mc.se,
        3.0,
        odd.mc.within(0.0, 3.0) && odd.oracle.abs() < 1e-12,
        format!("mc {:.2e} +- {:.2e}", odd.mc.mean, odd.mc.se),
    );
    let a = ibp_bound_mc_check(
        &setup(0.3, 0.1, 1, true, shifted),
        64,
        20_000,
        opts.seed,
        opts.workers,
    )?;
    let b = ibp_bound_mc_check(
        &setup(0.5, 0.25, 1, true, shifted),
        64,
        20_000,
        opts.seed,
        opts.workers,
    )?;
    let spread = (a.implied_c / b.implied_c).max(b.implied_c / a.implied_c);
    r.push(
        "first derivative: implied C finite and stable",
        spread,
        IMPLIED_C_SPREAD,
        a.implied_c.is_finite()
            && b.implied_c.is_finite()
            && spread <= IMPLIED_C_SPREAD
            && a.agrees
            && b.agrees,
        format!(
            "C = {:.4} at (0.3, 0.1), {:.4} at (0.5, 0.25)",
            a.implied_c, b.implied_c
        ),
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_filter_and_unknown_group() {
        let opts = SuiteOptions {
            only: vec!["shuffles".into()],
            ..Default::default()
        };
        let rep = run_suite(&opts).unwrap();
        assert!(rep.rows.iter().all(|r| r.group == "shuffles") && rep.all_passed());
        let bad = SuiteOptions {
            only: vec!["nope".into()],
            ..Default::default()
        };
        assert!(run_suite(&bad).is_err());
    }
}
