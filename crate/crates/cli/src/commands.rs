//! One function per subcommand. Each writes its tables as CSV into the
//! output directory, then `manifest.json` listing them.

use std::path::PathBuf;

use skewfbm::fbm::{self, min_nondeterminism_ratio, FbmSpec, Method, PathMatrix};
use skewfbm::girsanov::{
    density_samples, exponential_moment_estimate, mean_one_report, measure_change_covariance_test,
    Verdict,
};
use skewfbm::harness::{map_paths, Cell, Domain, RunManifest, Table};
use skewfbm::local_time::{
    hd_warning, local_time_cauchy_study, moment_bound_check, self_similarity_test, MollifierSpec,
};
use skewfbm::sde::{
    compactness_diagnostic, convergence_ladder, holder_moment_check, solution_ensemble, SdeSpec,
};
use skewfbm::studies::{
    covariance_table, default_checkpoints, fbm_covariance_study, local_time_ladder_table,
    mean_one_table, now_rfc3339, sde_ladder_table,
};
use skewfbm::verify::{run_suite, SuiteOptions};
use skewfbm::SeedSpec;

use crate::config::Config;
use crate::CliError;

pub enum Status {
    Passed,
    Failed(Vec<String>),
}

/// Output directory plus the manifest being assembled.
struct Run {
    dir: PathBuf,
    manifest: RunManifest,
    failures: Vec<String>,
}

impl Run {
    fn start(command: &str, cfg: &Config) -> Result<Self, CliError> {
        std::fs::create_dir_all(&cfg.out)?;
        let mut manifest = RunManifest::new(command, cfg.to_json(), cfg.seed, cfg.workers);
        manifest.started = now_rfc3339();
        Ok(Self {
            dir: cfg.out.clone(),
            manifest,
            failures: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, t: &Table) -> Result<(), CliError> {
        let path = self.dir.join(rel);
        if let Some(p) = path.parent() {
            std::fs::create_dir_all(p)?;
        }
        t.write_csv(&path)?;
        self.manifest.outputs.push(rel.to_string());
        Ok(())
    }

    fn table(&mut self, t: &Table) -> Result<(), CliError> {
        self.write(&format!("{}.csv", t.name), t)
    }

    fn paths(&mut self, paths: &[PathMatrix]) -> Result<(), CliError> {
        for (i, p) in paths.iter().enumerate() {
            self.write(&format!("paths/path_{i:05}.csv"), &path_table(p))?;
        }
        Ok(())
    }

    fn fail(&mut self, msg: String) {
        self.failures.push(msg);
    }

    fn finish(mut self) -> Result<Status, CliError> {
        self.manifest.finished = now_rfc3339();
        let json = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(self.dir.join("manifest.json"), json)?;
        Ok(if self.failures.is_empty() {
            Status::Passed
        } else {
            Status::Failed(self.failures)
        })
    }
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn path_table(p: &PathMatrix) -> Table {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=p.dim).map(|c| format!("component_{c}")));
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new("path", &cols);
    for i in 0..=p.steps() {
        let mut row = vec![Cell::from(p.grid.node(i))];
        row.extend(p.row(i).iter().map(|&v| Cell::from(v)));
        t.push(row);
    }
    t
}

fn fbm_paths(
    spec: &FbmSpec,
    method: Method,
    count: usize,
    cfg: &Config,
) -> Result<Vec<PathMatrix>, CliError> {
    let out: skewfbm::Result<Vec<_>> = map_paths(count, cfg.workers, |i| {
        fbm::simulate_fbm(spec, SeedSpec::new(cfg.seed, i), method, Domain::Fbm)
    })
    .into_iter()
    .collect();
    Ok(out?)
}

fn path_count(cfg: &Config) -> usize {
    cfg.fbm.paths.min(cfg.max_path_files)
}

pub fn simulate_fbm(cfg: &Config) -> Result<Status, CliError> {
    let spec = cfg.fbm_spec()?;
    let method = cfg.method()?;
    let workers = cfg.workers()?;
    let mut run = Run::start("simulate-fbm", cfg)?;
    let paths = fbm_paths(&spec, method, path_count(cfg), cfg)?;
    run.paths(&paths)?;
    let rows = fbm_covariance_study(
        &spec,
        method,
        &default_checkpoints(&spec),
        cfg.fbm.paths,
        cfg.seed,
        workers,
    )?;
    run.table(&covariance_table(method, &rows))?;
    run.finish()
}

pub fn local_time(cfg: &Config) -> Result<Status, CliError> {
    let spec = cfg.fbm_spec()?;
    if let Some(w) = hd_warning(spec.hurst, spec.dim) {
        warn(&w);
        return Err(CliError::Config(w));
    }
    let method = cfg.method()?;
    let workers = cfg.workers()?;
    let lt = &cfg.local_time;
    let n = cfg.fbm.paths;
    let center = lt.center.clone().unwrap_or_else(|| vec![0.0; spec.dim]);
    let mut run = Run::start("local-time", cfg)?;

    let c = local_time_cauchy_study(&spec, &center, &lt.ladder, n, cfg.seed, workers, method)?;
    if !c.decreasing_within(1.0) {
        warn("local-time gaps do not decrease within 1 se; refine the grid or raise N");
    }
    run.table(&local_time_ladder_table(&c))?;

    let ss = self_similarity_test(
        spec.hurst, spec.dim, lt.t, lt.epsilon, spec.steps, n, cfg.seed, workers, method,
    )?;
    if let Some(w) = &ss.warning {
        warn(w);
    }
    let mut t = Table::new(
        "self_similarity",
        &[
            "t",
            "epsilon",
            "ks_matched_statistic",
            "ks_matched_p",
            "ks_unmatched_statistic",
            "ks_unmatched_p",
            "n",
        ],
    );
    t.push(vec![
        ss.t.into(),
        ss.epsilon.into(),
        ss.ks_matched.statistic.into(),
        ss.ks_matched.p_value.into(),
        ss.ks_unmatched.statistic.into(),
        ss.ks_unmatched.p_value.into(),
        n.into(),
    ]);
    run.table(&t)?;
    let mut t = Table::new("exponent_regression", &EXPONENT_COLUMNS);
    for (time, e) in &ss.mean_curve {
        t.push(vec![
            (*time).into(),
            e.mean.into(),
            e.se.into(),
            ss.slope.into(),
            ss.slope_se.into(),
            ss.expected_slope.into(),
        ]);
    }
    run.table(&t)?;

    let ts: Vec<f64> = [0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|f| f * spec.horizon)
        .collect();
    let rs: Vec<f64> = [0.0625, 0.125, 0.25]
        .iter()
        .map(|f| f * spec.horizon)
        .collect();
    let k = min_nondeterminism_ratio(&spec, &ts, &rs)?;
    let rows = moment_bound_check(
        &spec,
        &center,
        lt.epsilon,
        &lt.moment_orders,
        k,
        n,
        cfg.seed,
        workers,
        method,
    )?;
    let mut t = Table::new("moment_bound", &["m", "mean", "se", "bound", "holds", "k"]);
    for r in &rows {
        if !r.holds {
            run.fail(format!(
                "moment of order {} is {} > bound {}",
                r.m, r.empirical.mean, r.bound
            ));
        }
        t.push(vec![
            r.m.into(),
            r.empirical.mean.into(),
            r.empirical.se.into(),
            r.bound.into(),
            r.holds.into(),
            k.into(),
        ]);
    }
    run.table(&t)?;
    run.finish()
}

/// Column names of the exponent regression table.
pub const EXPONENT_COLUMNS: [&str; 6] = [
    "t",
    "mean_local_time",
    "se",
    "slope",
    "slope_se",
    "expected_slope",
];

pub fn solve_sde(cfg: &Config) -> Result<Status, CliError> {
    let fbm = cfg.fbm_spec()?;
    let method = cfg.method()?;
    let workers = cfg.workers()?;
    let s = &cfg.sde;
    let n = cfg.fbm.paths;
    let x0 = s.x0.clone().unwrap_or_else(|| vec![0.0; fbm.dim]);
    let spec = SdeSpec::new(x0, s.alpha, fbm, s.epsilon)?;
    if let Some(f) = spec.regime_flag() {
        warn(&format!(
            "H = {} >= {}: {f}",
            fbm.hurst,
            spec.regime_threshold()
        ));
    }
    let mut run = Run::start("solve-sde", cfg)?;

    let ens = solution_ensemble(&spec, n, cfg.seed, workers, method)?;
    run.paths(&ens[..path_count(cfg)])?;

    let l = convergence_ladder(&spec, &s.ladder, n, cfg.seed, workers, method)?;
    for w in &l.warnings {
        warn(w);
    }
    run.table(&sde_ladder_table(&l))?;

    let lags: Vec<usize> = std::iter::successors(Some(1usize), |l| Some(l * 2))
        .take_while(|&l| l <= fbm.steps / 2)
        .collect();
    let hr = holder_moment_check(&ens, s.holder_m, &lags, fbm.hurst)?;
    let mut t = Table::new(
        "holder",
        &[
            "m",
            "lag",
            "mean",
            "se",
            "bound_shape",
            "slope",
            "slope_se",
            "fitted_c",
            "bound_exponent",
        ],
    );
    for r in &hr.rows {
        t.push(vec![
            (hr.m as usize).into(),
            r.lag.into(),
            r.moment.mean.into(),
            r.moment.se.into(),
            r.bound_shape.into(),
            hr.slope.into(),
            hr.slope_se.into(),
            hr.fitted_c.into(),
            hr.bound_exponent.into(),
        ]);
    }
    run.table(&t)?;
    if !hr.fitted_c.is_finite() {
        run.fail("Hoelder constant is not finite".into());
    }

    let c = compactness_diagnostic(&spec, n, s.beta, s.subgrid, cfg.seed, workers, method)?;
    let mut t = Table::new(
        "compactness",
        &[
            "epsilon",
            "beta",
            "subgrid_steps",
            "double_integral",
            "double_integral_se",
            "l2_norm_sq",
            "l2_norm_sq_se",
            "n",
            "regime_flag",
        ],
    );
    t.push(vec![
        c.epsilon.into(),
        c.beta.into(),
        c.subgrid_steps.into(),
        c.double_integral.mean.into(),
        c.double_integral.se.into(),
        c.l2_norm_sq.mean.into(),
        c.l2_norm_sq.se.into(),
        c.double_integral.n.into(),
        c.regime_flag.clone().unwrap_or_default().into(),
    ]);
    run.table(&t)?;
    run.finish()
}

pub fn girsanov(cfg: &Config) -> Result<Status, CliError> {
    let fbm = cfg.fbm_spec()?;
    if cfg.method()? != Method::default() {
        return Err(CliError::Config(format!(
            "girsanov needs the Brownian driver of the `{}` sampler",
            Method::default()
        )));
    }
    let workers = cfg.workers()?;
    let g = &cfg.girsanov;
    let n = cfg.fbm.paths;
    let moll = MollifierSpec::origin(g.epsilon, fbm.dim)?;
    let mut run = Run::start("girsanov", cfg)?;

    let samples = density_samples(&fbm, &moll, g.amplitude, n, cfg.seed, workers)?;
    let mut t = Table::new(
        "girsanov_density",
        &[
            "path",
            "xi",
            "log_xi",
            "ito_integral",
            "quadratic_variation",
        ],
    );
    for (i, s) in samples.iter().enumerate() {
        t.push(vec![
            i.into(),
            s.xi.into(),
            s.log_xi.into(),
            s.ito_integral.into(),
            s.quadratic_variation.into(),
        ]);
    }
    run.table(&t)?;
    let r = mean_one_report(&samples);
    if !r.mean.within(1.0, 3.0) {
        run.fail(format!(
            "E xi = {} +- {} is more than 3 se from 1",
            r.mean.mean, r.mean.se
        ));
    }
    run.table(&mean_one_table(g.amplitude, g.epsilon, &r))?;

    let e = exponential_moment_estimate(
        &fbm,
        &vec![0.0; fbm.dim],
        &g.ladder,
        g.mu,
        n,
        cfg.seed,
        workers,
    )?;
    for w in e.warnings.iter().chain(&e.regime_flag) {
        warn(w);
    }
    let mut t = Table::new(
        "exp_moments",
        &["mu", "epsilon", "mean", "se", "log_estimate", "heavy_tail"],
    );
    for row in &e.rows {
        t.push(vec![
            e.mu.into(),
            row.epsilon.into(),
            row.estimate.mean.into(),
            row.estimate.se.into(),
            row.log_estimate.into(),
            row.heavy_tail.into(),
        ]);
    }
    run.table(&t)?;

    let c = measure_change_covariance_test(
        &fbm,
        &moll,
        g.amplitude,
        &g.checkpoints,
        n,
        cfg.seed,
        workers,
    )?;
    let verdict = format!("{:?}", c.verdict).to_lowercase();
    match c.verdict {
        Verdict::Fail => run.fail(format!("measure-change covariance test failed: {}", c.note)),
        Verdict::Inconclusive => warn(&format!("covariance test inconclusive: {}", c.note)),
        Verdict::Pass => {}
    }
    let mut t = Table::new(
        "covariance_test",
        &[
            "kind", "t", "s", "mean", "se", "target", "z", "ess", "verdict",
        ],
    );
    let kinds = c
        .covariances
        .iter()
        .map(|r| ("covariance", r))
        .chain(c.means.iter().map(|r| ("mean", r)));
    for (kind, r) in kinds {
        t.push(vec![
            kind.into(),
            r.t.into(),
            r.s.into(),
            r.estimate.mean.into(),
            r.estimate.se.into(),
            r.target.into(),
            r.z().into(),
            c.ess.into(),
            verdict.as_str().into(),
        ]);
    }
    run.table(&t)?;
    run.finish()
}

pub fn verify(cfg: &Config) -> Result<Status, CliError> {
    let workers = cfg.workers()?;
    let opts = SuiteOptions {
        seed: cfg.seed,
        workers,
        only: cfg.verify.only.clone(),
    };
    let rep = run_suite(&opts)?;
    let mut run = Run::start("verify", cfg)?;
    for r in &rep.rows {
        println!(
            "{:<4} {:<14} {}: {:e} vs {:e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.group,
            r.check,
            r.value,
            r.threshold
        );
        if !r.passed {
            run.fail(format!("{}/{}", r.group, r.check));
        }
    }
    run.table(&rep.table())?;
    run.finish()
}
