//! Registry of named Monte Carlo studies with CSV-ready tables and a run
//! manifest. Everything here is deterministic given `(spec, N, seed)`; the
//! worker count changes only the schedule.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fbm::{covariance, prepare_sampler, simulate_fbm, FbmSpec, Method};
use crate::girsanov::{mean_one_study, MeanOneReport};
use crate::harness::{map_paths, require_paths, Cell, Domain, RunManifest, SeedSpec, Table};
use crate::local_time::{default_ladder, local_time_cauchy_study, CauchyStudy, MollifierSpec};
use crate::sde::{convergence_ladder, LadderStudy, SdeSpec};
use crate::stats::EstimatorResult;
use crate::verify::{run_suite, SuiteOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    FbmCovariance,
    LocalTimeLadder,
    SdeLadder,
    GirsanovMeanOne,
    IdentityAudits,
}

impl Study {
    pub const ALL: [Study; 5] = [
        Study::FbmCovariance,
        Study::LocalTimeLadder,
        Study::SdeLadder,
        Study::GirsanovMeanOne,
        Study::IdentityAudits,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Study::FbmCovariance => "fbm-covariance",
            Study::LocalTimeLadder => "local-time-ladder",
            Study::SdeLadder => "sde-ladder",
            Study::GirsanovMeanOne => "girsanov-mean-one",
            Study::IdentityAudits => "identity-audits",
        }
    }
}

impl std::fmt::Display for Study {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Study::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownStudy(s.to_string()))
    }
}

/// Parameters shared by the registered studies; each study reads the
/// fields it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub study: Study,
    pub fbm: FbmSpec,
    pub method: Method,
    /// Bandwidth ladder of the local-time and SDE studies.
    pub ladder: Vec<f64>,
    /// Drift strength of the SDE.
    pub alpha: f64,
    /// Bandwidth and drift amplitude of the Girsanov density.
    pub epsilon: f64,
    pub amplitude: f64,
    /// Suite groups for the identity audits; empty runs all.
    pub only: Vec<String>,
}

impl StudySpec {
    pub fn new(study: Study) -> Self {
        Self {
            study,
            fbm: FbmSpec {
                hurst: 0.2,
                dim: 1,
                horizon: 1.0,
                steps: 512,
            },
            method: Method::default(),
            ladder: default_ladder(),
            alpha: 1.0,
            epsilon: 0.5,
            amplitude: 1.0,
            only: Vec::new(),
        }
    }
}

/// A labelled estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedEstimate {
    pub label: String,
    pub estimate: EstimatorResult,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyOutput {
    pub estimates: Vec<NamedEstimate>,
    pub tables: Vec<Table>,
    pub manifest: RunManifest,
    pub warnings: Vec<String>,
    /// Violated study assertions; empty when the study passed.
    pub failures: Vec<String>,
}

fn seed_ledger() -> &'static Mutex<HashMap<u64, Study>> {
    static L: OnceLock<Mutex<HashMap<u64, Study>>> = OnceLock::new();
    L.get_or_init(Default::default)
}

/// Remembers `seed` for `study` and returns a warning when another study
/// already used it in this process: the two share their fBm paths.
pub fn note_seed(study: Study, seed: u64) -> Option<String> {
    let mut l = seed_ledger().lock().unwrap_or_else(|e| e.into_inner());
    match l.insert(seed, study) {
        Some(prev) if prev != study => Some(format!(
            "seed {seed} was already used by study `{prev}`; both draw the same fBm paths"
        )),
        _ => None,
    }
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn run_study(
    spec: &StudySpec,
    n_paths: usize,
    seed: u64,
    workers: usize,
) -> Result<StudyOutput> {
    require_paths(n_paths)?;
    let config = serde_json::json!({ "spec": spec, "n_paths": n_paths });
    let mut manifest = RunManifest::new(&format!("study {}", spec.study), config, seed, workers);
    manifest.started = now_rfc3339();
    let mut warnings: Vec<String> = note_seed(spec.study, seed).into_iter().collect();
    let mut failures = Vec::new();
    let (estimates, tables) = match spec.study {
        Study::FbmCovariance => {
            let rows = fbm_covariance_study(
                &spec.fbm,
                spec.method,
                &default_checkpoints(&spec.fbm),
                n_paths,
                seed,
                workers,
            )?;
            for r in rows.iter().filter(|r| !r.test.within(r.target, 3.0)) {
                failures.push(format!(
                    "covariance at {} off by {:.2} se",
                    r.label(),
                    r.z()
                ));
            }
            let est = rows
                .iter()
                .map(|r| NamedEstimate {
                    label: r.label(),
                    estimate: r.test,
                })
                .collect();
            (est, vec![covariance_table(spec.method, &rows)])
        }
        Study::LocalTimeLadder => {
            let c = local_time_cauchy_study(
                &spec.fbm,
                &vec![0.0; spec.fbm.dim],
                &spec.ladder,
                n_paths,
                seed,
                workers,
                spec.method,
            )?;
            warnings.extend(c.warning.clone());
            if !c.decreasing_within(1.0) {
                failures.push("local-time gaps not decreasing within 1 se".into());
            }
            (
                gap_estimates(&c.ladder, &c.gaps),
                vec![local_time_ladder_table(&c)],
            )
        }
        Study::SdeLadder => {
            let s = SdeSpec::new(
                vec![0.0; spec.fbm.dim],
                spec.alpha,
                spec.fbm,
                spec.ladder[0],
            )?;
            let l = convergence_ladder(&s, &spec.ladder, n_paths, seed, workers, spec.method)?;
            warnings.extend(l.warnings.iter().cloned());
            warnings.extend(l.regime_flag.clone());
            if !l.decreasing_within(1.0) {
                failures.push("SDE ladder gaps not decreasing within 1 se".into());
            }
            (
                gap_estimates(&l.ladder, &l.gaps),
                vec![sde_ladder_table(&l)],
            )
        }
        Study::GirsanovMeanOne => {
            let m = MollifierSpec::origin(spec.epsilon, spec.fbm.dim)?;
            let r = mean_one_study(&spec.fbm, &m, spec.amplitude, n_paths, seed, workers)?;
            if !r.mean.within(1.0, 3.0) {
                failures.push(format!(
                    "E xi = {} is {:.2} se from 1",
                    r.mean.mean,
                    (r.mean.mean - 1.0) / r.mean.se
                ));
            }
            let est = vec![NamedEstimate {
                label: "E[xi_T]".into(),
                estimate: r.mean,
            }];
            (est, vec![mean_one_table(spec.amplitude, spec.epsilon, &r)])
        }
        Study::IdentityAudits => {
            let rep = run_suite(&SuiteOptions {
                seed,
                workers,
                only: spec.only.clone(),
            })?;
            failures.extend(
                rep.rows
                    .iter()
                    .filter(|r| !r.passed)
                    .map(|r| format!("{}/{} failed", r.group, r.check)),
            );
            (Vec::new(), vec![rep.table()])
        }
    };
    manifest.finished = now_rfc3339();
    Ok(StudyOutput {
        estimates,
        tables,
        manifest,
        warnings,
        failures,
    })
}

fn gap_estimates(ladder: &[f64], gaps: &[EstimatorResult]) -> Vec<NamedEstimate> {
    gaps.iter()
        .zip(ladder.windows(2))
        .map(|(g, w)| NamedEstimate {
            label: format!("gap {} -> {}", w[0], w[1]),
            estimate: *g,
        })
        .collect()
}

/// `E[B^i_t B^j_s]` at one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    pub s: f64,
    pub i: usize,
    pub j: usize,
}

/// Ten checkpoints on the grid of `spec`: diagonal and off-diagonal time
/// pairs, cross-component pairs when `d > 1`. Fractions of the horizon are
/// rounded to the nearest grid node.
pub fn default_checkpoints(spec: &FbmSpec) -> Vec<Checkpoint> {
    let grid = spec.grid();
    let node = |a: f64| grid.node(((a * spec.steps as f64).round() as usize).max(1));
    let c = |a: f64, b: f64, i: usize, j: usize| Checkpoint {
        t: node(a),
        s: node(b),
        i: i.min(spec.dim - 1),
        j: j.min(spec.dim - 1),
    };
    vec![
        c(0.25, 0.25, 0, 0),
        c(0.5, 0.5, 0, 0),
        c(1.0, 1.0, 0, 0),
        c(0.25, 0.75, 0, 0),
        c(0.5, 1.0, 0, 0),
        c(0.125, 1.0, 1, 1),
        c(0.75, 0.75, 1, 1),
        c(0.25, 0.5, 1, 1),
        c(0.5, 0.5, 0, 1),
        c(0.25, 1.0, 1, 0),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceAgreement {
    pub checkpoint: Checkpoint,
    /// `R_H(t, s)` for equal components, else 0.
    pub target: f64,
    /// Sample moment from the method under test.
    pub test: EstimatorResult,
    /// Sample moment from independent Cholesky paths.
    pub oracle: EstimatorResult,
}

impl CovarianceAgreement {
    pub fn z(&self) -> f64 {
        (self.test.mean - self.target) / self.test.se
    }

    /// Two-sample z of the method under test against the Cholesky sample.
    pub fn cross_z(&self) -> f64 {
        (self.test.mean - self.oracle.mean) / self.test.se.hypot(self.oracle.se)
    }

    pub fn label(&self) -> String {
        let c = self.checkpoint;
        format!("E[B{}({}) B{}({})]", c.i, c.t, c.j, c.s)
    }
}

fn moments(
    spec: &FbmSpec,
    method: Method,
    domain: Domain,
    idx: &[(usize, usize, usize, usize)],
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<EstimatorResult>> {
    prepare_sampler(spec, method)?;
    let per_path: Vec<Vec<f64>> = map_paths(n, workers, |k| {
        let p = simulate_fbm(spec, SeedSpec::new(seed, k), method, domain)?;
        Ok(idx
            .iter()
            .map(|&(a, b, i, j)| p.at(a, i) * p.at(b, j))
            .collect())
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok((0..idx.len())
        .map(|c| EstimatorResult::from_samples(&per_path.iter().map(|v| v[c]).collect::<Vec<_>>()))
        .collect())
}

/// Sample second moments of `method` paths against `R_H` and against an
/// independent Cholesky family (its own random stream domain).
pub fn fbm_covariance_study(
    spec: &FbmSpec,
    method: Method,
    checkpoints: &[Checkpoint],
    n_paths: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<CovarianceAgreement>> {
    spec.validate()?;
    require_paths(n_paths)?;
    let grid = spec.grid();
    let idx: Vec<(usize, usize, usize, usize)> = checkpoints
        .iter()
        .map(|c| {
            let at = |t: f64| {
                grid.index_of(t)
                    .ok_or_else(|| invalid("checkpoints", format!("{t} is not a grid node")))
            };
            if c.i >= spec.dim || c.j >= spec.dim {
                return Err(invalid(
                    "checkpoints",
                    format!("component out of range for d = {}", spec.dim),
                ));
            }
            Ok((at(c.t)?, at(c.s)?, c.i, c.j))
        })
        .collect::<Result<_>>()?;
    let test = moments(spec, method, Domain::Fbm, &idx, n_paths, seed, workers)?;
    let oracle = moments(
        spec,
        Method::Cholesky,
        Domain::FbmAlt,
        &idx,
        n_paths,
        seed,
        workers,
    )?;
    Ok(checkpoints
        .iter()
        .zip(test.into_iter().zip(oracle))
        .map(|(&c, (test, oracle))| CovarianceAgreement {
            checkpoint: c,
            target: if c.i == c.j {
                covariance(spec.hurst, c.t, c.s)
            } else {
                0.0
            },
            test,
            oracle,
        })
        .collect())
}

pub fn covariance_table(method: Method, rows: &[CovarianceAgreement]) -> Table {
    let mut t = Table::new(
        "fbm_covariance",
        &[
            "t",
            "s",
            "comp_i",
            "comp_j",
            "target",
            "method",
            "mean",
            "se",
            "z",
            "cholesky_mean",
            "cholesky_se",
            "cross_z",
        ],
    );
    for r in rows {
        let c = r.checkpoint;
        t.push(vec![
            c.t.into(),
            c.s.into(),
            c.i.into(),
            c.j.into(),
            r.target.into(),
            method.name().into(),
            r.test.mean.into(),
            r.test.se.into(),
            r.z().into(),
            r.oracle.mean.into(),
            r.oracle.se.into(),
            r.cross_z().into(),
        ]);
    }
    t
}

fn ladder_rows(
    t: &mut Table,
    ladder: &[f64],
    gaps: &[EstimatorResult],
    changes: &[EstimatorResult],
    tail: impl Fn() -> Vec<Cell>,
) {
    for (k, g) in gaps.iter().enumerate() {
        let (cm, cs) = match changes.get(k) {
            Some(c) => (Cell::from(c.mean), Cell::from(c.se)),
            None => (Cell::from(""), Cell::from("")),
        };
        let mut row = vec![
            (k + 1).into(),
            ladder[k].into(),
            ladder[k + 1].into(),
            g.mean.into(),
            g.se.into(),
            cm,
            cs,
            g.n.into(),
        ];
        row.extend(tail());
        t.push(row);
    }
}

pub const LADDER_COLUMNS: [&str; 8] = [
    "k",
    "eps_k",
    "eps_k1",
    "gap_mean",
    "gap_se",
    "change_mean",
    "change_se",
    "n",
];

pub fn local_time_ladder_table(c: &CauchyStudy) -> Table {
    let mut t = Table::new("local_time_ladder", &LADDER_COLUMNS);
    ladder_rows(&mut t, &c.ladder, &c.gaps, &c.gap_changes, Vec::new);
    t
}

pub fn sde_ladder_table(l: &LadderStudy) -> Table {
    let mut cols = LADDER_COLUMNS.to_vec();
    cols.push("regime_flag");
    let mut t = Table::new("sde_ladder", &cols);
    let flag = l.regime_flag.clone().unwrap_or_default();
    ladder_rows(&mut t, &l.ladder, &l.gaps, &l.gap_changes, || {
        vec![flag.clone().into()]
    });
    t
}

pub fn mean_one_table(amplitude: f64, epsilon: f64, r: &MeanOneReport) -> Table {
    let mut t = Table::new(
        "girsanov_mean_one",
        &[
            "amplitude",
            "epsilon",
            "mean",
            "se",
            "n",
            "z",
            "ess",
            "min_xi",
            "log_xi_second_moment",
        ],
    );
    t.push(vec![
        amplitude.into(),
        epsilon.into(),
        r.mean.mean.into(),
        r.mean.se.into(),
        r.mean.n.into(),
        if r.mean.se > 0.0 {
            ((r.mean.mean - 1.0) / r.mean.se).into()
        } else {
            0.0.into()
        },
        r.ess.into(),
        r.min_xi.into(),
        r.log_second_moment.mean.into(),
    ]);
    t
}
