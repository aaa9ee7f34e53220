use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn skewfbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skewfbm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut a = args.to_vec();
    let out = dir.to_str().unwrap();
    a.extend(["--out", out]);
    let o = skewfbm(&a);
    assert!(
        o.status.code().is_some(),
        "terminated by signal: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Every CSV under `dir`, keyed by relative path.
fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.extension().is_some_and(|x| x == "csv") {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn header(dir: &Path, file: &str) -> String {
    let text = std::fs::read_to_string(dir.join(file)).unwrap();
    text.lines().next().unwrap().to_string()
}

fn column(dir: &Path, file: &str, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(dir.join(file)).unwrap();
    let k = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[k].to_string()).collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

const FBM: [&str; 10] = [
    "--H", "0.2", "--d", "1", "--n", "1024", "--N", "100", "--seed", "7",
];

#[test]
fn simulate_fbm_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let mut args = vec!["simulate-fbm"];
    args.extend(FBM);
    assert_eq!(run_in(a.path(), &args).status.code(), Some(0));
    assert_eq!(run_in(b.path(), &args).status.code(), Some(0));
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    assert_eq!(fa.len(), 101);
    assert_eq!(fa, fb);
    let (mut ma, mut mb) = (manifest(a.path()), manifest(b.path()));
    for m in [&mut ma, &mut mb] {
        for k in ["started", "finished"] {
            m[k] = serde_json::Value::Null;
        }
        m["config"]["out"] = serde_json::Value::Null;
    }
    assert_eq!(ma, mb);
    assert_eq!(ma["outputs"].as_array().unwrap().len(), 101);
}

#[test]
fn simulate_fbm_emits_cross_method_table() {
    let d = TempDir::new().unwrap();
    let o = run_in(
        d.path(),
        &[
            "simulate-fbm",
            "--n",
            "64",
            "--N",
            "200",
            "--method",
            "cholesky",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        header(d.path(), "fbm_covariance.csv"),
        "t,s,comp_i,comp_j,target,method,mean,se,z,cholesky_mean,cholesky_se,cross_z"
    );
    assert!(column(d.path(), "fbm_covariance.csv", "method")
        .iter()
        .all(|m| m == "cholesky"));
    assert_eq!(header(d.path(), "paths/path_00000.csv"), "t,component_1");
}

#[test]
fn hurst_outside_range_exits_2() {
    let d = TempDir::new().unwrap();
    let o = run_in(d.path(), &["simulate-fbm", "--H", "0.6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("H must lie in (0, 1/2)"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn local_time_rejects_hd_at_least_one() {
    let d = TempDir::new().unwrap();
    let o = run_in(d.path(), &["local-time", "--H", "0.6", "--d", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_in(d.path(), &["local-time", "--H", "0.3", "--d", "4"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("warning: Hd = 1.2"), "{e}");
    assert!(e.contains("local time does not exist"), "{e}");
}

#[test]
fn local_time_tables_have_fixed_columns() {
    let d = TempDir::new().unwrap();
    let o = run_in(
        d.path(),
        &["local-time", "--n", "64", "--N", "50", "--seed", "3"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        header(d.path(), "exponent_regression.csv"),
        "t,mean_local_time,se,slope,slope_se,expected_slope"
    );
    assert_eq!(
        header(d.path(), "local_time_ladder.csv"),
        "k,eps_k,eps_k1,gap_mean,gap_se,change_mean,change_se,n"
    );
    // default ladder 2^-1..2^-8 gives 7 consecutive gaps
    assert_eq!(column(d.path(), "local_time_ladder.csv", "eps_k").len(), 7);
    assert_eq!(
        header(d.path(), "moment_bound.csv"),
        "m,mean,se,bound,holds,k"
    );
    assert!(header(d.path(), "self_similarity.csv").starts_with("t,epsilon,ks_matched_statistic"));
}

#[test]
fn sde_with_zero_drift_reproduces_fbm_paths() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let common = ["--H", "0.1", "--n", "64", "--N", "12", "--seed", "11"];
    let mut fbm = vec!["simulate-fbm"];
    fbm.extend(common);
    let mut sde = vec!["solve-sde", "--alpha", "0"];
    sde.extend(common);
    assert_eq!(run_in(a.path(), &fbm).status.code(), Some(0));
    let o = run_in(b.path(), &sde);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let paths = |m: BTreeMap<String, Vec<u8>>| -> BTreeMap<String, Vec<u8>> {
        m.into_iter()
            .filter(|(k, _)| k.starts_with("paths"))
            .collect()
    };
    let (pa, pb) = (paths(csv_files(a.path())), paths(csv_files(b.path())));
    assert_eq!(pa.len(), 12);
    assert_eq!(pa, pb);
}

fn regime_column(h: &str, d: &str) -> Vec<String> {
    let dir = TempDir::new().unwrap();
    let o = run_in(
        dir.path(),
        &["solve-sde", "--H", h, "--d", d, "--n", "64", "--N", "10"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    column(dir.path(), "sde_ladder.csv", "regime_flag")
}

#[test]
fn regime_flag_iff_hurst_at_threshold() {
    // thresholds 1/6 for d = 1 and 1/8 for d = 2
    for (h, d, flagged) in [
        ("0.1", "1", false),
        ("0.166", "1", false),
        ("0.17", "1", true),
        ("0.12", "2", false),
        ("0.125", "2", true),
        ("0.3", "2", true),
    ] {
        let col = regime_column(h, d);
        assert!(!col.is_empty());
        let want = if flagged { "outside proven regime" } else { "" };
        assert!(col.iter().all(|c| c == want), "H = {h}, d = {d}: {col:?}");
    }
}

#[test]
fn sde_ladder_matches_snapshot() {
    let d = TempDir::new().unwrap();
    let o = run_in(
        d.path(),
        &[
            "solve-sde",
            "--H",
            "0.1",
            "--n",
            "64",
            "--N",
            "40",
            "--seed",
            "7",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let got = std::fs::read_to_string(d.path().join("sde_ladder.csv")).unwrap();
    let want = include_str!("golden/sde_ladder_seed7.csv");
    assert_eq!(got, want);
    for f in ["holder.csv", "compactness.csv"] {
        assert!(d.path().join(f).exists(), "{f}");
    }
}

#[test]
fn girsanov_zero_drift_and_schema() {
    let d = TempDir::new().unwrap();
    let o = run_in(
        d.path(),
        &["girsanov", "--n", "64", "--N", "50", "--amplitude", "0"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(column(d.path(), "girsanov_density.csv", "xi")
        .iter()
        .all(|x| x == "1"));
    let h = header(d.path(), "girsanov_mean_one.csv");
    assert!(h.split(',').any(|c| c == "ess"), "{h}");
    assert!(header(d.path(), "covariance_test.csv").contains("verdict"));
    assert_eq!(
        header(d.path(), "exp_moments.csv"),
        "mu,epsilon,mean,se,log_estimate,heavy_tail"
    );
}

#[test]
fn girsanov_negative_amplitude_parses() {
    let d = TempDir::new().unwrap();
    let o = run_in(
        d.path(),
        &["girsanov", "--n", "64", "--N", "200", "--amplitude", "-1"],
    );
    assert_ne!(o.status.code(), Some(2), "{}", stderr(&o));
    assert_eq!(
        column(d.path(), "girsanov_mean_one.csv", "amplitude"),
        ["-1"]
    );
}

#[test]
fn verify_only_filter() {
    let d = TempDir::new().unwrap();
    let o = run_in(d.path(), &["verify", "--only", "shuffles"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let groups = column(d.path(), "verify.csv", "group");
    assert!(!groups.is_empty());
    assert!(groups.iter().all(|g| g == "shuffles"));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
}

#[test]
fn verify_unknown_group_is_config_error() {
    let d = TempDir::new().unwrap();
    let o = run_in(d.path(), &["verify", "--only", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown group"));
}

#[test]
fn config_file_and_flag_precedence() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 5\n[fbm]\nhurst = 0.15\nsteps = 32\npaths = 3\n",
    )
    .unwrap();
    let out = d.path().join("o");
    let o = skewfbm(&[
        "simulate-fbm",
        "--config",
        cfg.to_str().unwrap(),
        "--N",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["master_seed"], 5);
    assert_eq!(m["config"]["fbm"]["hurst"], 0.15);
    assert_eq!(m["config"]["fbm"]["paths"], 4);
    assert_eq!(m["config"]["fbm"]["steps"], 32);

    std::fs::write(&cfg, "[fbm]\nhurts = 0.15\n").unwrap();
    let o = skewfbm(&[
        "simulate-fbm",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hurts"), "{}", stderr(&o));
}

#[test]
fn usage_error_exits_2() {
    assert_eq!(skewfbm(&["simulate-fbm", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        skewfbm(&[
            "simulate-fbm",
            "--method",
            "euler",
            "--out",
            "/nonexistent/x"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn manifest_replays_tables() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let o = run_in(
        a.path(),
        &[
            "girsanov", "--H", "0.15", "--n", "32", "--N", "30", "--seed", "19",
        ],
    );
    assert_ne!(o.status.code(), Some(2), "{}", stderr(&o));
    let m = manifest(a.path());
    assert_eq!(m["command"], "girsanov");
    let cfg: toml::Table = serde_json::from_value(m["config"].clone()).unwrap();
    let file = b.path().join("replay.toml");
    std::fs::write(&file, toml::to_string(&cfg).unwrap()).unwrap();
    let out = b.path().join("o");
    skewfbm(&[
        "girsanov",
        "--config",
        file.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(csv_files(a.path()), csv_files(&out));
}
