use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const FIG_ARGS: &[&str] = &[
    "n=4096",
    "alpha=0.8",
    "delta=0.25",
    "lambda=0.1",
    "gamma=0.5",
    "mu_b=0.5",
    "rho=0.1",
];
const SMALL_ARGS: &[&str] = &[
    "n=400",
    "alpha=0.8",
    "delta=0.25",
    "lambda=0.1",
    "gamma=0.5",
    "mu_b=0.5",
    "rho=0.1",
];

fn amprlab(out: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_amprlab"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("AMPRLAB_")) {
        cmd.env_remove(k);
    }
    cmd.arg("--out").arg(out).args(args).output().unwrap()
}

fn ok(out: &Path, args: &[&str]) {
    let o = amprlab(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn with(base: &[&str], cmd: &str, extra: &[&str]) -> Vec<String> {
    std::iter::once(cmd)
        .chain(base.iter().copied())
        .chain(extra.iter().copied())
        .map(String::from)
        .collect()
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn csv_column(path: impl AsRef<Path>, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let col = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

fn same_files(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name:?} differs"
        );
    }
}

#[test]
fn fig_setting_summary_and_cross_command_variance() {
    let dir = tempfile::tempdir().unwrap();
    let (ampr, se) = (dir.path().join("ampr"), dir.path().join("se"));
    ok(&ampr, &refs(&with(FIG_ARGS, "run-ampr", &["--seed", "7"])));
    ok(&se, &refs(&with(FIG_ARGS, "run-se", &[])));
    let a = json(ampr.join("summary.json"));
    let s = json(se.join("summary.json"));
    assert_eq!(a["converged"], Value::Bool(true));
    assert_eq!(a["schema_version"], 1);
    let (sa, ss) = (a["sigma2"].as_f64().unwrap(), s["sigma2"].as_f64().unwrap());
    assert!((sa - ss).abs() <= 0.05 * ss, "{sa} vs {ss}");
    assert_eq!(csv_column(ampr.join("coords.csv"), "w0").len(), 4096);
}

#[test]
fn outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<Vec<String>> = vec![
        with(SMALL_ARGS, "run-ampr", &["--seed", "3"]),
        with(SMALL_ARGS, "run-gamp", &["--seed", "3"]),
        with(SMALL_ARGS, "run-se", &[]),
        with(SMALL_ARGS, "qq", &["--seed", "3", "k=4"]),
        vec![
            "sweep".into(),
            "delta=0.15".into(),
            "rho_grid=0.2,0.6".into(),
            "alpha_grid=0.5,1.5".into(),
        ],
    ];
    for (i, args) in runs.iter().enumerate() {
        let (a, b) = (dir.path().join(format!("{i}a")), dir.path().join(format!("{i}b")));
        ok(&a, &refs(args));
        ok(&b, &refs(args));
        same_files(&a, &b);
    }
}

#[test]
fn floats_round_trip_through_text() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &refs(&with(SMALL_ARGS, "run-ampr", &["--seed", "3"])));
    let text = fs::read_to_string(dir.path().join("coords.csv")).unwrap();
    for field in text.lines().skip(1).flat_map(|l| l.split(',')) {
        let v: f64 = field.parse().unwrap();
        assert_eq!(format!("{v:.16e}"), field);
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = amprlab(dir.path(), &["run-ampr", "n=100", "alpha=0.8"]);
    assert_eq!(missing.status.code(), Some(2));
    let unknown = amprlab(dir.path(), &refs(&with(SMALL_ARGS, "run-ampr", &["bogus=1"])));
    assert_eq!(unknown.status.code(), Some(2));
    let bad_value = amprlab(dir.path(), &refs(&with(SMALL_ARGS, "run-ampr", &["tol=fast"])));
    assert_eq!(bad_value.status.code(), Some(2));
    assert_eq!(amprlab(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn infinite_bootstrap_trajectory_has_no_resampling_variance() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &refs(&with(SMALL_ARGS, "run-se", &["mu_b=inf"])));
    let vhat = csv_column(dir.path().join("trajectory.csv"), "vhat");
    assert!(vhat.len() > 1 && vhat.iter().all(|&v| v == 0.0));
}

#[test]
fn unconverged_state_evolution_is_flagged_not_failed() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &refs(&with(SMALL_ARGS, "run-se", &["se_max_iters=3"])));
    let s = json(dir.path().join("summary.json"));
    assert_eq!(s["converged"], Value::Bool(false));
    assert_eq!(csv_column(dir.path().join("trajectory.csv"), "t").len(), 3);
}

#[test]
fn single_cell_sweep_matches_optimize() {
    let dir = tempfile::tempdir().unwrap();
    let (sw, op) = (dir.path().join("sweep"), dir.path().join("opt"));
    ok(&sw, &["sweep", "delta=0.15", "rho_grid=0.5", "alpha_grid=0.5"]);
    ok(&op, &["optimize", "delta=0.15", "rho=0.5", "alpha=0.5"]);
    let text = fs::read_to_string(sw.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "rho,alpha,mu_b_star,lambda_star,gamma_star,sigma2_star,s2_star,ratio,unique_frac,phase_label,converged"
    );
    assert_eq!(lines.len(), 2);
    let opt = json(op.join("optimum.json"));
    let header: Vec<&str> = lines[0].split(',').collect();
    for (name, cell) in header.iter().zip(lines[1].split(',')) {
        let want = &opt[*name];
        match want {
            Value::Number(n) => assert_eq!(cell.parse::<f64>().unwrap(), n.as_f64().unwrap(), "{name}"),
            Value::String(s) => assert_eq!(cell, s, "{name}"),
            Value::Bool(b) => assert_eq!(cell, b.to_string(), "{name}"),
            other => panic!("{name}: {other}"),
        }
    }
}

#[test]
fn configuration_layers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# small run\nn = 300\nalpha = 0.8\ndelta = 0.25\nrho = 0.1\nlambda = 0.1\ngamma = 0.5\nmu_b = 0.5\nseed = 1\n",
    )
    .unwrap();

    let from_file = dir.path().join("file");
    ok(&from_file, &["run-ampr", "--config", cfg.to_str().unwrap()]);
    assert_eq!(json(from_file.join("summary.json"))["seed"], 1);

    let mut cmd = Command::new(env!("CARGO_BIN_EXE_amprlab"));
    let env_out = dir.path().join("env");
    let o = cmd
        .env("AMPRLAB_MU_B", "2")
        .env("AMPRLAB_SEED", "5")
        .args([
            "--out",
            env_out.to_str().unwrap(),
            "run-ampr",
            "--config",
            cfg.to_str().unwrap(),
            "seed=9",
        ])
        .output()
        .unwrap();
    assert!(o.status.success());
    let s = json(env_out.join("summary.json"));
    assert_eq!(s["mu_b"], 2.0);
    assert_eq!(s["seed"], 9);

    let flag_out = dir.path().join("flag");
    ok(
        &flag_out,
        &["run-ampr", "--config", cfg.to_str().unwrap(), "--seed", "11", "seed=9"],
    );
    assert_eq!(json(flag_out.join("summary.json"))["seed"], 11);
}

#[test]
fn qq_pipeline_outputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &refs(&with(SMALL_ARGS, "qq", &["--seed", "2", "k=1"])));
    let qq = json(dir.path().join("qq.json"));
    assert!(qq["slope"].as_f64().unwrap() > 0.0);
    let theo = csv_column(dir.path().join("qq.csv"), "theoretical");
    assert_eq!(theo.len(), 400);
    assert!(theo.windows(2).all(|w| w[0] < w[1]));
    let scatter = json(dir.path().join("scatter.json"));
    assert_eq!(scatter["k"], 1);

    let none = dir.path().join("none");
    ok(&none, &refs(&with(SMALL_ARGS, "qq", &["--seed", "2", "k=0"])));
    assert!(!none.join("scatter.csv").exists());
    // the residual table does not depend on how many realizations are averaged
    assert_eq!(
        fs::read(none.join("qq.csv")).unwrap(),
        fs::read(dir.path().join("qq.csv")).unwrap()
    );
}
