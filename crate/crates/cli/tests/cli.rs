use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn volpath(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volpath"))
        .args(args)
        .env_remove("VOLPATH_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = volpath(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

const FIXTURE: &str = "\
timestamp,price
2021-03-01 09:30:00,100.00
2021-03-01 10:30:00,100.40
2021-03-01 11:30:00,99.90
2021-03-01 12:30:00,100.10
2021-03-01 16:00:00,100.70
2021-03-02 09:30:00,100.60
2021-03-02 10:30:00,101.20
2021-03-02 11:30:00,101.00
2021-03-02 12:30:00,100.20
2021-03-02 16:00:00,100.50
2021-03-03 09:30:00,100.50
2021-03-03 10:30:00,100.30
2021-03-03 11:30:00,100.90
2021-03-03 12:30:00,101.40
2021-03-03 16:00:00,101.10
";

#[test]
fn estimate_fixture_gives_one_row_per_day() {
    let dir = tempfile::tempdir().unwrap();
    let bars = dir.path().join("bars.csv");
    fs::write(&bars, FIXTURE).unwrap();
    let out = dir.path().join("est");
    ok(&[
        "estimate",
        "--input",
        p(&bars),
        "--out",
        p(&out),
        "--alpha",
        "0.05",
        "--min-obs",
        "2",
    ]);
    assert_eq!(data_rows(&out.join("components.csv")), 3);
    assert!(out.join("describe.txt").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "estimate");
    assert_eq!(manifest["config"]["estimate"]["jump_alpha"], 0.05);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn unknown_model_exits_two_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = volpath(&[
        "fit",
        "--input",
        p(dir.path()),
        "--out",
        p(&dir.path().join("f")),
        "--models",
        "HAR-RV,NOPE",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NOPE"));
}

#[test]
fn unreadable_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = volpath(&[
        "estimate",
        "--input",
        p(&dir.path().join("none.csv")),
        "--out",
        p(&dir.path().join("e")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn too_sparse_data_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let bars = dir.path().join("bars.csv");
    fs::write(&bars, FIXTURE).unwrap();
    let out = volpath(&[
        "estimate",
        "--input",
        p(&bars),
        "--out",
        p(&dir.path().join("e")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 10 returns"));
}

#[test]
fn zero_threads_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = volpath(&["--threads", "0", "simulate", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_twice_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&[
            "simulate",
            "--out",
            p(d),
            "--days",
            "15",
            "--intraday",
            "26",
            "--seed",
            "5",
            "--jump-intensity",
            "0.4",
            "--jump-std",
            "0.01",
        ]);
    }
    for name in ["bars.csv", "truth.csv", "simulation.csv", "run.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn forecast_counts_and_single_model_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let fc = dir.path().join("fc");
    let ev = dir.path().join("ev");
    ok(&[
        "simulate",
        "--kind",
        "pdv",
        "--days",
        "4700",
        "--seed",
        "1",
        "--out",
        p(&sim),
    ]);
    ok(&[
        "forecast",
        "--input",
        p(&sim),
        "--out",
        p(&fc),
        "--models",
        "HAR-RV",
        "--horizons",
        "1,5,22",
    ]);
    let counts: Vec<usize> = [1, 5, 22]
        .iter()
        .map(|h| data_rows(&fc.join(format!("forecast_HAR-RV_h{h}.csv"))))
        .collect();
    assert_eq!(counts, vec![600, 596, 579]);

    ok(&[
        "evaluate",
        "--input",
        p(&fc),
        "--out",
        p(&ev),
        "--benchmark",
        "HAR-RV",
        "--reps",
        "200",
    ]);
    let table = fs::read_to_string(ev.join("mcs_pvalues_h1.csv")).unwrap();
    let row = table.lines().nth(1).unwrap();
    assert!(row.starts_with("HAR-RV,"));
    assert!(
        row.split(',')
            .skip(1)
            .all(|v| v.parse::<f64>().unwrap() == 1.0),
        "{row}"
    );
    let r2 = fs::read_to_string(ev.join("oos_r2_h5.csv")).unwrap();
    assert!(r2
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("HAR-RV,0.0000000000000000e0,"));

    let report = volpath(&["report", "--input", p(&ev)]);
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("HAR-RV"));
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 9\n[simulate]\nn_days = 7\nn_intraday = 13\n").unwrap();
    let a = dir.path().join("a");
    ok(&["--config", p(&cfg), "simulate", "--out", p(&a)]);
    let days = fs::read_to_string(a.join("truth.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    assert_eq!(days, 7);

    let b = dir.path().join("b");
    ok(&[
        "--config",
        p(&cfg),
        "simulate",
        "--out",
        p(&b),
        "--days",
        "4",
    ]);
    assert_eq!(
        fs::read_to_string(b.join("truth.csv"))
            .unwrap()
            .lines()
            .count()
            - 1,
        4
    );

    fs::write(&cfg, "[simulate]\nbogus = 1\n").unwrap();
    let out = volpath(&["--config", p(&cfg), "simulate", "--out", p(&a)]);
    assert_eq!(out.status.code(), Some(2));
}
