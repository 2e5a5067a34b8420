use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rampsim::experiment::{read_csv, SweepSpec, RESULT_HEADER};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_prints_lane_table() {
    let out = sim(&[
        "run",
        "--design",
        "diverge",
        "--code",
        "121",
        "--seed",
        "2",
        "--horizon",
        "400",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    for lane in ["nw_left", "nw_middle", "nw_short", "nw_diverge"] {
        assert!(text.contains(lane), "{text}");
    }
    assert!(text.contains("waiting to enter"));
}

#[test]
fn exit_codes() {
    let bad_code = sim(&["run", "--code", "999"]);
    assert_eq!(code(&bad_code), 2);
    assert!(stderr(&bad_code).contains("999"));

    assert_eq!(code(&sim(&["run", "--design", "roundabout"])), 2);
    assert_eq!(code(&sim(&["run", "--dt", "0"])), 2);
    assert_eq!(code(&sim(&["run", "--no-such-flag"])), 1);
    assert_eq!(code(&sim(&["frobnicate"])), 1);
    assert_eq!(code(&sim(&[])), 1);

    let help = sim(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(String::from_utf8_lossy(&help.stdout).contains("sweep"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = sim(&["validate", "--config", path(&missing)]);
    assert_ne!(code(&out), 0);
    assert!(stderr(&out).contains("nope.json"));
}

#[test]
fn validate_reads_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("spec.json");
    fs::write(&cfg, SweepSpec::default().to_json().unwrap()).unwrap();
    let out = sim(&["validate", "--config", path(&cfg)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().trim(),
        "ok: 4 designs, 27 codes, 3 seeds (324 runs)"
    );

    fs::write(&cfg, r#"{"seeds": [1], "bogus": true}"#).unwrap();
    assert_eq!(code(&sim(&["validate", "--config", path(&cfg)])), 2);
}

#[test]
fn sweep_writes_one_row_per_run_and_lane() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("spec.json");
    fs::write(
        &cfg,
        r#"{"designs": ["baseline", "diverge"], "codes": ["111", "333"], "seeds": [1, 2], "sim": {"horizon": 300, "warmup": 60}}"#,
    )
    .unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let r = sim(&["sweep", "--config", path(&cfg), "--out", path(out), "--jobs", "1"]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    }
    let text = fs::read_to_string(&a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(RESULT_HEADER));
    // baseline has 3 northwest lanes, the diverge design 4; 2 codes x 2 seeds
    assert_eq!(lines.count(), 4 * 3 + 4 * 4);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let parallel = dir.path().join("p.csv");
    let r = sim(&["sweep", "--config", path(&cfg), "--out", path(&parallel), "--jobs", "3"]);
    assert_eq!(code(&r), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&parallel).unwrap());
}

#[test]
fn compare_from_result_files() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base.csv");
    let ext = dir.path().join("ext.csv");
    let cmp = dir.path().join("cmp.csv");
    for (design, out) in [("baseline", &base), ("extended", &ext)] {
        let r = sim(&[
            "sweep",
            "--design",
            design,
            "--code",
            "212",
            "--seed",
            "1",
            "--horizon",
            "300",
            "--controlled",
            "--out",
            path(out),
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    }
    let r = sim(&[
        "compare",
        "--baseline",
        path(&base),
        "--variant",
        path(&ext),
        "--out",
        path(&cmp),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(stderr(&r).contains("decreased in"));
    let text = fs::read_to_string(&cmp).unwrap();
    assert!(text.starts_with('#'));
    // one row per lane pair for the single code
    assert_eq!(text.lines().filter(|l| l.starts_with("212,")).count(), 3, "{text}");
    assert_eq!(read_csv(&base).unwrap().len(), 3);

    // codes must match on both sides
    let other = dir.path().join("other.csv");
    let r = sim(&[
        "sweep",
        "--design",
        "extended",
        "--code",
        "111",
        "--seed",
        "1",
        "--horizon",
        "300",
        "--out",
        path(&other),
    ]);
    assert_eq!(code(&r), 0);
    let r = sim(&["compare", "--baseline", path(&base), "--variant", path(&other)]);
    assert_eq!(code(&r), 3, "{}", stderr(&r));
}

#[test]
fn run_writes_trace_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let traj = dir.path().join("traj.csv");
    let out = dir.path().join("run.csv");
    let r = sim(&[
        "run",
        "--horizon",
        "120",
        "--out",
        path(&out),
        "--trace-out",
        path(&trace),
        "--trajectory-out",
        path(&traj),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(fs::read_to_string(&trace).unwrap().lines().count() > 5);
    assert!(fs::read_to_string(&traj).unwrap().lines().count() > 100);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 4);
}
