use std::path::Path;
use std::process::{Command, Output};

fn mcsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcsim")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn billiards_writes_logs_metrics_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mcsim(&["billiards", "--n", "4", "--scheduler", "lazy", "--seed", "1", "--horizon", "20", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read(dir.path(), "final_state.csv").starts_with("ball,x,v\n"));
    assert_eq!(read(dir.path(), "final_state.csv").lines().count(), 5);
    let metrics = read(dir.path(), "metrics.csv");
    assert!(metrics.contains("engine,lazy") && metrics.contains("wall_seconds,"));
    assert!(read(dir.path(), "config.toml").contains("engine = \"lazy\""));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = mcsim(&[
        "ising", "--n", "6", "--t", "2.2", "--h", "0.2", "--horizon", "3", "--seed", "9", "--out",
        a.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = a.path().join("config.toml");
    let o = mcsim(&["ising", "--config", echo.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["magnetization.csv", "spins.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f));
    }
}

#[test]
fn flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "length = 20.0\nsectors = 10\ncount = 50\nseed = 2\n").unwrap();
    let out = dir.path().join("o");
    let o = mcsim(&[
        "deposition", "--config", cfg.to_str().unwrap(), "--count", "80", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(&out, "particles.csv").lines().count(), 81);
    assert!(read(&out, "density.csv").starts_with("height_bin,time_bin,density\n"));
}

#[test]
fn bad_configurations_are_rejected() {
    let o = mcsim(&["billiards", "--n", "4", "--horizon", "1", "--dt", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("time-driven"));

    let o = mcsim(&["circuitnet", "--horizon", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("n") && msg.contains("trunks") && msg.contains("rate"), "{msg}");

    let o = mcsim(&["telecom", "--n", "10", "--horizon", "1", "--trunks", "3"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "n = 4\nhorizon = 1.0\ncolour = 3\n").unwrap();
    let o = mcsim(&["billiards", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn every_engine_runs() {
    let cases: &[&[&str]] = &[
        &["billiards", "--n", "5", "--horizon", "5", "--engine", "anticipatory"],
        &["billiards", "--n", "5", "--horizon", "5", "--engine", "timedriven", "--dt", "0.01"],
        &["deposition", "--length", "10", "--sectors", "5", "--count", "30"],
        &["deposition", "--length", "10", "--sectors", "5", "--horizon", "5", "--engine", "cautious", "--workers", "2"],
        &["deposition", "--length", "10", "--sectors", "5", "--horizon", "5", "--engine", "lockstep-emulation"],
        &["ising", "--n", "4", "--t", "2", "--horizon", "2", "--variant", "class"],
        &["ising", "--n", "4", "--t", "2", "--update-count", "200", "--variant", "uniformized"],
        &["telecom", "--n", "50", "--horizon", "5", "--engine", "time", "--dt", "0.1"],
        &["circuitnet", "--n", "5", "--trunks", "4", "--rate", "1", "--horizon", "5", "--policy", "alba", "--eval", "anticipatory"],
        &["circuitnet", "--n", "5", "--trunks", "4", "--rate", "1", "--horizon", "5", "--engine", "syncrelax", "--workers", "2"],
    ];
    for case in cases {
        let dir = tempfile::tempdir().unwrap();
        let mut args = case.to_vec();
        args.extend(["--out", dir.path().to_str().unwrap()]);
        let o = mcsim(&args);
        assert!(o.status.success(), "{case:?}: {}", stderr(&o));
    }
}

#[test]
fn verify_report_is_deterministic_and_catches_fault() {
    let a = mcsim(&["verify", "all", "--seed", "7"]);
    let b = mcsim(&["verify", "all", "--seed", "7"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.lines().nth(1) == Some("suite,check,result,detail"));

    let o = mcsim(&["verify", "dispenser"]);
    assert!(o.status.success());
    let o = mcsim(&["verify", "dispenser", "--inject-fault", "dispenser"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains(",fail,"));

    let o = mcsim(&["verify", "nosuch"]);
    assert_eq!(o.status.code(), Some(2));
}
