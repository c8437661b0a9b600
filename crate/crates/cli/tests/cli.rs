use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "kind = \"drift\"\nbackend = \"h2\"\n[simulation]\nhorizon = 4.0\ndt = 0.01\npaths = 200\n";

fn leafwise(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leafwise"))
        .args(args)
        .current_dir(dir)
        .env_remove("LEAFWISE__SIMULATION__PATHS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("experiment.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for out in ["a", "b"] {
        let o = leafwise(&["run", "--config", &cfg, "--out", out, "--seed", "9"], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["config.toml", "results.csv", "summary.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between reruns");
    }
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], "leafwise-run/1");
    assert_eq!(summary["seed"], 9);
    let leftovers: Vec<_> = fs::read_dir(dir.path().join("a"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn unknown_key_exits_with_code_two_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}stepz = 3\n"));
    let o = leafwise(&["run", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("simulation") && err.contains("stepz"), "{err}");
    assert!(!dir.path().join("o").exists());

    let o = leafwise(&["run", "--config", &cfg.replace("experiment", "missing"), "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_checks_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let ok = leafwise(&["run", "--config", &cfg, "--out", "ok"], dir.path());
    assert_eq!(ok.status.code(), Some(0));
    let strict = leafwise(&["run", "--config", &cfg, "--out", "strict", "--override", "estimator.sigmas=0"], dir.path());
    assert_eq!(strict.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&strict.stdout).contains("FAIL drift_pathwise"));
}

#[test]
fn environment_overrides_apply_below_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |extra: &[&str], out: &str| {
        let mut args = vec!["run", "--config", &cfg, "--out", out];
        args.extend_from_slice(extra);
        let o = Command::new(env!("CARGO_BIN_EXE_leafwise"))
            .args(&args)
            .current_dir(dir.path())
            .env("LEAFWISE__SIMULATION__PATHS", "50")
            .output()
            .unwrap();
        assert!(o.status.success());
        fs::read_to_string(dir.path().join(out).join("config.toml")).unwrap()
    };
    assert!(run(&[], "env").contains("paths = 50"));
    assert!(run(&["--override", "simulation.paths=60"], "flag").contains("paths = 60"));
}

#[test]
fn sweep_standard_error_scales_as_inverse_square_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let counts = [250.0f64, 1000.0, 4000.0, 16000.0];
    let values = counts.map(|n| (n as usize).to_string()).join(",");
    let o = leafwise(&["sweep", "--config", &cfg, "--out", "sw", "--axis", "simulation.paths", "--values", &values], dir.path());
    assert!(o.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    let stderr_col = csv.lines().next().unwrap().split(',').position(|h| h == "stderr").unwrap();
    let points: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .filter(|l| l.contains(",drift_pathwise,"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse::<f64>().unwrap().ln(), f[stderr_col].parse::<f64>().unwrap().ln())
        })
        .collect();
    assert_eq!(points.len(), counts.len());
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() < 0.05, "log-log slope {slope}");
    for i in 0..counts.len() {
        assert!(dir.path().join(format!("sw/run_{i}/summary.json")).exists());
    }
}
