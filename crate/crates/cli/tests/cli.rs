use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn compdlm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compdlm")).args(args).output().expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, config: Option<&Path>) -> std::path::PathBuf {
    let out = dir.join("sim");
    let mut args = vec!["simulate", "--out", arg(&out)];
    if let Some(c) = config {
        args.extend(["--config", arg(c)]);
    }
    let o = compdlm(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn missing_data_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = compdlm(&["causal", "--data", arg(&dir.path().join("nope.csv")), "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.csv"));
}

#[test]
fn bad_config_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[model]\ndelta = 1.5\n").unwrap();
    let o = compdlm(&["simulate", "--config", arg(&cfg), "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    fs::write(&cfg, "[model]\nunknown = 1\n").unwrap();
    let o = compdlm(&["simulate", "--config", arg(&cfg), "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn usage_error_exits_two() {
    assert_eq!(compdlm(&["causal"]).status.code(), Some(2));
}

#[test]
fn rank_one_panel_has_no_second_factor() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    fs::write(&panel, "unit,1,2,3\na,1,2,3\nb,1,2,3\nc,1,2,3\n").unwrap();
    let o = compdlm(&["stratify", "--data", arg(&panel), "--out", arg(&dir.path().join("labels.csv"))]);
    assert!(!o.status.success());
}

#[test]
fn stratify_writes_labels_and_means() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    // Levels differ widely (factor 1); a and b trend up, c and d trend down.
    let mut text = String::from("unit,1,2,3,4,5,6\n");
    for (unit, level, slope) in [("a", 10.0, 1.0), ("b", 40.0, 1.0), ("c", 20.0, -1.0), ("d", 30.0, -1.0)] {
        let row: Vec<String> = (0..6).map(|t| format!("{}", level + slope * (t as f64 - 2.5) * 0.2)).collect();
        text += &format!("{unit},{}\n", row.join(","));
    }
    fs::write(&panel, text).unwrap();
    let labels = dir.path().join("labels.csv");
    let means = dir.path().join("means.csv");
    let o = compdlm(&["stratify", "--data", arg(&panel), "--out", arg(&labels), "--means", arg(&means)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&labels);
    assert_eq!(rows[0], ["unit", "label", "loading"]);
    assert_eq!(rows[1][1], rows[2][1]);
    assert_eq!(rows[3][1], rows[4][1]);
    assert_ne!(rows[1][1], rows[3][1]);
    assert_eq!(csv_rows(&means).len(), 7);
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), None);
    let data = sim.join("observed.csv");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = compdlm(&["causal", "--data", arg(&data), "--samples", "500", "--seed", "4", "--out", arg(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["counterfactual_forecast.csv", "oam_forecast.csv", "effect.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert!(!a.join("lift.csv").exists());
    let c = dir.path().join("c");
    compdlm(&["causal", "--data", arg(&data), "--samples", "500", "--seed", "5", "--out", arg(&c)]);
    assert_ne!(fs::read(a.join("effect.csv")).unwrap(), fs::read(c.join("effect.csv")).unwrap());
}

#[test]
fn null_shock_counterfactual_equals_observed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[simulate]\nshock = [0.0, 0.0]\n").unwrap();
    let sim = simulate(dir.path(), Some(&cfg));
    let observed = csv_rows(&sim.join("observed.csv"));
    let counterfactual = csv_rows(&sim.join("counterfactual.csv"));
    assert_eq!(observed.len(), 61);
    for (o, c) in observed.iter().zip(&counterfactual) {
        assert_eq!(o[0], c[0]);
        assert_eq!(&o[3..], &c[1..]);
    }
}

#[test]
fn lift_table_only_on_log_scale() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sales.csv");
    let mut text = String::from("time,C1,C2,E1,E2\n");
    for t in 1..=40 {
        let x = t as f64;
        text += &format!(
            "{t},{},{},{},{}\n",
            100.0 + (0.5 * x).sin(),
            120.0 + (0.5 * x + 0.3).sin(),
            90.0 + (0.5 * x + 0.1).sin(),
            110.0 + (0.5 * x + 0.2).cos()
        );
    }
    fs::write(&data, text).unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[causal]\nlog_scale = true\nnsamples = 400\n").unwrap();
    let out = dir.path().join("out");
    let o = compdlm(&["causal", "--config", arg(&cfg), "--data", arg(&data), "--out", arg(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("lift.csv"));
    assert_eq!(rows[0], ["time", "series", "p05", "p25", "p50", "p75", "p95"]);
    assert_eq!(rows.len(), 1 + 11 * 2);
    for row in &rows[1..] {
        let q: Vec<f64> = row[2..].iter().map(|x| x.parse().unwrap()).collect();
        assert!(q.windows(2).all(|w| w[0] <= w[1]), "{row:?}");
    }
}
