use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn paramstab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paramstab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

#[test]
fn bounds_prints_anchor_coefficients() {
    let tmp = TempDir::new().unwrap();
    let out = paramstab(
        tmp.path(),
        &["bounds", "--L", "1", "--Lp", "1", "--T", "1", "--t", "1"],
    );
    assert!(out.status.success());
    let text = stdout(&out);
    let value = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key} = ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((value("c1") - 2.102_972_9).abs() < 1e-6);
    assert!((value("c2") - 2.321_126_0).abs() < 1e-6);
    assert!((value("c3") - 1.102_972_9).abs() < 1e-6);
}

#[test]
fn bounds_csv_starts_at_identity_triple() {
    let tmp = TempDir::new().unwrap();
    let out = paramstab(
        tmp.path(),
        &[
            "bounds", "--L", "2", "--Lp", "0.5", "--T", "2", "--t", "1", "--csv", "c.csv",
            "--points", "5",
        ],
    );
    assert!(out.status.success());
    let csv = fs::read_to_string(tmp.path().join("c.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,c1,c2,c3");
    assert_eq!(lines.len(), 6);
    assert_eq!(
        lines[1],
        "0.0000000000000000e0,1.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0"
    );
}

#[test]
fn nominal_only_sweep_is_a_zero_row() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"model": "lcs", "lambdas": [0]}"#);
    let out = paramstab(tmp.path(), &["--config", &cfg, "sweep"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let cells: Vec<&str> = rows[0].split(',').collect();
    for dev in &cells[1..4] {
        assert_eq!(dev.parse::<f64>().unwrap(), 0.0);
    }
    assert_eq!(cells[10], "ok");
}

#[test]
fn reproduction_writes_both_panels() {
    let tmp = TempDir::new().unwrap();
    let out = paramstab(tmp.path(), &["reproduce-fig3", "--out", "figs"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert_eq!(stdout(&out).matches(": PASS").count(), 2);
    for stem in ["fig3_unperturbed", "fig3_perturbed"] {
        for ext in ["csv", "json", "svg"] {
            let path = tmp.path().join("figs").join(format!("{stem}.{ext}"));
            assert!(path.is_file(), "{}", path.display());
        }
        let svg = fs::read_to_string(tmp.path().join("figs").join(format!("{stem}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("dev_z") && svg.contains("bound_z"));
    }
    let shifted = fs::read_to_string(tmp.path().join("figs/fig3_perturbed.csv")).unwrap();
    assert_eq!(shifted.lines().count(), 5);
}

#[test]
fn dumped_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let dump = paramstab(
        tmp.path(),
        &["--dump-config", "--seed", "7", "--steps", "400"],
    );
    assert!(dump.status.success());
    let cfg = write(tmp.path(), "dumped.json", &stdout(&dump));
    let again = paramstab(tmp.path(), &["--dump-config", "--config", &cfg]);
    assert_eq!(stdout(&again), stdout(&dump));

    let a = paramstab(
        tmp.path(),
        &["--seed", "7", "--steps", "400", "--out", "a", "sweep"],
    );
    let b = paramstab(tmp.path(), &["--config", &cfg, "--out", "b", "sweep"]);
    assert!(a.status.success() && b.status.success());
    for file in ["sweep.csv", "sweep.json"] {
        let left = fs::read(tmp.path().join("a").join(file)).unwrap();
        let right = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(left, right, "{file}");
    }
}

#[test]
fn integrate_writes_trajectory() {
    let tmp = TempDir::new().unwrap();
    let out = paramstab(
        tmp.path(),
        &["integrate", "--lambda", "0.1", "--steps", "50"],
    );
    assert!(out.status.success());
    let csv = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x_1,x_2,v_1,v_2\n"));
    assert_eq!(csv.lines().count(), 52);
}

#[test]
fn plot_flag_adds_chart() {
    let tmp = TempDir::new().unwrap();
    let out = paramstab(tmp.path(), &["--plot", "--log-log", "sweep"]);
    assert!(out.status.success());
    assert!(tmp.path().join("sweep.svg").is_file());
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"model": "lcs", "gamma": 1, "extra": true}"#,
    );
    let out = paramstab(tmp.path(), &["--config", &cfg, "sweep"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"));
    let missing = paramstab(tmp.path(), &["--config", "nope.json", "sweep"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn blow_up_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"model": "lcs", "lambdas": [0.1], "matrices": {"A": [[0, 1e200], [1e200, 0]]}}"#,
    );
    let out = paramstab(tmp.path(), &["--config", &cfg, "sweep"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn violated_bound_exits_with_one() {
    // ẍ = 3x + 2ẋ outgrows the estimate's exponential rate
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"model": "lcs", "gamma": 2.0,
            "matrices": {"A": [[3.0]], "B": [[0.0]], "C": [[1.0]], "D": [[0.0]]},
            "x0": [0.0], "v0": [0.0], "control": [1.0],
            "perturbation": {"A": [[0.0]], "B": [[0.0]], "D": [[0.0]], "x0": [0.0], "v0": [1.0]},
            "lambdas": [0.1], "lipschitz_samples": 0}"#,
    );
    let out = paramstab(tmp.path(), &["--config", &cfg, "sweep"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL row 0"));
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",violation"));
}

#[test]
fn verify_prints_one_line_per_property() {
    let tmp = TempDir::new().unwrap();
    let out = paramstab(tmp.path(), &["verify", "--families", "5", "--steps", "300"]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
    for name in [
        "integrator-order",
        "bound-soundness-sup",
        "bound-soundness-euclid",
        "certify-lcs",
    ] {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn missing_command_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(paramstab(tmp.path(), &[]).status.code(), Some(2));
}
