use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn quenchlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quenchlab"))
        .args(args)
        .env_remove("QUENCHLAB_OUT")
        .output()
        .expect("binary runs")
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn write_config(dir: &TempDir, text: &str) -> String {
    let path = dir.path().join("run.toml");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

const SMALL: &str = r#"
N = 3
M = 4
excited = [2, 3]
t_max = 100.0
t_steps = 201
analyses = ["dynamics", "gge", "covariance", "delocalization"]
windows = [20.0, 40.0]
"#;

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let first = quenchlab(&[
        "--config",
        &config,
        "--out",
        a.to_str().unwrap(),
        "--dump-bogoliubov",
    ]);
    assert!(
        first.status.success(),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let second = quenchlab(&[
        "--config",
        &config,
        "--out",
        b.to_str().unwrap(),
        "--dump-bogoliubov",
        "--threads",
        "1",
    ]);
    assert!(second.status.success());

    let names = files(&a.join("run"));
    assert_eq!(names, files(&b.join("run")));
    for expected in [
        "dynamics.csv",
        "fluctuation.csv",
        "covariance.csv",
        "delocalization.csv",
        "alpha.csv",
        "gge.json",
    ] {
        assert!(names.iter().any(|n| n == expected), "missing {expected}");
    }
    for name in names.iter().filter(|n| n.ends_with(".csv")) {
        let x = fs::read(a.join("run").join(name)).unwrap();
        let y = fs::read(b.join("run").join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn dynamics_csv_layout() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL);
    let out = dir.path().join("out");
    assert!(
        quenchlab(&["--config", &config, "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let text = fs::read_to_string(out.join("run/dynamics.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,n_1,n_2,n_3,n_4,n_5,n_6,n_7,E_N,E_M,E_N_plus_E_M,E_total_joint"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 201);
    assert!((rows[0][2] - 1.0).abs() < 1e-8 && (rows[0][3] - 1.0).abs() < 1e-8);
    let e_total = rows[0][11];
    for row in &rows {
        assert_eq!(row.len(), 12);
        assert!((row[10] - row[8] - row[9]).abs() < 1e-12);
        assert_eq!(row[11], e_total);
    }
    let first_value = text.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    assert_eq!(
        first_value
            .split('e')
            .next()
            .unwrap()
            .replace(['-', '.'], "")
            .len(),
        17
    );

    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert!(m["error"].is_null());
    assert_eq!(m["presets"][0]["config"]["N"], 3);
    assert!(m["presets"][0]["files"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f == "run/dynamics.csv"));
}

#[test]
fn empty_analyses_write_only_the_manifest() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "N = 2\nM = 3\nanalyses = []\n");
    let out = dir.path().join("out");
    let run = quenchlab(&["--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0));
    assert_eq!(files(&out), vec!["manifest.json"]);
    assert_eq!(manifest(&out)["status"], "ok");
}

#[test]
fn config_errors_exit_2_with_a_record() {
    let dir = TempDir::new().unwrap();
    for (i, text) in [
        "N = 2\nM = 3\ncolour = \"red\"\n",
        "N = 2\n",
        "N = 2\nM = 3\nexcited = [9]\n",
        "N = 3\nM = 4\nanalyses = [\"fock-oracle\"]\n",
        "N = 2\nM = 2\nanalyses = [\"teleport\"]\n",
    ]
    .iter()
    .enumerate()
    {
        let config = write_config(&dir, text);
        let out = dir.path().join(format!("out{i}"));
        let run = quenchlab(&["--config", &config, "--out", out.to_str().unwrap()]);
        assert_eq!(run.status.code(), Some(2), "{text}");
        let m = manifest(&out);
        assert_eq!(m["status"], "error");
        assert_eq!(m["error"]["kind"], "config");
        assert_eq!(m["error"]["exit_code"], 2);
    }
}

#[test]
fn argument_errors_still_leave_a_manifest() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let run = quenchlab(&["--out", out.to_str().unwrap(), "--threads", "many"]);
    assert_eq!(run.status.code(), Some(2));
    assert_eq!(manifest(&out)["error"]["kind"], "config");

    let run = quenchlab(&["--out", out.to_str().unwrap(), "--preset", "fig9"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(manifest(&out)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("fig9"));
}

#[test]
fn cutoff_failures_are_numeric_errors() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "N = 2\nM = 2\noccupations = \"0,1,1,0\"\nanalyses = [\"fock-oracle\"]\ncutoff = 2\norder = 4\n",
    );
    let out = dir.path().join("out");
    let run = quenchlab(&["--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(3));
    let m = manifest(&out);
    assert_eq!(m["error"]["kind"], "numeric");
    assert_eq!(m["presets"][0]["status"], "error");
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = blocker.join("out");
    let run = quenchlab(&["--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&run.stderr).contains("\"kind\":\"io\""));
}

#[test]
fn output_dir_falls_back_to_the_environment() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "N = 2\nM = 2\nanalyses = []\n");
    let out = dir.path().join("from-env");
    let run = Command::new(env!("CARGO_BIN_EXE_quenchlab"))
        .args(["--config", &config])
        .env("QUENCHLAB_OUT", &out)
        .output()
        .unwrap();
    assert!(run.status.success());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn oracle_preset_agrees_with_the_analytic_dynamics() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let run = quenchlab(&["--preset", "oracle", "--out", out.to_str().unwrap()]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(out.join("oracle/fock_oracle.json")).unwrap())
            .unwrap();
    assert!(summary["max_occupation_diff"].as_f64().unwrap() < 2e-3);
    assert!(summary["projection_loss"].as_f64().unwrap() < 1e-3);
}

#[test]
fn table1_preset_counts() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let run = quenchlab(&["--preset", "table1", "--out", out.to_str().unwrap()]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let text = fs::read_to_string(out.join("table1/delocalization.csv")).unwrap();
    let counts: Vec<usize> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts, vec![695, 3180, 1792, 10857, 2950, 20800]);

    let coarse = dir.path().join("coarse");
    let run = quenchlab(&[
        "--preset",
        "table1",
        "--out",
        coarse.to_str().unwrap(),
        "--floor",
        "1e-3",
    ]);
    assert!(run.status.success());
    let text = fs::read_to_string(coarse.join("table1/delocalization.csv")).unwrap();
    let coarse_counts: Vec<usize> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert!(coarse_counts.iter().zip(&counts).all(|(c, f)| c < f));
}

#[test]
fn fig1_and_sweep_presets_run() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    for preset in ["fig1", "sweep", "covariance"] {
        let run = quenchlab(&["--preset", preset, "--out", out.to_str().unwrap()]);
        assert!(
            run.status.success(),
            "{preset}: {}",
            String::from_utf8_lossy(&run.stderr)
        );
    }
    for name in ["fig1_M10", "fig1_M16", "fig1_M20"] {
        let summary: Value = serde_json::from_str(
            &fs::read_to_string(out.join(name).join("dynamics_summary.json")).unwrap(),
        )
        .unwrap();
        assert!(
            summary["fluctuation"]["first_recurrence_time"]
                .as_f64()
                .unwrap()
                > 50.0
        );
    }
    assert!(out.join("sweep/sweep.csv").exists());
    let cov: Value =
        serde_json::from_str(&fs::read_to_string(out.join("covariance/covariance.json")).unwrap())
            .unwrap();
    assert_eq!(cov["thermal_form"]["pass"], true);
}

#[test]
fn config_can_pick_one_preset() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "N = 2\nanalyses = [\"gge\"]\n[[preset]]\nname = \"small\"\nM = 2\n[[preset]]\nname = \"big\"\nM = 6\n",
    );
    let out = dir.path().join("out");
    let run = quenchlab(&[
        "--config",
        &config,
        "--preset",
        "big",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    assert_eq!(files(&out), vec!["big", "manifest.json"]);
    let gge: Value =
        serde_json::from_str(&fs::read_to_string(out.join("big/gge.json")).unwrap()).unwrap();
    assert_eq!(gge["charges"].as_array().unwrap().len(), 8);
}
