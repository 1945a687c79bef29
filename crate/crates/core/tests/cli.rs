use std::path::Path;
use std::process::{Command, Output};

fn boa_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boa-lab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn repeated_runs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 3\n");
    let mut csvs = Vec::new();
    for sub in ["first", "second"] {
        let out = dir.path().join(sub);
        let o = boa_lab(&["run", "--config", &cfg, "--experiment", "thm1", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(std::fs::read(out.join("thm1.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("experiment,kappa,error_L2,error_H2k,slope_running,floor_estimate,wall_ms")
    );
    assert_eq!(lines.count(), 4);

    let report = json(&dir.path().join("first").join("thm1.json"));
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    assert!(report["certificate"]["delta"].as_f64().unwrap() >= 1.0 - 1e-12);
    assert_eq!(report["all_bands_met"], true);
    let fit = &report["reports"][0]["fit"];
    assert!(fit["points"].as_u64().unwrap() >= 4);
    assert!(report["environment"]["version"].is_string());
}

#[test]
fn seed_override_changes_hash_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "model.kind = \"decoupled\"\ngrid.N = 64\n");
    let mut hashes = Vec::new();
    for (sub, seed) in [("a", "1"), ("b", "2")] {
        let out = dir.path().join(sub);
        let o = boa_lab(&[
            "run",
            "--config",
            &cfg,
            "--experiment",
            "remainder",
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
        let report = json(&out.join("remainder.json"));
        assert_eq!(report["reports"][0]["band"]["kind"], "all_below");
        assert_eq!(report["reports"][0]["status"], "insufficient_range");
        hashes.push(report["config_hash"].as_str().unwrap().to_string());
    }
    assert_ne!(hashes[0], hashes[1]);
}

#[test]
fn unknown_keys_and_experiments_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.N = 64\ngrid.spacing = 0.1\n");
    let o = boa_lab(&["verify", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("spacing"));
    let cfg = write_config(dir.path(), "grid.N = 64\n");
    let o = boa_lab(&["run", "--config", &cfg, "--experiment", "thm2"]);
    assert!(!o.status.success());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn verify_prints_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.N = 128\n");
    let o = boa_lab(&["verify", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["certificate"]["delta"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["certificate"]["derivative_norms"].as_array().unwrap().len(), 4);
    assert_eq!(v["step_ok"], true);
}

#[test]
fn gap_below_tolerance_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.N = 64\ntolerances.delta_min = 1.5\n");
    let o = boa_lab(&["verify", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gap"));
}

#[test]
fn oversized_step_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.N = 64\ndynamics.dt = 0.25\n");
    let o = boa_lab(&["verify", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["step_ok"], false);
    assert!(v["step_message"].as_str().unwrap().contains("try dt"));
}

#[test]
fn shipped_configs_verify() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["default.toml", "decoupled.toml"] {
        let path = root.join(name);
        let o = boa_lab(&["verify", "--config", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}
