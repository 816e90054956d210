use std::path::{Path, PathBuf};
use std::process::Command;

fn nls() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nls"))
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nls_cli_{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn plateau_config(dir: &Path) -> PathBuf {
    let out = dir.join("out");
    let cfg = serde_json::json!({
        "problem": {
            "N": 3, "p": 4.0, "epsilons": [0.2, 0.1, 0.05],
            "V": {"family": "plateau", "poly": [1.0, 0.0, 1.0], "r_on": 2.0, "r_off": 3.0},
            "K": {"family": "constant", "value": 1.0},
            "Lambda": {"shape": "ball", "radius": 1.0},
            "sigma": 0.0, "M": 1.0
        },
        "penalization": "auto",
        "grid": {"core_end": 5.0, "n_core": 2048, "r_max": 1000.0},
        "output": {"directory": out}
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn ground_state_writes_summary_files() {
    let dir = temp_dir("gs");
    let st = nls()
        .args(["ground-state", "--N", "1", "--p", "3"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("groundstate_N1_p3.json")).unwrap())
            .unwrap();
    let w0 = summary["w0"].as_f64().unwrap();
    assert!((w0 - 2.0f64.sqrt()).abs() < 1e-6, "w0 = {w0}");
    assert!(dir.join("groundstate_N1_p3.csv").exists());
    // stdout carries 17-significant-digit values
    let text = String::from_utf8_lossy(&st.stdout);
    assert!(text.contains("w0 = 1.414213562"), "{text}");
}

#[test]
fn invalid_p_exits_2_citing_admissible_range() {
    let dir = temp_dir("badp");
    let st = nls()
        .args(["ground-state", "--N", "3", "--p", "7"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2));
    let err = String::from_utf8_lossy(&st.stderr);
    assert!(err.contains("(3, 5)"), "stderr: {err}");
}

#[test]
fn missing_config_exits_4_and_garbage_exits_2() {
    let dir = temp_dir("cfg");
    let st = nls().args(["solve", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(st.status.code(), Some(4));
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let st = nls().arg("solve").arg(&bad).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn kappa_violating_bound_is_rejected_before_solving() {
    let dir = temp_dir("kappa");
    let cfg_path = plateau_config(&dir);
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&cfg_path).unwrap()).unwrap();
    cfg["penalization"] = serde_json::json!({
        "kappa": 1e9, "beta": 1.0, "rho0": 0.18393972058572117, "rho": 0.5
    });
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let st = nls().arg("solve").arg(&cfg_path).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(!dir.join("out").exists(), "no outputs expected");
}

#[test]
fn solve_writes_reports_and_reruns_are_byte_identical() {
    let dir = temp_dir("solve");
    let cfg = plateau_config(&dir);
    let st = nls().arg("solve").arg(&cfg).args(["--eps", "0.1"]).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let out = dir.join("out");
    let profile = out.join("profile_eps0p1.csv");
    let report = out.join("report_eps0p1.json");
    assert!(profile.exists() && report.exists());
    assert!(out.join("verification_eps0p1.json").exists());
    let first = std::fs::read(&profile).unwrap();
    let first_report = std::fs::read(&report).unwrap();
    let st = nls().arg("solve").arg(&cfg).args(["--eps", "0.1"]).output().unwrap();
    assert!(st.status.success());
    assert_eq!(first, std::fs::read(&profile).unwrap());
    assert_eq!(first_report, std::fs::read(&report).unwrap());
}

#[test]
fn verify_reruns_checks_on_stored_profiles() {
    let dir = temp_dir("verify");
    let cfg = plateau_config(&dir);
    let st = nls().arg("solve").arg(&cfg).args(["--eps", "0.1"]).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let st = nls().arg("verify").arg(&cfg).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let text = String::from_utf8_lossy(&st.stdout);
    assert!(text.contains("pass"), "{text}");
}

#[test]
fn sweep_with_fewer_than_three_epsilons_exits_2() {
    let dir = temp_dir("short");
    let cfg_path = plateau_config(&dir);
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&cfg_path).unwrap()).unwrap();
    cfg["sweep"] = serde_json::json!([0.1]);
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let st = nls().arg("sweep").arg(&cfg_path).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn report_summarizes_written_outputs() {
    let dir = temp_dir("report");
    let cfg = plateau_config(&dir);
    let st = nls().arg("solve").arg(&cfg).args(["--eps", "0.1"]).output().unwrap();
    assert!(st.status.success());
    let st = nls().arg("report").arg(dir.join("out")).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let text = String::from_utf8_lossy(&st.stdout);
    assert!(text.contains("eps"), "{text}");
}
