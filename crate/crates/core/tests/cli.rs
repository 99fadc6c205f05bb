use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use fastdiff::FastDiffusionParams;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn fastdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastdiff"))
        .args(args)
        .output()
        .expect("spawn fastdiff")
}

fn run(cfg: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = config(cfg);
    let dir = format!("output_dir={}", out.display());
    let mut args = vec!["run", cfg.to_str().unwrap(), dir.as_str()];
    args.extend_from_slice(extra);
    fastdiff(&args)
}

fn verify(dir: &Path) -> (bool, String) {
    let out = fastdiff(&["verify", dir.to_str().unwrap()]);
    (out.status.success(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn smoke_run_is_fast_and_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("smoke");
    let start = Instant::now();
    let out = run("smoke.cfg", &dir, &[]);
    let elapsed = start.elapsed();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(elapsed < Duration::from_secs(10), "smoke run took {elapsed:?}");
    for name in [
        "manifest.json",
        "errors.csv",
        "density_t0.csv",
        "density_t0.1.csv",
        "report.json",
    ] {
        assert!(dir.join(name).exists(), "{name} missing");
    }
    let (ok, text) = verify(&dir);
    assert!(ok, "{text}");
    let (ok_again, text_again) = verify(&dir);
    assert!(ok_again);
    assert_eq!(text, text_again);
}

#[test]
fn tampered_errors_fail_verify_naming_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("smoke");
    assert!(run("smoke.cfg", &dir, &[]).status.success());
    let path = dir.join("errors.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let mut cells: Vec<String> = lines[1].split(',').map(str::to_owned).collect();
    let l2: f64 = cells[1].parse().unwrap();
    cells[1] = format!("{}", l2 * 100.0);
    lines[1] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let (ok, text) = verify(&dir);
    assert!(!ok);
    assert!(text.contains("verify_l2_max"), "{text}");
    assert!(text.contains("errors.csv: hash mismatch"), "{text}");
}

#[test]
fn empty_directory_reports_missing_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let (ok, text) = verify(tmp.path());
    assert!(!ok);
    assert!(text.contains("no manifest"), "{text}");
}

#[test]
fn missing_artifact_is_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("smoke");
    assert!(run("smoke.cfg", &dir, &[]).status.success());
    fs::remove_file(dir.join("density_t0.1.csv")).unwrap();
    let (ok, text) = verify(&dir);
    assert!(!ok);
    assert!(text.contains("missing artifacts: density_t0.1.csv"), "{text}");
}

#[test]
fn exact_table_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("exact");
    let out = run("exact_table.cfg", &dir, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.join("exact_table.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time,x,u_exact"));
    let rows: Vec<[f64; 3]> = lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect();
    assert_eq!(rows.len(), 5 * 601);
    // m = 1/2: U(t, x) = t^(-2/3) (D + x^2 t^(-4/3) / 3)^(-2), D = (pi sqrt 3 / 2)^(2/3).
    let d = (std::f64::consts::PI * 3f64.sqrt() / 2.0).powf(2.0 / 3.0);
    for &[t, x, u] in rows.iter().step_by(97) {
        let want = t.powf(-2.0 / 3.0) * (d + x * x * t.powf(-4.0 / 3.0) / 3.0).powi(-2);
        assert!(
            (u - want).abs() <= 1e-12 * want.max(1e-300),
            "t={t} x={x}: {u} vs {want}"
        );
    }
    let p = FastDiffusionParams::new(0.5).unwrap();
    assert!((p.big_d() - d).abs() < 1e-14);
    assert!(verify(&dir).0);
}

#[test]
fn hypothesis_check_runs_and_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("hyp");
    let out = run("hypothesis_check.cfg", &dir, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (ok, text) = verify(&dir);
    assert!(ok, "{text}");
}

#[test]
fn config_errors_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("bad");
    for extra in ["bogus_key=1", "n=10", "dt=-1", "mode=sideways", "m=1.5"] {
        let out = run("smoke.cfg", &dir, &[extra]);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{extra}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    }
    assert!(!dir.exists());
}

#[test]
fn unwritable_output_exits_with_code_4() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = run("exact_table.cfg", &blocker.join("sub"), &[]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn manifest_echoes_resolved_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("smoke");
    assert!(run("smoke.cfg", &dir, &["seed=7"]).status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["mode"], "mckean");
    assert_eq!(manifest["config"]["n"], "500");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["bandwidth_multiplier"].as_f64().is_some());
}
