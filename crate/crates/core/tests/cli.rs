use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use logfactor::io::{verify_manifest, RunManifest, MANIFEST_NAME};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_logfactor"));
    c.env_remove("LOGFACTOR_OUT_DIR");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_slice(&fs::read(dir.join(MANIFEST_NAME)).unwrap()).unwrap()
}

fn potential_values(dir: &Path) -> Vec<f64> {
    fs::read_to_string(dir.join("potential.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap().1.parse().unwrap())
        .collect()
}

#[test]
fn build_potential_levels_follow_the_law() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("p");
    let o = run(&["build-potential", "--L", "3"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let levels = fs::read_to_string(out.join("levels.csv")).unwrap();
    let mut lines = levels.lines();
    assert_eq!(lines.next(), Some("k,target,energy,error"));
    for (k, line) in lines.take(7).enumerate() {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[0] as usize, k);
        assert!((cols[2] - (k as f64 / 3.0).ln_1p()).abs() < 1e-8);
    }
    let m = manifest(&out);
    assert_eq!(m.outputs.len(), 3);
    assert!(verify_manifest(&out, &m).unwrap().is_empty());
}

#[test]
fn tighter_tolerance_refines_the_same_potential() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&["build-potential", "--L", "3"], &a).status.code(), Some(0));
    assert_eq!(run(&["build-potential", "--L", "3", "--tol", "1e-10"], &b).status.code(), Some(0));
    let (ra, rb) = (json(&a.join("report.json")), json(&b.join("report.json")));
    assert!(rb["iterations"].as_u64() > ra["iterations"].as_u64());
    let (va, vb) = (potential_values(&a), potential_values(&b));
    assert_eq!(va.len(), vb.len());
    let sup = va.iter().zip(&vb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(sup < 1e-8, "{sup}");
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run(&["build-potential", "--L", "4"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&["build-potential", "--bogus"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&["factor"], tmp.path()).status.code(), Some(2));
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"N": 15, "colour": 1}"#).unwrap();
    let o = bin().args(["--config", cfg.to_str().unwrap(), "factor"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("p");
    let o = run(&["build-potential", "--L", "3", "--max-iter", "1"], &out);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(json(&out.join("report.json"))["converged"], Value::Bool(false));
}

#[test]
fn factor_fifteen_and_reproducibility() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = run(&["factor", "--N", "15", "--seed", "3"], dir);
        assert_eq!(o.status.code(), Some(0));
    }
    let r = json(&a.join("result.json"));
    assert_eq!(r["factors"], serde_json::json!([5, 3]));
    for f in ["result.json", MANIFEST_NAME] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn factor_full_mode() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["factor", "--N", "15", "--mode", "full", "--seed", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&tmp.path().join("result.json"));
    assert_eq!((r["factors"].clone(), r["mode"].clone()), (serde_json::json!([5, 3]), Value::from("full")));
}

#[test]
fn factor_sixteen_needs_no_run() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run(&["factor", "--N", "16"], tmp.path()).status.code(), Some(0));
    let r = json(&tmp.path().join("result.json"));
    assert_eq!(r["status"], "nothing-to-do");
    assert_eq!(r["remainder"], 1);
}

#[test]
fn truncated_basis_is_a_protocol_failure() {
    let tmp = TempDir::new().unwrap();
    // 23 * 29 resonates with s(21, 27); sixteen fitted levels hold eight s-states.
    let o = run(&["factor", "--N", "667", "--m-fit", "16"], tmp.path());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"N": 21, "seed": 5}"#).unwrap();
    let out = tmp.path().join("o");
    let o =
        bin().args(["--config", cfg.to_str().unwrap(), "factor", "--seed", "6", "--out"]).arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let m = manifest(&out);
    assert_eq!(m.seed, Some(6));
    assert_eq!(m.config["N"], 21);
    assert_eq!(json(&out.join("result.json"))["factors"], serde_json::json!([7, 3]));
}

#[test]
fn output_directory_from_environment() {
    let tmp = TempDir::new().unwrap();
    let o = bin().args(["limits", "--T-dec", "1e4"]).env("LOGFACTOR_OUT_DIR", tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let l = json(&tmp.path().join("limits.json"));
    assert!((l["max_semiprime_at_optimum"].as_f64().unwrap() - 1e4).abs() < 1e-6);
}

#[test]
fn spectrum_audit_and_s_only() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&["spectrum", "--L", "3"], &a).status.code(), Some(0));
    let audit = json(&a.join("audit.json"));
    assert!(audit["min_gap"].as_f64().unwrap() > 1e-3);
    assert!(audit["harmonic_reference"]["min_gap"].as_f64().unwrap() < 1e-5);

    assert_eq!(run(&["spectrum", "--L", "3", "--ell-max", "0"], &b).status.code(), Some(0));
    let csv = fs::read_to_string(b.join("spectrum.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("0,")));
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn orbit_defaults_precess() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run(&["orbit"], tmp.path()).status.code(), Some(0));
    let o = json(&tmp.path().join("orbit.json"));
    let five = o["cumulative_inner_angle"].as_f64().unwrap();
    assert!((five / (11.0 * PI / 8.0) - 1.0).abs() < 0.05);
    assert_eq!(o["apsidal"]["closed"], false);
    let csv = fs::read_to_string(tmp.path().join("orbit.csv")).unwrap();
    assert!(csv.starts_with("t,rho,theta,x,y\n"));
}

#[test]
fn orbit_oracle_and_empty_run() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["orbit", "--potential", "harmonic", "--energy-frac", "1.5"];
    assert_eq!(run(&args, &a).status.code(), Some(0));
    assert_eq!(json(&a.join("orbit.json"))["apsidal"]["closed"], true);
    let mut empty = args.to_vec();
    empty.extend(["--periods", "0"]);
    assert_eq!(run(&empty, &b).status.code(), Some(0));
    assert_eq!(fs::read_to_string(b.join("orbit.csv")).unwrap(), "t,rho,theta,x,y\n");
}

#[test]
fn orbit_without_motion_fails() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["orbit", "--potential", "harmonic", "--energy-frac", "0.5"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}
