use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_cslab");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn cslab(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn schema_validator() -> jsonschema::Validator {
    let schema: Value = read_json(&Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json"));
    jsonschema::validator_for(&schema).expect("schema compiles")
}

#[test]
fn frames_suite_passes_with_schema_valid_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("frames.json");
    let o = cslab(&["verify", "--suite", "frames", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out);
    let n = report["checks"].as_array().unwrap().len();
    assert!(n >= 12, "{n} checks");
    assert_eq!(report["summary"]["passed"], n);
    let v = schema_validator();
    let errors: Vec<String> = v.iter_errors(&report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    for c in report["checks"].as_array().unwrap() {
        assert!(!c["anchor"].as_str().unwrap().is_empty());
    }
}

#[test]
fn zero_level_is_a_config_error() {
    let o = cslab(&["verify", "--suite", "frames", "--level", "0+0i"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_inputs_exit_two() {
    assert_eq!(cslab(&["verify", "--suite", "nonsense"]).status.code(), Some(2));
    assert_eq!(cslab(&["verify", "--suite", "frames", "--tau", "0-1i"]).status.code(), Some(2));
    assert_eq!(cslab(&["verify", "--suite", "frames", "--degree", "3"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "degree = \"twelve\"\n").unwrap();
    assert_eq!(cslab(&["verify", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 7\nsuite = \"frames\"\ntau = [\"0+1i\"]\n").unwrap();
    let out = dir.path().join("r.json");
    let o = cslab(&["verify", "--config", cfg.to_str().unwrap(), "--seed", "11", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out);
    assert_eq!(r["config"]["seed"], 11);
    assert_eq!(r["suite"], "frames");
    assert_eq!(r["config"]["tau"], serde_json::json!(["0+1i"]));
}

#[test]
fn failing_check_still_writes_report() {
    // a tolerance of 1e-300 cannot be met by rounding-level residuals
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.json");
    std::fs::write(&cfg, r#"{ "suite": "frames", "tolerances": { "frames": 1e-300 } }"#).unwrap();
    let out = dir.path().join("r.json");
    let o = cslab(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let r = read_json(&out);
    assert!(r["summary"]["failed"].as_u64().unwrap() > 0);
    assert!(schema_validator().is_valid(&r));
}

#[test]
fn bargmann_of_ground_state_is_constant_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fock.json");
    let o = cslab(&["bargmann", "--input", data("h0.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let f = read_json(&out);
    assert_eq!(f["basis"], "fock");
    let coeffs = f["coeffs"].as_array().unwrap();
    assert_eq!(coeffs.len(), 1);
    assert!(coeffs[0]["index"].as_array().unwrap().iter().all(|i| i == 0));
    assert!((coeffs[0]["re"].as_f64().unwrap() - 1.0).abs() < 1e-14);
    assert!(coeffs[0]["im"].as_f64().unwrap().abs() < 1e-14);

    // and back
    let back = dir.path().join("back.json");
    let o = cslab(&["bargmann", "--input", out.to_str().unwrap(), "--out", back.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let b = read_json(&back);
    assert_eq!(b["basis"], "hermite");
    for c in b["coeffs"].as_array().unwrap() {
        let ground = c["index"].as_array().unwrap().iter().all(|i| i == 0);
        let expected = if ground { 1.0 } else { 0.0 };
        assert!((c["re"].as_f64().unwrap() - expected).abs() < 1e-13, "{c}");
        assert!(c["im"].as_f64().unwrap().abs() < 1e-13, "{c}");
    }
}

#[test]
fn transport_of_example_keeps_norm() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let csv = dir.path().join("trace.csv");
    let o = cslab(&[
        "transport",
        "--input",
        data("h0.json").to_str().unwrap(),
        "--path",
        "0+1i,1+1i",
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_json(&out);
    assert!(t["norm_drift"].as_f64().unwrap() < 1e-8);
    assert_eq!(t["endpoint_coeffs"]["tau"], serde_json::json!([1.0, 1.0]));
    let rows = std::fs::read_to_string(&csv).unwrap().lines().count();
    assert!(rows >= 2);
}

#[test]
fn transport_rejects_mismatched_start() {
    let o = cslab(&["transport", "--input", data("h0.json").to_str().unwrap(), "--path", "0+2i,1+2i"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_section_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("junk.json");
    std::fs::write(&p, "{ \"basis\": \"hermite\" }").unwrap();
    let o = cslab(&["bargmann", "--input", p.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn small_loop_holonomy_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.json");
    let o = cslab(&["holonomy", "--loop-center", "0+1i", "--radius", "0.1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let h = read_json(&out);
    assert!(h["deviation"].as_f64().unwrap() < 1e-6);
    assert_eq!(h["pass"], true);
}

#[test]
fn equivariant_csv_has_header_and_rows() {
    let o = cslab(&["equivariant", "--points", "0+0i,0+0i;0.2+0.1i,-0.1+0i"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("z1re"));
}

#[test]
fn thread_cap_must_be_positive() {
    let o = Command::new(BIN).args(["verify", "--suite", "frames"]).env("CSLAB_THREADS", "0").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_cap_does_not_change_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let o = Command::new(BIN)
            .current_dir(dir.path())
            .args(["verify", "--suite", "bargmann", "--out", "r.json"])
            .env("CSLAB_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        reports.push(std::fs::read(dir.path().join("r.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}
