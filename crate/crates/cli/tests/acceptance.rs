//! Acceptance criteria, one line each. Runs the full verification suite twice
//! through the binary: once for criteria 1–7, once more for byte determinism.
//! Plain `main` (no libtest harness) so the lines are never captured.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_cslab");

struct Outcome {
    criterion: usize,
    what: &'static str,
    pass: bool,
    detail: String,
}

fn run_verify(dir: &Path, suite: &str) -> (i32, Vec<u8>, Duration) {
    let start = Instant::now();
    let status = Command::new(BIN)
        .current_dir(dir)
        .args(["verify", "--suite", suite, "--out", "report.json"])
        .env("CSLAB_THREADS", "2")
        .status()
        .expect("binary runs");
    let elapsed = start.elapsed();
    let bytes = std::fs::read(dir.join("report.json")).expect("report written");
    (status.code().unwrap_or(-1), bytes, elapsed)
}

fn checks<'a>(report: &'a Value, prefixes: &[&str]) -> Vec<&'a Value> {
    report["checks"]
        .as_array()
        .expect("checks array")
        .iter()
        .filter(|c| prefixes.iter().any(|p| c["id"].as_str().unwrap().starts_with(p)))
        .collect()
}

/// All selected checks pass at `limit` (no looser than their recorded tolerance).
fn group(criterion: usize, what: &'static str, report: &Value, prefixes: &[&str], limit: f64, min_count: usize) -> Outcome {
    let sel = checks(report, prefixes);
    let mut worst = 0.0f64;
    let mut failing = Vec::new();
    for c in &sel {
        let tol = c["tolerance"].as_f64().unwrap().min(limit);
        match c["residual"].as_f64() {
            Some(r) if r < tol && c["pass"].as_bool() == Some(true) => worst = worst.max(r),
            Some(r) => failing.push(format!("{}={r:e}", c["id"].as_str().unwrap())),
            None => failing.push(format!("{} errored: {}", c["id"].as_str().unwrap(), c["error"])),
        }
    }
    let enough = sel.len() >= min_count;
    let pass = enough && failing.is_empty();
    let detail = if pass {
        format!("{} checks, max residual {worst:.2e} < {limit:e}", sel.len())
    } else if !enough {
        format!("only {} checks, need {min_count}", sel.len())
    } else {
        failing.join("; ")
    };
    Outcome { criterion, what, pass, detail }
}

fn main() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let frames_dir = tempfile::tempdir().unwrap();

    let (code_frames, frames_bytes, frames_time) = run_verify(frames_dir.path(), "frames");
    let (code, bytes, _) = run_verify(first.path(), "all");
    let (_, bytes_again, _) = run_verify(second.path(), "all");
    let frames: Value = serde_json::from_slice(&frames_bytes).unwrap();
    let report: Value = serde_json::from_slice(&bytes).unwrap();

    let mut out = Vec::new();
    let mut c1 = group(1, "frame and structure suite", &frames, &["frames."], 1e-12, 20);
    if frames_time >= Duration::from_secs(5) || code_frames != 0 {
        c1.pass = false;
    }
    c1.detail = format!("{}, {:.2} s", c1.detail, frames_time.as_secs_f64());
    out.push(c1);
    out.push(group(2, "variation closed forms vs finite differences", &report, &["variation."], 1e-6, 9));
    out.push(group(3, "connection algebra", &report, &["algebra."], 1e-10, 10));
    let mut c4 = group(4, "flatness and holomorphicity", &report, &["connections.", "transport.holonomy."], 1e-6, 10);
    for (id, limit) in [
        ("connections.complex_hitchin.preserves_holomorphicity", 1e-9),
        ("connections.complex_hitchin.laplacians_commute", 1e-10),
        ("transport.holonomy.complex_hitchin", 1e-6),
        ("transport.holonomy.hitchin_witten", 1e-6),
    ] {
        let g = group(4, "", &report, &[id], limit, 1);
        if !g.pass {
            c4.pass = false;
            c4.detail = format!("{id}: {}", g.detail);
        }
    }
    out.push(c4);
    let mut c5 = group(5, "Bargmann transform", &report, &["bargmann."], 1e-9, 6);
    let exact = group(5, "", &report, &["bargmann.unitarity.", "bargmann.operators."], 1e-10, 2);
    if !exact.pass {
        c5.pass = false;
        c5.detail = exact.detail;
    }
    out.push(c5);
    let mut c6 = group(6, "intertwining", &report, &["transport.intertwining.residual"], 1e-8, 1);
    let inv = group(6, "", &report, &["transport.intertwining.mcg_invariance"], 1e-7, 1);
    if !inv.pass {
        c6.pass = false;
        c6.detail = inv.detail;
    }
    out.push(c6);
    let mut c7 = group(7, "equivariant transform and dual connection", &report, &["equivariance."], 1e-6, 4);
    let doubling = group(7, "", &report, &["equivariance.bargmann.domain_doubling"], 1e-8, 1);
    if !doubling.pass {
        c7.pass = false;
        c7.detail = doubling.detail;
    }
    out.push(c7);
    out.push(Outcome {
        criterion: 8,
        what: "byte-identical reports",
        pass: bytes == bytes_again,
        detail: format!("{} bytes per report", bytes.len()),
    });

    for o in &out {
        println!("criterion {}: {} {} ({})", o.criterion, if o.pass { "PASS" } else { "FAIL" }, o.what, o.detail);
    }
    let failed: Vec<usize> = out.iter().filter(|o| !o.pass).map(|o| o.criterion).collect();
    println!("full suite exit code {code}; {} of {} criteria pass", out.len() - failed.len(), out.len());
    if code != 0 || !failed.is_empty() {
        std::process::exit(1);
    }
}
