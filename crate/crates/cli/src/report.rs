use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const FORMAT: &str = "cslab-report/1";

/// One verified statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub id: String,
    /// Name of the statement the check verifies.
    pub anchor: String,
    /// First 16 hex digits of SHA-256 over the canonical JSON of the inputs.
    pub digest: String,
    /// `None` when the computation itself failed.
    pub residual: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn digest(inputs: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(inputs).expect("json values serialise");
    let h = Sha256::digest(&bytes);
    h.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

impl CheckRecord {
    pub fn new(id: &str, anchor: &str, inputs: serde_json::Value, residual: f64, tolerance: f64) -> Self {
        CheckRecord {
            id: id.into(),
            anchor: anchor.into(),
            digest: digest(&inputs),
            residual: Some(residual),
            tolerance,
            pass: residual.is_finite() && residual < tolerance,
            notes: BTreeMap::new(),
            error: None,
        }
    }

    pub fn failed(id: &str, anchor: &str, inputs: serde_json::Value, tolerance: f64, error: String) -> Self {
        CheckRecord {
            id: id.into(),
            anchor: anchor.into(),
            digest: digest(&inputs),
            residual: None,
            tolerance,
            pass: false,
            notes: BTreeMap::new(),
            error: Some(error),
        }
    }

    pub fn note(mut self, key: &str, value: f64) -> Self {
        self.notes.insert(key.into(), value);
        self
    }
}

/// Static facts about the build and the conventions in force.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub target_os: String,
    pub target_arch: String,
    pub conventions: BTreeMap<String, String>,
}

impl Environment {
    pub fn current() -> Self {
        let mut conventions = BTreeMap::new();
        conventions.insert(
            "bargmann_normalisation".into(),
            "(pi hbar)^(-m/4), B(h0) = 1, pairings in dq".into(),
        );
        conventions.insert(
            "mcg_action".into(),
            "gamma^{-T} on (dx, dy) components, (u_j, u_{j+r}) -> (d u_j + c u_{j+r}, b u_j + a u_{j+r})".into(),
        );
        conventions.insert("prequantum_lift".into(), "trivial; residual phase reported per holonomy".into());
        conventions.insert("float_format".into(), "shortest round-trip".into());
        Environment {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            target_os: std::env::consts::OS.into(),
            target_arch: std::env::consts::ARCH.into(),
            conventions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub suite: String,
    pub environment: Environment,
    pub config: RunConfig,
    pub summary: Summary,
    pub checks: Vec<CheckRecord>,
}

impl Report {
    /// Sorts the checks by id; ids must be unique.
    pub fn assemble(suite: &str, config: &RunConfig, mut checks: Vec<CheckRecord>) -> Self {
        checks.sort_by(|a, b| a.id.cmp(&b.id));
        for w in checks.windows(2) {
            assert_ne!(w[0].id, w[1].id, "duplicate check id");
        }
        let passed = checks.iter().filter(|c| c.pass).count();
        Report {
            format: FORMAT.into(),
            suite: suite.into(),
            environment: Environment::current(),
            config: config.clone(),
            summary: Summary { total: checks.len(), passed, failed: checks.len() - passed },
            checks,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn check(&self, id: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.id == id)
    }

    /// Checks whose id starts with `prefix`.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a CheckRecord> + 'a {
        self.checks.iter().filter(move |c| c.id.starts_with(prefix))
    }
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io { path: path.display().to_string(), source: e };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| CliError::Config(format!("bad output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(contents.as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)
}
