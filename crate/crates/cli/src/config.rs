use std::path::{Path, PathBuf};
use std::str::FromStr;

use cslab_core::cartan::{CartanConfig, CartanData};
use cslab_core::frames::{Level, TeichmullerPoint};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Frames,
    Operators,
    Bargmann,
    Connections,
    Transport,
    Equivariance,
    All,
}

impl Suite {
    pub const EACH: [Suite; 6] =
        [Suite::Frames, Suite::Operators, Suite::Bargmann, Suite::Connections, Suite::Transport, Suite::Equivariance];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Frames => "frames",
            Suite::Operators => "operators",
            Suite::Bargmann => "bargmann",
            Suite::Connections => "connections",
            Suite::Transport => "transport",
            Suite::Equivariance => "equivariance",
            Suite::All => "all",
        }
    }

    pub fn members(self) -> Vec<Suite> {
        match self {
            Suite::All => Suite::EACH.to_vec(),
            s => vec![s],
        }
    }
}

impl FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "frames" => Ok(Suite::Frames),
            "operators" => Ok(Suite::Operators),
            "bargmann" => Ok(Suite::Bargmann),
            "connections" => Ok(Suite::Connections),
            "transport" => Ok(Suite::Transport),
            "equivariance" => Ok(Suite::Equivariance),
            "all" => Ok(Suite::All),
            other => Err(CliError::Config(format!("unknown suite `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    pub k: i64,
    pub s: f64,
}

/// Pass/fail thresholds, one per family of checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Exact linear-algebra identities of frames and structures.
    pub frames: f64,
    /// Operator identities on truncated bases.
    pub matrix: f64,
    /// Closed forms against finite-difference oracles.
    pub fd: f64,
    /// Norm drift and round trips of transported sections.
    pub transport: f64,
    /// Deviation of holonomy from the identity.
    pub holonomy: f64,
    /// Anti-holomorphic leakage of the complexified connection.
    pub holomorphic: f64,
    pub quadrature: f64,
    pub intertwining: f64,
    /// Change of the intertwining residual under mapping-class moves.
    pub mcg: f64,
    /// Change of the lattice-summed transform when its domain doubles.
    pub doubling: f64,
    /// Agreement of pairings computed along different routes.
    pub pairing: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            frames: 1e-12,
            matrix: 1e-10,
            fd: 1e-6,
            transport: 1e-8,
            holonomy: 1e-6,
            holomorphic: 1e-9,
            quadrature: 1e-9,
            intertwining: 1e-8,
            mcg: 1e-7,
            doubling: 1e-8,
            pairing: 1e-6,
        }
    }
}

/// Sample counts for the randomised checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Samples {
    pub random_points: usize,
    pub holomorphic_sections: usize,
    pub loops: usize,
    pub families: usize,
    pub family_points: usize,
    pub unitarity_sections: usize,
}

impl Default for Samples {
    fn default() -> Self {
        Samples { random_points: 20, holomorphic_sections: 100, loops: 10, families: 50, family_points: 10, unitarity_sections: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    /// Waypoints `"a+bi"` separated by commas.
    pub path: String,
    /// RK4 steps per loop for the holonomy checks.
    pub steps: usize,
    /// Largest loop radius in the holonomy checks.
    pub radius: f64,
    /// Truncation degree for transport and holonomy.
    pub degree: usize,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig { path: "0+1i,1+1i".into(), steps: 1000, radius: 0.2, degree: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cartan: CartanConfig,
    pub level: LevelConfig,
    pub tau: Vec<String>,
    /// Truncation degree N of the operator suites.
    pub degree: usize,
    /// Gauss–Hermite nodes per axis for the quadrature oracle.
    pub nodes: usize,
    /// Lattice radius of the equivariant averages.
    pub lattice_radius: usize,
    pub tolerances: Tolerances,
    pub samples: Samples,
    pub transport: TransportConfig,
    pub suite: Suite,
    pub outputs: Outputs,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cartan: CartanConfig::default(),
            level: LevelConfig { k: 2, s: 0.5 },
            tau: vec!["0+1i".into(), "0.2+1.1i".into(), "-0.35+0.8i".into()],
            degree: 12,
            nodes: 48,
            lattice_radius: 5,
            tolerances: Tolerances::default(),
            samples: Samples::default(),
            transport: TransportConfig::default(),
            suite: Suite::All,
            outputs: Outputs::default(),
            seed: 20240917,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        };
        Ok(cfg)
    }

    pub fn level(&self) -> Result<Level, CliError> {
        Level::new(self.level.k, self.level.s).map_err(|e| CliError::Config(format!("level: {e}")))
    }

    pub fn taus(&self) -> Result<Vec<TeichmullerPoint>, CliError> {
        self.tau
            .iter()
            .map(|s| s.parse::<TeichmullerPoint>().map_err(|e| CliError::Config(format!("tau `{s}`: {e}"))))
            .collect()
    }

    pub fn cartan_data(&self) -> Result<CartanData, CliError> {
        self.cartan.build().map_err(|e| CliError::Config(format!("cartan: {e}")))
    }

    /// Checks every invariant of the configuration.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.level.k < 1 {
            return bad(format!("level k must be at least 1, got {}", self.level.k));
        }
        self.level()?;
        if self.degree < 6 {
            return bad(format!("degree must be at least 6, got {}", self.degree));
        }
        if self.tau.is_empty() {
            return bad("tau list is empty".into());
        }
        self.taus()?;
        self.cartan_data()?;
        if self.nodes < 8 {
            return bad(format!("nodes must be at least 8, got {}", self.nodes));
        }
        if self.lattice_radius == 0 {
            return bad("lattice_radius must be positive".into());
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("frames", t.frames),
            ("matrix", t.matrix),
            ("fd", t.fd),
            ("transport", t.transport),
            ("holonomy", t.holonomy),
            ("holomorphic", t.holomorphic),
            ("quadrature", t.quadrature),
            ("intertwining", t.intertwining),
            ("mcg", t.mcg),
            ("doubling", t.doubling),
            ("pairing", t.pairing),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("tolerance `{name}` must be positive, got {v}"));
            }
        }
        let tr = &self.transport;
        if tr.steps == 0 {
            return bad("transport.steps must be positive".into());
        }
        if !(tr.radius > 0.0 && tr.radius.is_finite()) {
            return bad(format!("transport.radius must be positive, got {}", tr.radius));
        }
        if tr.degree < 6 {
            return bad(format!("transport.degree must be at least 6, got {}", tr.degree));
        }
        let s = &self.samples;
        if s.random_points == 0 || s.families == 0 || s.family_points == 0 || s.loops == 0 {
            return bad("sample counts must be positive".into());
        }
        Ok(())
    }
}

/// Command-line overrides; flags win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub suite: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub degree: Option<usize>,
    pub tau: Option<String>,
    pub level: Option<String>,
    pub steps: Option<usize>,
    pub radius: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(s) = &self.suite {
            cfg.suite = s.parse()?;
        }
        if let Some(p) = &self.out {
            cfg.outputs.report = Some(p.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.degree {
            cfg.degree = n;
        }
        if let Some(t) = &self.tau {
            cfg.tau = t.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        }
        if let Some(l) = &self.level {
            let lv = parse_level(l)?;
            cfg.level = lv;
        }
        if let Some(s) = self.steps {
            cfg.transport.steps = s;
        }
        if let Some(r) = self.radius {
            cfg.transport.radius = r;
        }
        Ok(())
    }
}

/// Parses `"k+si"` without enforcing k ≥ 1, so validation can report it.
pub fn parse_level(s: &str) -> Result<LevelConfig, CliError> {
    let z = cslab_core::frames::parse_complex(s).map_err(|e| CliError::Config(format!("level `{s}`: {e}")))?;
    if z.re.fract() != 0.0 {
        return Err(CliError::Config(format!("level `{s}`: k must be an integer")));
    }
    Ok(LevelConfig { k: z.re as i64, s: z.im })
}
