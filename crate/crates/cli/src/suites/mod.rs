//! Verification suites. Each suite returns check records; [`run_suite`] sorts
//! them into a report.

use cslab_core::cartan::CartanData;
use cslab_core::frames::{Level, TeichmullerPoint};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Suite};
use crate::error::CliError;
use crate::report::{CheckRecord, Report};

pub mod bargmann;
pub mod connections;
pub mod equivariance;
pub mod frames;
pub mod operators;
pub mod transport;

/// Validated inputs shared by the suites.
pub struct Ctx {
    pub cfg: RunConfig,
    pub level: Level,
    pub taus: Vec<TeichmullerPoint>,
    pub cartan: CartanData,
}

impl Ctx {
    pub fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        Ok(Ctx { cfg: cfg.clone(), level: cfg.level()?, taus: cfg.taus()?, cartan: cfg.cartan_data()? })
    }

    pub fn rank(&self) -> usize {
        self.cartan.rank
    }

    /// Generator for one named group of checks, independent of which other suites run.
    pub fn rng(&self, stream: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.cfg.seed.to_le_bytes());
        h.update(stream.as_bytes());
        let d = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&d);
        ChaCha8Rng::from_seed(seed)
    }

    /// Configured (τ, t) pairs.
    pub fn configured_points(&self) -> Vec<(TeichmullerPoint, Level)> {
        self.taus.iter().map(|t| (*t, self.level)).collect()
    }
}

pub fn random_tau(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> TeichmullerPoint {
    TeichmullerPoint::new(rng.random_range(-0.5..0.5), rng.random_range(lo..hi)).expect("positive imaginary part")
}

pub fn random_level(rng: &mut ChaCha8Rng) -> Level {
    Level::new(rng.random_range(1..=4), rng.random_range(-1.5..1.5)).expect("k ≥ 1")
}

/// Random (τ, t) with τ₂ ∈ [0.6, 2].
pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<(TeichmullerPoint, Level)> {
    (0..n).map(|_| (random_tau(rng, 0.6, 2.0), random_level(rng))).collect()
}

pub fn random_coeffs(rng: &mut ChaCha8Rng, len: usize, filled: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); len];
    for x in v.iter_mut().take(filled) {
        *x = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    v
}

pub fn point_json(points: &[(TeichmullerPoint, Level)]) -> serde_json::Value {
    json!(points.iter().map(|(t, l)| [t.tau1, t.tau2, l.k as f64, l.s]).collect::<Vec<_>>())
}

pub fn fro(m: &DMatrix<Complex64>) -> f64 {
    cslab_core::frames::fro(m)
}

pub fn fro_re(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

pub fn rel(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    fro(&(a - b)) / fro(b).max(1e-300)
}

/// Records a check whose residual is a fallible computation.
pub fn record(
    id: &str,
    anchor: &str,
    inputs: serde_json::Value,
    tolerance: f64,
    residual: Result<f64, cslab_core::Error>,
) -> CheckRecord {
    match residual {
        Ok(r) => CheckRecord::new(id, anchor, inputs, r, tolerance),
        Err(e) => CheckRecord::failed(id, anchor, inputs, tolerance, e.to_string()),
    }
}

/// Largest value of a fallible residual over a list of inputs.
pub fn max_over<T, F>(items: &[T], f: F) -> Result<f64, cslab_core::Error>
where
    F: Fn(&T) -> Result<f64, cslab_core::Error>,
{
    let mut worst: f64 = 0.0;
    for it in items {
        let v = f(it)?;
        if v.is_nan() {
            return Ok(f64::NAN);
        }
        worst = worst.max(v);
    }
    Ok(worst)
}

pub fn checks_for(ctx: &Ctx, suite: Suite) -> Vec<CheckRecord> {
    match suite {
        Suite::Frames => frames::run(ctx),
        Suite::Operators => operators::run(ctx),
        Suite::Bargmann => bargmann::run(ctx),
        Suite::Connections => connections::run(ctx),
        Suite::Transport => transport::run(ctx),
        Suite::Equivariance => equivariance::run(ctx),
        Suite::All => Suite::EACH.iter().flat_map(|s| checks_for(ctx, *s)).collect(),
    }
}

/// Runs one suite (or all of them) and assembles the report.
pub fn run_suite(cfg: &RunConfig, suite: Suite) -> Result<Report, CliError> {
    let ctx = Ctx::new(cfg)?;
    let checks = checks_for(&ctx, suite);
    Ok(Report::assemble(suite.name(), cfg, checks))
}
