//! The non-suite subcommands: transport, bargmann, holonomy, equivariant.

use std::path::Path;

use cslab_core::bargmann::{bargmann_closed_form, equivariant_section_at, inverse_bargmann, values_csv, BargmannKernelParams, EquivariantInput};
use cslab_core::cartan::{CartanData, WeylGroup};
use cslab_core::equivariant::{equivariantize, GaussianTerm};
use cslab_core::frames::{build_frames, parse_complex, TeichmullerPoint};
use cslab_core::quantops::ConnectionKind;
use cslab_core::sections::{AnySection, FockSection, PositionSection, SectionHeader};
use cslab_core::transport::{holonomy, transport, FlatConnection, TeichPath, TransportOptions};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::write_atomic;

/// Reads a section file; malformed input is an input error, not a numerical one.
pub fn read_section(path: &Path) -> Result<AnySection, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
    AnySection::from_json(&text).map_err(|e| CliError::FileFormat(format!("{}: {e}", path.display())))
}

/// Writes to `path` atomically, or to stdout when there is no path.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_atomic(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serialises");
    s.push('\n');
    s
}

pub fn parse_kind(s: &str) -> Result<ConnectionKind, CliError> {
    match s {
        "hitchin_witten" | "hw" => Ok(ConnectionKind::HitchinWitten),
        "complex_hitchin" | "ch" => Ok(ConnectionKind::ComplexHitchin),
        "l2" => Ok(ConnectionKind::L2),
        _ => Err(CliError::Config(format!("unknown connection `{s}` (hitchin_witten, complex_hitchin, l2)"))),
    }
}

#[derive(Debug, Serialize)]
pub struct Residuals {
    pub halving_change: f64,
    pub max_antiholomorphic: f64,
}

#[derive(Debug, Serialize)]
pub struct TransportOutput {
    pub connection: ConnectionKind,
    pub path: Vec<[f64; 2]>,
    pub endpoint_coeffs: serde_json::Value,
    pub norm_start: f64,
    pub norm_end: f64,
    pub norm_drift: f64,
    pub residuals: Residuals,
}

/// Transports a section file along `path`. Hermite sections use the Hitchin–Witten
/// connection; Fock sections the complexified Hitchin connection unless `kind` says L2.
pub fn run_transport(
    cfg: &RunConfig,
    input: &Path,
    path: &str,
    kind: Option<&str>,
    csv: Option<&Path>,
) -> Result<TransportOutput, CliError> {
    let section = read_section(input)?;
    let h = *section.header();
    let (coeffs, kind) = match (&section, kind.map(parse_kind).transpose()?) {
        (AnySection::Hermite(s), None | Some(ConnectionKind::HitchinWitten)) => (s.coeffs.clone(), ConnectionKind::HitchinWitten),
        (AnySection::Fock(s), None) => (s.coeffs.clone(), ConnectionKind::ComplexHitchin),
        (AnySection::Fock(s), Some(k @ (ConnectionKind::ComplexHitchin | ConnectionKind::L2))) => (s.coeffs.clone(), k),
        (_, k) => return Err(CliError::Config(format!("connection {k:?} does not act on this section's basis"))),
    };
    let path = TeichPath::parse(path, cfg.transport.steps).map_err(|e| CliError::Config(format!("path: {e}")))?;
    let start = path.waypoints[0];
    if (start.as_complex() - h.tau.as_complex()).norm() > 1e-12 {
        return Err(CliError::Config(format!(
            "path starts at {}+{}i but the section lives at {}+{}i",
            start.tau1, start.tau2, h.tau.tau1, h.tau.tau2
        )));
    }
    let conn = FlatConnection::new(kind, &h.level, h.rank, h.degree)?;
    let trace_every = if csv.is_some() { cfg.transport.steps.max(1) } else { 0 };
    let opts = TransportOptions { tolerance: cfg.tolerances.transport, trace_every };
    let res = transport(&conn, &path, &coeffs, &opts)?;
    let end = *path.waypoints.last().expect("non-empty path");
    let header = SectionHeader { tau: end, ..h };
    let out_section = match kind {
        ConnectionKind::HitchinWitten => AnySection::Hermite(PositionSection { header, coeffs: res.endpoint.clone() }),
        _ => AnySection::Fock(FockSection { header, coeffs: res.endpoint.clone() }),
    };
    if let Some(p) = csv {
        emit(Some(p), &trace_csv(&res.trace))?;
    }
    Ok(TransportOutput {
        connection: kind,
        path: path.waypoints.iter().map(|t| [t.tau1, t.tau2]).collect(),
        endpoint_coeffs: serde_json::to_value(out_section.to_file()).expect("section serialises"),
        norm_start: res.norm_start,
        norm_end: res.norm_end,
        norm_drift: res.norm_drift,
        residuals: Residuals { halving_change: res.halving_change, max_antiholomorphic: res.max_antiholomorphic },
    })
}

/// One row per recorded step: `step,c0re,c0im,c1re,…`.
fn trace_csv(trace: &[Vec<Complex64>]) -> String {
    let mut out = String::new();
    if let Some(first) = trace.first() {
        let mut head = vec!["step".to_string()];
        for i in 0..first.len() {
            head.push(format!("c{i}re"));
            head.push(format!("c{i}im"));
        }
        out.push_str(&head.join(","));
        out.push('\n');
    }
    for (k, row) in trace.iter().enumerate() {
        let mut cells = vec![k.to_string()];
        for c in row {
            cells.push(format!("{}", c.re));
            cells.push(format!("{}", c.im));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Hermite file to Fock file, or back.
pub fn run_bargmann(input: &Path) -> Result<AnySection, CliError> {
    match read_section(input)? {
        AnySection::Hermite(s) => Ok(AnySection::Fock(bargmann_closed_form(&s))),
        AnySection::Fock(f) => Ok(AnySection::Hermite(inverse_bargmann(&f))),
        AnySection::Extended(_) => Err(CliError::FileFormat("the transform takes Hermite or Fock sections".into())),
    }
}

#[derive(Debug, Serialize)]
pub struct HolonomyOutput {
    pub connection: ConnectionKind,
    pub centre: [f64; 2],
    pub radius: f64,
    pub degree: usize,
    pub block_degree: usize,
    /// Rows of the holonomy, each entry `[re, im]`; columns are the block basis vectors.
    pub matrix: Vec<Vec<[f64; 2]>>,
    pub deviation: f64,
    pub global_phase: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Holonomy of a square loop around `centre`.
pub fn run_holonomy(cfg: &RunConfig, centre: &str, kind: &str, block_degree: usize) -> Result<HolonomyOutput, CliError> {
    let kind = parse_kind(kind)?;
    let c: TeichmullerPoint = centre.parse().map_err(|e| CliError::Config(format!("loop centre `{centre}`: {e}")))?;
    let level = cfg.level()?;
    let rank = cfg.cartan_data()?.rank;
    let t = &cfg.transport;
    let conn = FlatConnection::new(kind, &level, rank, t.degree)?;
    let path = TeichPath::square(&c, t.radius, t.steps).map_err(|e| CliError::Config(format!("loop: {e}")))?;
    let opts = TransportOptions { tolerance: cfg.tolerances.transport, trace_every: 0 };
    let h = holonomy(&conn, &path, block_degree, &opts)?;
    // only the block rows are informative beyond truncation leakage; keep them all anyway
    let matrix = (0..h.matrix.nrows()).map(|i| (0..h.matrix.ncols()).map(|j| [h.matrix[(i, j)].re, h.matrix[(i, j)].im]).collect()).collect();
    Ok(HolonomyOutput {
        connection: kind,
        centre: [c.tau1, c.tau2],
        radius: t.radius,
        degree: t.degree,
        block_degree,
        matrix,
        deviation: h.deviation,
        global_phase: h.global_phase,
        tolerance: cfg.tolerances.holonomy,
        pass: h.deviation < cfg.tolerances.holonomy,
    })
}

/// Lattice-summed transform of an averaged Gaussian on the A₁ model, at points
/// `z` (`"a+bi,c+di"`, separated by `;`) or, when none are given, along a diagonal.
pub fn run_equivariant(cfg: &RunConfig, points: Option<&str>, width: f64, centre: [f64; 2]) -> Result<String, CliError> {
    let data = CartanData::a1();
    let group = WeylGroup::new(&data)?;
    let level = cfg.level()?;
    let tau = *cfg.taus()?.first().expect("validated non-empty");
    let seed = [GaussianTerm::centred(width, &centre)];
    let section = equivariantize(&seed, &data, &group, level.k, cfg.lattice_radius, 1e-12)?;
    let input = EquivariantInput::new(&section, &tau, &level)?;
    let params = BargmannKernelParams::new(&tau, &level, 1);
    let zs: Vec<Vec<Complex64>> = match points {
        Some(s) => s
            .split(';')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.split(',').map(|w| parse_complex(w.trim())).collect::<Result<Vec<_>, _>>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Config(format!("points: {e}")))?,
        None => (0..=8).map(|k| {
            let x = -1.0 + 0.25 * k as f64;
            vec![Complex64::new(x, 0.1 * x), Complex64::new(0.5 * x, -0.2)]
        }).collect(),
    };
    let fr = build_frames(&tau, &level, 1)?;
    let mut rows = Vec::with_capacity(zs.len());
    for z in zs {
        if z.len() != 2 {
            return Err(CliError::Config(format!("each point needs 2 complex coordinates, got {}", z.len())));
        }
        let p = nalgebra::DVector::from_iterator(2, z.iter().map(|w| w.re));
        let q = nalgebra::DVector::from_iterator(2, z.iter().map(|w| w.im));
        let x = fr.point_from_pq(&p, &q);
        let v = equivariant_section_at(&input, &params, x.as_slice(), cfg.tolerances.doubling)?;
        rows.push((z, v.section));
    }
    Ok(values_csv(&rows))
}

pub fn transport_json(o: &TransportOutput) -> String {
    to_json(o)
}

pub fn holonomy_json(o: &HolonomyOutput) -> String {
    to_json(o)
}
