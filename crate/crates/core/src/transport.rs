//! Parallel transport over Teichmüller space, holonomy, δ/δτ family calculus
//! and the SL(2,ℤ) action.
//!
//! Every potential in this crate has the form `W_τ = A/τ₂`, `W_τ̄ = B/τ₂` with
//! `A`, `B` independent of τ (the frame variation and the G tensor both scale
//! as `1/τ₂`). [`FlatConnection`] stores `A` and `B` once; the scaling is checked
//! against the per-point assembly by [`FlatConnection::scaling_defect`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bargmann::bargmann_operator;
use crate::basis::MultiIndexBasis;
use crate::error::{Error, Result};
use crate::frames::{self, build_frames, parse_complex, u_idx, v_idx, Direction, Level, TeichmullerPoint};
use crate::linop::{top_degree, LinearOperator};
use crate::quantops::{
    connection_potential, extended_pieces, hermite_dq, hw_potential_generic, l2_potential, A0Geometry, ConnectionKind,
    ExtendedOps, FockOps, HermiteOps,
};
use crate::sections::{extended_basis, fock_basis, fock_norm2, hermite_basis, hermite_functions};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Degrees reserved below the truncation for every transport or verification.
pub const HEADROOM: usize = 4;

// ---------------------------------------------------------------------------
// Paths

/// Piecewise-linear path in (τ₁, τ₂).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeichPath {
    pub waypoints: Vec<TeichmullerPoint>,
    /// Steps per unit path length; each segment gets at least one step.
    pub steps_per_unit: usize,
}

impl TeichPath {
    pub fn new(waypoints: Vec<TeichmullerPoint>, steps_per_unit: usize) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::Parse("a path needs at least one waypoint".into()));
        }
        // straight segments between points with τ₂ > 1e-9 stay in the half plane
        Ok(TeichPath { waypoints, steps_per_unit: steps_per_unit.max(1) })
    }

    /// Comma-separated waypoints, e.g. `"0+1i,1+1i"`.
    pub fn parse(s: &str, steps_per_unit: usize) -> Result<Self> {
        let pts = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| TeichmullerPoint::from_complex(parse_complex(p)?))
            .collect::<Result<Vec<_>>>()?;
        Self::new(pts, steps_per_unit)
    }

    /// Closed axis-aligned square of half-side `radius` around `centre`.
    pub fn square(centre: &TeichmullerPoint, radius: f64, steps_per_unit: usize) -> Result<Self> {
        let c = centre.as_complex();
        let corners = [(1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        let pts = corners
            .iter()
            .map(|&(a, b)| TeichmullerPoint::from_complex(c + Complex64::new(a, b) * radius))
            .collect::<Result<Vec<_>>>()?;
        Self::new(pts, steps_per_unit)
    }

    /// Closed regular polygon with `sides` vertices on a circle.
    pub fn polygon(centre: &TeichmullerPoint, radius: f64, sides: usize, steps_per_unit: usize) -> Result<Self> {
        let c = centre.as_complex();
        let pts = (0..=sides)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * (k % sides) as f64 / sides as f64;
                TeichmullerPoint::from_complex(c + Complex64::from_polar(radius, th))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pts, steps_per_unit)
    }

    pub fn reversed(&self) -> Self {
        let mut w = self.waypoints.clone();
        w.reverse();
        TeichPath { waypoints: w, steps_per_unit: self.steps_per_unit }
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1].as_complex() - w[0].as_complex()).norm()).sum()
    }

    pub fn is_closed(&self) -> bool {
        let (a, b) = (self.waypoints[0], self.waypoints[self.waypoints.len() - 1]);
        (a.as_complex() - b.as_complex()).norm() <= 1e-12
    }

    fn segment_steps(&self, from: &TeichmullerPoint, to: &TeichmullerPoint, factor: usize) -> usize {
        let len = (to.as_complex() - from.as_complex()).norm();
        if len == 0.0 {
            return 0;
        }
        ((len * self.steps_per_unit as f64).ceil() as usize).max(1) * factor
    }
}

// ---------------------------------------------------------------------------
// Connections with τ-independent coefficient matrices

/// Coefficient space on which a connection acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSpace {
    Hermite,
    Fock,
    /// Polynomials in (z, z̄); used to watch holomorphicity during transport.
    Extended,
}

#[derive(Debug, Clone)]
pub struct FlatConnection {
    pub kind: ConnectionKind,
    pub space: CoefficientSpace,
    pub rank: usize,
    pub degree: usize,
    pub level: Level,
    /// `τ₂ W_τ`
    pub a: LinearOperator,
    /// `τ₂ W_τ̄`
    pub b: LinearOperator,
    pub basis: MultiIndexBasis,
    /// Squared norms of the basis vectors (all 1 for orthonormal bases).
    pub weights: Vec<f64>,
}

fn transpose_op(op: &LinearOperator) -> LinearOperator {
    let t: Vec<_> = op.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
    LinearOperator::from_triplets(op.basis, op.dim(), &t, op.degree_shift)
}

impl FlatConnection {
    /// Assembles the potentials once at τ = i.
    pub fn new(kind: ConnectionKind, level: &Level, rank: usize, degree: usize) -> Result<Self> {
        let tau = TeichmullerPoint::i();
        let wa = connection_potential(kind, Direction::DTau, &tau, level, rank, degree)?.op;
        let wb = connection_potential(kind, Direction::DTauBar, &tau, level, rank, degree)?.op;
        let dual = matches!(kind, ConnectionKind::DualHitchinWitten | ConnectionKind::DualComplexHitchin);
        // coefficients t of a dual element (T(ψ) = Σ t_n c_n) move by −Wᵀ
        let (a, b) = if dual {
            (transpose_op(&wa).scale_re(-1.0), transpose_op(&wb).scale_re(-1.0))
        } else {
            (wa, wb)
        };
        let (space, basis, weights) = match kind {
            ConnectionKind::HitchinWitten | ConnectionKind::DualHitchinWitten => {
                let b = hermite_basis(rank, degree);
                let w = vec![1.0; b.len()];
                (CoefficientSpace::Hermite, b, w)
            }
            _ => {
                let b = fock_basis(rank, degree);
                let w = b.indices().iter().map(|a| fock_norm2(a, level.hbar())).collect();
                (CoefficientSpace::Fock, b, w)
            }
        };
        let weights = if dual { weights.iter().map(|w| 1.0 / w).collect() } else { weights };
        Ok(FlatConnection { kind, space, rank, degree, level: *level, a, b, basis, weights })
    }

    /// Full complexified Hitchin operator on the extended (z, z̄) basis.
    pub fn complex_hitchin_extended(level: &Level, rank: usize, degree: usize) -> Result<Self> {
        let tau = TeichmullerPoint::i();
        let ext = ExtendedOps::new(rank, degree, level);
        let full = |d| -> Result<LinearOperator> {
            let p = extended_pieces(&ext, &tau, level, d)?;
            Ok(p.trivial.add(&p.laplacian_generic))
        };
        let a = full(Direction::DTau)?;
        let b = full(Direction::DTauBar)?;
        let basis = extended_basis(rank, degree);
        let weights = vec![1.0; basis.len()];
        Ok(FlatConnection {
            kind: ConnectionKind::ComplexHitchin,
            space: CoefficientSpace::Extended,
            rank,
            degree,
            level: *level,
            a,
            b,
            basis,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Potential `W_V` at τ for `V = ∂τ` or `∂τ̄`.
    pub fn potential(&self, tau: &TeichmullerPoint, dir: Direction) -> LinearOperator {
        let op = match dir {
            Direction::DTau => &self.a,
            Direction::DTauBar => &self.b,
        };
        op.scale_re(1.0 / tau.tau2)
    }

    /// Relative distance between `A/τ₂` and the potential assembled directly at τ,
    /// on inputs of degree ≤ N−2.
    pub fn scaling_defect(&self, tau: &TeichmullerPoint) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for dir in Direction::both() {
            let direct = if self.space == CoefficientSpace::Extended {
                let ext = ExtendedOps::new(self.rank, self.degree, &self.level);
                let p = extended_pieces(&ext, tau, &self.level, dir)?;
                p.trivial.add(&p.laplacian_generic)
            } else {
                let w = connection_potential(self.kind, dir, tau, &self.level, self.rank, self.degree)?.op;
                if matches!(self.kind, ConnectionKind::DualHitchinWitten | ConnectionKind::DualComplexHitchin) {
                    transpose_op(&w).scale_re(-1.0)
                } else {
                    w
                }
            };
            let d = self.potential(tau, dir).relative_distance_on(&direct, &self.basis, self.degree.saturating_sub(2));
            worst = worst.max(d);
        }
        Ok(worst)
    }

    pub fn norm(&self, c: &[Complex64]) -> f64 {
        c.iter().zip(&self.weights).map(|(x, w)| x.norm_sqr() * w).sum::<f64>().sqrt()
    }

    /// Largest coefficient outside the holomorphic (β = 0) block; zero unless extended.
    pub fn antiholomorphic_part(&self, c: &[Complex64]) -> f64 {
        if self.space != CoefficientSpace::Extended {
            return 0.0;
        }
        let m = 2 * self.rank;
        self.basis
            .indices()
            .iter()
            .zip(c)
            .filter(|(n, _)| n[m..].iter().any(|&b| b > 0))
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }

    /// Content above degree N−4 counts only when it exceeds `tol·‖c‖`.
    fn check_headroom(&self, c: &[Complex64], tol: f64) -> Result<()> {
        if c.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: c.len() });
        }
        let allowed = self.degree.saturating_sub(HEADROOM);
        let scale = c.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let d = top_degree(&self.basis, c, tol * scale);
        if d > allowed {
            return Err(Error::DegreeOverflow { degree: d, allowed });
        }
        Ok(())
    }

    /// Right-hand side `−(τ′W_τ + τ̄′W_τ̄)c` of the covariant-constancy ODE.
    fn rhs(&self, tau2: f64, dtau: Complex64, c: &[Complex64], out: &mut [Complex64]) {
        let ac = self.a.apply(c);
        let bc = self.b.apply(c);
        let (ka, kb) = (-dtau / tau2, -dtau.conj() / tau2);
        for ((o, x), y) in out.iter_mut().zip(&ac).zip(&bc) {
            *o = ka * x + kb * y;
        }
    }

    /// Classical RK4 along the path with `factor` times the nominal step count.
    fn integrate(&self, path: &TeichPath, c0: &[Complex64], factor: usize, mut watch: impl FnMut(&[Complex64])) -> Vec<Complex64> {
        let n = c0.len();
        let mut c = c0.to_vec();
        let (mut k1, mut k2, mut k3, mut k4) = (vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]);
        let mut tmp = vec![ZERO; n];
        for w in path.waypoints.windows(2) {
            let steps = path.segment_steps(&w[0], &w[1], factor);
            if steps == 0 {
                continue;
            }
            let d = w[1].as_complex() - w[0].as_complex();
            let h = 1.0 / steps as f64;
            let t2 = |s: f64| w[0].tau2 + s * d.im;
            for k in 0..steps {
                let s = k as f64 * h;
                self.rhs(t2(s), d, &c, &mut k1);
                for i in 0..n {
                    tmp[i] = c[i] + k1[i] * (0.5 * h);
                }
                self.rhs(t2(s + 0.5 * h), d, &tmp, &mut k2);
                for i in 0..n {
                    tmp[i] = c[i] + k2[i] * (0.5 * h);
                }
                self.rhs(t2(s + 0.5 * h), d, &tmp, &mut k3);
                for i in 0..n {
                    tmp[i] = c[i] + k3[i] * h;
                }
                self.rhs(t2(s + h), d, &tmp, &mut k4);
                for i in 0..n {
                    c[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
                }
                watch(&c);
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportOptions {
    /// Endpoint tolerance; step halving may change the endpoint by at most 10× this.
    pub tolerance: f64,
    /// Record the coefficient vector every this many steps (0 = never).
    pub trace_every: usize,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions { tolerance: 1e-8, trace_every: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct TransportResult {
    pub endpoint: Vec<Complex64>,
    pub norm_start: f64,
    pub norm_end: f64,
    /// `|‖c_end‖ − ‖c_0‖| / ‖c_0‖` in the natural norm of the coefficient space.
    pub norm_drift: f64,
    /// Relative endpoint change when the step is halved.
    pub halving_change: f64,
    /// Largest anti-holomorphic coefficient met along the path (extended space only).
    pub max_antiholomorphic: f64,
    pub trace: Vec<Vec<Complex64>>,
}

/// Transports `c0` along `path`, returning the endpoint of the finer run.
pub fn transport(conn: &FlatConnection, path: &TeichPath, c0: &[Complex64], opts: &TransportOptions) -> Result<TransportResult> {
    conn.check_headroom(c0, opts.tolerance)?;
    let coarse = conn.integrate(path, c0, 1, |_| {});
    let mut trace = Vec::new();
    let mut anti: f64 = conn.antiholomorphic_part(c0);
    let mut count = 0usize;
    let fine = conn.integrate(path, c0, 2, |c| {
        anti = anti.max(conn.antiholomorphic_part(c));
        count += 1;
        if opts.trace_every > 0 && count % opts.trace_every == 0 {
            trace.push(c.to_vec());
        }
    });
    let diff: Vec<Complex64> = fine.iter().zip(&coarse).map(|(a, b)| a - b).collect();
    let scale = conn.norm(&fine).max(conn.norm(c0)).max(f64::MIN_POSITIVE);
    let halving_change = conn.norm(&diff) / scale;
    if !(halving_change <= 10.0 * opts.tolerance) {
        return Err(Error::StepUnstable(halving_change));
    }
    let norm_start = conn.norm(c0);
    let norm_end = conn.norm(&fine);
    let norm_drift = if norm_start > 0.0 { (norm_end - norm_start).abs() / norm_start } else { norm_end };
    Ok(TransportResult {
        endpoint: fine,
        norm_start,
        norm_end,
        norm_drift,
        halving_change,
        max_antiholomorphic: anti,
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct Holonomy {
    /// Columns are the transported block basis vectors (all rows of the truncation).
    pub matrix: DMatrix<Complex64>,
    pub block_degree: usize,
    /// Spectral norm of `Hol − Id` in orthonormalised coordinates.
    pub deviation: f64,
    /// Phase of the mean diagonal entry, reported separately from the deviation.
    pub global_phase: f64,
}

/// Transport around a closed loop of every basis vector of degree ≤ `block_degree`.
pub fn holonomy(conn: &FlatConnection, path: &TeichPath, block_degree: usize, opts: &TransportOptions) -> Result<Holonomy> {
    if !path.is_closed() {
        return Err(Error::Parse("holonomy needs a closed loop".into()));
    }
    let allowed = conn.degree.saturating_sub(HEADROOM);
    if block_degree > allowed {
        return Err(Error::DegreeOverflow { degree: block_degree, allowed });
    }
    let cols = conn.basis.count_up_to(block_degree);
    let n = conn.dim();
    let columns: Vec<Vec<Complex64>> = (0..cols)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![ZERO; n];
            e[j] = ONE;
            transport(conn, path, &e, opts).map(|r| r.endpoint)
        })
        .collect::<Result<_>>()?;
    let mut matrix = DMatrix::<Complex64>::zeros(n, cols);
    let mut dev = DMatrix::<Complex64>::zeros(n, cols);
    let mut trace = ZERO;
    for (j, col) in columns.iter().enumerate() {
        let sj = conn.weights[j].sqrt();
        for i in 0..n {
            matrix[(i, j)] = col[i];
            let id = if i == j { ONE } else { ZERO };
            dev[(i, j)] = (col[i] - id) * (conn.weights[i].sqrt() / sj);
        }
        trace += col[j];
    }
    let deviation = dev.singular_values().max();
    Ok(Holonomy { matrix, block_degree, deviation, global_phase: trace.arg() })
}

// ---------------------------------------------------------------------------
// Families and δ/δτ

/// Which side a family lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilySide {
    /// Hermite coefficients of `ψ_τ(q)`.
    Position,
    /// Monomial coefficients of `f_τ(z)`.
    Fock,
}

type CoeffRule<'a> = Box<dyn Fn(&TeichmullerPoint) -> Result<Vec<Complex64>> + Send + Sync + 'a>;
type CoeffDerivative<'a> = Box<dyn Fn(&TeichmullerPoint, Direction) -> Result<Vec<Complex64>> + Send + Sync + 'a>;

/// A τ-dependent section given by its coefficient vector in the τ-dependent basis.
pub struct SectionFamily<'a> {
    pub side: FamilySide,
    pub rank: usize,
    pub degree: usize,
    pub level: Level,
    pub rule: CoeffRule<'a>,
    /// Analytic ∂/∂τ, ∂/∂τ̄ of the coefficients, when known.
    pub derivative: Option<CoeffDerivative<'a>>,
}

impl<'a> SectionFamily<'a> {
    pub fn numeric(side: FamilySide, rank: usize, degree: usize, level: Level, rule: CoeffRule<'a>) -> Self {
        SectionFamily { side, rank, degree, level, rule, derivative: None }
    }

    /// `c(τ) = c0 + (τ − τ0) c1 + (τ̄ − τ̄0) c2`, with exact derivatives.
    pub fn affine(side: FamilySide, rank: usize, degree: usize, level: Level, tau0: TeichmullerPoint, c: [Vec<Complex64>; 3]) -> Self {
        let [c0, c1, c2] = c;
        let (d1, d2) = (c1.clone(), c2.clone());
        let rule: CoeffRule<'a> = Box::new(move |t: &TeichmullerPoint| {
            let dt = t.as_complex() - tau0.as_complex();
            Ok((0..c0.len()).map(|i| c0[i] + dt * c1[i] + dt.conj() * c2[i]).collect())
        });
        let der: CoeffDerivative<'a> = Box::new(move |_, dir| {
            Ok(match dir {
                Direction::DTau => d1.clone(),
                Direction::DTauBar => d2.clone(),
            })
        });
        SectionFamily { side, rank, degree, level, rule, derivative: Some(der) }
    }

    pub fn at(&self, tau: &TeichmullerPoint) -> Result<Vec<Complex64>> {
        (self.rule)(tau)
    }

    /// Coefficient derivative: analytic when supplied, otherwise Richardson-extrapolated
    /// central differences with step `h` in τ₁ and τ₂.
    pub fn coeff_derivative(&self, tau: &TeichmullerPoint, dir: Direction, h: f64) -> Result<Vec<Complex64>> {
        if let Some(d) = &self.derivative {
            return d(tau, dir);
        }
        fd_vector(tau, dir, h, |t| self.at(t))
    }
}

/// Richardson central differences of a vector function of τ, with a spread check.
pub fn fd_vector<F>(tau: &TeichmullerPoint, dir: Direction, h: f64, f: F) -> Result<Vec<Complex64>>
where
    F: Fn(&TeichmullerPoint) -> Result<Vec<Complex64>>,
{
    let central = |h: f64| -> Result<Vec<Complex64>> {
        let a1 = f(&tau.shifted(h, 0.0)?)?;
        let b1 = f(&tau.shifted(-h, 0.0)?)?;
        let a2 = f(&tau.shifted(0.0, h)?)?;
        let b2 = f(&tau.shifted(0.0, -h)?)?;
        let s = match dir {
            Direction::DTau => -0.5,
            Direction::DTauBar => 0.5,
        };
        Ok((0..a1.len())
            .map(|i| (a1[i] - b1[i]) * (0.25 / h) + (a2[i] - b2[i]) * Complex64::new(0.0, s / (2.0 * h)))
            .collect())
    };
    let coarse = central(h)?;
    let fine = central(h / 2.0)?;
    let rich: Vec<Complex64> = fine.iter().zip(&coarse).map(|(f, c)| (f * 4.0 - c) / 3.0).collect();
    let spread = fine.iter().zip(&coarse).map(|(f, c)| (f - c).norm()).fold(0.0, f64::max);
    let size = rich.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if !spread.is_finite() || spread > 1e-3 * (1.0 + size) {
        return Err(Error::NotDifferentiable(spread));
    }
    Ok(rich)
}

/// δ/δτ of a family in coefficient form. Since δ/δτ differentiates at fixed
/// (z, z̄) (resp. fixed (p, q)), this is the coefficient derivative.
pub fn delta_derivative(family: &SectionFamily, dir: Direction, tau: &TeichmullerPoint) -> Result<Vec<Complex64>> {
    family.coeff_derivative(tau, dir, 1e-5)
}

fn pq_at(tau: &TeichmullerPoint, level: &Level, rank: usize, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    build_frames(tau, level, rank)?.coords_pq(x)
}

/// Value and gradient of the family member at τ, in its own coordinates.
fn value_and_gradient(family: &SectionFamily, coeffs: &[Complex64], p: &DVector<f64>, q: &DVector<f64>) -> (Complex64, Vec<Complex64>) {
    let m = 2 * family.rank;
    match family.side {
        FamilySide::Position => {
            let ops = HermiteOps::new(family.rank, family.degree, &family.level);
            let eval = |c: &[Complex64]| hermite_eval(&ops.basis, family.level.hbar(), c, q.as_slice());
            let grad = (0..m)
                .map(|a| eval(&hermite_dq(&ops.basis, ops.desc, ops.hbar, a).apply(coeffs)))
                .collect();
            (eval(coeffs), grad)
        }
        FamilySide::Fock => {
            let fock = FockOps::new(family.rank, family.degree, &family.level);
            let z: Vec<Complex64> = (0..m).map(|a| Complex64::new(p[a], q[a])).collect();
            let eval = |c: &[Complex64]| monomial_eval(&fock.basis, c, &z);
            let grad = (0..m).map(|a| eval(&fock.dz[a].apply(coeffs))).collect();
            (eval(coeffs), grad)
        }
    }
}

fn hermite_eval(basis: &MultiIndexBasis, hbar: f64, c: &[Complex64], q: &[f64]) -> Complex64 {
    let deg = basis.indices().iter().flat_map(|n| n.iter()).copied().max().unwrap_or(0) as usize;
    let tables: Vec<Vec<f64>> = q.iter().map(|&x| hermite_functions(deg + 1, hbar, x)).collect();
    basis
        .indices()
        .iter()
        .zip(c)
        .map(|(n, v)| v * n.iter().enumerate().map(|(a, &k)| tables[a][k as usize]).product::<f64>())
        .sum()
}

fn monomial_eval(basis: &MultiIndexBasis, c: &[Complex64], z: &[Complex64]) -> Complex64 {
    basis
        .indices()
        .iter()
        .zip(c)
        .map(|(n, v)| v * n.iter().enumerate().map(|(a, &k)| z[a].powu(k)).product::<Complex64>())
        .sum()
}

/// Pointwise δ/δτ at a point x of 𝒜 (global coordinates): finite difference of
/// `τ ↦ F_τ(coords(x, τ))` at fixed x, minus the closed-form coordinate-variation
/// term `Σ (∂w_a/∂V) ∂F/∂w_a`.
pub fn delta_derivative_at(family: &SectionFamily, dir: Direction, tau: &TeichmullerPoint, x: &DVector<f64>) -> Result<Complex64> {
    let r = family.rank;
    let m = 2 * r;
    let at_fixed_x = fd_vector(tau, dir, 1e-4, |t| {
        let (p, q) = pq_at(t, &family.level, r, x)?;
        let c = family.at(t)?;
        Ok(vec![value_and_gradient(family, &c, &p, &q).0])
    })?[0];
    let (p, q) = pq_at(tau, &family.level, r, x)?;
    let c = family.at(tau)?;
    let (_, grad) = value_and_gradient(family, &c, &p, &q);
    let var = frames::coordinate_variation(tau, &family.level, r, dir);
    let pq: DVector<Complex64> = DVector::from_iterator(2 * m, p.iter().chain(q.iter()).map(|&v| Complex64::new(v, 0.0)));
    let dpq = var * pq;
    let correction: Complex64 = match family.side {
        // F depends on q only
        FamilySide::Position => (0..m).map(|a| dpq[m + a] * grad[a]).sum(),
        // F depends on z = p + iq holomorphically
        FamilySide::Fock => (0..m).map(|a| (dpq[a] + I * dpq[m + a]) * grad[a]).sum(),
    };
    Ok(at_fixed_x - correction)
}

// ---------------------------------------------------------------------------
// Mapping class group

/// Element of SL(2,ℤ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct McgElement {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl McgElement {
    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Result<Self> {
        if a * d - b * c != 1 {
            return Err(Error::Parse(format!("[[{a},{b}],[{c},{d}]] does not have determinant 1")));
        }
        Ok(McgElement { a, b, c, d })
    }

    pub fn identity() -> Self {
        McgElement { a: 1, b: 0, c: 0, d: 1 }
    }

    /// `τ ↦ −1/τ`
    pub fn s() -> Self {
        McgElement { a: 0, b: -1, c: 1, d: 0 }
    }

    /// `τ ↦ τ + 1`
    pub fn t() -> Self {
        McgElement { a: 1, b: 1, c: 0, d: 1 }
    }

    pub fn compose(&self, o: &McgElement) -> Self {
        McgElement {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    pub fn inverse(&self) -> Self {
        McgElement { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    /// `cτ + d`
    pub fn factor(&self, tau: &TeichmullerPoint) -> Complex64 {
        tau.as_complex() * self.c as f64 + self.d as f64
    }
}

/// `γτ = (aτ + b)/(cτ + d)`
pub fn mcg_act(g: &McgElement, tau: &TeichmullerPoint) -> Result<TeichmullerPoint> {
    let t = tau.as_complex();
    TeichmullerPoint::from_complex((t * g.a as f64 + g.b as f64) / g.factor(tau))
}

/// Linear action on the global chart: `[[d, c], [b, a]]` on every pair
/// `(u_j, u_{j+r})` and `(v_j, v_{j+r})`. This is the inverse transpose of γ
/// conjugated by `diag(1, −1)` (the chart's orientation of the second
/// component), and it is the form for which `L ⋆_τ L⁻¹ = ⋆_{γτ}`.
pub fn lattice_map(g: &McgElement, rank: usize) -> DMatrix<f64> {
    let r = rank;
    let l = [[g.d as f64, g.c as f64], [g.b as f64, g.a as f64]];
    let mut out = DMatrix::zeros(4 * r, 4 * r);
    for j in 0..r {
        for a in 0..2 {
            for b in 0..2 {
                out[(u_idx(r, j, a), u_idx(r, j, b))] = l[a][b];
                out[(v_idx(r, j, a), v_idx(r, j, b))] = l[a][b];
            }
        }
    }
    out
}

/// `(p, q)` at τ to `(p', q')` at γτ of the image point.
pub fn pq_map(g: &McgElement, tau: &TeichmullerPoint, level: &Level, rank: usize) -> Result<DMatrix<f64>> {
    let f = build_frames(tau, level, rank)?;
    let fg = build_frames(&mcg_act(g, tau)?, level, rank)?;
    Ok(&fg.inverse * lattice_map(g, rank) * &f.matrix)
}

/// Complex-linear form `z' = U z` of [`pq_map`], plus the size of its
/// anti-linear part (zero when the action maps the polarisation to itself).
pub fn fock_unitary(g: &McgElement, tau: &TeichmullerPoint, level: &Level, rank: usize) -> Result<(DMatrix<Complex64>, f64)> {
    let m = 2 * rank;
    let r = pq_map(g, tau, level, rank)?;
    let rpp = r.view((0, 0), (m, m));
    let rpq = r.view((0, m), (m, m));
    let rqp = r.view((m, 0), (m, m));
    let rqq = r.view((m, m), (m, m));
    let anti = (&rpp - &rqq).norm().max((&rpq + &rqp).norm());
    let u = DMatrix::from_fn(m, m, |i, j| Complex64::new(rpp[(i, j)], rqp[(i, j)]));
    Ok((u, anti))
}

/// Matrix of `f ↦ f ∘ V` on holomorphic polynomials, for a linear map V of ℂ^m.
pub fn polynomial_substitution(basis: &MultiIndexBasis, v: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = basis.len();
    let m = v.nrows();
    let mut out = DMatrix::<Complex64>::zeros(n, n);
    for (col, alpha) in basis.indices().iter().enumerate() {
        let mut poly = vec![ZERO; n];
        poly[0] = ONE;
        for (a, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                let mut next = vec![ZERO; n];
                for (i, &c) in poly.iter().enumerate() {
                    if c == ZERO {
                        continue;
                    }
                    for b in 0..m {
                        if v[(a, b)] != ZERO {
                            let j = basis.shifted(i, b, true).expect("substitution preserves degree");
                            next[j] += c * v[(a, b)];
                        }
                    }
                }
                poly = next;
            }
        }
        out.set_column(col, &DVector::from_vec(poly));
    }
    out
}

/// Push-forward of Fock coefficients at τ to Fock coefficients at γτ:
/// `(γ·s)(x′) = s(L⁻¹x′)`, i.e. `f ↦ f ∘ U⁻¹` (trivial lift on the line bundle).
pub fn fock_section_map(g: &McgElement, tau: &TeichmullerPoint, level: &Level, rank: usize, degree: usize) -> Result<DMatrix<Complex64>> {
    let (u, _) = fock_unitary(g, tau, level, rank)?;
    let uinv = u.try_inverse().ok_or(Error::SingularFrame(f64::INFINITY))?;
    Ok(polynomial_substitution(&fock_basis(rank, degree), &uinv))
}

/// The same map on Hermite coefficients, `B⁻¹ S_F B` with `B⁻¹ = B* diag(‖z^α‖²)`.
pub fn hermite_section_map(g: &McgElement, tau: &TeichmullerPoint, level: &Level, rank: usize, degree: usize) -> Result<DMatrix<Complex64>> {
    let sf = fock_section_map(g, tau, level, rank, degree)?;
    let b = bargmann_operator(rank, degree, level).to_dense();
    Ok(bargmann_inverse_dense(&b, rank, degree, level) * sf * b)
}

fn bargmann_inverse_dense(b: &DMatrix<Complex64>, rank: usize, degree: usize, level: &Level) -> DMatrix<Complex64> {
    let fb = fock_basis(rank, degree);
    let mut inv = b.adjoint();
    for j in 0..fb.len() {
        let w = fock_norm2(fb.index(j), level.hbar());
        for i in 0..inv.nrows() {
            inv[(i, j)] *= w;
        }
    }
    inv
}

/// Section map in the coefficient space of `kind` (dual kinds use the inverse transpose).
pub fn section_map(kind: ConnectionKind, g: &McgElement, tau: &TeichmullerPoint, level: &Level, rank: usize, degree: usize) -> Result<DMatrix<Complex64>> {
    let s = match kind {
        ConnectionKind::HitchinWitten | ConnectionKind::DualHitchinWitten => hermite_section_map(g, tau, level, rank, degree)?,
        _ => fock_section_map(g, tau, level, rank, degree)?,
    };
    if matches!(kind, ConnectionKind::DualHitchinWitten | ConnectionKind::DualComplexHitchin) {
        Ok(s.try_inverse().ok_or(Error::SingularFrame(f64::INFINITY))?.transpose())
    } else {
        Ok(s)
    }
}

/// Applies γ to the coefficients of a section at τ; returns (γτ, coefficients at γτ).
pub fn mcg_act_section(
    kind: ConnectionKind,
    g: &McgElement,
    tau: &TeichmullerPoint,
    level: &Level,
    rank: usize,
    degree: usize,
    coeffs: &[Complex64],
) -> Result<(TeichmullerPoint, Vec<Complex64>)> {
    let s = section_map(kind, g, tau, level, rank, degree)?;
    if coeffs.len() != s.ncols() {
        return Err(Error::DimensionMismatch { expected: s.ncols(), got: coeffs.len() });
    }
    let out = s * DVector::from_column_slice(coeffs);
    Ok((mcg_act(g, tau)?, out.as_slice().to_vec()))
}

fn dense_relative(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, cols: usize) -> f64 {
    let d = (a.columns(0, cols) - b.columns(0, cols)).norm();
    d / a.columns(0, cols).norm().max(b.columns(0, cols).norm()).max(1.0)
}

/// Gauge-law defect of γ for one direction:
/// `W_V(τ) − [S⁻¹ ∂_V S + φ_V S⁻¹ W_V(γτ) S]` with `φ_τ = (cτ+d)⁻²` and `φ_τ̄` its conjugate,
/// relative, on inputs of degree ≤ N−2.
pub fn gauge_law_defect(kind: ConnectionKind, g: &McgElement, tau: &TeichmullerPoint, level: &Level, rank: usize, degree: usize, dir: Direction) -> Result<f64> {
    let gt = mcg_act(g, tau)?;
    let s = section_map(kind, g, tau, level, rank, degree)?;
    let sinv = s.clone().try_inverse().ok_or(Error::SingularFrame(f64::INFINITY))?;
    let ds = frames::richardson_tau_derivative(tau, 1e-4, dir, |t| section_map(kind, g, t, level, rank, degree))?;
    let w = connection_potential(kind, dir, tau, level, rank, degree)?.op.to_dense();
    let wg = connection_potential(kind, dir, &gt, level, rank, degree)?.op.to_dense();
    let f = g.factor(tau).powi(-2);
    let phi = match dir {
        Direction::DTau => f,
        Direction::DTauBar => f.conj(),
    };
    let (w, wg) = if matches!(kind, ConnectionKind::DualHitchinWitten | ConnectionKind::DualComplexHitchin) {
        (-w.transpose(), -wg.transpose())
    } else {
        (w, wg)
    };
    let rhs = &sinv * ds + &sinv * wg * &s * phi;
    let cols = match kind {
        ConnectionKind::HitchinWitten | ConnectionKind::DualHitchinWitten => hermite_basis(rank, degree),
        _ => fock_basis(rank, degree),
    }
    .count_up_to(degree.saturating_sub(2));
    Ok(dense_relative(&w, &rhs, cols))
}

// ---------------------------------------------------------------------------
// Intertwining of the Hitchin–Witten and L² connections

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntertwiningResidual {
    pub direction: Direction,
    /// `‖B(∂c + W^HW c) − (∂(Bc) + W^{L²} Bc)‖ / ‖B(∂c + W^HW c)‖`, Fock norm.
    pub relative: f64,
    pub absolute: f64,
}

/// Which potential plays the holomorphic side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolomorphicSide {
    L2,
    ComplexHitchin,
}

/// Both sides of `B ∘ ∇^HW = ∇^{hol} ∘ B` on a position-side family at τ.
/// The HW potential comes from the frame-based generic assembly; the holomorphic
/// potential is either the closed L² form or the CH holomorphic block. `∂(Bc)` is
/// differentiated numerically, `∂c` analytically when the family supplies it.
pub fn verify_intertwining(family: &SectionFamily, tau: &TeichmullerPoint, side: HolomorphicSide) -> Result<Vec<IntertwiningResidual>> {
    if family.side != FamilySide::Position {
        return Err(Error::BasisMismatch);
    }
    let (r, n, level) = (family.rank, family.degree, family.level);
    let c = family.at(tau)?;
    let hb = hermite_basis(r, n);
    let allowed = n.saturating_sub(HEADROOM);
    let scale = c.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let d = top_degree(&hb, &c, 1e-12 * scale);
    if d > allowed {
        return Err(Error::DegreeOverflow { degree: d, allowed });
    }
    let ops = HermiteOps::new(r, n, &level);
    let fock = FockOps::new(r, n, &level);
    let geo = A0Geometry::new(tau, &level, r)?;
    let b = bargmann_operator(r, n, &level);
    let weights: Vec<f64> = fock.basis.indices().iter().map(|a| fock_norm2(a, level.hbar())).collect();
    let fnorm = |v: &[Complex64]| v.iter().zip(&weights).map(|(x, w)| x.norm_sqr() * w).sum::<f64>().sqrt();
    let mut out = Vec::new();
    for dir in Direction::both() {
        let w_hw = hw_potential_generic(&ops, &geo, dir);
        let w_hol = match side {
            HolomorphicSide::L2 => l2_potential(&fock, tau, &level, dir),
            HolomorphicSide::ComplexHitchin => connection_potential(ConnectionKind::ComplexHitchin, dir, tau, &level, r, n)?.op,
        };
        let dc = family.coeff_derivative(tau, dir, 1e-4)?;
        let inner: Vec<Complex64> = w_hw.apply(&c).iter().zip(&dc).map(|(a, b)| a + b).collect();
        let lhs = b.apply(&inner);
        let dbc = fd_vector(tau, dir, 1e-4, |t| Ok(b.apply(&family.at(t)?)))?;
        let bc = b.apply(&c);
        let rhs: Vec<Complex64> = w_hol.apply(&bc).iter().zip(&dbc).map(|(a, b)| a + b).collect();
        let diff: Vec<Complex64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let absolute = fnorm(&diff);
        let relative = absolute / fnorm(&lhs).max(fnorm(&bc)).max(f64::MIN_POSITIVE);
        out.push(IntertwiningResidual { direction: dir, relative, absolute });
    }
    Ok(out)
}

/// The family `τ′ ↦ S_H(γ⁻¹τ′) c(γ⁻¹τ′)` obtained by acting with γ on a position-side family.
pub fn act_on_family<'a>(g: McgElement, family: &'a SectionFamily<'a>) -> SectionFamily<'a> {
    let (r, n, level) = (family.rank, family.degree, family.level);
    let ginv = g.inverse();
    let rule: CoeffRule<'a> = Box::new(move |tp: &TeichmullerPoint| {
        let t = mcg_act(&ginv, tp)?;
        let s = hermite_section_map(&g, &t, &level, r, n)?;
        let c = family.at(&t)?;
        Ok((s * DVector::from_vec(c)).as_slice().to_vec())
    });
    SectionFamily::numeric(FamilySide::Position, r, n, level, rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level() -> Level {
        Level::new(3, 0.7).unwrap()
    }

    #[test]
    fn potentials_scale_as_inverse_tau2() {
        let lv = level();
        for kind in [ConnectionKind::HitchinWitten, ConnectionKind::L2, ConnectionKind::ComplexHitchin] {
            let conn = FlatConnection::new(kind, &lv, 1, 8).unwrap();
            let d = conn.scaling_defect(&TeichmullerPoint::new(0.4, 1.7).unwrap()).unwrap();
            assert!(d < 1e-12, "{kind:?}: {d}");
        }
        let ext = FlatConnection::complex_hitchin_extended(&lv, 1, 6).unwrap();
        assert!(ext.scaling_defect(&TeichmullerPoint::new(-0.3, 0.8).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn mcg_moves_conjugate_hodge_star() {
        let tau = TeichmullerPoint::new(0.3, 1.2).unwrap();
        let lv = level();
        for g in [McgElement::s(), McgElement::t(), McgElement::s().compose(&McgElement::t())] {
            let (_, anti) = fock_unitary(&g, &tau, &lv, 2).unwrap();
            assert!(anti < 1e-12, "{g:?}: {anti}");
        }
    }
}
