//! Concrete operator matrices: ladders, M/D and μ/δ, prequantum covariant
//! derivatives, Laplacians and the connection potentials.
//!
//! A connection potential `W_V` is the coefficient-space operator with
//! `∇_V(section) ↔ V[c] + W_V c`, where `c` are the coefficients of the
//! section in the τ-dependent basis (Hermite functions of q times ρ_τ, or
//! monomials in z times σ_τ). Every closed form has an independent generic
//! assembly from the frame data in `frames`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{factorial, MultiIndexBasis};
use crate::error::{Error, Result};
use crate::frames::{self, build_frames, to_complex, Direction, Level, TeichmullerPoint};
use crate::linop::{BasisDescriptor, BasisKind, LinearOperator};
use crate::sections::{descriptor, extended_basis, fock_basis, hermite_basis};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

// ---------------------------------------------------------------------------
// Elementary polynomial and Hermite operators

/// Multiplication by the variable `var` on a monomial basis.
pub fn poly_mul(basis: &MultiIndexBasis, desc: BasisDescriptor, var: usize) -> LinearOperator {
    let t: Vec<_> = (0..basis.len()).filter_map(|i| basis.shifted(i, var, true).map(|j| (j, i, ONE))).collect();
    LinearOperator::from_triplets(desc, basis.len(), &t, 1)
}

/// ∂/∂(var) on a monomial basis.
pub fn poly_deriv(basis: &MultiIndexBasis, desc: BasisDescriptor, var: usize) -> LinearOperator {
    let t: Vec<_> = (0..basis.len())
        .filter_map(|i| basis.shifted(i, var, false).map(|j| (j, i, c(basis.index(i)[var] as f64))))
        .collect();
    LinearOperator::from_triplets(desc, basis.len(), &t, -1)
}

/// Multiplication by `q_var` on normalised Hermite functions.
pub fn hermite_q(basis: &MultiIndexBasis, desc: BasisDescriptor, hbar: f64, var: usize) -> LinearOperator {
    let s = (hbar / 2.0).sqrt();
    let mut t = Vec::new();
    for i in 0..basis.len() {
        let n = basis.index(i)[var] as f64;
        if let Some(j) = basis.shifted(i, var, true) {
            t.push((j, i, c(s * (n + 1.0).sqrt())));
        }
        if let Some(j) = basis.shifted(i, var, false) {
            t.push((j, i, c(s * n.sqrt())));
        }
    }
    LinearOperator::from_triplets(desc, basis.len(), &t, 1)
}

/// ∂/∂q_var on normalised Hermite functions.
pub fn hermite_dq(basis: &MultiIndexBasis, desc: BasisDescriptor, hbar: f64, var: usize) -> LinearOperator {
    let s = 1.0 / (2.0 * hbar).sqrt();
    let mut t = Vec::new();
    for i in 0..basis.len() {
        let n = basis.index(i)[var] as f64;
        if let Some(j) = basis.shifted(i, var, true) {
            t.push((j, i, c(-s * (n + 1.0).sqrt())));
        }
        if let Some(j) = basis.shifted(i, var, false) {
            t.push((j, i, c(s * n.sqrt())));
        }
    }
    LinearOperator::from_triplets(desc, basis.len(), &t, 1)
}

fn lincomb(desc: BasisDescriptor, dim: usize, terms: &[(Complex64, &LinearOperator)]) -> LinearOperator {
    let mut acc = LinearOperator::zeros(desc, dim);
    for (s, op) in terms {
        if *s != ZERO {
            acc = acc.add(&op.scale(*s));
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Contexts holding the truncated bases and their elementary operators

/// Hermite side: functions of q ∈ ℝ^{2r}.
#[derive(Debug, Clone)]
pub struct HermiteOps {
    pub rank: usize,
    pub hbar: f64,
    pub basis: MultiIndexBasis,
    pub desc: BasisDescriptor,
    pub q: Vec<LinearOperator>,
    pub dq: Vec<LinearOperator>,
}

impl HermiteOps {
    pub fn new(rank: usize, degree: usize, level: &Level) -> Self {
        let basis = hermite_basis(rank, degree);
        let desc = descriptor(BasisKind::Hermite, rank, degree);
        let hbar = level.hbar();
        let q = (0..2 * rank).map(|a| hermite_q(&basis, desc, hbar, a)).collect();
        let dq = (0..2 * rank).map(|a| hermite_dq(&basis, desc, hbar, a)).collect();
        HermiteOps { rank, hbar, basis, desc, q, dq }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn identity(&self) -> LinearOperator {
        LinearOperator::identity(self.desc, self.dim())
    }

    pub fn zeros(&self) -> LinearOperator {
        LinearOperator::zeros(self.desc, self.dim())
    }

    /// `Σ_a c_a ∂/∂q_a + Σ_a d_a q_a`
    pub fn first_order(&self, cvec: &[Complex64], dvec: &[Complex64]) -> LinearOperator {
        let mut terms: Vec<(Complex64, &LinearOperator)> = Vec::new();
        for a in 0..2 * self.rank {
            terms.push((cvec[a], &self.dq[a]));
            terms.push((dvec[a], &self.q[a]));
        }
        lincomb(self.desc, self.dim(), &terms)
    }

    /// Multiplication by the quadratic form `qᵀ Z q`.
    pub fn quadratic(&self, z: &DMatrix<Complex64>) -> LinearOperator {
        let mut acc = self.zeros();
        for a in 0..2 * self.rank {
            for b in 0..2 * self.rank {
                if z[(a, b)] != ZERO {
                    acc = acc.add(&self.q[a].compose(&self.q[b]).scale(z[(a, b)]));
                }
            }
        }
        acc
    }

    /// `M_j`, `D_j` and their bars (`j` in `0..r`).
    pub fn md(&self, j: usize, kind: MdKind) -> LinearOperator {
        let r = self.rank;
        let (a, b) = (j, j + r);
        match kind {
            MdKind::M => self.q[a].add(&self.q[b].scale(I)),
            MdKind::Mbar => self.q[a].add(&self.q[b].scale(-I)),
            MdKind::D => self.dq[a].add(&self.dq[b].scale(I)).scale_re(self.hbar),
            MdKind::Dbar => self.dq[a].add(&self.dq[b].scale(-I)).scale_re(self.hbar),
        }
    }

    /// `Σ_j (q_{j+r} ∂/∂q_j − q_j ∂/∂q_{j+r})`
    pub fn rotation(&self) -> LinearOperator {
        let r = self.rank;
        let mut acc = self.zeros();
        for j in 0..r {
            acc = acc.add(&self.q[j + r].compose(&self.dq[j])).sub(&self.q[j].compose(&self.dq[j + r]));
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MdKind {
    M,
    D,
    Mbar,
    Dbar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderKind {
    Create,
    Annihilate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuDeltaKind {
    Mu,
    Delta,
    MuBar,
    DeltaBar,
}

/// Fock side: holomorphic polynomials in z ∈ ℂ^{2r}.
#[derive(Debug, Clone)]
pub struct FockOps {
    pub rank: usize,
    pub hbar: f64,
    pub basis: MultiIndexBasis,
    pub desc: BasisDescriptor,
    pub z: Vec<LinearOperator>,
    pub dz: Vec<LinearOperator>,
}

impl FockOps {
    pub fn new(rank: usize, degree: usize, level: &Level) -> Self {
        let basis = fock_basis(rank, degree);
        let desc = descriptor(BasisKind::Fock, rank, degree);
        let z = (0..2 * rank).map(|a| poly_mul(&basis, desc, a)).collect();
        let dz = (0..2 * rank).map(|a| poly_deriv(&basis, desc, a)).collect();
        FockOps { rank, hbar: level.hbar(), basis, desc, z, dz }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn zeros(&self) -> LinearOperator {
        LinearOperator::zeros(self.desc, self.dim())
    }

    pub fn identity(&self) -> LinearOperator {
        LinearOperator::identity(self.desc, self.dim())
    }

    /// `a*_j = z_j·`, `a_j = 2ħ ∂/∂z_j` (`j` in `0..2r`).
    pub fn ladder(&self, j: usize, kind: LadderKind) -> LinearOperator {
        match kind {
            LadderKind::Create => self.z[j].clone(),
            LadderKind::Annihilate => self.dz[j].scale_re(2.0 * self.hbar),
        }
    }

    /// `μ_j`, `δ_j` and their bars (`j` in `0..r`).
    pub fn mudelta(&self, j: usize, kind: MuDeltaKind) -> LinearOperator {
        let r = self.rank;
        let (a, b) = (j, j + r);
        let h2 = 2.0 * self.hbar;
        match kind {
            MuDeltaKind::Mu => self.z[a].add(&self.z[b].scale(I)),
            MuDeltaKind::MuBar => self.z[a].add(&self.z[b].scale(-I)),
            MuDeltaKind::Delta => self.dz[a].add(&self.dz[b].scale(I)).scale_re(h2),
            MuDeltaKind::DeltaBar => self.dz[a].add(&self.dz[b].scale(-I)).scale_re(h2),
        }
    }

    /// `Σ_j (z_{j+r} ∂/∂z_j − z_j ∂/∂z_{j+r})`
    pub fn rotation(&self) -> LinearOperator {
        let r = self.rank;
        let mut acc = self.zeros();
        for j in 0..r {
            acc = acc.add(&self.z[j + r].compose(&self.dz[j])).sub(&self.z[j].compose(&self.dz[j + r]));
        }
        acc
    }
}

/// Extended side: polynomials in (z, z̄), variables `z_1..z_{2r}, z̄_1..z̄_{2r}`.
#[derive(Debug, Clone)]
pub struct ExtendedOps {
    pub rank: usize,
    pub hbar: f64,
    pub basis: MultiIndexBasis,
    pub desc: BasisDescriptor,
    pub z: Vec<LinearOperator>,
    pub zbar: Vec<LinearOperator>,
    pub dz: Vec<LinearOperator>,
    pub dzbar: Vec<LinearOperator>,
}

impl ExtendedOps {
    pub fn new(rank: usize, degree: usize, level: &Level) -> Self {
        let basis = extended_basis(rank, degree);
        let desc = descriptor(BasisKind::Extended, rank, degree);
        let m = 2 * rank;
        let z = (0..m).map(|a| poly_mul(&basis, desc, a)).collect();
        let zbar = (0..m).map(|a| poly_mul(&basis, desc, m + a)).collect();
        let dz = (0..m).map(|a| poly_deriv(&basis, desc, a)).collect();
        let dzbar = (0..m).map(|a| poly_deriv(&basis, desc, m + a)).collect();
        ExtendedOps { rank, hbar: level.hbar(), basis, desc, z, zbar, dz, dzbar }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn zeros(&self) -> LinearOperator {
        LinearOperator::zeros(self.desc, self.dim())
    }

    /// `∇_{∂/∂z_a} = ∂/∂z_a − z̄_a/(2ħ)` in the σ-trivialisation.
    pub fn nabla_z(&self, a: usize) -> LinearOperator {
        self.dz[a].sub(&self.zbar[a].scale_re(1.0 / (2.0 * self.hbar)))
    }

    /// `∇_{∂/∂z̄_a} = ∂/∂z̄_a` (σ is a holomorphic frame).
    pub fn nabla_zbar(&self, a: usize) -> LinearOperator {
        self.dzbar[a].clone()
    }

    /// `Σ_{ab} G^{ab} ∇_a ∇_b` for a holomorphic bi-vector.
    pub fn laplacian(&self, g: &DMatrix<Complex64>) -> LinearOperator {
        let m = 2 * self.rank;
        let nab: Vec<_> = (0..m).map(|a| self.nabla_z(a)).collect();
        let mut acc = self.zeros();
        for a in 0..m {
            for b in 0..m {
                if g[(a, b)].norm() > 0.0 {
                    acc = acc.add(&nab[a].compose(&nab[b]).scale(g[(a, b)]));
                }
            }
        }
        acc
    }

    /// Index in the extended basis of the Fock monomial `z^α`.
    pub fn fock_position(&self, alpha: &[u32]) -> Option<usize> {
        let mut e = alpha.to_vec();
        e.extend(std::iter::repeat_n(0, 2 * self.rank));
        self.basis.position(&e)
    }

    /// Block `(β = 0 rows) × (β = 0 columns)` as a Fock operator, together with
    /// the largest modulus among `β ≠ 0` rows in the Fock columns of degree ≤ `max_in`.
    pub fn holomorphic_block(&self, op: &LinearOperator, fock: &FockOps, max_in: usize) -> (LinearOperator, f64) {
        let m = 2 * self.rank;
        let mut map = vec![None; self.dim()];
        for (i, n) in self.basis.indices().iter().enumerate() {
            if n[m..].iter().all(|&b| b == 0) {
                map[i] = fock.basis.position(&n[..m]);
            }
        }
        let mut trip = Vec::new();
        let mut resid: f64 = 0.0;
        for (row, vec) in op.matrix.outer_iterator().enumerate() {
            for (col, &v) in vec.iter() {
                let Some(fc) = map[col] else { continue };
                match map[row] {
                    Some(fr) => trip.push((fr, fc, v)),
                    None => {
                        if fock.basis.total_degree(fc) <= max_in {
                            resid = resid.max(v.norm());
                        }
                    }
                }
            }
        }
        (LinearOperator::from_triplets(fock.desc, fock.dim(), &trip, op.degree_shift), resid)
    }

    /// Orthogonal projection onto holomorphic polynomials for the Gaussian measure:
    /// `z^α z̄^β ↦ [α ≥ β] (2ħ)^{|β|} α!/(α−β)! z^{α−β}`. Returns a dense
    /// `fock.dim() × self.dim()` matrix.
    pub fn projection_to_fock(&self, fock: &FockOps) -> DMatrix<Complex64> {
        let m = 2 * self.rank;
        let mut p = DMatrix::zeros(fock.dim(), self.dim());
        for (i, n) in self.basis.indices().iter().enumerate() {
            let (alpha, beta) = n.split_at(m);
            if alpha.iter().zip(beta).any(|(a, b)| a < b) {
                continue;
            }
            let diff: Vec<u32> = alpha.iter().zip(beta).map(|(a, b)| a - b).collect();
            let mut coef = 1.0;
            for a in 0..m {
                coef *= (2.0 * self.hbar).powi(beta[a] as i32) * factorial(alpha[a]) / factorial(diff[a]);
            }
            if let Some(j) = fock.basis.position(&diff) {
                p[(j, i)] = c(coef);
            }
        }
        p
    }

    /// Dense embedding of Fock coefficients as the β = 0 slice.
    pub fn embedding_from_fock(&self, fock: &FockOps) -> DMatrix<Complex64> {
        let mut e = DMatrix::zeros(self.dim(), fock.dim());
        for (j, n) in fock.basis.indices().iter().enumerate() {
            if let Some(i) = self.fock_position(n) {
                e[(i, j)] = ONE;
            }
        }
        e
    }
}

// ---------------------------------------------------------------------------
// Geometry of 𝒜₀ in (p, q)-coordinates

/// Linear data of 𝒜₀ ⊂ 𝒜₀^ℂ needed by the Hermite-side assemblies.
#[derive(Debug, Clone)]
pub struct A0Geometry {
    pub rank: usize,
    pub tau: TeichmullerPoint,
    pub level: Level,
    /// `q = q_of_u · u` on 𝒜₀.
    pub q_of_u: DMatrix<f64>,
    /// `u = l · q` on 𝒜₀.
    pub l: DMatrix<f64>,
    /// `p = s · q` on 𝒜₀.
    pub s: DMatrix<f64>,
    /// `∂(p,q)/∂τ` and `∂(p,q)/∂τ̄` from the frame derivative.
    pub variation: [DMatrix<Complex64>; 2],
}

impl A0Geometry {
    pub fn new(tau: &TeichmullerPoint, level: &Level, rank: usize) -> Result<Self> {
        let fr = build_frames(tau, level, rank)?;
        let m = 2 * rank;
        let p_of_u = fr.inverse.view((0, 0), (m, m)).into_owned();
        let q_of_u = fr.inverse.view((m, 0), (m, m)).into_owned();
        let l = q_of_u.clone().try_inverse().ok_or(Error::SingularFrame(f64::INFINITY))?;
        let s = &p_of_u * &l;
        let variation = [
            frames::coordinate_variation_from_frames(tau, level, rank, Direction::DTau)?,
            frames::coordinate_variation_from_frames(tau, level, rank, Direction::DTauBar)?,
        ];
        Ok(A0Geometry { rank, tau: *tau, level: *level, q_of_u, l, s, variation })
    }

    fn var(&self, dir: Direction) -> &DMatrix<Complex64> {
        match dir {
            Direction::DTau => &self.variation[0],
            Direction::DTauBar => &self.variation[1],
        }
    }

    /// `∂q/∂V = N q` on 𝒜₀ at fixed u.
    pub fn q_variation(&self, dir: Direction) -> DMatrix<Complex64> {
        let m = 2 * self.rank;
        let v = self.var(dir);
        let mqp = v.view((m, 0), (m, m)).into_owned();
        let mqq = v.view((m, m), (m, m)).into_owned();
        mqp * to_complex(&self.s) + mqq
    }

    /// `∂p/∂V = N_p q` on 𝒜₀ at fixed u.
    pub fn p_variation(&self, dir: Direction) -> DMatrix<Complex64> {
        let m = 2 * self.rank;
        let v = self.var(dir);
        let mpp = v.view((0, 0), (m, m)).into_owned();
        let mpq = v.view((0, m), (m, m)).into_owned();
        mpp * to_complex(&self.s) + mpq
    }

    /// Quadratic form `Z` with `log ρ = qᵀ Z q` on 𝒜₀ (symmetrised).
    pub fn log_rho_form(&self) -> DMatrix<Complex64> {
        let sym = (&self.s + self.s.transpose()) * 0.5;
        to_complex(&sym) * Complex64::new(0.0, -self.level.abs_t() / 2.0)
    }

    /// Quadratic form of `∂ log ρ / ∂V` on 𝒜₀ at fixed u.
    pub fn dlog_rho_form(&self, dir: Direction) -> DMatrix<Complex64> {
        // log ρ = −(i|t|/2) p·q with p = N_p-varying, q = N-varying
        let np = self.p_variation(dir);
        let nq = self.q_variation(dir);
        let sc = to_complex(&self.s);
        let z = np.transpose() + sc.transpose() * nq;
        let z = (&z + z.transpose()) * c(0.5);
        z * Complex64::new(0.0, -self.level.abs_t() / 2.0)
    }
}

/// `∇_X` on `ψ(q) ρ_τ` restricted to 𝒜₀, divided by ρ_τ, for a constant complex
/// vector X in u-coordinates. The connection is `d − (i/2) k ω₀(x, ·)`.
pub fn hermite_prequantum_derivative(ops: &HermiteOps, geo: &A0Geometry, x: &DVector<Complex64>) -> LinearOperator {
    let r = geo.rank;
    let qc = to_complex(&geo.q_of_u);
    let cvec = &qc * x;
    // X[log ρ] = 2 (Z q)·(Q_u X) for the symmetric Z
    let z = geo.log_rho_form();
    let d_rho = (&z * &cvec) * c(2.0);
    let omega = to_complex(&frames::symplectic_a0(r));
    let k = geo.level.k as f64;
    let d_om = to_complex(&geo.l).transpose() * (&omega * x) * Complex64::new(0.0, -0.5 * k);
    let dvec = d_rho + d_om;
    ops.first_order(cvec.as_slice(), dvec.as_slice())
}

/// `∇_{∂z_a}`/`∇_{∂z̄_a}` curvature values from `F = −i ω_t` and the frame.
pub fn curvature_components(tau: &TeichmullerPoint, level: &Level, rank: usize) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let fr = build_frames(tau, level, rank)?;
    let st = frames::build_structures(tau, level, rank);
    let m = 2 * rank;
    let om = to_complex(&st.omega_t);
    // ∂/∂z_a = (X_a − i Y_a)/2, ∂/∂z̄_a = (X_a + i Y_a)/2
    let dz = |a: usize, sgn: f64| -> DVector<Complex64> {
        (frames::to_complex_vec(&fr.x[a]) + frames::to_complex_vec(&fr.y[a]) * Complex64::new(0.0, sgn)) * c(0.5)
    };
    let f11 = DMatrix::from_fn(m, m, |a, b| -I * frames::bilinear(&om, &dz(a, -1.0), &dz(b, 1.0)));
    let f20 = DMatrix::from_fn(m, m, |a, b| -I * frames::bilinear(&om, &dz(a, -1.0), &dz(b, -1.0)));
    Ok((f11, f20))
}

// ---------------------------------------------------------------------------
// Connection potentials

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionKind {
    /// Hitchin–Witten, on Hermite coefficients.
    HitchinWitten,
    /// Complexified Hitchin, on Fock coefficients.
    ComplexHitchin,
    /// L² (projected) connection, on Fock coefficients.
    L2,
    DualHitchinWitten,
    DualComplexHitchin,
}

#[derive(Debug, Clone)]
pub struct ConnectionPotential {
    pub kind: ConnectionKind,
    pub direction: Direction,
    pub tau: TeichmullerPoint,
    pub level: Level,
    pub op: LinearOperator,
}

fn dir_params(tau: &TeichmullerPoint, level: &Level, dir: Direction) -> (f64, Complex64) {
    let t = match dir {
        Direction::DTau => level.t(),
        Direction::DTauBar => level.t().conj(),
    };
    (tau.tau2, t)
}

/// Hitchin–Witten potential on Hermite coefficients:
/// `W_τ = −rot/(4τ₂) + (it/8τ₂) Σ(D_j² + M_j²)`, and the τ̄ version with t̄ and barred operators.
pub fn hw_potential(ops: &HermiteOps, tau: &TeichmullerPoint, level: &Level, dir: Direction) -> LinearOperator {
    let (t2, t) = dir_params(tau, level, dir);
    let (mk, dk) = match dir {
        Direction::DTau => (MdKind::M, MdKind::D),
        Direction::DTauBar => (MdKind::Mbar, MdKind::Dbar),
    };
    let mut quad = ops.zeros();
    for j in 0..ops.rank {
        let m = ops.md(j, mk);
        let d = ops.md(j, dk);
        quad = quad.add(&d.compose(&d)).add(&m.compose(&m));
    }
    ops.rotation().scale_re(-1.0 / (4.0 * t2)).add(&quad.scale(I * t / (8.0 * t2)))
}

/// Form on polarised sections (before passing to polarised extensions):
/// `(it/(8 t̄ τ₂)) Σ(t̄ D² − 2|t| M D + t̄ M²)`; for τ̄,
/// `(it̄/(8 t τ₂)) Σ(t D̄² + 2|t| M̄ D̄ + t M̄²)` (note the sign of the middle term).
pub fn hw_explicit(ops: &HermiteOps, tau: &TeichmullerPoint, level: &Level, dir: Direction) -> LinearOperator {
    let (t2, t) = dir_params(tau, level, dir);
    let at = level.abs_t();
    let (mk, dk) = match dir {
        Direction::DTau => (MdKind::M, MdKind::D),
        Direction::DTauBar => (MdKind::Mbar, MdKind::Dbar),
    };
    let tb = t.conj();
    let mid = match dir {
        Direction::DTau => -2.0 * at,
        Direction::DTauBar => 2.0 * at,
    };
    let mut acc = ops.zeros();
    for j in 0..ops.rank {
        let m = ops.md(j, mk);
        let d = ops.md(j, dk);
        acc = acc
            .add(&d.compose(&d).scale(tb))
            .add(&m.compose(&d).scale(c(mid)))
            .add(&m.compose(&m).scale(tb));
    }
    acc.scale(I * t / (8.0 * tb * t2))
}

/// Closed form of `∂/∂τ|_u − δ/δτ` on polarised functions restricted to 𝒜₀:
/// `−(1/4τ₂) Σ(rot_j − (it²/|t|) M_j D_j)`; for τ̄, `−(1/4τ₂) Σ(rot_j + (it̄²/|t|) M̄_j D̄_j)`.
pub fn partial_minus_delta(ops: &HermiteOps, tau: &TeichmullerPoint, level: &Level, dir: Direction) -> LinearOperator {
    let (t2, t) = dir_params(tau, level, dir);
    let (mk, dk) = match dir {
        Direction::DTau => (MdKind::M, MdKind::D),
        Direction::DTauBar => (MdKind::Mbar, MdKind::Dbar),
    };
    let sign = match dir {
        Direction::DTau => -1.0,
        Direction::DTauBar => 1.0,
    };
    let mut md = ops.zeros();
    for j in 0..ops.rank {
        md = md.add(&ops.md(j, mk).compose(&ops.md(j, dk)));
    }
    ops.rotation()
        .add(&md.scale(I * t * t * sign / level.abs_t()))
        .scale_re(-1.0 / (4.0 * t2))
}

/// Generic chain term `Σ_a (∂q_a/∂V) ∂/∂q_a` on 𝒜₀ from the frame derivative.
pub fn chain_term(ops: &HermiteOps, geo: &A0Geometry, dir: Direction) -> LinearOperator {
    let n = geo.q_variation(dir);
    let m = 2 * geo.rank;
    let mut acc = ops.zeros();
    for a in 0..m {
        for b in 0..m {
            if n[(a, b)] != ZERO {
                acc = acc.add(&ops.q[b].compose(&ops.dq[a]).scale(n[(a, b)]));
            }
        }
    }
    acc
}

/// `−(i/(2tτ₂)) Σ ∇_{𝒳̄_j}∇_{𝒳̄_j} + ∂ log ρ/∂τ` assembled from frames (τ̄: 𝒳_j and t̄).
pub fn hw_explicit_generic(ops: &HermiteOps, geo: &A0Geometry, dir: Direction) -> LinearOperator {
    let (t2, t) = dir_params(&geo.tau, &geo.level, dir);
    let mut acc = ops.zeros();
    for j in 0..geo.rank {
        let x = frames::script_x_a0(&geo.tau, geo.rank, j);
        let x = match dir {
            Direction::DTau => x.map(|z| z.conj()),
            Direction::DTauBar => x,
        };
        let nab = hermite_prequantum_derivative(ops, geo, &x);
        acc = acc.add(&nab.compose(&nab));
    }
    let coef = -I / (2.0 * t * t2);
    acc.scale(coef).add(&ops.quadratic(&geo.dlog_rho_form(dir)))
}

/// Same quantity from `u^HW(V) = (1/t̄) Δ_{Ḡ(V)} − (1/t) Δ_{G(V)}` with G̃(V) taken from
/// the analytic derivative of the inverse metric and split by type.
pub fn hw_explicit_from_laplacians(ops: &HermiteOps, geo: &A0Geometry, dir: Direction) -> LinearOperator {
    let r = geo.rank;
    let m = 2 * r;
    let tau = &geo.tau;
    let g = frames::metric_a0(tau, r);
    let ginv = to_complex(&g.clone().try_inverse().expect("metric invertible"));
    let dg = metric_a0_derivative_analytic(tau, r, dir);
    let gt = &ginv * dg * &ginv; // G̃ = −∂g̃ = g̃ ∂g g̃
    // type projectors for I_τ on 𝒜₀ (I v = i v is type (1,0))
    let ic = to_complex(&i_a0(tau, r));
    let id = DMatrix::<Complex64>::identity(m, m);
    let p10 = (&id - &ic * I) * c(0.5);
    let p01 = (&id + &ic * I) * c(0.5);
    let g20 = &p10 * &gt * p10.transpose();
    let g02 = &p01 * &gt * p01.transpose();
    let nab: Vec<_> = (0..m)
        .map(|a| {
            let mut e = DVector::zeros(m);
            e[a] = ONE;
            hermite_prequantum_derivative(ops, geo, &e)
        })
        .collect();
    let lap = |gm: &DMatrix<Complex64>| {
        let mut acc = ops.zeros();
        for a in 0..m {
            for b in 0..m {
                if gm[(a, b)].norm() > 1e-300 {
                    acc = acc.add(&nab[a].compose(&nab[b]).scale(gm[(a, b)]));
                }
            }
        }
        acc
    };
    let t = geo.level.t();
    let u = lap(&g02).scale(ONE / t.conj()).sub(&lap(&g20).scale(ONE / t));
    u.scale_re(-0.5).add(&ops.quadratic(&geo.dlog_rho_form(dir)))
}

/// Complex structure I_τ on 𝒜₀ (Hodge star on each pair).
pub fn i_a0(tau: &TeichmullerPoint, rank: usize) -> DMatrix<f64> {
    let h = frames::hodge_matrix(tau);
    let mut out = DMatrix::zeros(2 * rank, 2 * rank);
    for j in 0..rank {
        for a in 0..2 {
            for b in 0..2 {
                out[(frames::u_idx(rank, j, a), frames::u_idx(rank, j, b))] = h[(a, b)];
            }
        }
    }
    out
}

/// `∂g_τ/∂V` on 𝒜₀ from the analytic derivative of the Hodge star.
pub fn metric_a0_derivative_analytic(tau: &TeichmullerPoint, rank: usize, dir: Direction) -> DMatrix<Complex64> {
    let lv = Level { k: 1, s: 0.0 };
    let di = frames::i_t_derivative(tau, &lv, rank, dir);
    let m = 2 * rank;
    let dh = di.view((0, 0), (m, m)).into_owned();
    to_complex(&frames::symplectic_a0(rank)) * dh
}

/// Generic Hitchin–Witten potential on Hermite coefficients.
pub fn hw_potential_generic(ops: &HermiteOps, geo: &A0Geometry, dir: Direction) -> LinearOperator {
    hw_explicit_generic(ops, geo, dir).add(&chain_term(ops, geo, dir))
}

/// Explicit Fock potential: `−(i/16τ₂) Σ(t δ_j² + t μ_j² − 4i (z_{j+r}∂_j − z_j∂_{j+r}))`,
/// τ̄: t̄ and barred μ/δ, same rotation term.
pub fn l2_potential(ops: &FockOps, tau: &TeichmullerPoint, level: &Level, dir: Direction) -> LinearOperator {
    let (t2, t) = dir_params(tau, level, dir);
    let (mk, dk) = match dir {
        Direction::DTau => (MuDeltaKind::Mu, MuDeltaKind::Delta),
        Direction::DTauBar => (MuDeltaKind::MuBar, MuDeltaKind::DeltaBar),
    };
    let mut quad = ops.zeros();
    for j in 0..ops.rank {
        let mu = ops.mudelta(j, mk);
        let de = ops.mudelta(j, dk);
        quad = quad.add(&de.compose(&de)).add(&mu.compose(&mu));
    }
    quad.scale(t)
        .sub(&ops.rotation().scale(c(4.0) * I))
        .scale(-I / (16.0 * t2))
}

/// Pieces of the complexified Hitchin connection on the extended basis.
#[derive(Debug, Clone)]
pub struct ExtendedPieces {
    /// `∂/∂V` at fixed x acting on `f(z, z̄)` plus `∂ log σ/∂V`.
    pub trivial: LinearOperator,
    /// `Δ_{G^ℂ(V)} / (4|t|)` from the generic G tensor.
    pub laplacian_generic: LinearOperator,
    /// Closed-form `−(i/(4τ₂t̄)) Σ(∇_{z_j} + i∇_{z_{j+r}})²` (τ̄: t and minus signs).
    pub laplacian_closed: LinearOperator,
}

pub fn extended_pieces(ext: &ExtendedOps, tau: &TeichmullerPoint, level: &Level, dir: Direction) -> Result<ExtendedPieces> {
    let r = ext.rank;
    let m = 2 * r;
    let var = frames::coordinate_variation_from_frames(tau, level, r, dir)?;
    // (p; q) = T (z; z̄)
    let mut tm = DMatrix::<Complex64>::zeros(2 * m, 2 * m);
    for a in 0..m {
        tm[(a, a)] = c(0.5);
        tm[(a, m + a)] = c(0.5);
        tm[(m + a, a)] = Complex64::new(0.0, -0.5);
        tm[(m + a, m + a)] = Complex64::new(0.0, 0.5);
    }
    let mp = var.view((0, 0), (m, 2 * m)).into_owned();
    let mq = var.view((m, 0), (m, 2 * m)).into_owned();
    let cz = (&mp + &mq * I) * &tm;
    let czb = (&mp - &mq * I) * &tm;
    let wvar = |b: usize| if b < m { &ext.z[b] } else { &ext.zbar[b - m] };
    let mut triv = ext.zeros();
    for a in 0..m {
        for b in 0..2 * m {
            if cz[(a, b)] != ZERO {
                triv = triv.add(&wvar(b).compose(&ext.dz[a]).scale(cz[(a, b)]));
            }
            if czb[(a, b)] != ZERO {
                triv = triv.add(&wvar(b).compose(&ext.dzbar[a]).scale(czb[(a, b)]));
            }
        }
    }
    // ∂ log σ = −(1/4ħ) Σ_a ((∂z_a) z̄_a + z_a (∂z̄_a))
    let s = -1.0 / (4.0 * ext.hbar);
    for a in 0..m {
        for b in 0..2 * m {
            if cz[(a, b)] != ZERO {
                triv = triv.add(&ext.zbar[a].compose(wvar(b)).scale(cz[(a, b)] * s));
            }
            if czb[(a, b)] != ZERO {
                triv = triv.add(&ext.z[a].compose(wvar(b)).scale(czb[(a, b)] * s));
            }
        }
    }
    let g = frames::g_tensor(tau, level, r, dir)?;
    let at = level.abs_t();
    let laplacian_generic = ext.laplacian(&g.holo).scale_re(1.0 / (4.0 * at));
    let (coef, e) = match dir {
        Direction::DTau => (-I / (4.0 * tau.tau2 * level.t().conj()), I),
        Direction::DTauBar => (-I / (4.0 * tau.tau2 * level.t()), -I),
    };
    let mut closed = ext.zeros();
    for j in 0..r {
        let n = ext.nabla_z(j).add(&ext.nabla_z(j + r).scale(e));
        closed = closed.add(&n.compose(&n));
    }
    Ok(ExtendedPieces { trivial: triv, laplacian_generic, laplacian_closed: closed.scale(coef) })
}

/// L² route: project `∂_V|_x (fσ)/σ` back to holomorphic polynomials.
pub fn l2_potential_by_projection(ext: &ExtendedOps, fock: &FockOps, pieces: &ExtendedPieces) -> DMatrix<Complex64> {
    let p = ext.projection_to_fock(fock);
    let e = ext.embedding_from_fock(fock);
    p * pieces.trivial.to_dense() * e
}

/// Connection potential of the requested kind on its natural basis.
pub fn connection_potential(
    kind: ConnectionKind,
    dir: Direction,
    tau: &TeichmullerPoint,
    level: &Level,
    rank: usize,
    degree: usize,
) -> Result<ConnectionPotential> {
    let op = match kind {
        ConnectionKind::HitchinWitten | ConnectionKind::DualHitchinWitten => {
            let ops = HermiteOps::new(rank, degree, level);
            hw_potential(&ops, tau, level, dir)
        }
        ConnectionKind::L2 => {
            let ops = FockOps::new(rank, degree, level);
            l2_potential(&ops, tau, level, dir)
        }
        ConnectionKind::ComplexHitchin | ConnectionKind::DualComplexHitchin => {
            let fock = FockOps::new(rank, degree, level);
            let ext = ExtendedOps::new(rank, degree, level);
            let pieces = extended_pieces(&ext, tau, level, dir)?;
            let full = pieces.trivial.add(&pieces.laplacian_generic);
            ext.holomorphic_block(&full, &fock, degree).0
        }
    };
    Ok(ConnectionPotential { kind, direction: dir, tau: *tau, level: *level, op })
}

/// Concurrent cache of assembled potentials, keyed by `(kind, direction, τ, t, N)`.
#[derive(Debug, Default, Clone)]
pub struct PotentialCache {
    inner: Arc<RwLock<HashMap<CacheKey, Arc<ConnectionPotential>>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct CacheKey {
    kind: ConnectionKind,
    dir: Direction,
    tau: (u64, u64),
    level: (i64, u64),
    rank: usize,
    degree: usize,
}

impl PotentialCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(
        &self,
        kind: ConnectionKind,
        dir: Direction,
        tau: &TeichmullerPoint,
        level: &Level,
        rank: usize,
        degree: usize,
    ) -> Result<Arc<ConnectionPotential>> {
        let key = CacheKey {
            kind,
            dir,
            tau: (tau.tau1.to_bits(), tau.tau2.to_bits()),
            level: (level.k, level.s.to_bits()),
            rank,
            degree,
        };
        if let Some(p) = self.inner.read().expect("cache lock").get(&key) {
            return Ok(p.clone());
        }
        let p = Arc::new(connection_potential(kind, dir, tau, level, rank, degree)?);
        self.inner.write().expect("cache lock").entry(key).or_insert_with(|| p.clone());
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (TeichmullerPoint, Level) {
        (TeichmullerPoint::new(0.4, 1.3).unwrap(), Level::new(2, 0.7).unwrap())
    }

    #[test]
    fn hw_closed_vs_generic() {
        let (tau, lev) = setup();
        let ops = HermiteOps::new(1, 8, &lev);
        let geo = A0Geometry::new(&tau, &lev, 1).unwrap();
        for dir in Direction::both() {
            let a = hw_potential(&ops, &tau, &lev, dir);
            let b = hw_potential_generic(&ops, &geo, dir);
            let d = a.distance_on(&b, &ops.basis, 6);
            assert!(d < 1e-11, "{dir:?} {d}");
            let e = hw_explicit(&ops, &tau, &lev, dir);
            let f = hw_explicit_generic(&ops, &geo, dir);
            assert!(e.distance_on(&f, &ops.basis, 6) < 1e-11);
            let g = hw_explicit_from_laplacians(&ops, &geo, dir);
            assert!(e.distance_on(&g, &ops.basis, 6) < 1e-11);
            let pm = partial_minus_delta(&ops, &tau, &lev, dir);
            assert!(pm.distance_on(&chain_term(&ops, &geo, dir), &ops.basis, 6) < 1e-11);
            assert!(a.distance_on(&e.add(&pm), &ops.basis, 6) < 1e-11);
        }
    }

    #[test]
    fn ch_matches_l2_and_is_holomorphic() {
        let (tau, lev) = setup();
        let n = 6;
        let fock = FockOps::new(1, n, &lev);
        let ext = ExtendedOps::new(1, n, &lev);
        for dir in Direction::both() {
            let p = extended_pieces(&ext, &tau, &lev, dir).unwrap();
            let full = p.trivial.add(&p.laplacian_generic);
            let (block, resid) = ext.holomorphic_block(&full, &fock, n - 2);
            assert!(resid < 1e-12, "{resid}");
            let l2 = l2_potential(&fock, &tau, &lev, dir);
            assert!(block.distance_on(&l2, &fock.basis, n - 2) < 1e-11);
            assert!(p.laplacian_generic.distance_on(&p.laplacian_closed, &ext.basis, n - 2) < 1e-11);
            let proj = l2_potential_by_projection(&ext, &fock, &p);
            let dl2 = l2.to_dense();
            let k = fock.basis.count_up_to(n - 2);
            let diff = (proj.columns(0, k) - dl2.columns(0, k)).norm();
            assert!(diff < 1e-11, "{diff}");
        }
    }
}
