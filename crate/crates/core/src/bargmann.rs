//! Bargmann transform between Hermite-coefficient sections on 𝒜₀ and Fock
//! polynomials on 𝒜₀^ℂ.
//!
//! Kernel: `(πħ)^{−m/4} exp(−(1/4ħ)(4i q·z + 2|q|² − z·z))` with the bilinear dot.
//! With this normalisation `B(h₀) = 1` and B is unitary from `L²(dq)` to the
//! Gaussian-weighted Fock space of `sections`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::equivariant::{EquivariantSection, TensorRule};
use crate::error::{Error, Result};
use crate::frames::{self, Level, TeichmullerPoint};
use crate::linop::{BasisKind, LinearOperator};
use crate::quad::{composite_legendre, gauss_hermite};
use crate::quantops::{A0Geometry, FockOps, LadderKind};
use crate::sections::{descriptor, fock_norm2, hermite_basis, FockSection, PositionSection, SectionHeader};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BargmannKernelParams {
    pub tau: TeichmullerPoint,
    pub level: Level,
    pub m: usize,
    pub hbar: f64,
    pub normalisation: f64,
}

impl BargmannKernelParams {
    pub fn new(tau: &TeichmullerPoint, level: &Level, rank: usize) -> Self {
        let m = 2 * rank;
        let hbar = level.hbar();
        BargmannKernelParams {
            tau: *tau,
            level: *level,
            m,
            hbar,
            normalisation: (std::f64::consts::PI * hbar).powf(-(m as f64) / 4.0),
        }
    }

    /// Kernel `K(q, z)`, holomorphic in z.
    pub fn kernel(&self, q: &[f64], z: &[Complex64]) -> Complex64 {
        let mut e = ZERO;
        for (qa, za) in q.iter().zip(z) {
            e += 4.0 * I * qa * za + 2.0 * qa * qa - za * za;
        }
        self.normalisation * (-e / (4.0 * self.hbar)).exp()
    }
}

/// Matrix of B from Hermite coefficients to Fock coefficients (same multi-index set),
/// built from `B(h₀) = 1` and `B(q_j ψ) = (i/2)(a_j − a*_j) B(ψ)`.
pub fn bargmann_operator(rank: usize, degree: usize, level: &Level) -> LinearOperator {
    let fock = FockOps::new(rank, degree, level);
    let hb = hermite_basis(rank, degree);
    let hbar = level.hbar();
    let s = (hbar / 2.0).sqrt();
    let n = hb.len();
    let mq: Vec<LinearOperator> = (0..2 * rank)
        .map(|j| fock.ladder(j, LadderKind::Annihilate).sub(&fock.ladder(j, LadderKind::Create)).scale(I * 0.5))
        .collect();
    let mut images: Vec<Option<Vec<Complex64>>> = vec![None; n];
    let mut one = vec![ZERO; n];
    one[0] = Complex64::new(1.0, 0.0);
    images[0] = Some(one);
    // graded order: every index of degree d+1 has a predecessor of degree d
    for i in 1..n {
        let idx = hb.index(i);
        let j = idx.iter().position(|&v| v > 0).expect("non-zero index");
        let prev = hb.shifted(i, j, false).expect("predecessor inside truncation");
        let nj = idx[j] as f64 - 1.0;
        // q_j h_prev = s(√(nj+1) h_i + √nj h_{prev−e_j})
        let mut v = mq[j].apply(images[prev].as_ref().expect("built in order"));
        if nj > 0.0 {
            let pp = hb.shifted(prev, j, false).expect("second predecessor");
            let lower = images[pp].as_ref().expect("built in order");
            for (a, b) in v.iter_mut().zip(lower) {
                *a -= b * (s * nj.sqrt());
            }
        }
        let scale = 1.0 / (s * (nj + 1.0).sqrt());
        images[i] = Some(v.into_iter().map(|c| c * scale).collect());
    }
    let mut trip = Vec::new();
    for (col, img) in images.into_iter().enumerate() {
        for (row, v) in img.expect("all built").into_iter().enumerate() {
            if v.norm() > 1e-300 {
                trip.push((row, col, v));
            }
        }
    }
    LinearOperator::from_triplets(descriptor(BasisKind::Fock, rank, degree), n, &trip, 0)
}

/// Closed form on a section.
pub fn bargmann_closed_form(psi: &PositionSection) -> FockSection {
    let h = &psi.header;
    let b = bargmann_operator(h.rank, h.degree, &h.level);
    FockSection { header: *h, coeffs: b.apply(&psi.coeffs) }
}

/// Inverse on the truncated span, `B⁻¹ f = Σ_n ⟨f, B h_n⟩ h_n`.
pub fn inverse_bargmann(f: &FockSection) -> PositionSection {
    let h = &f.header;
    let b = bargmann_operator(h.rank, h.degree, &h.level).to_dense();
    let fb = f.basis();
    let n = fb.len();
    let coeffs = (0..n)
        .map(|col| {
            (0..n)
                .map(|row| f.coeffs[row] * b[(row, col)].conj() * fock_norm2(fb.index(row), h.hbar()))
                .sum()
        })
        .collect();
    PositionSection { header: *h, coeffs }
}

/// Tensor Gauss–Hermite evaluation of the integral transform of `psi` at z.
pub fn bargmann_quadrature<F>(psi: F, params: &BargmannKernelParams, z: &[Complex64], nodes: usize) -> Complex64
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let (x, w) = gauss_hermite(nodes);
    let m = params.m;
    let sh = params.hbar.sqrt();
    let total = nodes.pow(m as u32);
    let parts: Vec<Complex64> = (0..total)
        .into_par_iter()
        .with_min_len(1024)
        .map(|idx| {
            let mut rem = idx;
            let mut q = [0.0; 8];
            let mut wt = 1.0;
            let mut x2 = 0.0;
            for qa in q.iter_mut().take(m) {
                let xi = x[rem % nodes];
                wt *= w[rem % nodes];
                rem /= nodes;
                *qa = sh * xi;
                x2 += xi * xi;
            }
            psi(&q[..m]) * params.kernel(&q[..m], z) * (wt * x2.exp())
        })
        .collect();
    parts.into_iter().sum::<Complex64>() * sh.powi(m as i32)
}

/// Quadrature with node doubling; fails if the doubled rule moves the value by more than `tol`.
pub fn bargmann_quadrature_checked<F>(
    psi: F,
    params: &BargmannKernelParams,
    z: &[Complex64],
    nodes: usize,
    tol: f64,
) -> Result<Complex64>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let a = bargmann_quadrature(&psi, params, z, nodes);
    let b = bargmann_quadrature(&psi, params, z, 2 * nodes);
    if (a - b).norm() > tol {
        return Err(Error::QuadratureDiverged((a - b).norm()));
    }
    Ok(b)
}

/// The equivariant input as a function of q: `ψ(q) = Ψ(L q) / ρ_τ(q)` on 𝒜₀.
pub struct EquivariantInput<'a> {
    pub section: &'a EquivariantSection,
    pub geo: A0Geometry,
    log_rho: DMatrix<Complex64>,
}

impl<'a> EquivariantInput<'a> {
    pub fn new(section: &'a EquivariantSection, tau: &TeichmullerPoint, level: &Level) -> Result<Self> {
        if level.k != section.k {
            return Err(Error::InvalidLevel(level.k));
        }
        let geo = A0Geometry::new(tau, level, section.rank)?;
        let log_rho = geo.log_rho_form();
        Ok(EquivariantInput { section, geo, log_rho })
    }

    pub fn value(&self, q: &[f64]) -> Complex64 {
        let m = q.len();
        let mut u = [0.0; 8];
        for (a, ua) in u.iter_mut().enumerate().take(m) {
            *ua = (0..m).map(|b| self.geo.l[(a, b)] * q[b]).sum();
        }
        let mut lr = ZERO;
        for a in 0..m {
            for b in 0..m {
                lr += self.log_rho[(a, b)] * q[a] * q[b];
            }
        }
        self.section.value(&u[..m]) * (-lr).exp()
    }
}

/// Result of the lattice-summed transform at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivariantValue {
    /// Holomorphic part `f(z)`.
    pub holomorphic: Complex64,
    /// Section value `f(z) e^{−|z|²/4ħ}` as in the lattice-summed kernel.
    pub section: Complex64,
    /// Half-width of the final q-box.
    pub half_width: f64,
    pub change_on_doubling: f64,
}

fn box_transform(input: &EquivariantInput, params: &BargmannKernelParams, z: &[Complex64], half: f64, panel: f64) -> Complex64 {
    let panels = ((2.0 * half) / panel).ceil().max(1.0) as usize;
    let rule = TensorRule::new(params.m, half, panels, 10);
    rule.integrate(|q| input.value(q) * params.kernel(q, z))
}

/// Evaluates the lattice-summed transform by quadrature on `[−L, L]^m`, doubling L
/// until the value moves by less than `tol`.
pub fn bargmann_equivariant(
    input: &EquivariantInput,
    params: &BargmannKernelParams,
    z: &[Complex64],
    tol: f64,
) -> Result<EquivariantValue> {
    let shift = z.iter().map(|w| w.im.abs()).fold(0.0, f64::max);
    let mut half = shift + (2.0 * 18.0 * params.hbar).sqrt();
    let panel = 0.75 * params.hbar.sqrt();
    let mut prev = box_transform(input, params, z, half, panel);
    for _ in 0..4 {
        half *= 2.0;
        let next = box_transform(input, params, z, half, panel);
        let change = (next - prev).norm();
        if change < tol {
            let r2: f64 = z.iter().map(|w| w.norm_sqr()).sum();
            return Ok(EquivariantValue {
                holomorphic: next,
                section: next * (-r2 / (4.0 * params.hbar)).exp(),
                half_width: half,
                change_on_doubling: change,
            });
        }
        prev = next;
    }
    Err(Error::TailTooLarge { estimate: f64::NAN, tolerance: tol })
}

/// Section value `S(x) = f(z(x)) e^{−|z|²/4ħ}` at a point x ∈ 𝒜₀^ℂ (global coordinates).
pub fn equivariant_section_at(
    input: &EquivariantInput,
    params: &BargmannKernelParams,
    point: &[f64],
    tol: f64,
) -> Result<EquivariantValue> {
    let fr = frames::build_frames(&params.tau, &params.level, params.m / 2)?;
    let (p, q) = fr.coords_pq(&nalgebra::DVector::from_column_slice(point))?;
    let z: Vec<Complex64> = p.iter().zip(q.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect();
    bargmann_equivariant(input, params, &z, tol)
}

/// Taylor coefficients `f_α`, `α₁, α₂ < n/2`, of the holomorphic transform for r = 1,
/// from a 2-d FFT on the torus `|z₁| = |z₂| = radius`.
pub fn taylor_coefficients_r1(
    input: &EquivariantInput,
    params: &BargmannKernelParams,
    radius: f64,
    n: usize,
    half: f64,
) -> Result<DMatrix<Complex64>> {
    if params.m != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: params.m });
    }
    let panel = 0.75 * params.hbar.sqrt();
    let panels = ((2.0 * half) / panel).ceil() as usize;
    let (x, w) = composite_legendre(half, panels, 10);
    let nq = x.len();
    // ψ(q₁, q₂) w₁ w₂
    let psi = DMatrix::from_fn(nq, nq, |i, j| input.value(&[x[i], x[j]]) * (w[i] * w[j]));
    let zs: Vec<Complex64> = (0..n)
        .map(|a| Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * a as f64 / n as f64))
        .collect();
    let h = params.hbar;
    let k1 = DMatrix::from_fn(n, nq, |a, i| {
        let (q, z) = (x[i], zs[a]);
        (-(4.0 * I * q * z + 2.0 * q * q - z * z) / (4.0 * h)).exp()
    });
    let vals = &k1 * psi * k1.transpose() * Complex64::new(params.normalisation, 0.0);
    // 2-d forward DFT
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut grid = vals;
    for i in 0..n {
        let mut row: Vec<Complex64> = (0..n).map(|j| grid[(i, j)]).collect();
        fft.process(&mut row);
        for j in 0..n {
            grid[(i, j)] = row[j];
        }
    }
    for j in 0..n {
        let mut col: Vec<Complex64> = (0..n).map(|i| grid[(i, j)]).collect();
        fft.process(&mut col);
        for i in 0..n {
            grid[(i, j)] = col[i];
        }
    }
    let half_n = n / 2;
    Ok(DMatrix::from_fn(half_n, half_n, |a, b| {
        grid[(a, b)] / ((n * n) as f64 * radius.powi((a + b) as i32))
    }))
}

/// Fock pairing `(f | g)` of an entire function given by Taylor coefficients (r = 1)
/// with a truncated Fock section.
pub fn fock_pairing_with_taylor(taylor: &DMatrix<Complex64>, g: &FockSection) -> Result<Complex64> {
    if g.header.rank != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: g.header.rank });
    }
    let gb = g.basis();
    let mut acc = ZERO;
    for (i, n) in gb.indices().iter().enumerate() {
        let (a, b) = (n[0] as usize, n[1] as usize);
        if a >= taylor.nrows() || b >= taylor.ncols() {
            return Err(Error::DegreeOverflow { degree: a.max(b), allowed: taylor.nrows() - 1 });
        }
        acc += taylor[(a, b)] * g.coeffs[i].conj() * fock_norm2(n, g.header.hbar());
    }
    Ok(acc)
}

/// Elements of the dual spaces used for the transpose transform.
/// Pairings `(T | ψ)` are linear in T and antilinear in ψ.
pub enum DualElement<'a> {
    /// L² element on the position side.
    Regular(PositionSection),
    /// Bounded equivariant section on the position side (as a function of q).
    Equivariant(&'a EquivariantInput<'a>),
    /// `q ↦ conj K(q, z₀)`, the coherent state at z₀.
    Coherent { params: BargmannKernelParams, z0: Vec<Complex64> },
    PointPosition(Vec<f64>),
    /// Fock-side L² element.
    RegularFock(FockSection),
    /// `B(ψ₁)` for a bounded equivariant ψ₁, on the Fock side.
    BargmannOfEquivariant { input: &'a EquivariantInput<'a>, params: BargmannKernelParams },
    PointFock(Vec<Complex64>),
    Combo(Vec<(Complex64, DualElement<'a>)>),
}

/// Numerical settings for pairings that need quadrature.
#[derive(Debug, Clone, Copy)]
pub struct PairingSettings {
    pub half_width: f64,
    pub hermite_nodes: usize,
    pub fft_points: usize,
    pub fft_radius: f64,
}

impl Default for PairingSettings {
    fn default() -> Self {
        PairingSettings { half_width: 9.0, hermite_nodes: 64, fft_points: 64, fft_radius: 1.0 }
    }
}

impl DualElement<'_> {
    pub fn is_fock_side(&self) -> bool {
        match self {
            DualElement::RegularFock(_) | DualElement::BargmannOfEquivariant { .. } | DualElement::PointFock(_) => true,
            DualElement::Combo(v) => v.first().is_some_and(|(_, e)| e.is_fock_side()),
            _ => false,
        }
    }

    /// Pairing with a position-side test section.
    pub fn pair_position(&self, psi: &PositionSection, set: &PairingSettings) -> Result<Complex64> {
        match self {
            DualElement::Regular(t) => t.inner(psi),
            DualElement::Equivariant(input) => {
                let hbar = psi.header.hbar();
                let panels = ((2.0 * set.half_width) / (0.75 * hbar.sqrt())).ceil() as usize;
                let rule = TensorRule::new(psi.header.m(), set.half_width, panels, 10);
                let basis = psi.basis();
                Ok(rule.integrate(|q| input.value(q) * psi.evaluate_with(&basis, q).conj()))
            }
            DualElement::Coherent { params, z0 } => {
                let v = bargmann_quadrature(|q| psi.evaluate(q).unwrap_or_default(), params, z0, set.hermite_nodes);
                Ok(v.conj())
            }
            DualElement::PointPosition(q) => Ok(psi.evaluate(q)?.conj()),
            DualElement::Combo(v) => {
                let mut acc = ZERO;
                for (c, e) in v {
                    acc += c * e.pair_position(psi, set)?;
                }
                Ok(acc)
            }
            _ => Err(Error::BasisMismatch),
        }
    }

    /// Pairing with a Fock-side test section.
    pub fn pair_fock(&self, f: &FockSection, set: &PairingSettings) -> Result<Complex64> {
        match self {
            DualElement::RegularFock(g) => g.inner(f),
            DualElement::BargmannOfEquivariant { input, params } => {
                let taylor = taylor_coefficients_r1(input, params, set.fft_radius, set.fft_points, set.half_width)?;
                fock_pairing_with_taylor(&taylor, f)
            }
            DualElement::PointFock(z) => Ok(f.evaluate(z)?.conj()),
            DualElement::Combo(v) => {
                let mut acc = ZERO;
                for (c, e) in v {
                    acc += c * e.pair_fock(f, set)?;
                }
                Ok(acc)
            }
            _ => Err(Error::BasisMismatch),
        }
    }
}

/// Transpose transform of a Fock-side element, returned in its regular position-side form.
/// `(ᵗB T | ψ) = (T | B ψ)` is what the tests check.
pub fn transpose_bargmann<'a>(t: DualElement<'a>, params: &BargmannKernelParams) -> Result<DualElement<'a>> {
    match t {
        DualElement::RegularFock(f) => Ok(DualElement::Regular(inverse_bargmann(&f))),
        DualElement::BargmannOfEquivariant { input, .. } => Ok(DualElement::Equivariant(input)),
        DualElement::PointFock(z0) => Ok(DualElement::Coherent { params: *params, z0 }),
        DualElement::Combo(v) => Ok(DualElement::Combo(
            v.into_iter().map(|(c, e)| transpose_bargmann(e, params).map(|e| (c, e))).collect::<Result<_>>()?,
        )),
        _ => Err(Error::PairingDiverged("transpose is defined on Fock-side elements".into())),
    }
}

/// CSV lines `z1re,z1im,…,value_re,value_im`.
pub fn values_csv(rows: &[(Vec<Complex64>, Complex64)]) -> String {
    let mut out = String::new();
    if let Some((z, _)) = rows.first() {
        let mut head: Vec<String> = Vec::new();
        for a in 0..z.len() {
            head.push(format!("z{}re", a + 1));
            head.push(format!("z{}im", a + 1));
        }
        head.push("value_re".into());
        head.push("value_im".into());
        out.push_str(&head.join(","));
        out.push('\n');
    }
    for (z, v) in rows {
        let mut cells: Vec<String> = Vec::new();
        for w in z {
            cells.push(format!("{}", w.re));
            cells.push(format!("{}", w.im));
        }
        cells.push(format!("{}", v.re));
        cells.push(format!("{}", v.im));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Header helper for tests and the CLI.
pub fn header(tau: &TeichmullerPoint, level: &Level, rank: usize, degree: usize) -> SectionHeader {
    SectionHeader { tau: *tau, level: *level, rank, degree }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sections::fock_basis;

    #[test]
    fn ground_state_maps_to_one() {
        let lev = Level::new(2, 0.5).unwrap();
        let h = header(&TeichmullerPoint::i(), &lev, 1, 6);
        let f = bargmann_closed_form(&PositionSection::ground(h));
        assert!((f.coeffs[0] - 1.0).norm() < 1e-15);
        assert!(f.coeffs[1..].iter().all(|c| c.norm() < 1e-15));
    }

    #[test]
    fn recursion_matches_product_formula() {
        let lev = Level::new(3, -0.4).unwrap();
        let b = bargmann_operator(1, 7, &lev).to_dense();
        let fb = fock_basis(1, 7);
        let h2 = 2.0 * lev.hbar();
        for (i, n) in fb.indices().iter().enumerate() {
            let mut c = Complex64::new(1.0, 0.0);
            for &k in n {
                c *= (-I).powu(k) / (h2.powi(k as i32) * crate::basis::factorial(k)).sqrt();
            }
            for row in 0..fb.len() {
                let want = if row == i { c } else { ZERO };
                assert!((b[(row, i)] - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn quadrature_agrees_on_ground_state() {
        let lev = Level::new(1, 0.3).unwrap();
        let p = BargmannKernelParams::new(&TeichmullerPoint::i(), &lev, 1);
        let h = header(&TeichmullerPoint::i(), &lev, 1, 4);
        let g = PositionSection::ground(h);
        let z = [Complex64::new(0.3, -0.2), Complex64::new(-0.5, 0.1)];
        let v = bargmann_quadrature(|q| g.evaluate(q).unwrap(), &p, &z, 48);
        assert!((v - 1.0).norm() < 1e-10, "{v}");
    }
}
