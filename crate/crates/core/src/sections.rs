//! Truncated coefficient representations of sections.
//!
//! * Hermite: `ψ(q) = Σ c_n h_n(q)`, normalised Hermite functions for ħ = 1/|t|,
//!   times the real-polarised frame ρ_τ.
//! * Fock: `f(z) = Σ c_α z^α`, times the Kähler frame σ_τ.
//! * Extended: `Σ c_{αβ} z^α z̄^β`, times σ_τ (used to see non-holomorphic output).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{multi_factorial, MultiIndexBasis};
use crate::error::{Error, Result};
use crate::frames::{Level, TeichmullerPoint};
use crate::linop::{BasisDescriptor, BasisKind};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Common header of every section representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionHeader {
    pub tau: TeichmullerPoint,
    pub level: Level,
    pub rank: usize,
    pub degree: usize,
}

impl SectionHeader {
    pub fn hbar(&self) -> f64 {
        self.level.hbar()
    }
    /// Number of real (Hermite) or complex (Fock) variables, `m = 2r`.
    pub fn m(&self) -> usize {
        2 * self.rank
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionSection {
    pub header: SectionHeader,
    pub coeffs: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockSection {
    pub header: SectionHeader,
    pub coeffs: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedSection {
    pub header: SectionHeader,
    pub coeffs: Vec<Complex64>,
}

pub fn hermite_basis(rank: usize, degree: usize) -> MultiIndexBasis {
    MultiIndexBasis::new(2 * rank, degree)
}

pub fn fock_basis(rank: usize, degree: usize) -> MultiIndexBasis {
    MultiIndexBasis::new(2 * rank, degree)
}

/// Variables ordered `z_1..z_{2r}, z̄_1..z̄_{2r}`.
pub fn extended_basis(rank: usize, degree: usize) -> MultiIndexBasis {
    MultiIndexBasis::new(4 * rank, degree)
}

pub fn descriptor(kind: BasisKind, rank: usize, degree: usize) -> BasisDescriptor {
    let vars = match kind {
        BasisKind::Extended => 4 * rank,
        _ => 2 * rank,
    };
    BasisDescriptor { kind, vars, degree }
}

/// Norm² of the Fock monomial `z^α`: `(2ħ)^{|α|} α!`.
pub fn fock_norm2(alpha: &[u32], hbar: f64) -> f64 {
    let deg: u32 = alpha.iter().sum();
    (2.0 * hbar).powi(deg as i32) * multi_factorial(alpha)
}

fn check_pair(a: &SectionHeader, b: &SectionHeader, la: usize, lb: usize) -> Result<()> {
    if a.rank != b.rank || a.degree != b.degree || la != lb {
        return Err(Error::BasisMismatch);
    }
    let same = |x: f64, y: f64| (x - y).abs() <= 1e-14 * x.abs().max(1.0);
    if !same(a.tau.tau1, b.tau.tau1) || !same(a.tau.tau2, b.tau.tau2) || a.level.k != b.level.k || !same(a.level.s, b.level.s) {
        return Err(Error::BasisMismatch);
    }
    Ok(())
}

impl PositionSection {
    pub fn zeros(header: SectionHeader) -> Self {
        let n = hermite_basis(header.rank, header.degree).len();
        PositionSection { header, coeffs: vec![ZERO; n] }
    }

    pub fn basis(&self) -> MultiIndexBasis {
        hermite_basis(self.header.rank, self.header.degree)
    }

    /// The normalised ground state h₀.
    pub fn ground(header: SectionHeader) -> Self {
        let mut s = Self::zeros(header);
        s.coeffs[0] = Complex64::new(1.0, 0.0);
        s
    }

    /// Euclidean ℓ² pairing, linear in the first slot.
    pub fn inner(&self, other: &PositionSection) -> Result<Complex64> {
        check_pair(&self.header, &other.header, self.coeffs.len(), other.coeffs.len())?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b.conj()).sum())
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Value of ψ at real q (without the frame ρ).
    pub fn evaluate(&self, q: &[f64]) -> Result<Complex64> {
        let m = self.header.m();
        if q.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: q.len() });
        }
        Ok(self.evaluate_with(&self.basis(), q))
    }

    /// Evaluation with a prebuilt basis (no dimension check).
    pub fn evaluate_with(&self, basis: &MultiIndexBasis, q: &[f64]) -> Complex64 {
        let tables: Vec<Vec<f64>> = q.iter().map(|&x| hermite_functions(self.header.degree, self.header.hbar(), x)).collect();
        basis
            .indices()
            .iter()
            .zip(&self.coeffs)
            .map(|(n, c)| c * n.iter().enumerate().map(|(a, &k)| tables[a][k as usize]).product::<f64>())
            .sum()
    }

    /// `|q| > 10 √(N ħ)`: evaluation is accurate but the truncation is unlikely to be meaningful.
    pub fn range_warning(&self, q: &[f64]) -> bool {
        let r2: f64 = q.iter().map(|x| x * x).sum();
        r2.sqrt() > 10.0 * (self.header.degree.max(1) as f64 * self.header.hbar()).sqrt()
    }
}

/// `h_0..h_n` at `x`, normalised in L²(ℝ) for the scale ħ.
pub fn hermite_functions(n: usize, hbar: f64, x: f64) -> Vec<f64> {
    let y = x / hbar.sqrt();
    let mut out = Vec::with_capacity(n + 1);
    let h0 = (PI * hbar).powf(-0.25) * (-0.5 * y * y).exp();
    out.push(h0);
    if n >= 1 {
        out.push(2f64.sqrt() * y * h0);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * y * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}

impl FockSection {
    pub fn zeros(header: SectionHeader) -> Self {
        let n = fock_basis(header.rank, header.degree).len();
        FockSection { header, coeffs: vec![ZERO; n] }
    }

    pub fn basis(&self) -> MultiIndexBasis {
        fock_basis(self.header.rank, self.header.degree)
    }

    pub fn constant(header: SectionHeader, c: Complex64) -> Self {
        let mut s = Self::zeros(header);
        s.coeffs[0] = c;
        s
    }

    /// Pairing for the normalised Gaussian measure: `⟨z^α, z^β⟩ = δ_{αβ}(2ħ)^{|α|}α!`.
    pub fn inner(&self, other: &FockSection) -> Result<Complex64> {
        check_pair(&self.header, &other.header, self.coeffs.len(), other.coeffs.len())?;
        let basis = self.basis();
        let h = self.header.hbar();
        Ok(basis
            .indices()
            .iter()
            .zip(self.coeffs.iter().zip(&other.coeffs))
            .map(|(n, (a, b))| a * b.conj() * fock_norm2(n, h))
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).map(|z| z.re.max(0.0).sqrt()).unwrap_or(f64::NAN)
    }

    /// Value of f at z (without the frame σ), by direct monomial products.
    pub fn evaluate(&self, z: &[Complex64]) -> Result<Complex64> {
        let m = self.header.m();
        if z.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: z.len() });
        }
        let pows: Vec<Vec<Complex64>> = z.iter().map(|&w| powers(w, self.header.degree)).collect();
        let basis = self.basis();
        Ok(basis
            .indices()
            .iter()
            .zip(&self.coeffs)
            .map(|(n, c)| c * n.iter().enumerate().map(|(a, &k)| pows[a][k as usize]).product::<Complex64>())
            .sum())
    }

    pub fn range_warning(&self, z: &[Complex64]) -> bool {
        let r2: f64 = z.iter().map(|x| x.norm_sqr()).sum();
        r2.sqrt() > 10.0 * (self.header.degree.max(1) as f64 * self.header.hbar()).sqrt()
    }

    /// Embeds as the β = 0 slice of the extended basis.
    pub fn to_extended(&self) -> ExtendedSection {
        let fb = self.basis();
        let eb = extended_basis(self.header.rank, self.header.degree);
        let mut out = ExtendedSection { header: self.header, coeffs: vec![ZERO; eb.len()] };
        let m = self.header.m();
        for (i, n) in fb.indices().iter().enumerate() {
            let mut e = n.clone();
            e.extend(std::iter::repeat_n(0, m));
            out.coeffs[eb.position(&e).expect("slice inside truncation")] = self.coeffs[i];
        }
        out
    }
}

pub fn powers(w: Complex64, n: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = Complex64::new(1.0, 0.0);
    for _ in 0..=n {
        out.push(acc);
        acc *= w;
    }
    out
}

impl ExtendedSection {
    pub fn zeros(header: SectionHeader) -> Self {
        let n = extended_basis(header.rank, header.degree).len();
        ExtendedSection { header, coeffs: vec![ZERO; n] }
    }

    pub fn basis(&self) -> MultiIndexBasis {
        extended_basis(self.header.rank, self.header.degree)
    }

    /// β = 0 part as a Fock section, plus the ℓ∞ size of everything else.
    pub fn split_holomorphic(&self) -> (FockSection, f64) {
        let m = self.header.m();
        let eb = self.basis();
        let fb = fock_basis(self.header.rank, self.header.degree);
        let mut f = FockSection { header: self.header, coeffs: vec![ZERO; fb.len()] };
        let mut resid: f64 = 0.0;
        for (i, n) in eb.indices().iter().enumerate() {
            if n[m..].iter().all(|&b| b == 0) {
                f.coeffs[fb.position(&n[..m]).expect("slice inside truncation")] = self.coeffs[i];
            } else {
                resid = resid.max(self.coeffs[i].norm());
            }
        }
        (f, resid)
    }

    /// `⟨z^α z̄^β, z^γ z̄^δ⟩ = δ_{α+δ, β+γ} (2ħ)^{|α+δ|} (α+δ)!`
    pub fn inner(&self, other: &ExtendedSection) -> Result<Complex64> {
        check_pair(&self.header, &other.header, self.coeffs.len(), other.coeffs.len())?;
        let m = self.header.m();
        let h = self.header.hbar();
        let eb = self.basis();
        // group by α − β, which must match γ − δ
        let mut groups: std::collections::HashMap<Vec<i64>, Vec<usize>> = std::collections::HashMap::new();
        for (i, n) in eb.indices().iter().enumerate() {
            let key: Vec<i64> = (0..m).map(|a| n[a] as i64 - n[m + a] as i64).collect();
            groups.entry(key).or_default().push(i);
        }
        let mut keys: Vec<_> = groups.keys().cloned().collect();
        keys.sort();
        let mut acc = ZERO;
        for key in keys {
            let members = &groups[&key];
            for &i in members {
                if self.coeffs[i] == ZERO {
                    continue;
                }
                let ni = eb.index(i);
                for &j in members {
                    if other.coeffs[j] == ZERO {
                        continue;
                    }
                    let nj = eb.index(j);
                    let s: Vec<u32> = (0..m).map(|a| ni[a] + nj[m + a]).collect();
                    acc += self.coeffs[i] * other.coeffs[j].conj() * fock_norm2(&s, h);
                }
            }
        }
        Ok(acc)
    }

    pub fn evaluate(&self, z: &[Complex64]) -> Result<Complex64> {
        let m = self.header.m();
        if z.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: z.len() });
        }
        let d = self.header.degree;
        let pz: Vec<Vec<Complex64>> = z.iter().map(|&w| powers(w, d)).collect();
        let pb: Vec<Vec<Complex64>> = z.iter().map(|&w| powers(w.conj(), d)).collect();
        let eb = self.basis();
        Ok(eb
            .indices()
            .iter()
            .zip(&self.coeffs)
            .map(|(n, c)| {
                let mut v = *c;
                for a in 0..m {
                    v *= pz[a][n[a] as usize] * pb[a][n[m + a] as usize];
                }
                v
            })
            .sum())
    }
}

/// Kähler frame `σ = (2πħ)^{−m} exp(−|z|²/4ħ)`.
pub fn frame_sigma(z: &[Complex64], hbar: f64) -> f64 {
    let m = z.len() as i32;
    let r2: f64 = z.iter().map(|w| w.norm_sqr()).sum();
    (2.0 * PI * hbar).powi(-m) * (-r2 / (4.0 * hbar)).exp()
}

/// Real-polarised frame `ρ = exp(−(i/2ħ) p·q)`.
pub fn frame_rho(p: &[f64], q: &[f64], hbar: f64) -> Complex64 {
    let pq: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    Complex64::new(0.0, -pq / (2.0 * hbar)).exp()
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffEntry {
    pub index: Vec<u32>,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub k: i64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionFile {
    pub basis: BasisKind,
    pub rank: usize,
    pub level: LevelRecord,
    pub tau: [f64; 2],
    pub degree: usize,
    pub coeffs: Vec<CoeffEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnySection {
    Hermite(PositionSection),
    Fock(FockSection),
    Extended(ExtendedSection),
}

impl AnySection {
    pub fn header(&self) -> &SectionHeader {
        match self {
            AnySection::Hermite(s) => &s.header,
            AnySection::Fock(s) => &s.header,
            AnySection::Extended(s) => &s.header,
        }
    }

    fn parts(&self) -> (BasisKind, &SectionHeader, &[Complex64], MultiIndexBasis) {
        match self {
            AnySection::Hermite(s) => (BasisKind::Hermite, &s.header, &s.coeffs, s.basis()),
            AnySection::Fock(s) => (BasisKind::Fock, &s.header, &s.coeffs, s.basis()),
            AnySection::Extended(s) => (BasisKind::Extended, &s.header, &s.coeffs, s.basis()),
        }
    }

    /// Only nonzero coefficients are written, in basis order.
    pub fn to_file(&self) -> SectionFile {
        let (kind, h, coeffs, basis) = self.parts();
        SectionFile {
            basis: kind,
            rank: h.rank,
            level: LevelRecord { k: h.level.k, s: h.level.s },
            tau: [h.tau.tau1, h.tau.tau2],
            degree: h.degree,
            coeffs: coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != ZERO)
                .map(|(i, c)| CoeffEntry { index: basis.index(i).to_vec(), re: c.re, im: c.im })
                .collect(),
        }
    }

    pub fn from_file(f: &SectionFile) -> Result<Self> {
        if f.rank == 0 {
            return Err(Error::FileFormat("rank must be positive".into()));
        }
        let header = SectionHeader {
            tau: TeichmullerPoint::new(f.tau[0], f.tau[1])?,
            level: Level::new(f.level.k, f.level.s)?,
            rank: f.rank,
            degree: f.degree,
        };
        let basis = match f.basis {
            BasisKind::Extended => extended_basis(f.rank, f.degree),
            _ => hermite_basis(f.rank, f.degree),
        };
        let mut coeffs = vec![ZERO; basis.len()];
        for e in &f.coeffs {
            if e.index.len() != basis.vars {
                return Err(Error::FileFormat(format!("index {:?} has length {}, expected {}", e.index, e.index.len(), basis.vars)));
            }
            let i = basis
                .position(&e.index)
                .ok_or_else(|| Error::FileFormat(format!("index {:?} exceeds degree {}", e.index, f.degree)))?;
            coeffs[i] += Complex64::new(e.re, e.im);
        }
        Ok(match f.basis {
            BasisKind::Hermite => AnySection::Hermite(PositionSection { header, coeffs }),
            BasisKind::Fock => AnySection::Fock(FockSection { header, coeffs }),
            BasisKind::Extended => AnySection::Extended(ExtendedSection { header, coeffs }),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("section serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: SectionFile = serde_json::from_str(s).map_err(|e| Error::FileFormat(e.to_string()))?;
        Self::from_file(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(degree: usize) -> SectionHeader {
        SectionHeader { tau: TeichmullerPoint::i(), level: Level::new(2, 0.5).unwrap(), rank: 1, degree }
    }

    #[test]
    fn ground_state_peak() {
        let h = header(4);
        let g = PositionSection::ground(h);
        let v = g.evaluate(&[0.0, 0.0]).unwrap();
        assert!((v.re - (1.0 / (PI * h.hbar())).sqrt()).abs() < 1e-14);
        assert!(!g.range_warning(&[0.1, 0.1]));
        assert!(g.range_warning(&[100.0, 0.0]));
    }

    #[test]
    fn fock_moments() {
        let h = header(4);
        let b = fock_basis(1, 4);
        let mut z1 = FockSection::zeros(h);
        z1.coeffs[b.position(&[1, 0]).unwrap()] = 1.0.into();
        let mut z2 = FockSection::zeros(h);
        z2.coeffs[b.position(&[0, 1]).unwrap()] = 1.0.into();
        let mut zz = FockSection::zeros(h);
        zz.coeffs[b.position(&[2, 0]).unwrap()] = 1.0.into();
        let hb = h.hbar();
        assert!((z1.inner(&z1).unwrap().re - 2.0 * hb).abs() < 1e-15);
        assert_eq!(z1.inner(&z2).unwrap(), ZERO);
        assert!((zz.inner(&zz).unwrap().re - 2.0 * 4.0 * hb * hb).abs() < 1e-14);
        assert_eq!(FockSection::constant(h, 1.0.into()).evaluate(&[0.3.into(), 0.1.into()]).unwrap(), 1.0.into());
        assert_eq!(z1.evaluate(&[ZERO, ZERO]).unwrap(), ZERO);
    }

    #[test]
    fn extended_reproduces_fock() {
        let h = header(3);
        let mut f = FockSection::zeros(h);
        for (i, c) in f.coeffs.iter_mut().enumerate() {
            *c = Complex64::new(i as f64 * 0.1, 1.0 - i as f64 * 0.05);
        }
        let e = f.to_extended();
        assert!((e.inner(&e).unwrap() - f.inner(&f).unwrap()).norm() < 1e-13);
        let (back, resid) = e.split_holomorphic();
        assert_eq!(back, f);
        assert_eq!(resid, 0.0);
    }

    #[test]
    fn mismatched_bases_are_rejected() {
        let a = FockSection::zeros(header(3));
        let b = FockSection::zeros(header(4));
        assert_eq!(a.inner(&b), Err(Error::BasisMismatch));
        let mut h = header(3);
        h.tau = TeichmullerPoint::new(0.5, 1.0).unwrap();
        assert_eq!(a.inner(&FockSection::zeros(h)), Err(Error::BasisMismatch));
    }

    #[test]
    fn file_round_trip() {
        let mut s = PositionSection::zeros(header(3));
        s.coeffs[2] = Complex64::new(0.25, -1.5);
        let any = AnySection::Hermite(s);
        let back = AnySection::from_json(&any.to_json()).unwrap();
        assert_eq!(back, any);
        assert!(AnySection::from_json("{\"basis\": \"hermite\"}").is_err());
    }
}
