//! Lattice- and Weyl-averaged Gaussians on 𝒜₀ and the pairings used for
//! bounded equivariant sections.
//!
//! Points of 𝒜₀ = 𝔱 ⊗ ℝ² are written `u = (x, y)` with `x, y ∈ 𝔱` in the
//! orthonormal Cartan basis (the layout used by `cartan::gauge_act`). Sections
//! are functions in the symmetric gauge `∇ = d − (i/2) k ω₀(u, ·)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::cartan::{CartanData, WeylGroup};
use crate::error::{Error, Result};
use crate::frames::{self, Direction, Level, TeichmullerPoint};
use crate::quad::composite_legendre;
use crate::quantops::A0Geometry;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// `coef · exp(−½ uᵀ A u + bᵀ u)` with complex symmetric `A`, `Re A > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTerm {
    pub coef: Complex64,
    pub a: DMatrix<Complex64>,
    pub b: DVector<Complex64>,
}

impl GaussianTerm {
    pub fn new(coef: Complex64, a: DMatrix<Complex64>, b: DVector<Complex64>) -> Self {
        GaussianTerm { coef, a, b }
    }

    /// Isotropic Gaussian of width `1/√alpha` centred at `c`.
    pub fn centred(alpha: f64, c: &[f64]) -> Self {
        let n = c.len();
        let a = DMatrix::from_diagonal_element(n, n, Complex64::new(alpha, 0.0));
        let cv = DVector::from_iterator(n, c.iter().map(|&v| Complex64::new(v, 0.0)));
        let b = &a * &cv;
        let coef = (-(cv.transpose() * &a * &cv)[(0, 0)] * 0.5).exp();
        GaussianTerm { coef, a, b }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    fn exponent(&self, u: &[f64]) -> Complex64 {
        let n = self.dim();
        let mut e = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..n {
                row += self.a[(i, j)] * u[j];
            }
            e += -0.5 * row * u[i] + self.b[i] * u[i];
        }
        e
    }

    pub fn value(&self, u: &[f64]) -> Complex64 {
        self.coef * self.exponent(u).exp()
    }

    /// `(c, log_peak, a_min)` with `log|f(u)| ≤ log_peak − ½ a_min |u − c|²`.
    pub fn envelope(&self) -> (Vec<f64>, f64, f64) {
        let re_a = self.a.map(|z| z.re);
        let re_b = self.b.map(|z| z.re);
        let c = re_a.clone().lu().solve(&re_b).unwrap_or_else(|| re_b.clone());
        let peak = 0.5 * re_b.dot(&c) + self.coef.norm().ln();
        let a_min = re_a.symmetric_eigenvalues().min();
        (c.iter().copied().collect(), peak, a_min)
    }

    /// `∂ log f = −A u + b`
    pub fn log_gradient(&self, u: &[f64]) -> DVector<Complex64> {
        let uv = DVector::from_iterator(u.len(), u.iter().map(|&v| Complex64::new(v, 0.0)));
        -(&self.a * uv) + &self.b
    }

    /// `(T_λ f)(u) = ε e^{(i/2) k ω₀(λ, u)} f(u − λ)`
    pub fn translated(&self, lambda: &[f64], k: f64, eps: f64, omega: &DMatrix<f64>) -> Self {
        let n = self.dim();
        let l = DVector::from_iterator(n, lambda.iter().map(|&v| Complex64::new(v, 0.0)));
        let al = &self.a * &l;
        let shift = -(l.transpose() * &al)[(0, 0)] * 0.5 - (self.b.transpose() * &l)[(0, 0)];
        let om = frames::to_complex(&omega.transpose()) * &l * (I * 0.5 * k);
        GaussianTerm { coef: self.coef * eps * shift.exp(), a: self.a.clone(), b: &self.b + al + om }
    }

    /// `f(W⁻¹ u)` for orthogonal `W`.
    pub fn rotated(&self, w: &DMatrix<f64>) -> Self {
        let wc = frames::to_complex(w);
        GaussianTerm { coef: self.coef, a: &wc * &self.a * wc.transpose(), b: &wc * &self.b }
    }

    /// Value of `Σ G^{ab} ∇_a ∇_b f` at `u`, `∇ = ∂ − (i/2) k ω₀(u, ·)`.
    pub fn covariant_second(&self, g: &DMatrix<Complex64>, k: f64, omega: &DMatrix<f64>, u: &[f64]) -> Complex64 {
        let n = self.dim();
        let e = self.exponent(u);
        let val = self.coef * e.exp();
        if val.norm() < 1e-300 {
            return Complex64::new(0.0, 0.0);
        }
        let mut h = [Complex64::new(0.0, 0.0); 8];
        for a in 0..n {
            let mut acc = self.b[a];
            for c in 0..n {
                acc -= self.a[(a, c)] * u[c];
                acc -= 0.5 * k * I * omega[(c, a)] * u[c];
            }
            h[a] = acc;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                let dl = -0.5 * k * I * omega[(a, b)];
                acc += g[(a, b)] * (-self.a[(a, b)] + dl + h[a] * h[b]);
            }
        }
        acc * val
    }
}

/// Embedding of a Weyl element on 𝒜₀: the same matrix on the x and y blocks.
pub fn weyl_on_a0(w: &DMatrix<f64>) -> DMatrix<f64> {
    let r = w.nrows();
    let mut m = DMatrix::zeros(2 * r, 2 * r);
    m.view_mut((0, 0), (r, r)).copy_from(w);
    m.view_mut((r, r), (r, r)).copy_from(w);
    m
}

/// Quadratic refinement sign `ε(a, b) = (−1)^{k aᵀ Ĉ b}` for the translation by (a, b).
pub fn refinement_sign(coroot: &DMatrix<i64>, k: i64, a: &[i64], b: &[i64]) -> f64 {
    let mut s = 0i64;
    for i in 0..a.len() {
        for j in 0..b.len() {
            s += a[i] * coroot[(i, j)] * b[j];
        }
    }
    if (k * s).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Bounded 𝒦₀-equivariant section given as a finite Gaussian sum
/// `(1/|W|) Σ_w Σ_{|λ| ≤ R} T_λ(f ∘ w⁻¹)`.
#[derive(Debug, Clone)]
pub struct EquivariantSection {
    pub rank: usize,
    pub k: i64,
    pub radius: usize,
    pub terms: Vec<GaussianTerm>,
    envelopes: Vec<(Vec<f64>, f64, f64)>,
    /// Estimated size of the omitted lattice shells on the fundamental domain.
    pub tail_estimate: f64,
    pub multiplier: String,
}

fn lattice_shell(rank: usize, lo: usize, hi: usize) -> Vec<(Vec<i64>, Vec<i64>)> {
    // all (a, b) ∈ ℤ^r × ℤ^r with lo < |(a,b)|∞ ≤ hi (lo = None → from 0)
    let n = 2 * rank;
    let span = 2 * hi as i64 + 1;
    let mut out = Vec::new();
    let total = span.pow(n as u32);
    for idx in 0..total {
        let mut rem = idx;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(rem % span - hi as i64);
            rem /= span;
        }
        let norm = v.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0);
        if norm <= hi && (norm > lo || (lo == 0 && norm == 0)) {
            out.push((v[..rank].to_vec(), v[rank..].to_vec()));
        }
    }
    out
}

/// Sample points of the fundamental parallelogram of the lattice on 𝒜₀.
pub fn fundamental_domain_samples(data: &CartanData, per_axis: usize) -> Vec<Vec<f64>> {
    let r = data.rank;
    let n = 2 * r;
    let mut out = Vec::new();
    let total = per_axis.pow(n as u32);
    for idx in 0..total {
        let mut rem = idx;
        let mut u = DVector::<f64>::zeros(n);
        for c in 0..n {
            let theta = (rem % per_axis) as f64 / per_axis as f64;
            rem /= per_axis;
            let (col, block) = (c % r, c / r);
            let v = data.lattice_basis.column(col) * theta;
            for i in 0..r {
                u[block * r + i] += v[i];
            }
        }
        out.push(u.iter().copied().collect());
    }
    out
}

fn build_terms(
    seed: &[GaussianTerm],
    data: &CartanData,
    group: &WeylGroup,
    k: i64,
    shells: &[(Vec<i64>, Vec<i64>)],
) -> Result<Vec<GaussianTerm>> {
    let omega = frames::symplectic_a0(data.rank);
    let coroot = data.integral_coroot_gram()?;
    let inv_w = 1.0 / group.order() as f64;
    let mut terms = Vec::new();
    for (a, b) in shells {
        let lx = data.lattice_vector(a);
        let ly = data.lattice_vector(b);
        let lambda: Vec<f64> = lx.iter().chain(ly.iter()).copied().collect();
        let eps = refinement_sign(&coroot, k, a, b);
        for w in &group.elements {
            let wm = weyl_on_a0(w);
            for g in seed {
                let mut t = g.rotated(&wm).translated(&lambda, k as f64, eps, &omega);
                t.coef *= inv_w;
                terms.push(t);
            }
        }
    }
    Ok(terms)
}

/// Averages `seed` over the Weyl group and all lattice translations with
/// `|(a, b)|∞ ≤ radius` (lattice coordinates).
pub fn equivariantize(
    seed: &[GaussianTerm],
    data: &CartanData,
    group: &WeylGroup,
    k: i64,
    radius: usize,
    tolerance: f64,
) -> Result<EquivariantSection> {
    let r = data.rank;
    if seed.iter().any(|g| g.dim() != 2 * r) {
        return Err(Error::DimensionMismatch { expected: 2 * r, got: seed[0].dim() });
    }
    let terms = build_terms(seed, data, group, k, &lattice_shell(r, 0, radius))?;
    let tail_terms = build_terms(seed, data, group, k, &lattice_shell(r, radius, radius + 3))?;
    let samples = fundamental_domain_samples(data, 5);
    let tail_estimate = samples
        .iter()
        .map(|u| tail_terms.iter().map(|t| t.value(u).norm()).sum::<f64>())
        .fold(0.0, f64::max);
    if tail_estimate > tolerance {
        return Err(Error::TailTooLarge { estimate: tail_estimate, tolerance });
    }
    let envelopes = terms.iter().map(|t| t.envelope()).collect();
    Ok(EquivariantSection { rank: r, k, radius, terms, envelopes, tail_estimate, multiplier: "heisenberg-refined".into() })
}

impl EquivariantSection {
    pub fn zero(rank: usize, k: i64) -> Self {
        EquivariantSection {
            rank,
            k,
            radius: 0,
            terms: Vec::new(),
            envelopes: Vec::new(),
            tail_estimate: 0.0,
            multiplier: "heisenberg-refined".into(),
        }
    }

    /// Terms whose envelope at `u` is above e^{−45} relative to unit size.
    fn active<'s>(&'s self, u: &'s [f64]) -> impl Iterator<Item = &'s GaussianTerm> + 's {
        self.terms.iter().zip(&self.envelopes).filter_map(move |(t, (c, peak, a_min))| {
            let d2: f64 = c.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum();
            (peak - 0.5 * a_min * d2 > -45.0).then_some(t)
        })
    }

    pub fn value(&self, u: &[f64]) -> Complex64 {
        self.active(u).map(|t| t.value(u)).sum()
    }

    /// `Σ G^{ab} ∇_a ∇_b` applied to the section, evaluated at `u`.
    pub fn covariant_second(&self, g: &DMatrix<Complex64>, u: &[f64]) -> Complex64 {
        let omega = frames::symplectic_a0(self.rank);
        self.active(u).map(|t| t.covariant_second(g, self.k as f64, &omega, u)).sum()
    }

    /// Value of the translated section `(T_λ Ψ)(u)` for the gauge element's translation part.
    pub fn translated_value(&self, data: &CartanData, a: &[i64], b: &[i64], u: &[f64]) -> Result<Complex64> {
        let coroot = data.integral_coroot_gram()?;
        let lx = data.lattice_vector(a);
        let ly = data.lattice_vector(b);
        let lambda: Vec<f64> = lx.iter().chain(ly.iter()).copied().collect();
        let omega = frames::symplectic_a0(self.rank);
        let eps = refinement_sign(&coroot, self.k, a, b);
        let shifted: Vec<f64> = u.iter().zip(&lambda).map(|(x, l)| x - l).collect();
        let lv = DVector::from_column_slice(&lambda);
        let uv = DVector::from_column_slice(u);
        let om = (lv.transpose() * &omega * uv)[(0, 0)];
        Ok(eps * (I * 0.5 * self.k as f64 * om).exp() * self.value(&shifted))
    }

    /// Largest invariance defect over the lattice generators, Weyl generators and sample points.
    pub fn invariance_defect(&self, data: &CartanData, samples: &[Vec<f64>]) -> Result<f64> {
        let r = self.rank;
        let mut worst: f64 = 0.0;
        for gen in 0..2 * r {
            let mut a = vec![0i64; r];
            let mut b = vec![0i64; r];
            if gen < r {
                a[gen] = 1;
            } else {
                b[gen - r] = 1;
            }
            for u in samples {
                let d = self.translated_value(data, &a, &b, u)? - self.value(u);
                worst = worst.max(d.norm());
            }
        }
        for w in &data.weyl_generators {
            let wm = weyl_on_a0(w);
            for u in samples {
                let wu = &wm.transpose() * DVector::from_column_slice(u);
                let d = self.value(wu.as_slice()) - self.value(u);
                worst = worst.max(d.norm());
            }
        }
        Ok(worst)
    }
}

/// Tensor-product rule on `[−l, l]^n` from a 1-d composite Gauss–Legendre rule.
#[derive(Debug, Clone)]
pub struct TensorRule {
    pub dim: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl TensorRule {
    pub fn new(dim: usize, l: f64, panels: usize, order: usize) -> Self {
        let (x, w) = composite_legendre(l, panels, order);
        let n1 = x.len();
        let total = n1.pow(dim as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let mut p = Vec::with_capacity(dim);
            let mut wt = 1.0;
            for _ in 0..dim {
                p.push(x[rem % n1]);
                wt *= w[rem % n1];
                rem /= n1;
            }
            nodes.push(p);
            weights.push(wt);
        }
        TensorRule { dim, nodes, weights }
    }

    /// `Σ w f(node)` with a deterministic blocked parallel reduction.
    pub fn integrate<F>(&self, f: F) -> Complex64
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        const BLOCK: usize = 4096;
        let partial: Vec<Complex64> = self
            .nodes
            .par_chunks(BLOCK)
            .zip(self.weights.par_chunks(BLOCK))
            .map(|(ns, ws)| ns.iter().zip(ws).map(|(n, w)| f(n) * *w).sum())
            .collect();
        partial.into_iter().sum()
    }
}

/// The τ-family `Ψ_τ(u) = h₀(q(u)) ρ_τ(u)` on 𝒜₀, a Gaussian in u.
pub fn ground_state_family(tau: &TeichmullerPoint, level: &Level, rank: usize) -> Result<GaussianTerm> {
    let geo = A0Geometry::new(tau, level, rank)?;
    let m = 2 * rank;
    let hbar = level.hbar();
    let z = geo.log_rho_form();
    let inner = DMatrix::<Complex64>::identity(m, m) * Complex64::new(level.abs_t(), 0.0) - z * Complex64::new(2.0, 0.0);
    let q = frames::to_complex(&geo.q_of_u);
    let a = q.transpose() * inner * q;
    let coef = Complex64::new((std::f64::consts::PI * hbar).powf(-(m as f64) / 4.0), 0.0);
    Ok(GaussianTerm { coef, a, b: DVector::zeros(m) })
}

/// `−½ u^HW(V)` as a bi-vector on 𝒜₀ for a coordinate direction:
/// `−(i/(2tτ₂)) Σ 𝒳̄_j⊗𝒳̄_j` for ∂τ and `−(i/(2t̄τ₂)) Σ 𝒳_j⊗𝒳_j` for ∂τ̄.
pub fn hw_bivector(tau: &TeichmullerPoint, level: &Level, rank: usize, dir: Direction) -> DMatrix<Complex64> {
    let mut g = DMatrix::<Complex64>::zeros(2 * rank, 2 * rank);
    for j in 0..rank {
        let x = frames::script_x_a0(tau, rank, j);
        let (v, t) = match dir {
            Direction::DTau => (x.map(|z| z.conj()), level.t()),
            Direction::DTauBar => (x, level.t().conj()),
        };
        g += &v * v.transpose() * (-I / (2.0 * t * tau.tau2));
    }
    g
}

/// Real tangent direction on 𝒯 written as `a ∂τ + b ∂τ̄` with `b = ā`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealDirection {
    pub d_tau1: f64,
    pub d_tau2: f64,
}

impl RealDirection {
    /// Components `(a, b)` with `V = a ∂τ + b ∂τ̄`.
    pub fn complex_components(&self) -> (Complex64, Complex64) {
        let a = Complex64::new(self.d_tau1, self.d_tau2);
        (a, a.conj())
    }
}

/// Both sides of the dual-connection identity for a τ-independent bounded section `T`
/// and the test family `Ψ_τ = h₀ ρ_τ`:
/// `V[(T|Ψ)] − (T|∇^HW_V Ψ)` versus `(∇^HW_V T | Ψ) = (−½u(V) T | Ψ)`.
pub fn dual_connection_sides(
    section: &EquivariantSection,
    tau: &TeichmullerPoint,
    level: &Level,
    v: RealDirection,
    rule: &TensorRule,
    fd_step: f64,
) -> Result<(Complex64, Complex64)> {
    use crate::quantops::{hw_potential, HermiteOps};
    use crate::sections::{PositionSection, SectionHeader};
    let r = section.rank;
    let tvals: Vec<Complex64> = rule.nodes.par_iter().map(|u| section.value(u)).collect();
    let pairing = |tt: &TeichmullerPoint| -> Result<Complex64> {
        let psi = ground_state_family(tt, level, r)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for ((u, w), tv) in rule.nodes.iter().zip(&rule.weights).zip(&tvals) {
            acc += tv * psi.value(u).conj() * *w;
        }
        Ok(acc)
    };
    // Richardson-extrapolated central difference along V
    let along = |h: f64| -> Result<Complex64> {
        let p = tau.shifted(h * v.d_tau1, h * v.d_tau2)?;
        let m = tau.shifted(-h * v.d_tau1, -h * v.d_tau2)?;
        Ok((pairing(&p)? - pairing(&m)?) / (2.0 * h))
    };
    let d1 = along(fd_step)?;
    let d2 = along(fd_step / 2.0)?;
    let dv = (d2 * 4.0 - d1) / 3.0;
    // ∇_V Ψ from the Hermite-coefficient potential applied to the ground state
    let ops = HermiteOps::new(r, 4, level);
    let (ca, cb) = v.complex_components();
    let w = hw_potential(&ops, tau, level, Direction::DTau)
        .scale(ca)
        .add(&hw_potential(&ops, tau, level, Direction::DTauBar).scale(cb));
    let mut e0 = vec![Complex64::new(0.0, 0.0); ops.dim()];
    e0[0] = Complex64::new(1.0, 0.0);
    let header = SectionHeader { tau: *tau, level: *level, rank: r, degree: 4 };
    let nabla_psi = PositionSection { header, coeffs: w.apply(&e0) };
    let hb = nabla_psi.basis();
    let geo = A0Geometry::new(tau, level, r)?;
    let zf = geo.log_rho_form();
    let second = rule
        .nodes
        .par_iter()
        .zip(rule.weights.par_iter())
        .zip(tvals.par_iter())
        .map(|((u, w), tv)| {
            let uv = DVector::from_column_slice(u);
            let q = &geo.q_of_u * uv;
            let qc = frames::to_complex_vec(&q);
            let rho = (qc.transpose() * &zf * &qc)[(0, 0)].exp();
            let val = nabla_psi.evaluate_with(&hb, q.as_slice()) * rho;
            tv * val.conj() * *w
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum::<Complex64>();
    let dual = dv - second;
    let g = hw_bivector(tau, level, r, Direction::DTau) * ca + hw_bivector(tau, level, r, Direction::DTauBar) * cb;
    let psi = ground_state_family(tau, level, r)?;
    let direct = rule
        .nodes
        .par_iter()
        .zip(rule.weights.par_iter())
        .map(|(u, w)| section.covariant_second(&g, u) * psi.value(u).conj() * *w)
        .collect::<Vec<_>>()
        .into_iter()
        .sum::<Complex64>();
    Ok((dual, direct))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_average_is_invariant() {
        let data = CartanData::a1();
        let group = WeylGroup::new(&data).unwrap();
        let seed = [GaussianTerm::centred(1.0, &[0.3, -0.2])];
        let s = equivariantize(&seed, &data, &group, 1, 4, 1e-10).unwrap();
        let pts = fundamental_domain_samples(&data, 4);
        let d = s.invariance_defect(&data, &pts).unwrap();
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn covariant_second_matches_finite_differences() {
        let g0 = GaussianTerm::centred(0.8, &[0.1, 0.4]);
        let omega = frames::symplectic_a0(1);
        let t = g0.translated(&[0.5, -0.3], 2.0, 1.0, &omega);
        let k = 2.0;
        let u = [0.2, -0.1];
        let nab = |f: &dyn Fn(&[f64]) -> Complex64, a: usize, p: &[f64]| -> Complex64 {
            let h = 1e-4;
            let mut pp = p.to_vec();
            let mut pm = p.to_vec();
            pp[a] += h;
            pm[a] -= h;
            let ell = -0.5 * k * I * (omega[(0, a)] * p[0] + omega[(1, a)] * p[1]);
            (f(&pp) - f(&pm)) / (2.0 * h) + ell * f(p)
        };
        let f = |p: &[f64]| t.value(p);
        let n1 = |p: &[f64]| nab(&f, 1, p);
        let fd = nab(&n1, 0, &u);
        let mut gm = DMatrix::zeros(2, 2);
        gm[(0, 1)] = Complex64::new(1.0, 0.0);
        let exact = t.covariant_second(&gm, k, &omega, &u);
        assert!((fd - exact).norm() < 1e-6, "{fd} {exact}");
    }
}
