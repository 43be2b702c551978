//! Teichmüller-dependent linear geometry on the model space ℝ^{4r}.
//!
//! Global coordinates are `(u_1..u_{2r}, v_1..v_{2r})` with `w = u + iv`;
//! `u_j` is the dx-component and `u_{r+j}` the dy-component along `T_j`.
//! Linear coordinates `(p, q)` are ordered `p_1..p_{2r}, q_1..q_{2r}`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Point τ = τ₁ + iτ₂ of the upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeichmullerPoint {
    pub tau1: f64,
    pub tau2: f64,
}

impl TeichmullerPoint {
    pub fn new(tau1: f64, tau2: f64) -> Result<Self> {
        if !(tau2 > 1e-9) || !tau1.is_finite() || !tau2.is_finite() {
            return Err(Error::DegenerateTau(tau2));
        }
        Ok(TeichmullerPoint { tau1, tau2 })
    }

    pub fn i() -> Self {
        TeichmullerPoint { tau1: 0.0, tau2: 1.0 }
    }

    pub fn from_complex(z: Complex64) -> Result<Self> {
        Self::new(z.re, z.im)
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.tau1, self.tau2)
    }

    pub fn abs2(&self) -> f64 {
        self.tau1 * self.tau1 + self.tau2 * self.tau2
    }

    pub fn shifted(&self, d1: f64, d2: f64) -> Result<Self> {
        Self::new(self.tau1 + d1, self.tau2 + d2)
    }
}

/// Parses `a+bi`, `a-bi`, `bi`, `a` (whitespace ignored).
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let err = || Error::Parse(format!("cannot parse complex number '{s}'"));
    if t.is_empty() {
        return Err(err());
    }
    if let Some(body) = t.strip_suffix('i') {
        // find the split between real and imaginary parts: last +/- not after an exponent marker
        let bytes = body.as_bytes();
        let mut split = None;
        for idx in (1..bytes.len()).rev() {
            let c = bytes[idx] as char;
            if (c == '+' || c == '-') && !matches!(bytes[idx - 1] as char, 'e' | 'E') {
                split = Some(idx);
                break;
            }
        }
        let (re, im) = match split {
            Some(idx) => (&body[..idx], &body[idx..]),
            None => ("0", body),
        };
        let im = match im {
            "" | "+" => "1",
            "-" => "-1",
            x => x,
        };
        let re: f64 = re.parse().map_err(|_| err())?;
        let im: f64 = im.parse().map_err(|_| err())?;
        Ok(Complex64::new(re, im))
    } else {
        Ok(Complex64::new(t.parse().map_err(|_| err())?, 0.0))
    }
}

impl FromStr for TeichmullerPoint {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::from_complex(parse_complex(s)?)
    }
}

impl fmt::Display for TeichmullerPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.tau2 < 0.0 {
            write!(f, "{}{}i", self.tau1, self.tau2)
        } else {
            write!(f, "{}+{}i", self.tau1, self.tau2)
        }
    }
}

/// Level t = k + is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub k: i64,
    pub s: f64,
}

impl Level {
    pub fn new(k: i64, s: f64) -> Result<Self> {
        if k < 1 || !s.is_finite() {
            return Err(Error::InvalidLevel(k));
        }
        Ok(Level { k, s })
    }

    pub fn t(&self) -> Complex64 {
        Complex64::new(self.k as f64, self.s)
    }

    pub fn abs_t(&self) -> f64 {
        (self.k as f64).hypot(self.s)
    }

    pub fn hbar(&self) -> f64 {
        1.0 / self.abs_t()
    }

    /// t/|t|
    pub fn phase(&self) -> Complex64 {
        self.t() / self.abs_t()
    }
}

impl FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let z = parse_complex(s)?;
        if z.re.fract() != 0.0 {
            return Err(Error::Parse(format!("level real part must be an integer: '{s}'")));
        }
        Level::new(z.re as i64, z.im)
    }
}

/// Direction of differentiation on Teichmüller space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    DTau,
    DTauBar,
}

impl Direction {
    pub fn both() -> [Direction; 2] {
        [Direction::DTau, Direction::DTauBar]
    }
}

/// Index helpers for the global chart.
#[inline]
pub fn u_idx(r: usize, j: usize, c: usize) -> usize {
    c * r + j
}
#[inline]
pub fn v_idx(r: usize, j: usize, c: usize) -> usize {
    2 * r + c * r + j
}

/// Hodge star on (dx, dy)-coefficients: `a dx + b dy ↦ a' dx + b' dy`.
pub fn hodge_matrix(tau: &TeichmullerPoint) -> Matrix2<f64> {
    let (t1, t2) = (tau.tau1, tau.tau2);
    Matrix2::new(t1, -1.0, tau.abs2(), -t1) / t2
}

pub fn hodge_star(tau: &TeichmullerPoint, form: [f64; 2]) -> [f64; 2] {
    let h = hodge_matrix(tau);
    let v = h * nalgebra::Vector2::new(form[0], form[1]);
    [v[0], v[1]]
}

fn hodge_derivative(tau: &TeichmullerPoint, dir: Direction) -> Matrix2<Complex64> {
    let (t1, t2) = (tau.tau1, tau.tau2);
    let h = hodge_matrix(tau);
    let d1 = Matrix2::new(1.0, 0.0, 2.0 * t1, -1.0) / t2;
    let d2 = -h / t2 + Matrix2::new(0.0, 0.0, 2.0 * t2, 0.0) / t2;
    let sign = match dir {
        Direction::DTau => -1.0,
        Direction::DTauBar => 1.0,
    };
    d1.map(|x| Complex64::new(0.5 * x, 0.0)) + d2.map(|x| Complex64::new(0.0, 0.5 * sign * x))
}

/// Places a 2×2 block acting on every (dx, dy) pair of one half of the chart.
fn pair_block<T>(r: usize, m: &Matrix2<T>, sign: T, on_v: bool, out: &mut DMatrix<T>)
where
    T: nalgebra::Scalar + Copy + std::ops::Mul<Output = T>,
{
    for j in 0..r {
        for a in 0..2 {
            for b in 0..2 {
                let (ia, ib) = if on_v { (v_idx(r, j, a), v_idx(r, j, b)) } else { (u_idx(r, j, a), u_idx(r, j, b)) };
                out[(ia, ib)] = sign * m[(a, b)];
            }
        }
    }
}

/// All translation-invariant structure tensors at (τ, t) as real 4r×4r matrices.
#[derive(Debug, Clone)]
pub struct StructureTensors {
    pub rank: usize,
    pub j: DMatrix<f64>,
    pub i_c: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub i_t: DMatrix<f64>,
    pub omega_re: DMatrix<f64>,
    pub omega_im: DMatrix<f64>,
    pub omega_t: DMatrix<f64>,
    pub g_t: DMatrix<f64>,
}

pub fn complex_structure_j(r: usize) -> DMatrix<f64> {
    let n = 4 * r;
    let mut j = DMatrix::zeros(n, n);
    for a in 0..2 * r {
        // (u, v) ↦ (−v, u)
        j[(a, 2 * r + a)] = -1.0;
        j[(2 * r + a, a)] = 1.0;
    }
    j
}

/// Matrices of Re ω^ℂ and Im ω^ℂ for ω^ℂ = Σ dw_j ∧ dw_{r+j}.
pub fn omega_complex_parts(r: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = 4 * r;
    let mut re = DMatrix::zeros(n, n);
    let mut im = DMatrix::zeros(n, n);
    for j in 0..r {
        let (a, b) = (u_idx(r, j, 0), u_idx(r, j, 1));
        let (c, d) = (v_idx(r, j, 0), v_idx(r, j, 1));
        re[(a, b)] = 1.0;
        re[(b, a)] = -1.0;
        re[(c, d)] = -1.0;
        re[(d, c)] = 1.0;
        im[(a, d)] = 1.0;
        im[(d, a)] = -1.0;
        im[(c, b)] = 1.0;
        im[(b, c)] = -1.0;
    }
    (re, im)
}

pub fn build_structures(tau: &TeichmullerPoint, level: &Level, rank: usize) -> StructureTensors {
    let r = rank;
    let n = 4 * r;
    let h = hodge_matrix(tau);
    let mut i_c = DMatrix::zeros(n, n);
    pair_block(r, &h, 1.0, false, &mut i_c);
    pair_block(r, &h, -1.0, true, &mut i_c);
    let j = complex_structure_j(r);
    let k = &i_c * &j;
    let at = level.abs_t();
    let i_t = (&i_c * level.k as f64 + &k * level.s) / at;
    let (omega_re, omega_im) = omega_complex_parts(r);
    let omega_t = &omega_re * level.k as f64 - &omega_im * level.s;
    let g_t = &omega_t * &i_t;
    StructureTensors { rank, j, i_c, k, i_t, omega_re, omega_im, omega_t, g_t }
}

/// τ-derivative of `I_{t,τ}` (complex matrix).
pub fn i_t_derivative(tau: &TeichmullerPoint, level: &Level, rank: usize, dir: Direction) -> DMatrix<Complex64> {
    let r = rank;
    let n = 4 * r;
    let dh = hodge_derivative(tau, dir);
    let mut di = DMatrix::<Complex64>::zeros(n, n);
    pair_block(r, &dh, Complex64::new(1.0, 0.0), false, &mut di);
    pair_block(r, &dh, Complex64::new(-1.0, 0.0), true, &mut di);
    let j = complex_structure_j(r).map(|x| Complex64::new(x, 0.0));
    let dk = &di * &j;
    (di * Complex64::new(level.k as f64, 0.0) + dk * Complex64::new(level.s, 0.0)) / Complex64::new(level.abs_t(), 0.0)
}

/// Polarisation frames `X_j`, `Y_j = I_t X_j` and the complex vectors 𝒳_j.
#[derive(Debug, Clone)]
pub struct FrameSet {
    pub rank: usize,
    pub tau: TeichmullerPoint,
    pub level: Level,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub script_x: Vec<DVector<Complex64>>,
    /// Columns `[X_1..X_{2r} | Y_1..Y_{2r}]`.
    pub matrix: DMatrix<f64>,
    /// Maps global coordinates to `(p, q)`.
    pub inverse: DMatrix<f64>,
}

pub fn build_frames(tau: &TeichmullerPoint, level: &Level, rank: usize) -> Result<FrameSet> {
    let r = rank;
    let n = 4 * r;
    let st = build_structures(tau, level, r);
    let norm = (2.0 * tau.tau2).sqrt();
    let mut x = Vec::with_capacity(2 * r);
    for j in 0..r {
        let mut v = DVector::zeros(n);
        v[u_idx(r, j, 0)] = 1.0 / norm;
        v[u_idx(r, j, 1)] = tau.tau1 / norm;
        v[v_idx(r, j, 1)] = tau.tau2 / norm;
        x.push(v);
    }
    for j in 0..r {
        let v = &st.j * &x[j];
        x.push(v);
    }
    let y: Vec<DVector<f64>> = x.iter().map(|v| &st.i_t * v).collect();
    let mut script_x = Vec::with_capacity(r);
    for j in 0..r {
        let mut v = DVector::<Complex64>::zeros(n);
        v[u_idx(r, j, 0)] = Complex64::new(1.0 / norm, 0.0);
        v[u_idx(r, j, 1)] = tau.as_complex() / norm;
        script_x.push(v);
    }
    let mut matrix = DMatrix::zeros(n, n);
    for (c, v) in x.iter().chain(y.iter()).enumerate() {
        matrix.set_column(c, v);
    }
    let svd = matrix.clone().svd(false, false);
    let cond = svd.singular_values.max() / svd.singular_values.min();
    if !(cond < 1e12) {
        return Err(Error::SingularFrame(cond));
    }
    let inverse = matrix.clone().try_inverse().ok_or(Error::SingularFrame(f64::INFINITY))?;
    Ok(FrameSet { rank: r, tau: *tau, level: *level, x, y, script_x, matrix, inverse })
}

impl FrameSet {
    /// Global point `(u, v)` to `(p, q)`.
    pub fn coords_pq(&self, point: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = 4 * self.rank;
        if point.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: point.len() });
        }
        let c = &self.inverse * point;
        let m = 2 * self.rank;
        Ok((c.rows(0, m).into_owned(), c.rows(m, m).into_owned()))
    }

    pub fn point_from_pq(&self, p: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
        let m = 2 * self.rank;
        let mut c = DVector::zeros(2 * m);
        c.rows_mut(0, m).copy_from(p);
        c.rows_mut(m, m).copy_from(q);
        &self.matrix * c
    }

    /// Rows `dz_a = dp_a + i dq_a` as a 2r×4r complex matrix.
    pub fn dz_rows(&self) -> DMatrix<Complex64> {
        let m = 2 * self.rank;
        DMatrix::from_fn(m, 2 * m, |a, i| Complex64::new(self.inverse[(a, i)], self.inverse[(m + a, i)]))
    }

    pub fn dzbar_rows(&self) -> DMatrix<Complex64> {
        self.dz_rows().map(|z| z.conj())
    }

    /// Genuine projections for ℝ^{4r} = P_τ ⊕ Q_τ.
    pub fn project_pq(&self, a: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let m = 2 * self.rank;
        let c = &self.inverse * a;
        let mut cp = c.clone();
        cp.rows_mut(m, m).fill(0.0);
        let mut cq = c;
        cq.rows_mut(0, m).fill(0.0);
        (&self.matrix * cp, &self.matrix * cq)
    }

    /// Complexified projection onto Q_τ.
    pub fn project_q_complex(&self, a: &DVector<Complex64>) -> DVector<Complex64> {
        let m = 2 * self.rank;
        let fc = self.matrix.map(|x| Complex64::new(x, 0.0));
        let ic = self.inverse.map(|x| Complex64::new(x, 0.0));
        let mut c = &ic * a;
        c.rows_mut(0, m).fill(Complex64::new(0.0, 0.0));
        fc * c
    }

    /// q-coordinates of a complex tangent vector, as coefficients of ∂/∂q.
    pub fn q_components(&self, a: &DVector<Complex64>) -> DVector<Complex64> {
        let m = 2 * self.rank;
        let ic = self.inverse.map(|x| Complex64::new(x, 0.0));
        (ic * a).rows(m, m).into_owned()
    }
}

/// The closed formula `(A ∓ K A)/2`, valid for `A ∈ 𝒜₀`.
pub fn project_pq_via_k(st: &StructureTensors, a: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let ka = &st.k * a;
    ((a - &ka) * 0.5, (a + ka) * 0.5)
}

/// Embeds a vector of 𝒜₀ (length 2r) into the global chart.
pub fn embed_a0(r: usize, a: &DVector<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(4 * r);
    v.rows_mut(0, 2 * r).copy_from(a);
    v
}

/// Compact metric g_τ = ω·I_τ on 𝒜₀ (2r×2r, u-coordinates).
pub fn metric_a0(tau: &TeichmullerPoint, rank: usize) -> DMatrix<f64> {
    let r = rank;
    let h = hodge_matrix(tau);
    let o = Matrix2::new(0.0, 1.0, -1.0, 0.0);
    let g2 = o * h;
    let mut g = DMatrix::zeros(2 * r, 2 * r);
    for j in 0..r {
        for a in 0..2 {
            for b in 0..2 {
                g[(u_idx(r, j, a), u_idx(r, j, b))] = g2[(a, b)];
            }
        }
    }
    g
}

pub fn symplectic_a0(rank: usize) -> DMatrix<f64> {
    let r = rank;
    let mut o = DMatrix::zeros(2 * r, 2 * r);
    for j in 0..r {
        o[(u_idx(r, j, 0), u_idx(r, j, 1))] = 1.0;
        o[(u_idx(r, j, 1), u_idx(r, j, 0))] = -1.0;
    }
    o
}

/// 𝒳_j restricted to 𝒜₀ coordinates (length 2r).
pub fn script_x_a0(tau: &TeichmullerPoint, rank: usize, j: usize) -> DVector<Complex64> {
    let r = rank;
    let norm = (2.0 * tau.tau2).sqrt();
    let mut v = DVector::zeros(2 * r);
    v[u_idx(r, j, 0)] = Complex64::new(1.0 / norm, 0.0);
    v[u_idx(r, j, 1)] = tau.as_complex() / norm;
    v
}

/// Bilinear (not sesquilinear) evaluation `aᵀ M b`.
pub fn bilinear(m: &DMatrix<Complex64>, a: &DVector<Complex64>, b: &DVector<Complex64>) -> Complex64 {
    (a.transpose() * m * b)[(0, 0)]
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn to_complex_vec(v: &DVector<f64>) -> DVector<Complex64> {
    v.map(|x| Complex64::new(x, 0.0))
}

/// Closed-form `∂(p,q)/∂τ` (or τ̄) as a matrix acting on `(p, q)`.
///
/// The q-rows are the displayed formula; the p-rows follow the same derivation.
pub fn coordinate_variation(tau: &TeichmullerPoint, level: &Level, rank: usize, dir: Direction) -> DMatrix<Complex64> {
    let r = rank;
    let m = 2 * r;
    let w = level.phase();
    let c = 1.0 / (4.0 * tau.tau2);
    let one = Complex64::new(1.0, 0.0);
    let mut mat = DMatrix::<Complex64>::zeros(2 * m, 2 * m);
    let (p, q) = (|a: usize| a, |a: usize| m + a);
    for j in 0..r {
        let jr = j + r;
        // ∂p_j = c(−p_{j+r} − w(q_j + i q_{j+r}))
        mat[(p(j), p(jr))] = -c * one;
        mat[(p(j), q(j))] = -c * w;
        mat[(p(j), q(jr))] = -c * w * I;
        // ∂p_{j+r} = c(p_j − i w (q_j + i q_{j+r}))
        mat[(p(jr), p(j))] = c * one;
        mat[(p(jr), q(j))] = -c * I * w;
        mat[(p(jr), q(jr))] = c * w;
        // ∂q_j = c(−q_{j+r} − w(p_j + i p_{j+r}))
        mat[(q(j), q(jr))] = -c * one;
        mat[(q(j), p(j))] = -c * w;
        mat[(q(j), p(jr))] = -c * w * I;
        // ∂q_{j+r} = c(q_j − i w (p_j + i p_{j+r}))
        mat[(q(jr), q(j))] = c * one;
        mat[(q(jr), p(j))] = -c * I * w;
        mat[(q(jr), p(jr))] = c * w;
    }
    match dir {
        Direction::DTau => mat,
        Direction::DTauBar => mat.map(|z| z.conj()),
    }
}

/// Same quantity from the analytic derivative of the frame matrix: `−F⁻¹ ∂F`.
pub fn coordinate_variation_from_frames(
    tau: &TeichmullerPoint,
    level: &Level,
    rank: usize,
    dir: Direction,
) -> Result<DMatrix<Complex64>> {
    let r = rank;
    let n = 4 * r;
    let fr = build_frames(tau, level, r)?;
    let st = build_structures(tau, level, r);
    let di = i_t_derivative(tau, level, r, dir);
    let norm = (2.0 * tau.tau2).sqrt();
    let (d1, d2) = match dir {
        Direction::DTau => (Complex64::new(0.5, 0.0), Complex64::new(0.0, -0.5)),
        Direction::DTauBar => (Complex64::new(0.5, 0.0), Complex64::new(0.0, 0.5)),
    };
    let jc = to_complex(&st.j);
    let itc = to_complex(&st.i_t);
    let mut df = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..r {
        let x = to_complex_vec(&fr.x[j]);
        let mut dx1 = DVector::<Complex64>::zeros(n);
        dx1[u_idx(r, j, 1)] = Complex64::new(1.0 / norm, 0.0);
        let mut dx2 = DVector::<Complex64>::zeros(n);
        dx2[v_idx(r, j, 1)] = Complex64::new(1.0 / norm, 0.0);
        dx2 -= &x * Complex64::new(0.5 / tau.tau2, 0.0);
        let dx = dx1 * d1 + dx2 * d2;
        let djx = &jc * &dx;
        let xr = to_complex_vec(&fr.x[j + r]);
        df.set_column(j, &dx);
        df.set_column(j + r, &djx);
        df.set_column(2 * r + j, &(&di * &x + &itc * &dx));
        df.set_column(3 * r + j, &(&di * &xr + &itc * &djx));
    }
    Ok(-to_complex(&fr.inverse) * df)
}

/// Richardson-extrapolated central differences of a matrix-valued function of (τ₁, τ₂).
pub fn richardson_tau_derivative<F>(tau: &TeichmullerPoint, h: f64, dir: Direction, f: F) -> Result<DMatrix<Complex64>>
where
    F: Fn(&TeichmullerPoint) -> Result<DMatrix<Complex64>>,
{
    let central = |h: f64| -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
        let d1 = (f(&tau.shifted(h, 0.0)?)? - f(&tau.shifted(-h, 0.0)?)?) / Complex64::new(2.0 * h, 0.0);
        let d2 = (f(&tau.shifted(0.0, h)?)? - f(&tau.shifted(0.0, -h)?)?) / Complex64::new(2.0 * h, 0.0);
        Ok((d1, d2))
    };
    let (a1, a2) = central(h)?;
    let (b1, b2) = central(h / 2.0)?;
    let d1 = (b1 * Complex64::new(4.0, 0.0) - a1) / Complex64::new(3.0, 0.0);
    let d2 = (b2 * Complex64::new(4.0, 0.0) - a2) / Complex64::new(3.0, 0.0);
    let s = match dir {
        Direction::DTau => -0.5,
        Direction::DTauBar => 0.5,
    };
    Ok(d1 * Complex64::new(0.5, 0.0) + d2 * Complex64::new(0.0, s))
}

/// Finite-difference oracle for [`coordinate_variation`].
pub fn coordinate_variation_fd(tau: &TeichmullerPoint, level: &Level, rank: usize, dir: Direction) -> Result<DMatrix<Complex64>> {
    let fr = build_frames(tau, level, rank)?;
    let d = richardson_tau_derivative(tau, 1e-4, dir, |tt| Ok(to_complex(&build_frames(tt, level, rank)?.inverse)))?;
    Ok(d * to_complex(&fr.matrix))
}

/// Inverse compact metric g̃_τ on 𝒜₀.
pub fn inverse_metric_a0(tau: &TeichmullerPoint, rank: usize) -> DMatrix<f64> {
    metric_a0(tau, rank).try_inverse().expect("metric is positive-definite")
}

/// G̃(∂τ) = −(i/τ₂) Σ 𝒳̄_j ⊗ 𝒳̄_j, and the τ̄ analogue, in u-coordinates of 𝒜₀.
pub fn g_tilde_a0(tau: &TeichmullerPoint, rank: usize, dir: Direction) -> DMatrix<Complex64> {
    let mut g = DMatrix::<Complex64>::zeros(2 * rank, 2 * rank);
    for j in 0..rank {
        let x = script_x_a0(tau, rank, j);
        let (v, c) = match dir {
            Direction::DTau => (x.map(|z| z.conj()), Complex64::new(0.0, -1.0 / tau.tau2)),
            Direction::DTauBar => (x, Complex64::new(0.0, 1.0 / tau.tau2)),
        };
        g += &v * v.transpose() * c;
    }
    g
}

/// ∂g_τ/∂τ from the metric-derivative formula: `g · G̃ · g`.
pub fn metric_a0_derivative(tau: &TeichmullerPoint, rank: usize, dir: Direction) -> DMatrix<Complex64> {
    let g = to_complex(&metric_a0(tau, rank));
    let mut out = DMatrix::<Complex64>::zeros(2 * rank, 2 * rank);
    for j in 0..rank {
        let x = script_x_a0(tau, rank, j);
        let (v, c) = match dir {
            Direction::DTau => (x.map(|z| z.conj()), Complex64::new(0.0, -1.0 / tau.tau2)),
            Direction::DTauBar => (x, Complex64::new(0.0, 1.0 / tau.tau2)),
        };
        let gv = &g * v;
        out += &gv * gv.transpose() * c;
    }
    out
}

/// Variation tensor of the Kähler structure, split by type.
#[derive(Debug, Clone)]
pub struct GTensor {
    pub direction: Direction,
    /// Components `G^{ab}` on `∂/∂z_a ⊗ ∂/∂z_b`.
    pub holo: DMatrix<Complex64>,
    /// Components on `∂/∂z̄_a ⊗ ∂/∂z̄_b`.
    pub anti: DMatrix<Complex64>,
    /// Mixed components (vanish by type).
    pub mixed: DMatrix<Complex64>,
    /// G̃ on 𝒜₀ in u-coordinates.
    pub real_part: DMatrix<Complex64>,
}

/// Generic G tensor: `G̃ = −∂(g^ℂ)⁻¹` with `g^ℂ = g_t/|t|`, split by `I_{t,τ}`-type.
pub fn g_tensor(tau: &TeichmullerPoint, level: &Level, rank: usize, dir: Direction) -> Result<GTensor> {
    let st = build_structures(tau, level, rank);
    let fr = build_frames(tau, level, rank)?;
    let at = level.abs_t();
    let g = &st.g_t / at;
    let ginv = to_complex(&g.clone().try_inverse().ok_or(Error::SingularFrame(f64::INFINITY))?);
    let dg = to_complex(&st.omega_t) * i_t_derivative(tau, level, rank, dir) / Complex64::new(at, 0.0);
    // −∂(g⁻¹) = g⁻¹ ∂g g⁻¹
    let gt = &ginv * dg * &ginv;
    let dz = fr.dz_rows();
    let dzb = fr.dzbar_rows();
    Ok(GTensor {
        direction: dir,
        holo: &dz * &gt * dz.transpose(),
        anti: &dzb * &gt * dzb.transpose(),
        mixed: &dz * &gt * dzb.transpose(),
        real_part: g_tilde_a0(tau, rank, dir),
    })
}

/// The displayed closed form of the holomorphic part.
pub fn g_holo_closed_form(tau: &TeichmullerPoint, level: &Level, rank: usize, dir: Direction) -> DMatrix<Complex64> {
    let r = rank;
    let m = 2 * r;
    let (coef, e) = match dir {
        Direction::DTau => (-I * level.t() / (tau.tau2 * level.abs_t()), I),
        Direction::DTauBar => (-I * level.t().conj() / (tau.tau2 * level.abs_t()), -I),
    };
    let mut g = DMatrix::<Complex64>::zeros(m, m);
    for j in 0..r {
        let mut v = DVector::<Complex64>::zeros(m);
        v[j] = Complex64::new(1.0, 0.0);
        v[j + r] = e;
        g += &v * v.transpose() * coef;
    }
    g
}

/// Frobenius norm of a complex matrix.
pub fn fro(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (TeichmullerPoint, Level) {
        (TeichmullerPoint::new(0.3, 1.7).unwrap(), Level::new(3, 1.3).unwrap())
    }

    #[test]
    fn parse_complex_forms() {
        assert_eq!(parse_complex("0+1i").unwrap(), Complex64::new(0.0, 1.0));
        assert_eq!(parse_complex("1.5-2i").unwrap(), Complex64::new(1.5, -2.0));
        assert_eq!(parse_complex("i").unwrap(), Complex64::new(0.0, 1.0));
        assert_eq!(parse_complex("-i").unwrap(), Complex64::new(0.0, -1.0));
        assert_eq!(parse_complex("3").unwrap(), Complex64::new(3.0, 0.0));
        assert_eq!(parse_complex("1e-3+2e+1i").unwrap(), Complex64::new(1e-3, 20.0));
        assert!(parse_complex("abc").is_err());
        assert!("0-1i".parse::<TeichmullerPoint>().is_err());
        assert_eq!("2+0.5i".parse::<Level>().unwrap(), Level { k: 2, s: 0.5 });
        assert!("0+1i".parse::<Level>().is_err());
    }

    #[test]
    fn hodge_at_i() {
        let t = TeichmullerPoint::i();
        assert_eq!(hodge_star(&t, [1.0, 0.0]), [0.0, 1.0]);
        assert_eq!(hodge_star(&t, [0.0, 1.0]), [-1.0, 0.0]);
    }

    #[test]
    fn coordinates_at_i() {
        let fr = build_frames(&TeichmullerPoint::i(), &Level::new(2, 0.0).unwrap(), 1).unwrap();
        let (p, q) = fr.coords_pq(&DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0])).unwrap();
        let h = 0.5f64.sqrt();
        assert!((p[0] - h).abs() < 1e-15 && p[1].abs() < 1e-15);
        assert!(q[0].abs() < 1e-15 && (q[1] - h).abs() < 1e-15);
    }

    #[test]
    fn variation_three_ways() {
        let (tau, lev) = sample();
        for dir in Direction::both() {
            let a = coordinate_variation(&tau, &lev, 1, dir);
            let b = coordinate_variation_from_frames(&tau, &lev, 1, dir).unwrap();
            let c = coordinate_variation_fd(&tau, &lev, 1, dir).unwrap();
            assert!(fro(&(&a - &b)) < 1e-13, "{}", fro(&(&a - &b)));
            assert!(fro(&(&a - &c)) < 1e-9, "{}", fro(&(&a - &c)));
        }
    }

    #[test]
    fn generic_g_matches_closed_form() {
        let (tau, lev) = sample();
        for r in 1..=2 {
            for dir in Direction::both() {
                let g = g_tensor(&tau, &lev, r, dir).unwrap();
                let c = g_holo_closed_form(&tau, &lev, r, dir);
                assert!(fro(&(&g.holo - &c)) < 1e-12);
                assert!(fro(&g.mixed) < 1e-12);
            }
        }
    }
}
