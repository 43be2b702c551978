//! Lie-theoretic input: rank, pairing, Weyl group and the translation lattice.
//!
//! Internally everything is expressed in an orthonormal basis of the Cartan
//! subalgebra. Custom data with a non-identity `gram` is brought to that form
//! by a Cholesky change of basis, so downstream code never sees `gram`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GROUP_BOUND: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CartanData {
    pub rank: usize,
    /// The pairing as supplied by the user (identity for the presets).
    pub gram: DMatrix<f64>,
    /// Weyl generators in orthonormal coordinates.
    pub weyl_generators: Vec<DMatrix<f64>>,
    /// Columns span the translation lattice, orthonormal coordinates, 2π absorbed.
    pub lattice_basis: DMatrix<f64>,
    /// Maps user coordinates to orthonormal ones (`Lᵀ` for `gram = L Lᵀ`).
    pub to_orthonormal: DMatrix<f64>,
    pub label: String,
}

/// Serialisable description, row-major as in the config file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CartanConfig {
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub gram: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub weyl_generators: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub lattice_basis: Option<Vec<Vec<f64>>>,
}

fn default_preset() -> String {
    "A1".into()
}

impl Default for CartanConfig {
    fn default() -> Self {
        CartanConfig { preset: "A1".into(), rank: None, gram: None, weyl_generators: None, lattice_basis: None }
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidCartan("ragged matrix".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl CartanConfig {
    pub fn build(&self) -> Result<CartanData> {
        match self.preset.as_str() {
            "A1" => Ok(CartanData::a1()),
            "An" => {
                let r = self.rank.ok_or_else(|| Error::InvalidCartan("preset An needs rank".into()))?;
                if r == 0 {
                    return Err(Error::InvalidCartan("rank must be positive".into()));
                }
                Ok(CartanData::su(r + 1))
            }
            "custom" => {
                let gram = rows_to_matrix(self.gram.as_deref().ok_or_else(|| Error::InvalidCartan("custom needs gram".into()))?)?;
                let gens = self
                    .weyl_generators
                    .as_ref()
                    .ok_or_else(|| Error::InvalidCartan("custom needs weyl_generators".into()))?
                    .iter()
                    .map(|g| rows_to_matrix(g))
                    .collect::<Result<Vec<_>>>()?;
                let lat = rows_to_matrix(
                    self.lattice_basis.as_deref().ok_or_else(|| Error::InvalidCartan("custom needs lattice_basis".into()))?,
                )?;
                CartanData::custom(gram, gens, lat)
            }
            other => Err(Error::InvalidCartan(format!("unknown preset {other}"))),
        }
    }
}

impl CartanData {
    /// SU(2): one simple coroot of squared length 2 in the basic form.
    pub fn a1() -> Self {
        let mut d = CartanData::su(2);
        d.label = "A1".into();
        d
    }

    /// SU(n): trace-zero diagonal matrices with the permutation action.
    ///
    /// The orthonormal basis is the Helmert basis of the trace-zero hyperplane.
    pub fn su(n: usize) -> Self {
        assert!(n >= 2, "SU(n) needs n >= 2");
        let r = n - 1;
        // columns: orthonormal basis of the trace-zero hyperplane in R^n
        let mut basis = DMatrix::<f64>::zeros(n, r);
        for k in 0..r {
            let kk = (k + 1) as f64;
            let norm = (kk * (kk + 1.0)).sqrt();
            for i in 0..=k {
                basis[(i, k)] = 1.0 / norm;
            }
            basis[(k + 1, k)] = -kk / norm;
        }
        let mut gens = Vec::with_capacity(r);
        let mut lattice = DMatrix::<f64>::zeros(r, r);
        for i in 0..r {
            let mut perm = DMatrix::<f64>::identity(n, n);
            perm[(i, i)] = 0.0;
            perm[(i + 1, i + 1)] = 0.0;
            perm[(i, i + 1)] = 1.0;
            perm[(i + 1, i)] = 1.0;
            gens.push(basis.transpose() * perm * &basis);
            let mut coroot = DVector::<f64>::zeros(n);
            coroot[i] = 1.0;
            coroot[i + 1] = -1.0;
            let c = basis.transpose() * coroot * (2.0 * PI).sqrt();
            lattice.set_column(i, &c);
        }
        CartanData {
            rank: r,
            gram: DMatrix::identity(r, r),
            weyl_generators: gens,
            lattice_basis: lattice,
            to_orthonormal: DMatrix::identity(r, r),
            label: format!("A{r}"),
        }
    }

    /// Arbitrary data in user coordinates; validated and orthonormalised.
    pub fn custom(gram: DMatrix<f64>, weyl_generators: Vec<DMatrix<f64>>, lattice_basis: DMatrix<f64>) -> Result<Self> {
        let r = gram.nrows();
        if r == 0 || gram.ncols() != r {
            return Err(Error::InvalidCartan("gram must be a non-empty square matrix".into()));
        }
        if (&gram - gram.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidCartan("gram is not symmetric".into()));
        }
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidCartan("gram is not positive-definite".into()))?;
        let l = chol.l();
        let lt = l.transpose();
        let lt_inv = lt
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidCartan("gram is singular".into()))?;
        if lattice_basis.nrows() != r || lattice_basis.ncols() != r {
            return Err(Error::DimensionMismatch { expected: r, got: lattice_basis.nrows() });
        }
        let lat_inv = lattice_basis
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidCartan("lattice_basis is singular".into()))?;
        for w in &weyl_generators {
            if w.nrows() != r || w.ncols() != r {
                return Err(Error::DimensionMismatch { expected: r, got: w.nrows() });
            }
            let iso = w.transpose() * &gram * w - &gram;
            if iso.amax() > 1e-10 {
                return Err(Error::InvalidCartan("Weyl generator is not an isometry of gram".into()));
            }
            let int = &lat_inv * w * &lattice_basis;
            if int.iter().any(|x| (x - x.round()).abs() > 1e-9) {
                return Err(Error::InvalidCartan("Weyl generator does not preserve the lattice".into()));
            }
        }
        let gens = weyl_generators.iter().map(|w| &lt * w * &lt_inv).collect();
        Ok(CartanData {
            rank: r,
            gram,
            weyl_generators: gens,
            lattice_basis: &lt * lattice_basis,
            to_orthonormal: lt,
            label: "custom".into(),
        })
    }

    /// Lattice Gram matrix divided by 2π; integral for admissible data.
    pub fn coroot_gram(&self) -> DMatrix<f64> {
        self.lattice_basis.transpose() * &self.lattice_basis / (2.0 * PI)
    }

    /// Checks that the lattice pairing is integral, as the line-bundle lift needs.
    pub fn integral_coroot_gram(&self) -> Result<DMatrix<i64>> {
        let c = self.coroot_gram();
        if c.iter().any(|x| (x - x.round()).abs() > 1e-8) {
            return Err(Error::InvalidCartan("lattice pairing is not integral".into()));
        }
        Ok(c.map(|x| x.round() as i64))
    }

    /// Integer matrix of a Weyl element in lattice coordinates.
    pub fn lattice_action(&self, w: &DMatrix<f64>) -> DMatrix<i64> {
        let inv = self.lattice_basis.clone().try_inverse().expect("lattice basis invertible");
        (inv * w * &self.lattice_basis).map(|x| x.round() as i64)
    }

    /// Real lattice vector for integer coordinates.
    pub fn lattice_vector(&self, n: &[i64]) -> DVector<f64> {
        let v = DVector::from_iterator(self.rank, n.iter().map(|&x| x as f64));
        &self.lattice_basis * v
    }
}

/// Closure of the generators under products, deduplicated to 1e-10.
pub fn enumerate_weyl(data: &CartanData) -> Result<Vec<DMatrix<f64>>> {
    enumerate_weyl_bounded(data, DEFAULT_GROUP_BOUND)
}

pub fn enumerate_weyl_bounded(data: &CartanData, bound: usize) -> Result<Vec<DMatrix<f64>>> {
    let r = data.rank;
    let mut elems: Vec<DMatrix<f64>> = vec![DMatrix::identity(r, r)];
    let mut frontier = 0;
    let find = |elems: &[DMatrix<f64>], m: &DMatrix<f64>| elems.iter().any(|e| (e - m).amax() < 1e-10);
    while frontier < elems.len() {
        let cur = elems[frontier].clone();
        frontier += 1;
        for g in &data.weyl_generators {
            let prod = g * &cur;
            if !find(&elems, &prod) {
                elems.push(prod);
                if elems.len() > bound {
                    return Err(Error::GroupTooLarge(bound));
                }
            }
        }
    }
    Ok(elems)
}

/// Enumerated Weyl group with multiplication table and lattice actions.
#[derive(Debug, Clone)]
pub struct WeylGroup {
    pub elements: Vec<DMatrix<f64>>,
    pub lattice_actions: Vec<DMatrix<i64>>,
    table: Vec<Vec<usize>>,
}

impl WeylGroup {
    pub fn new(data: &CartanData) -> Result<Self> {
        let elements = enumerate_weyl(data)?;
        let n = elements.len();
        let mut table = vec![vec![0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let p = &elements[i] * &elements[j];
                table[i][j] = elements
                    .iter()
                    .position(|e| (e - &p).amax() < 1e-9)
                    .expect("group closed under products");
            }
        }
        let lattice_actions = elements.iter().map(|w| data.lattice_action(w)).collect();
        Ok(WeylGroup { elements, lattice_actions, table })
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn product(&self, i: usize, j: usize) -> usize {
        self.table[i][j]
    }
}

/// Element of W ⋉ (Λ ⊕ Λ): x ↦ w·x + (λ, μ).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaugeElement {
    pub weyl_index: usize,
    /// Integer lattice coordinates of the dx- and dy-shifts.
    pub shift_x: Vec<i64>,
    pub shift_y: Vec<i64>,
}

impl GaugeElement {
    pub fn identity(rank: usize) -> Self {
        GaugeElement { weyl_index: 0, shift_x: vec![0; rank], shift_y: vec![0; rank] }
    }

    pub fn translation(shift_x: Vec<i64>, shift_y: Vec<i64>) -> Self {
        GaugeElement { weyl_index: 0, shift_x, shift_y }
    }

    /// `self ∘ other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &GaugeElement, group: &WeylGroup) -> GaugeElement {
        let n = &group.lattice_actions[self.weyl_index];
        let act = |v: &[i64]| -> Vec<i64> {
            (0..v.len()).map(|i| (0..v.len()).map(|j| n[(i, j)] * v[j]).sum()).collect()
        };
        let sx: Vec<i64> = act(&other.shift_x).iter().zip(&self.shift_x).map(|(a, b)| a + b).collect();
        let sy: Vec<i64> = act(&other.shift_y).iter().zip(&self.shift_y).map(|(a, b)| a + b).collect();
        GaugeElement { weyl_index: group.product(self.weyl_index, other.weyl_index), shift_x: sx, shift_y: sy }
    }
}

/// Action on a real point `(x-part, y-part)` of length 2r.
pub fn gauge_act(data: &CartanData, group: &WeylGroup, g: &GaugeElement, point: &[f64]) -> Result<Vec<f64>> {
    let r = data.rank;
    if point.len() != 2 * r {
        return Err(Error::DimensionMismatch { expected: 2 * r, got: point.len() });
    }
    let w = &group.elements[g.weyl_index];
    let x = w * DVector::from_column_slice(&point[..r]) + data.lattice_vector(&g.shift_x);
    let y = w * DVector::from_column_slice(&point[r..]) + data.lattice_vector(&g.shift_y);
    Ok(x.iter().chain(y.iter()).copied().collect())
}

/// Action on a complex point; translations only move the real part.
pub fn gauge_act_complex(
    data: &CartanData,
    group: &WeylGroup,
    g: &GaugeElement,
    point: &[Complex64],
) -> Result<Vec<Complex64>> {
    let r = data.rank;
    if point.len() != 2 * r {
        return Err(Error::DimensionMismatch { expected: 2 * r, got: point.len() });
    }
    let re: Vec<f64> = point.iter().map(|z| z.re).collect();
    let im: Vec<f64> = point.iter().map(|z| z.im).collect();
    let re2 = gauge_act(data, group, g, &re)?;
    let w = &group.elements[g.weyl_index];
    let imx = w * DVector::from_column_slice(&im[..r]);
    let imy = w * DVector::from_column_slice(&im[r..]);
    Ok(re2
        .iter()
        .zip(imx.iter().chain(imy.iter()))
        .map(|(&a, &b)| Complex64::new(a, b))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a1_lattice_has_expected_length() {
        let d = CartanData::a1();
        assert_eq!(d.rank, 1);
        assert!((d.lattice_basis[(0, 0)].abs() - 2.0 * PI.sqrt()).abs() < 1e-12);
        assert_eq!(d.integral_coroot_gram().unwrap()[(0, 0)], 2);
    }

    #[test]
    fn su3_coroot_gram_is_cartan_matrix() {
        let d = CartanData::su(3);
        let c = d.integral_coroot_gram().unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[2, -1, -1, 2]));
    }

    #[test]
    fn group_orders() {
        assert_eq!(enumerate_weyl(&CartanData::a1()).unwrap().len(), 2);
        assert_eq!(enumerate_weyl(&CartanData::su(3)).unwrap().len(), 6);
        assert_eq!(enumerate_weyl(&CartanData::su(4)).unwrap().len(), 24);
    }

    #[test]
    fn trivial_generators_give_trivial_group() {
        let d = CartanData::custom(DMatrix::identity(1, 1), vec![DMatrix::identity(1, 1)], DMatrix::from_element(1, 1, 1.0))
            .unwrap();
        assert_eq!(enumerate_weyl(&d).unwrap().len(), 1);
    }

    #[test]
    fn group_bound_is_enforced() {
        let d = CartanData::su(4);
        assert_eq!(enumerate_weyl_bounded(&d, 10), Err(Error::GroupTooLarge(10)));
    }

    #[test]
    fn custom_rejects_non_isometry() {
        let w = DMatrix::from_element(1, 1, 2.0);
        let err = CartanData::custom(DMatrix::identity(1, 1), vec![w], DMatrix::from_element(1, 1, 1.0));
        assert!(err.is_err());
    }

    #[test]
    fn custom_gram_is_orthonormalised() {
        // SU(3) in the simple-coroot basis: gram is the Cartan matrix
        let gram = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let s1 = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 1.0]);
        let s2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, -1.0]);
        let lat = DMatrix::identity(2, 2) * (2.0 * PI).sqrt();
        let d = CartanData::custom(gram, vec![s1, s2], lat).unwrap();
        for w in &d.weyl_generators {
            assert!((w.transpose() * w - DMatrix::identity(2, 2)).amax() < 1e-12);
        }
        assert_eq!(enumerate_weyl(&d).unwrap().len(), 6);
        assert_eq!(d.integral_coroot_gram().unwrap(), DMatrix::from_row_slice(2, 2, &[2, -1, -1, 2]));
    }

    #[test]
    fn weyl_reflection_negates_a1_point() {
        let d = CartanData::a1();
        let g = WeylGroup::new(&d).unwrap();
        let idx = (0..g.order()).find(|&i| g.elements[i][(0, 0)] < 0.0).unwrap();
        let e = GaugeElement { weyl_index: idx, shift_x: vec![0], shift_y: vec![0] };
        let p = gauge_act(&d, &g, &e, &[0.3, -1.2]).unwrap();
        assert!((p[0] + 0.3).abs() < 1e-14 && (p[1] - 1.2).abs() < 1e-14);
        assert!(gauge_act(&d, &g, &e, &[0.3]).is_err());
    }
}
