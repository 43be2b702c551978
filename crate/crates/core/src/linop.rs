//! Sparse complex operators on truncated bases.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};

use crate::basis::MultiIndexBasis;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Hermite,
    Fock,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub kind: BasisKind,
    pub vars: usize,
    pub degree: usize,
}

/// Square operator on one truncated basis. Output beyond the truncation is dropped,
/// so products are exact only on inputs with enough degree headroom.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    pub basis: BasisDescriptor,
    pub matrix: CsMat<Complex64>,
    /// Upper bound on how far the operator raises total degree.
    pub degree_shift: i32,
}

impl LinearOperator {
    pub fn from_triplets(basis: BasisDescriptor, dim: usize, entries: &[(usize, usize, Complex64)], degree_shift: i32) -> Self {
        let mut tri = TriMat::new((dim, dim));
        for &(r, c, v) in entries {
            if v != Complex64::new(0.0, 0.0) {
                tri.add_triplet(r, c, v);
            }
        }
        LinearOperator { basis, matrix: tri.to_csr(), degree_shift }
    }

    pub fn zeros(basis: BasisDescriptor, dim: usize) -> Self {
        Self::from_triplets(basis, dim, &[], 0)
    }

    pub fn identity(basis: BasisDescriptor, dim: usize) -> Self {
        LinearOperator { basis, matrix: CsMat::eye(dim), degree_shift: 0 }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.dim()];
        for (r, row) in self.matrix.outer_iterator().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, &v) in row.iter() {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        y
    }

    /// Applies with a headroom check: the input's top degree plus the shift must fit.
    pub fn apply_checked(&self, basis: &MultiIndexBasis, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let top = top_degree(basis, x, 0.0);
        let need = top as i64 + self.degree_shift as i64;
        if need > basis.degree as i64 {
            return Err(Error::DegreeOverflow { degree: need as usize, allowed: basis.degree });
        }
        Ok(self.apply(x))
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &LinearOperator) -> LinearOperator {
        LinearOperator {
            basis: self.basis,
            matrix: &self.matrix * &other.matrix,
            degree_shift: self.degree_shift + other.degree_shift,
        }
    }

    pub fn add(&self, other: &LinearOperator) -> LinearOperator {
        LinearOperator {
            basis: self.basis,
            matrix: &self.matrix + &other.matrix,
            degree_shift: self.degree_shift.max(other.degree_shift),
        }
    }

    pub fn sub(&self, other: &LinearOperator) -> LinearOperator {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> LinearOperator {
        LinearOperator { basis: self.basis, matrix: self.matrix.map(|&v| v * s), degree_shift: self.degree_shift }
    }

    pub fn scale_re(&self, s: f64) -> LinearOperator {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn commutator(&self, other: &LinearOperator) -> LinearOperator {
        self.compose(other).sub(&other.compose(self))
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (r, row) in self.matrix.outer_iterator().enumerate() {
            for (c, &v) in row.iter() {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn triplets(&self) -> Vec<(usize, usize, Complex64)> {
        let mut out = Vec::with_capacity(self.matrix.nnz());
        for (r, row) in self.matrix.outer_iterator().enumerate() {
            for (c, &v) in row.iter() {
                out.push((r, c, v));
            }
        }
        out
    }

    /// Frobenius norm of the columns whose input degree is ≤ `max_in_degree`.
    pub fn norm_on(&self, basis: &MultiIndexBasis, max_in_degree: usize) -> f64 {
        let cols = basis.count_up_to(max_in_degree);
        let mut s = 0.0;
        for row in self.matrix.outer_iterator() {
            for (c, v) in row.iter() {
                if c < cols {
                    s += v.norm_sqr();
                }
            }
        }
        s.sqrt()
    }

    /// Frobenius distance to `other` on inputs of degree ≤ `max_in_degree`.
    pub fn distance_on(&self, other: &LinearOperator, basis: &MultiIndexBasis, max_in_degree: usize) -> f64 {
        self.sub(other).norm_on(basis, max_in_degree)
    }

    /// Relative version of [`distance_on`], normalised by the larger operand.
    pub fn relative_distance_on(&self, other: &LinearOperator, basis: &MultiIndexBasis, max_in_degree: usize) -> f64 {
        let d = self.distance_on(other, basis, max_in_degree);
        let s = self.norm_on(basis, max_in_degree).max(other.norm_on(basis, max_in_degree)).max(1.0);
        d / s
    }
}

/// Highest total degree carrying a coefficient of modulus above `tol`.
pub fn top_degree(basis: &MultiIndexBasis, x: &[Complex64], tol: f64) -> usize {
    x.iter()
        .enumerate()
        .filter(|(_, v)| v.norm() > tol)
        .map(|(i, _)| basis.total_degree(i))
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc() -> BasisDescriptor {
        BasisDescriptor { kind: BasisKind::Fock, vars: 1, degree: 3 }
    }

    #[test]
    fn compose_and_commutator() {
        let d = desc();
        let up = LinearOperator::from_triplets(d, 4, &[(1, 0, 1.0.into()), (2, 1, 1.0.into()), (3, 2, 1.0.into())], 1);
        let down = LinearOperator::from_triplets(d, 4, &[(0, 1, 1.0.into()), (1, 2, 2.0.into()), (2, 3, 3.0.into())], -1);
        let c = down.commutator(&up).to_dense();
        // [∂, z] = 1 away from the truncation edge
        for i in 0..3 {
            assert!((c[(i, i)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let x = vec![1.0.into(), 0.0.into(), 0.0.into(), 0.0.into()];
        assert_eq!(up.apply(&x)[1], Complex64::new(1.0, 0.0));
        let b = MultiIndexBasis::new(1, 3);
        let top = vec![0.0.into(), 0.0.into(), 0.0.into(), 1.0.into()];
        assert!(up.apply_checked(&b, &top).is_err());
        assert!(up.apply_checked(&b, &x).is_ok());
    }
}
