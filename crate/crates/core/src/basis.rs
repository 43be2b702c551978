//! Graded multi-index bases truncated at a total degree.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// All multi-indices `n ∈ ℕ^vars` with `|n| ≤ degree`, ordered by total degree
/// and then lexicographically (largest first component first).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiIndexBasis {
    pub vars: usize,
    pub degree: usize,
    indices: Vec<Vec<u32>>,
    lookup: HashMap<Vec<u32>, usize>,
    /// Start offset of each total degree, plus the final length.
    offsets: Vec<usize>,
}

fn push_degree(vars: usize, d: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == vars {
        prefix.push(d);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=d).rev() {
        prefix.push(first);
        push_degree(vars, d - first, prefix, out);
        prefix.pop();
    }
}

impl MultiIndexBasis {
    pub fn new(vars: usize, degree: usize) -> Self {
        assert!(vars > 0, "basis needs at least one variable");
        let mut indices = Vec::new();
        let mut offsets = Vec::with_capacity(degree + 2);
        for d in 0..=degree as u32 {
            offsets.push(indices.len());
            push_degree(vars, d, &mut Vec::with_capacity(vars), &mut indices);
        }
        offsets.push(indices.len());
        let lookup = indices.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        MultiIndexBasis { vars, degree, indices, lookup, offsets }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index(&self, i: usize) -> &[u32] {
        &self.indices[i]
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    pub fn position(&self, n: &[u32]) -> Option<usize> {
        self.lookup.get(n).copied()
    }

    pub fn total_degree(&self, i: usize) -> usize {
        self.indices[i].iter().map(|&x| x as usize).sum()
    }

    /// Number of basis elements of total degree ≤ d.
    pub fn count_up_to(&self, d: usize) -> usize {
        self.offsets[d.min(self.degree) + 1]
    }

    /// Position of `n ± e_var`, if inside the truncation.
    pub fn shifted(&self, i: usize, var: usize, up: bool) -> Option<usize> {
        let mut n = self.indices[i].clone();
        if up {
            n[var] += 1;
        } else {
            if n[var] == 0 {
                return None;
            }
            n[var] -= 1;
        }
        self.position(&n)
    }

    pub fn check_same(&self, other: &MultiIndexBasis) -> Result<()> {
        if self.vars != other.vars || self.degree != other.degree {
            return Err(Error::BasisMismatch);
        }
        Ok(())
    }
}

/// `n!` as a float (exact for n ≤ 22).
pub fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `α! = Π α_j!`
pub fn multi_factorial(n: &[u32]) -> f64 {
    n.iter().map(|&k| factorial(k)).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_are_binomial() {
        // C(N + v, v)
        assert_eq!(MultiIndexBasis::new(2, 3).len(), 10);
        assert_eq!(MultiIndexBasis::new(4, 6).len(), 210);
        assert_eq!(MultiIndexBasis::new(1, 5).len(), 6);
    }

    #[test]
    fn graded_order_and_lookup() {
        let b = MultiIndexBasis::new(3, 4);
        for i in 0..b.len() {
            assert_eq!(b.position(b.index(i)), Some(i));
            if i > 0 {
                assert!(b.total_degree(i) >= b.total_degree(i - 1));
            }
        }
        assert_eq!(b.count_up_to(0), 1);
        assert_eq!(b.count_up_to(1), 4);
        assert_eq!(b.shifted(0, 1, true), b.position(&[0, 1, 0]));
        assert_eq!(b.shifted(0, 1, false), None);
    }
}
