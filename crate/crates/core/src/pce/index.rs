use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Exponent vector of a multivariate polynomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    /// `α! = ∏ α_i!`, the squared norm of the Hermite polynomial He_α.
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&a| (1..=a).fold(1.0, |acc, k| acc * k as f64))
            .product()
    }

    /// Nonzero entries as `(dimension, exponent)` pairs.
    pub fn support(&self) -> Vec<(usize, u32)> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0)
            .map(|(i, &a)| (i, a))
            .collect()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// Ordered set of multi-indices over a common germ dimension, zero index first.
#[derive(Clone, Debug)]
pub struct MultiIndexSet {
    indices: Vec<MultiIndex>,
    sparse: Vec<Vec<(usize, u32)>>,
    germ_dim: usize,
    max_order: u32,
    lookup: HashMap<MultiIndex, usize>,
}

impl PartialEq for MultiIndexSet {
    fn eq(&self, other: &Self) -> bool {
        self.germ_dim == other.germ_dim && self.indices == other.indices
    }
}

fn push_compositions(total: u32, dims: usize, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if dims == 1 {
        prefix.push(total);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        push_compositions(total - first, dims - 1, prefix, out);
        prefix.pop();
    }
}

impl MultiIndexSet {
    /// All multi-indices of total degree ≤ `order`, graded and lexicographically
    /// descending within each degree.
    pub fn total_degree(germ_dim: usize, order: u32) -> Result<Self> {
        if germ_dim == 0 {
            return Err(Error::InvalidArgument("germ_dim must be at least 1".into()));
        }
        let mut out = Vec::new();
        for k in 0..=order {
            push_compositions(k, germ_dim, &mut Vec::with_capacity(germ_dim), &mut out);
        }
        Self::from_indices(germ_dim, out)
    }

    pub fn from_indices(germ_dim: usize, indices: Vec<MultiIndex>) -> Result<Self> {
        if indices.is_empty() || !indices[0].is_zero() {
            return Err(Error::InvalidArgument(
                "index set must start with the zero index".into(),
            ));
        }
        let mut lookup = HashMap::with_capacity(indices.len());
        for (k, idx) in indices.iter().enumerate() {
            if idx.dim() != germ_dim {
                return Err(Error::dim("multi-index length", germ_dim, idx.dim()));
            }
            if lookup.insert(idx.clone(), k).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate multi-index {idx}"
                )));
            }
        }
        let max_order = indices.iter().map(MultiIndex::degree).max().unwrap_or(0);
        let sparse = indices.iter().map(MultiIndex::support).collect();
        Ok(Self {
            indices,
            sparse,
            germ_dim,
            max_order,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn germ_dim(&self) -> usize {
        self.germ_dim
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, k: usize) -> &MultiIndex {
        &self.indices[k]
    }

    pub(crate) fn sparse(&self, k: usize) -> &[(usize, u32)] {
        &self.sparse[k]
    }

    pub fn position(&self, idx: &MultiIndex) -> Option<usize> {
        self.lookup.get(idx).copied()
    }

    /// Place this set on germ components `offset..offset+germ_dim` of a `total_dim` germ.
    pub fn embed(&self, offset: usize, total_dim: usize) -> Result<Self> {
        if offset + self.germ_dim > total_dim {
            return Err(Error::GermCollision(format!(
                "block {}..{} exceeds germ dimension {total_dim}",
                offset,
                offset + self.germ_dim
            )));
        }
        let indices = self
            .indices
            .iter()
            .map(|idx| {
                let mut v = vec![0; total_dim];
                v[offset..offset + self.germ_dim].copy_from_slice(&idx.0);
                MultiIndex(v)
            })
            .collect();
        Self::from_indices(total_dim, indices)
    }

    /// Indices of `self` followed by the indices of `other` not already present.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.germ_dim != other.germ_dim {
            return Err(Error::dim(
                "germ dimension in union",
                self.germ_dim,
                other.germ_dim,
            ));
        }
        let mut indices = self.indices.clone();
        for idx in &other.indices {
            if self.position(idx).is_none() {
                indices.push(idx.clone());
            }
        }
        Self::from_indices(self.germ_dim, indices)
    }

    /// Subset of the set, keeping the given positions in order.
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        Self::from_indices(
            self.germ_dim,
            keep.iter().map(|&k| self.indices[k].clone()).collect(),
        )
    }
}

pub fn total_degree_index_set(germ_dim: usize, order: u32) -> Result<MultiIndexSet> {
    MultiIndexSet::total_degree(germ_dim, order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    #[test]
    fn cardinalities() {
        assert_eq!(total_degree_index_set(2, 2).unwrap().len(), 6);
        assert_eq!(total_degree_index_set(3, 4).unwrap().len(), 35);
        let s = total_degree_index_set(1, 0).unwrap();
        assert_eq!(s.indices(), &[MultiIndex(vec![0])]);
        for d in 1..5 {
            for p in 0..6 {
                let s = total_degree_index_set(d, p).unwrap();
                assert_eq!(s.len() as u64, binom(d as u64 + p as u64, p as u64));
            }
        }
    }

    #[test]
    fn graded_lex_order() {
        let s = total_degree_index_set(3, 2).unwrap();
        let got: Vec<Vec<u32>> = s.indices().iter().map(|m| m.0.clone()).collect();
        let want = vec![
            vec![0, 0, 0],
            vec![1, 0, 0],
            vec![0, 1, 0],
            vec![0, 0, 1],
            vec![2, 0, 0],
            vec![1, 1, 0],
            vec![1, 0, 1],
            vec![0, 2, 0],
            vec![0, 1, 1],
            vec![0, 0, 2],
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn embed_and_union() {
        let a = total_degree_index_set(2, 1).unwrap().embed(0, 4).unwrap();
        let b = total_degree_index_set(2, 1).unwrap().embed(2, 4).unwrap();
        let u = a.union(&b).unwrap();
        assert_eq!(u.len(), 5);
        assert!(u.get(0).is_zero());
        assert_eq!(u.position(&MultiIndex(vec![0, 0, 0, 1])), Some(4));
        assert!(total_degree_index_set(2, 1).unwrap().embed(3, 4).is_err());
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(MultiIndexSet::from_indices(1, vec![MultiIndex(vec![1])]).is_err());
        assert!(
            MultiIndexSet::from_indices(1, vec![MultiIndex(vec![0]), MultiIndex(vec![0])]).is_err()
        );
        assert!(total_degree_index_set(0, 2).is_err());
    }
}
