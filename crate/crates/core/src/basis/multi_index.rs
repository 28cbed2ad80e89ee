use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of multi-indices of total degree at most `order` in `dim` variables,
/// i.e. `binomial(dim + order, order)`.
pub fn basis_size(dim: usize, order: usize) -> usize {
    let mut acc: u128 = 1;
    for k in 1..=order as u128 {
        acc = acc * (dim as u128 + k) / k;
    }
    acc as usize
}

/// Exponent vectors of total degree `<= order`, in graded lexicographic order.
///
/// Within one total degree, vectors are sorted so that a larger leading
/// exponent comes first: `(1,0)` precedes `(0,1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MultiIndexSetRepr", into = "MultiIndexSetRepr")]
pub struct MultiIndexSet {
    dim: usize,
    order: usize,
    indices: Vec<Vec<u32>>,
    #[serde(skip)]
    lookup: HashMap<Vec<u32>, usize>,
}

#[derive(Serialize, Deserialize)]
struct MultiIndexSetRepr {
    dim: usize,
    order: usize,
}

impl TryFrom<MultiIndexSetRepr> for MultiIndexSet {
    type Error = Error;
    fn try_from(r: MultiIndexSetRepr) -> Result<Self> {
        MultiIndexSet::total_order(r.dim, r.order)
    }
}

impl From<MultiIndexSet> for MultiIndexSetRepr {
    fn from(s: MultiIndexSet) -> Self {
        MultiIndexSetRepr { dim: s.dim, order: s.order }
    }
}

impl MultiIndexSet {
    /// Enumerates every exponent vector with `|alpha| <= order`.
    pub fn total_order(dim: usize, order: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("multi-index dimension must be at least 1"));
        }
        let mut indices = Vec::with_capacity(basis_size(dim, order));
        let mut scratch = vec![0u32; dim];
        for degree in 0..=order as u32 {
            push_compositions(&mut indices, &mut scratch, 0, degree);
        }
        let lookup = indices
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        Ok(Self {
            dim,
            order,
            indices,
            lookup,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.indices[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.indices.iter().map(|v| v.as_slice())
    }

    /// Position of `alpha` in the ordering, if it belongs to the set.
    pub fn position(&self, alpha: &[u32]) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    /// Total degree of the `i`-th index.
    pub fn degree(&self, i: usize) -> u32 {
        self.indices[i].iter().sum()
    }

    /// Number of indices with total degree `<= order`; a prefix of this set.
    pub fn prefix_len(&self, order: usize) -> usize {
        basis_size(self.dim, order.min(self.order))
    }
}

// Fills `scratch[pos..]` with all compositions of `remaining`, leading entry descending.
fn push_compositions(out: &mut Vec<Vec<u32>>, scratch: &mut [u32], pos: usize, remaining: u32) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(scratch.to_vec());
        return;
    }
    for head in (0..=remaining).rev() {
        scratch[pos] = head;
        push_compositions(out, scratch, pos + 1, remaining - head);
    }
    scratch[pos] = 0;
}
