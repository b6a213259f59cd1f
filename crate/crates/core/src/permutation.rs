//! Permutations of `1..=K`.
//!
//! A [`Permutation`] doubles as a rank ordering (entry `j` is the entity in
//! position `j`) and as a choice order (entry `j` is the rank allocated at
//! stage `j`). All public constructors and accessors are 1-based; the
//! 0-based storage is exposed only through [`Permutation::as_zero_based`].

use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, EplError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    elems: Vec<usize>,
}

impl Permutation {
    /// Validates a 1-based sequence as a permutation of `1..=len`.
    pub fn new(seq: Vec<usize>) -> Result<Self> {
        let k = seq.len();
        if k == 0 {
            return Err(EplError::EmptyPermutation);
        }
        let mut seen = vec![false; k];
        let mut elems = seq;
        for e in elems.iter_mut() {
            let v = *e;
            if v == 0 || v > k {
                return Err(EplError::OutOfRange { value: v, k });
            }
            if seen[v - 1] {
                return Err(EplError::DuplicateEntry { value: v });
            }
            seen[v - 1] = true;
            *e = v - 1;
        }
        Ok(Permutation { elems })
    }

    pub fn from_zero_based(seq: Vec<usize>) -> Result<Self> {
        Permutation::new(seq.into_iter().map(|v| v + 1).collect())
    }

    /// Caller guarantees `elems` is a valid 0-based permutation.
    pub(crate) fn from_zero_based_unchecked(elems: Vec<usize>) -> Self {
        debug_assert!(Permutation::from_zero_based(elems.clone()).is_ok());
        Permutation { elems }
    }

    pub fn identity(k: usize) -> Self {
        assert!(k >= 1, "identity permutation needs K >= 1");
        Permutation {
            elems: (0..k).collect(),
        }
    }

    /// `(K, K-1, ..., 1)`.
    pub fn reversed_identity(k: usize) -> Self {
        Permutation::identity(k).reverse()
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 1-based entry at 1-based position `i`.
    pub fn get(&self, i: usize) -> usize {
        self.elems[i - 1] + 1
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.elems.iter().map(|v| v + 1).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.elems.iter().map(|v| v + 1)
    }

    pub fn as_zero_based(&self) -> &[usize] {
        &self.elems
    }

    pub fn is_identity(&self) -> bool {
        self.elems.iter().enumerate().all(|(i, &v)| i == v)
    }

    /// `z = self ∘ other`, i.e. `z_i = self_{other_i}`.
    pub fn compose(&self, other: &Permutation) -> Result<Permutation> {
        check_dim(self.len(), other.len())?;
        Ok(Permutation {
            elems: other.elems.iter().map(|&j| self.elems[j]).collect(),
        })
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.len()];
        for (i, &v) in self.elems.iter().enumerate() {
            inv[v] = i;
        }
        Permutation { elems: inv }
    }

    pub fn reverse(&self) -> Permutation {
        let mut elems = self.elems.clone();
        elems.reverse();
        Permutation { elems }
    }

    /// Indices of `values` from largest to smallest; ties go to the lower index.
    pub fn order_desc(values: &[f64]) -> Result<Permutation> {
        if values.is_empty() {
            return Err(EplError::EmptyPermutation);
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(EplError::invalid(format!(
                "order_desc needs finite positive values, entry {} is {v}",
                i + 1
            )));
        }
        let mut elems: Vec<usize> = (0..values.len()).collect();
        // stable sort keeps index order among equal values
        elems.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        Ok(Permutation { elems })
    }

    /// Applies the permutation to a slice: `out_i = values_{self_i}`.
    pub fn apply<T: Clone>(&self, values: &[T]) -> Result<Vec<T>> {
        check_dim(self.len(), values.len())?;
        Ok(self.elems.iter().map(|&j| values[j].clone()).collect())
    }

    /// Swaps the entries in 1-based positions `a` and `b`.
    pub fn swap_positions(&mut self, a: usize, b: usize) {
        self.elems.swap(a - 1, b - 1);
    }

    /// Moves the entry at 1-based position `from` so it ends up at position `to`.
    pub fn insert_move(&mut self, from: usize, to: usize) {
        let v = self.elems.remove(from - 1);
        self.elems.insert(to - 1, v);
    }

    /// Dash-joined 1-based form, e.g. `2-3-1`.
    pub fn to_dashed(&self) -> String {
        self.join("-")
    }

    fn join(&self, sep: &str) -> String {
        self.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(sep)
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.join(","))
    }
}

impl FromStr for Permutation {
    type Err = EplError;

    /// Accepts `2,3,1`, `2-3-1`, `(2, 3, 1)` or whitespace separated entries.
    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim().trim_start_matches('(').trim_end_matches(')');
        let seq = trimmed
            .split(|c: char| c == ',' || c == '-' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| EplError::invalid(format!("not a permutation entry: {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Permutation::new(seq)
    }
}

/// Iterates over all of `S_K` in lexicographic order.
pub fn all_permutations(k: usize) -> AllPermutations {
    AllPermutations {
        next: Some((0..k).collect()),
    }
}

pub struct AllPermutations {
    next: Option<Vec<usize>>,
}

impl Iterator for AllPermutations {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        let current = self.next.take()?;
        if current.is_empty() {
            return None;
        }
        let mut succ = current.clone();
        if next_lexicographic(&mut succ) {
            self.next = Some(succ);
        }
        Some(Permutation { elems: current })
    }
}

fn next_lexicographic(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

pub fn factorial(k: usize) -> usize {
    (1..=k).product()
}
