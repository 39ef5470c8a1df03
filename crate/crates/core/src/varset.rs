//! Small sets of observed-variable indices packed into a `u64`.

use std::fmt;

/// Maximum number of observed variables a search can handle.
pub const MAX_VARS: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct VarSet(u64);

impl VarSet {
    pub const EMPTY: VarSet = VarSet(0);

    pub fn from_bits(bits: u64) -> Self {
        VarSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// The set `{0, 1, ..., n-1}`.
    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_VARS);
        if n == MAX_VARS {
            VarSet(u64::MAX)
        } else {
            VarSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(i: usize) -> Self {
        VarSet(1u64 << i)
    }

    pub fn contains(self, i: usize) -> bool {
        i < MAX_VARS && self.0 & (1u64 << i) != 0
    }

    pub fn with(self, i: usize) -> Self {
        VarSet(self.0 | (1u64 << i))
    }

    pub fn without(self, i: usize) -> Self {
        VarSet(self.0 & !(1u64 << i))
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1u64 << i;
    }

    pub fn union(self, other: VarSet) -> Self {
        VarSet(self.0 | other.0)
    }

    pub fn intersection(self, other: VarSet) -> Self {
        VarSet(self.0 & other.0)
    }

    pub fn difference(self, other: VarSet) -> Self {
        VarSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: VarSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }

    /// All subsets of `self` with at most `max_size` elements, ordered by size
    /// and then lexicographically by their sorted element lists.
    pub fn subsets_up_to(self, max_size: usize) -> Vec<VarSet> {
        let elems = self.to_vec();
        let n = elems.len();
        let mut out = Vec::new();
        for size in 0..=max_size.min(n) {
            let mut idx: Vec<usize> = (0..size).collect();
            loop {
                out.push(idx.iter().map(|&k| elems[k]).collect());
                // rightmost position that can still advance
                let Some(pos) = (0..size).rev().find(|&q| idx[q] < n - size + q) else {
                    break;
                };
                idx[pos] += 1;
                for q in pos + 1..size {
                    idx[q] = idx[q - 1] + 1;
                }
            }
        }
        out
    }
}

impl FromIterator<usize> for VarSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        let mut s = VarSet::EMPTY;
        for i in iter {
            assert!(i < MAX_VARS, "variable index {i} exceeds {MAX_VARS}");
            s.insert(i);
        }
        s
    }
}

impl fmt::Debug for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
