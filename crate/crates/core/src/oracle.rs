//! Population-level answers to the residual and conditional independence
//! queries the search asks, computed from the graph instead of data.
//!
//! A regression residual `x_i - G(m)` keeps the external noise of `x_i` and
//! of every vertex that reaches `x_i` through a parent outside `m`. Two
//! residuals are independent exactly when those noise sets are disjoint.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, PairClass};

/// Vertex sets as bit masks; oracle graphs are small.
pub type Bits = u128;

pub const MAX_ORACLE_VERTICES: usize = 128;

#[derive(Debug, Clone)]
pub struct NoiseOracle<'g> {
    graph: &'g CausalGraph,
    // parents of v
    parents: Vec<Bits>,
    // v and all of its ancestors
    upstream: Vec<Bits>,
    observed: Bits,
}

fn bit(v: usize) -> Bits {
    1 << v
}

pub fn bits_of(vs: impl IntoIterator<Item = usize>) -> Bits {
    vs.into_iter().fold(0, |acc, v| acc | bit(v))
}

pub fn iter_bits(mut b: Bits) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if b == 0 {
            None
        } else {
            let v = b.trailing_zeros() as usize;
            b &= b - 1;
            Some(v)
        }
    })
}

/// Every subset of `mask`, the empty set first.
fn subsets(mask: Bits) -> impl Iterator<Item = Bits> {
    let mut next = Some(0);
    std::iter::from_fn(move || {
        let cur = next?;
        // standard "enumerate submasks upward" step
        let succ = (cur | !mask).wrapping_add(1) & mask;
        next = if succ == 0 { None } else { Some(succ) };
        Some(cur)
    })
}

impl<'g> NoiseOracle<'g> {
    pub fn new(graph: &'g CausalGraph) -> Result<Self> {
        let n = graph.n_vertices();
        if n > MAX_ORACLE_VERTICES {
            return Err(Error::invalid(format!(
                "population oracle supports at most {MAX_ORACLE_VERTICES} vertices, graph has {n}"
            )));
        }
        let parents: Vec<Bits> = (0..n).map(|v| bits_of(graph.parents(v).iter().copied())).collect();
        let mut upstream = vec![0; n];
        for &v in graph.topological_order() {
            upstream[v] = bit(v) | iter_bits(parents[v]).fold(0, |acc, p| acc | upstream[p]);
        }
        Ok(NoiseOracle {
            graph,
            parents,
            upstream,
            observed: bits_of(graph.observed().iter().copied()),
        })
    }

    pub fn graph(&self) -> &'g CausalGraph {
        self.graph
    }

    pub fn observed_bits(&self) -> Bits {
        self.observed
    }

    /// Observed parents of `v`.
    pub fn observed_parents(&self, v: usize) -> Bits {
        self.parents[v] & self.observed
    }

    /// Noise content of the residual of `xi` regressed on `m`.
    pub fn noise_bits(&self, xi: usize, m: Bits) -> Bits {
        iter_bits(self.parents[xi] & !m).fold(bit(xi), |acc, p| acc | self.upstream[p])
    }

    pub fn independent_bits(&self, xi: usize, m: Bits, xj: usize, n: Bits) -> bool {
        self.noise_bits(xi, m) & self.noise_bits(xj, n) == 0
    }

    fn check_regression(&self, xi: usize, m: Bits) -> Result<()> {
        if xi >= self.graph.n_vertices() || !self.graph.is_observed(xi) {
            return Err(Error::invalid(format!("regressed vertex {xi} must be observed")));
        }
        if m & !self.observed != 0 {
            return Err(Error::invalid("regression sets may only contain observed vertices"));
        }
        if m & bit(xi) != 0 {
            return Err(Error::invalid(format!(
                "vertex {} cannot be regressed on itself",
                self.graph.label(xi)
            )));
        }
        Ok(())
    }

    pub fn residual_noise_set(&self, xi: usize, m: &[usize]) -> Result<BTreeSet<usize>> {
        let mb = self.checked_bits(m)?;
        self.check_regression(xi, mb)?;
        Ok(iter_bits(self.noise_bits(xi, mb)).collect())
    }

    pub fn residual_independent(&self, xi: usize, m: &[usize], xj: usize, n: &[usize]) -> Result<bool> {
        let mb = self.checked_bits(m)?;
        let nb = self.checked_bits(n)?;
        self.check_regression(xi, mb)?;
        self.check_regression(xj, nb)?;
        if xi == xj {
            return Err(Error::invalid("residual independence needs two distinct variables"));
        }
        Ok(self.independent_bits(xi, mb, xj, nb))
    }

    fn checked_bits(&self, vs: &[usize]) -> Result<Bits> {
        for &v in vs {
            if v >= self.graph.n_vertices() {
                return Err(Error::invalid(format!("unknown vertex id {v}")));
            }
        }
        Ok(bits_of(vs.iter().copied()))
    }

    /// Evaluates the residual-independence characterisations of an observed
    /// pair with respect to the observed subset `xprime`.
    pub fn lemma_verdict(&self, xi: usize, xj: usize, xprime: Bits, mode: SearchMode) -> LemmaVerdict {
        let pool = match mode {
            SearchMode::Exhaustive => xprime,
            SearchMode::ParentsOnly => (self.observed_parents(xi) | self.observed_parents(xj)) & xprime,
        };
        let (bi, bj) = (bit(xi), bit(xj));
        let exists = |ms: Bits, ns: Bits| {
            subsets(ms).any(|m| subsets(ns).any(|n| self.independent_bits(xi, m, xj, n)))
        };
        let both = pool & !bi & !bj;
        let non_edge = exists(both, both);
        // x_j parent of x_i: dependent while x_j stays out of M, independent once it may enter
        let j_to_i = !exists(both, pool & !bj) && exists(pool & !bi, both);
        let i_to_j = !exists(pool & !bi, both) && exists(both, pool & !bj);
        let invisible = !exists(pool & !bi, pool & !bj);
        LemmaVerdict {
            non_edge,
            j_to_i,
            i_to_j,
            invisible,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Regression sets range over all of the observed subset.
    Exhaustive,
    /// Regression sets restricted to observed parents of the pair.
    ParentsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LemmaVerdict {
    pub non_edge: bool,
    pub j_to_i: bool,
    pub i_to_j: bool,
    pub invisible: bool,
}

impl LemmaVerdict {
    /// The class when exactly one characterisation fires.
    pub fn class(&self, xi: usize, xj: usize) -> Option<PairClass> {
        match (self.non_edge, self.j_to_i, self.i_to_j, self.invisible) {
            (true, false, false, false) => Some(PairClass::VisibleNonEdge),
            (false, true, false, false) => Some(PairClass::VisibleEdge { parent: xj, child: xi }),
            (false, false, true, false) => Some(PairClass::VisibleEdge { parent: xi, child: xj }),
            (false, false, false, true) => Some(PairClass::Invisible),
            _ => None,
        }
    }
}

pub fn residual_noise_set(g: &CausalGraph, xi: usize, m: &[usize]) -> Result<BTreeSet<usize>> {
    NoiseOracle::new(g)?.residual_noise_set(xi, m)
}

pub fn oracle_residual_independent(g: &CausalGraph, xi: usize, m: &[usize], xj: usize, n: &[usize]) -> Result<bool> {
    NoiseOracle::new(g)?.residual_independent(xi, m, xj, n)
}

pub fn oracle_ci(g: &CausalGraph, a: usize, b: usize, z: &[usize]) -> Result<bool> {
    g.d_separated(a, b, z)
}
