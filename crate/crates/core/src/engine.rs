//! Independence-query backends for the search.
//!
//! Queries are phrased over observed column indices. A query returns a
//! p-value; the search declares independence when `p > alpha`. The
//! population oracle answers with exactly `1.0` or `0.0`.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;

use crate::error::{Error, Result};
use crate::gam::AdditiveDesign;
use crate::graph::CausalGraph;
use crate::oracle::{Bits, NoiseOracle};
use crate::stats::cmi::{cmi_knn_pvalue, CmiParams};
use crate::stats::hsic::{hsic_gamma, HsicKernel};
use crate::synth::Dataset;
use crate::varset::VarSet;

pub trait TestEngine {
    fn n_vars(&self) -> usize;

    /// p-value for `x_i - G(m)` independent of `x_j - G(n)`.
    fn residual_pvalue(&self, i: usize, m: VarSet, j: usize, n: VarSet) -> Result<f64>;

    /// p-value for `x_x` independent of `x_y` given `x_z`.
    fn ci_pvalue(&self, x: usize, y: usize, z: VarSet) -> Result<f64>;
}

pub(crate) fn check_regression(p: usize, i: usize, m: VarSet) -> Result<()> {
    if i >= p || !m.is_subset(VarSet::full(p)) {
        return Err(Error::invalid(format!("query on variable {i} or set {m:?} is out of range for p = {p}")));
    }
    if m.contains(i) {
        return Err(Error::invalid(format!("variable {i} cannot be regressed on itself")));
    }
    Ok(())
}

pub(crate) fn check_pair(p: usize, i: usize, m: VarSet, j: usize, n: VarSet) -> Result<()> {
    check_regression(p, i, m)?;
    check_regression(p, j, n)?;
    if i == j {
        return Err(Error::invalid("independence query needs two distinct variables"));
    }
    Ok(())
}

/// Exact answers derived from a known graph.
#[derive(Debug, Clone)]
pub struct OracleEngine<'g> {
    oracle: NoiseOracle<'g>,
    vertex: Vec<usize>,
}

impl<'g> OracleEngine<'g> {
    pub fn new(graph: &'g CausalGraph) -> Result<Self> {
        if graph.n_observed() < 2 {
            return Err(Error::invalid("need at least two observed variables"));
        }
        Ok(OracleEngine {
            oracle: NoiseOracle::new(graph)?,
            vertex: graph.observed().to_vec(),
        })
    }

    pub fn graph(&self) -> &'g CausalGraph {
        self.oracle.graph()
    }

    fn to_bits(&self, s: VarSet) -> Bits {
        s.iter().fold(0, |acc, c| acc | (1 << self.vertex[c]))
    }
}

impl TestEngine for OracleEngine<'_> {
    fn n_vars(&self) -> usize {
        self.vertex.len()
    }

    fn residual_pvalue(&self, i: usize, m: VarSet, j: usize, n: VarSet) -> Result<f64> {
        check_pair(self.n_vars(), i, m, j, n)?;
        let indep = self
            .oracle
            .independent_bits(self.vertex[i], self.to_bits(m), self.vertex[j], self.to_bits(n));
        Ok(if indep { 1.0 } else { 0.0 })
    }

    fn ci_pvalue(&self, x: usize, y: usize, z: VarSet) -> Result<f64> {
        let p = self.n_vars();
        if x >= p || y >= p || x == y || z.contains(x) || z.contains(y) || !z.is_subset(VarSet::full(p)) {
            return Err(Error::invalid("malformed conditional independence query"));
        }
        let zs: Vec<usize> = z.iter().map(|c| self.vertex[c]).collect();
        let sep = self.graph().d_separated(self.vertex[x], self.vertex[y], &zs)?;
        Ok(if sep { 1.0 } else { 0.0 })
    }
}

type ResidualKey = (usize, VarSet);

const KERNEL_CACHE_BYTES: usize = 256 << 20;

/// Finite-sample answers: additive-spline residuals compared by HSIC, and
/// conditional independence by the kNN mutual-information test.
///
/// Residuals, kernel matrices and p-values are memoised, so repeated
/// queries during a search are cheap.
pub struct SampleEngine {
    design: AdditiveDesign,
    columns: Vec<Vec<f64>>,
    cmi: CmiParams,
    seed: u64,
    residuals: Mutex<HashMap<ResidualKey, Arc<Vec<f64>>>>,
    kernels: Mutex<LruCache<ResidualKey, Arc<HsicKernel>>>,
    residual_p: Mutex<HashMap<(ResidualKey, ResidualKey), f64>>,
    ci_p: Mutex<HashMap<(usize, usize, VarSet), f64>>,
}

impl std::fmt::Debug for SampleEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SampleEngine")
            .field("n", &self.design.n())
            .field("p", &self.design.p())
            .field("cmi", &self.cmi)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl SampleEngine {
    pub fn new(data: &Dataset, seed: u64) -> Result<Self> {
        Self::with_params(data, seed, CmiParams::default())
    }

    pub fn with_params(data: &Dataset, seed: u64, cmi: CmiParams) -> Result<Self> {
        if data.p() < 2 {
            return Err(Error::invalid("need at least two observed variables"));
        }
        let min = crate::stats::cmi::MIN_SAMPLES;
        if data.n() < min {
            return Err(Error::invalid(format!(
                "finite-sample search needs at least {min} samples, got {}",
                data.n()
            )));
        }
        let columns = data.columns().to_vec();
        let kernel_bytes = data.n() * (data.n() + 1) / 2 * std::mem::size_of::<f64>();
        let slots = (KERNEL_CACHE_BYTES / kernel_bytes).max(8);
        Ok(SampleEngine {
            design: AdditiveDesign::new(&columns)?,
            columns,
            cmi,
            seed,
            residuals: Mutex::new(HashMap::new()),
            kernels: Mutex::new(LruCache::new(NonZeroUsize::new(slots).expect("slots > 0"))),
            residual_p: Mutex::new(HashMap::new()),
            ci_p: Mutex::new(HashMap::new()),
        })
    }

    /// Residual of column `i` after an additive fit on `m`.
    pub fn residual(&self, i: usize, m: VarSet) -> Result<Arc<Vec<f64>>> {
        check_regression(self.n_vars(), i, m)?;
        if let Some(r) = self.residuals.lock().expect("cache lock").get(&(i, m)) {
            return Ok(Arc::clone(r));
        }
        let r = Arc::new(self.design.residual(i, &m.to_vec())?);
        self.residuals.lock().expect("cache lock").insert((i, m), Arc::clone(&r));
        Ok(r)
    }

    fn kernel(&self, i: usize, m: VarSet) -> Result<Arc<HsicKernel>> {
        if let Some(k) = self.kernels.lock().expect("cache lock").get(&(i, m)) {
            return Ok(Arc::clone(k));
        }
        let k = Arc::new(HsicKernel::new(&self.residual(i, m)?)?);
        self.kernels.lock().expect("cache lock").put((i, m), Arc::clone(&k));
        Ok(k)
    }

    /// Seed for a CI query, fixed by the engine seed and the query itself.
    fn query_seed(&self, x: usize, y: usize, z: VarSet) -> u64 {
        let mut h = self.seed;
        for v in [x as u64, y as u64, z.bits()] {
            h = splitmix(h ^ v);
        }
        h
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl TestEngine for SampleEngine {
    fn n_vars(&self) -> usize {
        self.design.p()
    }

    fn residual_pvalue(&self, i: usize, m: VarSet, j: usize, n: VarSet) -> Result<f64> {
        check_pair(self.n_vars(), i, m, j, n)?;
        let key = if (i, m.bits()) <= (j, n.bits()) { ((i, m), (j, n)) } else { ((j, n), (i, m)) };
        if let Some(&p) = self.residual_p.lock().expect("cache lock").get(&key) {
            return Ok(p);
        }
        let (a, b) = key;
        let p = hsic_gamma(&*self.kernel(a.0, a.1)?, &*self.kernel(b.0, b.1)?)?.p_value;
        self.residual_p.lock().expect("cache lock").insert(key, p);
        Ok(p)
    }

    fn ci_pvalue(&self, x: usize, y: usize, z: VarSet) -> Result<f64> {
        let p = self.n_vars();
        if x >= p || y >= p || x == y || z.contains(x) || z.contains(y) || !z.is_subset(VarSet::full(p)) {
            return Err(Error::invalid("malformed conditional independence query"));
        }
        let (x, y) = (x.min(y), x.max(y));
        if let Some(&pv) = self.ci_p.lock().expect("cache lock").get(&(x, y, z)) {
            return Ok(pv);
        }
        let zs: Vec<&[f64]> = z.iter().map(|c| self.columns[c].as_slice()).collect();
        let r = cmi_knn_pvalue(&self.columns[x], &self.columns[y], &zs, self.cmi, self.query_seed(x, y, z))?;
        self.ci_p.lock().expect("cache lock").insert((x, y, z), r.p_value);
        Ok(r.p_value)
    }
}
