//! Conditional mutual information from k-nearest-neighbour counts in rank
//! space, with a local permutation null.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use super::{TestParams, TestResult};
use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CmiParams {
    pub k: usize,
    pub k_perm: usize,
    pub permutations: usize,
}

impl Default for CmiParams {
    fn default() -> Self {
        CmiParams {
            k: 10,
            k_perm: 5,
            permutations: 500,
        }
    }
}

/// Ranks of `x` after adding a tiny uniform jitter; ties in the input are
/// broken at random.
fn jittered_ranks(x: &[f64], rng: &mut ChaCha8Rng) -> Vec<u32> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let jittered: Vec<f64> = x.iter().map(|v| v + 1e-6 * std * rng.gen::<f64>()).collect();
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| jittered[a].total_cmp(&jittered[b]));
    let mut rank = vec![0u32; x.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r as u32;
    }
    rank
}

// Dense max-norm distance matrix over several ranked columns.
fn max_dist(cols: &[&[u32]], n: usize) -> Vec<u32> {
    let mut d = vec![0u32; n * n];
    for c in cols {
        for a in 0..n {
            let row = &mut d[a * n..(a + 1) * n];
            for (b, slot) in row.iter_mut().enumerate() {
                *slot = (*slot).max(c[a].abs_diff(c[b]));
            }
        }
    }
    d
}

struct Prepared {
    n: usize,
    k: usize,
    y_z: Vec<u32>,
    // None when the conditioning set is empty
    z: Option<Vec<u32>>,
}

impl Prepared {
    /// CMI estimate for the ranked `x` column.
    fn cmi(&self, x: &[u32], scratch: &mut Vec<u32>) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for a in 0..n {
            let yz = &self.y_z[a * n..(a + 1) * n];
            scratch.clear();
            scratch.extend((0..n).map(|b| x[a].abs_diff(x[b]).max(yz[b])));
            // self sits at distance zero, so index k is the k-th neighbour
            let (_, &mut eps, _) = scratch.select_nth_unstable(self.k);
            let (mut k_xz, mut k_yz, mut k_z) = (0usize, 0usize, 0usize);
            match &self.z {
                Some(z) => {
                    let zr = &z[a * n..(a + 1) * n];
                    for b in 0..n {
                        if zr[b] < eps {
                            k_z += 1;
                            if x[a].abs_diff(x[b]) < eps {
                                k_xz += 1;
                            }
                        }
                        if yz[b] < eps {
                            k_yz += 1;
                        }
                    }
                }
                None => {
                    k_z = n;
                    for b in 0..n {
                        if x[a].abs_diff(x[b]) < eps {
                            k_xz += 1;
                        }
                        if yz[b] < eps {
                            k_yz += 1;
                        }
                    }
                }
            }
            acc += digamma(k_xz as f64) + digamma(k_yz as f64) - digamma(k_z as f64);
        }
        digamma(self.k as f64) - acc / n as f64
    }
}

/// Nearest neighbours of every sample in the conditioning space, self first.
fn z_neighbours(z: &[u32], n: usize, k: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|a| {
            let row = &z[a * n..(a + 1) * n];
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by_key(|&b| (row[b], b != a, b));
            idx.truncate(k);
            idx
        })
        .collect()
}

/// Draws a permutation in which every sample takes the value of one of its
/// conditioning-space neighbours, avoiding reuse where possible.
fn restricted_permutation(neighbours: &[Vec<usize>], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = neighbours.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut shuffled: Vec<Vec<usize>> = neighbours.to_vec();
    for list in &mut shuffled {
        list.shuffle(rng);
    }
    let mut used = vec![false; n];
    let mut perm = vec![0; n];
    for &a in &order {
        let list = &shuffled[a];
        let mut m = 0;
        while used[list[m]] && m + 1 < list.len() {
            m += 1;
        }
        perm[a] = list[m];
        used[list[m]] = true;
    }
    perm
}

/// Tests `x _||_ y | z`. The p-value is the fraction of permuted estimates
/// at least as large as the observed one.
pub fn cmi_knn_pvalue(x: &[f64], y: &[f64], z: &[&[f64]], params: CmiParams, seed: u64) -> Result<TestResult> {
    let n = x.len();
    if y.len() != n || z.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("CMI columns differ in length"));
    }
    if params.k == 0 || params.k_perm == 0 || params.permutations == 0 {
        return Err(Error::invalid("CMI parameters must be positive"));
    }
    let min = MIN_SAMPLES.max(params.k.max(params.k_perm) + 1);
    if n < min {
        return Err(Error::invalid(format!("CMI test needs at least {min} samples, got {n}")));
    }
    if x.iter().chain(y).chain(z.iter().flat_map(|c| c.iter())).any(|v| !v.is_finite()) {
        return Err(Error::invalid("CMI input contains non-finite values"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xr = jittered_ranks(x, &mut rng);
    let yr = jittered_ranks(y, &mut rng);
    let zr: Vec<Vec<u32>> = z.iter().map(|c| jittered_ranks(c, &mut rng)).collect();
    let z_refs: Vec<&[u32]> = zr.iter().map(|c| c.as_slice()).collect();
    let mut yz_refs = z_refs.clone();
    yz_refs.push(&yr);

    let prep = Prepared {
        n,
        k: params.k,
        y_z: max_dist(&yz_refs, n),
        z: (!z.is_empty()).then(|| max_dist(&z_refs, n)),
    };
    let observed = prep.cmi(&xr, &mut Vec::with_capacity(n));
    let neighbours = prep.z.as_ref().map(|d| z_neighbours(d, n, params.k_perm));

    let exceed: usize = (0..params.permutations)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |scratch, r| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64 + 1);
                let perm = match &neighbours {
                    Some(nb) => restricted_permutation(nb, &mut rng),
                    None => {
                        let mut p: Vec<usize> = (0..n).collect();
                        p.shuffle(&mut rng);
                        p
                    }
                };
                let xp: Vec<u32> = perm.iter().map(|&i| xr[i]).collect();
                usize::from(prep.cmi(&xp, scratch) >= observed)
            },
        )
        .sum();

    Ok(TestResult {
        statistic: observed,
        p_value: exceed as f64 / params.permutations as f64,
        params: TestParams::CmiKnn {
            k: params.k,
            k_perm: params.k_perm,
            permutations: params.permutations,
        },
        seed: Some(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn quick() -> CmiParams {
        CmiParams {
            permutations: 100,
            ..CmiParams::default()
        }
    }

    #[test]
    fn ranks_are_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut r = jittered_ranks(&[3.0, 1.0, 2.0, 1.0], &mut rng);
        assert_eq!(r[0], 3);
        assert_eq!(r[2], 2);
        r.sort();
        assert_eq!(r, vec![0, 1, 2, 3]);
    }

    #[test]
    fn restricted_permutation_stays_local() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nb: Vec<Vec<usize>> = (0..20).map(|a| vec![a, (a + 1) % 20, (a + 19) % 20]).collect();
        let p = restricted_permutation(&nb, &mut rng);
        for (a, &b) in p.iter().enumerate() {
            assert!(nb[a].contains(&b));
        }
    }

    #[test]
    fn chain_is_dependent_then_screened_off() {
        let n = 300;
        let x = normals(n, 2);
        let z: Vec<f64> = x.iter().zip(normals(n, 3)).map(|(a, e)| a.tanh() * 2.0 + 0.3 * e).collect();
        let y: Vec<f64> = z.iter().zip(normals(n, 4)).map(|(a, e)| a * a + 0.3 * e).collect();
        let marginal = cmi_knn_pvalue(&x, &y, &[], quick(), 7).unwrap();
        assert!(marginal.p_value < 0.01, "{marginal:?}");
        let cond = cmi_knn_pvalue(&x, &y, &[&z], quick(), 7).unwrap();
        assert!(cond.p_value > 0.05, "{cond:?}");
    }

    #[test]
    fn conditioning_on_x_itself_keeps_y_dependence_out() {
        let n = 200;
        let x = normals(n, 5);
        let y: Vec<f64> = x.iter().zip(normals(n, 6)).map(|(a, e)| a + 0.5 * e).collect();
        let r = cmi_knn_pvalue(&x, &y, &[&y], quick(), 3).unwrap();
        assert!(r.p_value > 0.01, "{r:?}");
        let dep = cmi_knn_pvalue(&x, &y, &[], quick(), 3).unwrap();
        assert!(dep.p_value < 0.01);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let x = normals(80, 8);
        let y = normals(80, 9);
        let z = normals(80, 10);
        let a = cmi_knn_pvalue(&x, &y, &[&z], quick(), 11).unwrap();
        let b = cmi_knn_pvalue(&x, &y, &[&z], quick(), 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_short_input() {
        let x = normals(8, 1);
        assert!(cmi_knn_pvalue(&x, &x, &[], quick(), 0).is_err());
    }
}
