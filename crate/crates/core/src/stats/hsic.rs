//! HSIC with Gaussian kernels and a moment-matched gamma null.

use statrs::function::gamma::gamma_ur;

use super::{TestParams, TestResult};
use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 20;

/// Centred Gaussian Gram matrix of one column, upper triangle packed by rows.
#[derive(Debug, Clone)]
pub struct HsicKernel {
    n: usize,
    width: f64,
    centered: Vec<f64>,
    // mean of the off-diagonal entries of the uncentred matrix
    off_mean: f64,
}

fn row_offset(n: usize, a: usize) -> usize {
    a * n - a * a.saturating_sub(1) / 2
}

/// Bandwidth `sqrt(median(d^2) / 2)` over distinct-valued pairs.
pub fn median_width(x: &[f64]) -> Result<f64> {
    let mut d2: Vec<f64> = Vec::with_capacity(x.len() * (x.len() - 1) / 2);
    for a in 0..x.len() {
        for b in a + 1..x.len() {
            let d = x[a] - x[b];
            if d != 0.0 {
                d2.push(d * d);
            }
        }
    }
    if d2.is_empty() {
        return Err(Error::Degenerate("column has zero variance".into()));
    }
    let mid = d2.len() / 2;
    let (_, upper, _) = d2.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let med = if d2.len() % 2 == 1 {
        upper
    } else {
        let lower = d2[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    Ok((0.5 * med).sqrt())
}

impl HsicKernel {
    pub fn new(x: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 2 {
            return Err(Error::invalid("HSIC needs at least two samples"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("HSIC input contains non-finite values"));
        }
        let width = median_width(x)?;
        let scale = -1.0 / (2.0 * width * width);
        let mut packed = Vec::with_capacity(n * (n + 1) / 2);
        let mut row_sum = vec![0.0; n];
        let mut off_sum = 0.0;
        for a in 0..n {
            for b in a..n {
                let d = x[a] - x[b];
                let k = (scale * d * d).exp();
                packed.push(k);
                row_sum[a] += k;
                if b != a {
                    row_sum[b] += k;
                    off_sum += 2.0 * k;
                }
            }
        }
        let nf = n as f64;
        let total = row_sum.iter().sum::<f64>() / (nf * nf);
        let row_mean: Vec<f64> = row_sum.iter().map(|s| s / nf).collect();
        let mut idx = 0;
        for a in 0..n {
            for b in a..n {
                packed[idx] += total - row_mean[a] - row_mean[b];
                idx += 1;
            }
        }
        Ok(HsicKernel {
            n,
            width,
            centered: packed,
            off_mean: off_sum / (nf * (nf - 1.0)),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Centred entry `(a, b)`.
    pub fn get(&self, a: usize, b: usize) -> f64 {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.centered[row_offset(self.n, a) + b - a]
    }

    /// Heap footprint in bytes.
    pub fn bytes(&self) -> usize {
        self.centered.len() * std::mem::size_of::<f64>()
    }
}

/// Biased estimate `tr(Kc Lc) / n^2`.
pub fn hsic_statistic(k: &HsicKernel, l: &HsicKernel) -> Result<f64> {
    let (sum, _) = cross_sums(k, l)?;
    let n = k.n as f64;
    Ok(sum / (n * n))
}

// (sum over all entries of Kc.Lc, sum over off-diagonal entries of (Kc.Lc)^2)
fn cross_sums(k: &HsicKernel, l: &HsicKernel) -> Result<(f64, f64)> {
    if k.n != l.n {
        return Err(Error::invalid("HSIC columns differ in length"));
    }
    let n = k.n;
    let (mut diag, mut off, mut off_sq) = (0.0, 0.0, 0.0);
    let mut idx = 0;
    for a in 0..n {
        let prod = k.centered[idx] * l.centered[idx];
        diag += prod;
        idx += 1;
        let len = n - a - 1;
        for (x, y) in k.centered[idx..idx + len].iter().zip(&l.centered[idx..idx + len]) {
            let prod = x * y;
            off += prod;
            off_sq += prod * prod;
        }
        idx += len;
    }
    Ok((diag + 2.0 * off, 2.0 * off_sq))
}

/// Gamma approximation to the null distribution of `n * HSIC`.
pub fn hsic_gamma(k: &HsicKernel, l: &HsicKernel) -> Result<TestResult> {
    let n = k.n;
    if n < MIN_SAMPLES {
        return Err(Error::invalid(format!("HSIC test needs at least {MIN_SAMPLES} samples, got {n}")));
    }
    let nf = n as f64;
    let (sum, off_sq) = cross_sums(k, l)?;
    let stat = sum / nf;
    let var = off_sq / 36.0 / (nf * (nf - 1.0)) * 72.0 * (nf - 4.0) * (nf - 5.0)
        / (nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0));
    let mean = (1.0 + k.off_mean * l.off_mean - k.off_mean - l.off_mean) / nf;
    if !(var > 0.0 && mean > 0.0) {
        return Err(Error::Degenerate(format!(
            "HSIC null moments are degenerate (mean {mean}, variance {var})"
        )));
    }
    let shape = mean * mean / var;
    let scale = var * nf / mean;
    let p = if stat <= 0.0 { 1.0 } else { gamma_ur(shape, stat / scale) };
    Ok(TestResult {
        statistic: stat,
        p_value: p.clamp(0.0, 1.0),
        params: TestParams::HsicGamma {
            width_x: k.width,
            width_y: l.width,
        },
        seed: None,
    })
}

/// HSIC independence test of two columns.
pub fn hsic_pvalue(u: &[f64], v: &[f64]) -> Result<TestResult> {
    if u.len() != v.len() {
        return Err(Error::invalid("HSIC columns differ in length"));
    }
    if u.len() < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "HSIC test needs at least {MIN_SAMPLES} samples, got {}",
            u.len()
        )));
    }
    hsic_gamma(&HsicKernel::new(u)?, &HsicKernel::new(v)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn packed_offsets() {
        let n = 5;
        let mut expect = 0;
        for a in 0..n {
            assert_eq!(row_offset(n, a), expect);
            expect += n - a;
        }
    }

    #[test]
    fn identical_columns_are_dependent() {
        let u = normals(200, 1);
        assert!(hsic_pvalue(&u, &u).unwrap().p_value < 1e-3);
    }

    #[test]
    fn symmetric_and_shift_invariant() {
        let u = normals(100, 2);
        let v: Vec<f64> = normals(100, 3).iter().zip(&u).map(|(a, b)| a + b * b).collect();
        let a = hsic_pvalue(&u, &v).unwrap();
        let b = hsic_pvalue(&v, &u).unwrap();
        assert_eq!(a.statistic, b.statistic);
        assert_eq!(a.p_value, b.p_value);
        let shifted: Vec<f64> = u.iter().map(|x| x + 7.5).collect();
        let c = hsic_pvalue(&shifted, &v).unwrap();
        assert!((c.statistic - a.statistic).abs() <= 1e-9 * a.statistic);
        assert!(a.statistic > 0.0);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let u = normals(50, 4);
        assert!(matches!(hsic_pvalue(&u, &[1.0; 50]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn small_median_width() {
        // squared distances 1, 4, 9 -> median 4
        assert!((median_width(&[0.0, 1.0, 3.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        // 1, 4, 9, 1, 4, 9 with a repeated point dropped -> median 4
        assert!((median_width(&[0.0, 1.0, 3.0, 0.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn statistic_matches_dense_definition() {
        let n = 10;
        let u = normals(n, 5);
        let v: Vec<f64> = normals(n, 6).iter().zip(&u).map(|(a, b)| a * b).collect();
        let dense = |x: &[f64]| {
            let w = median_width(x).unwrap();
            let k: Vec<Vec<f64>> = (0..n)
                .map(|a| (0..n).map(|b| (-(x[a] - x[b]).powi(2) / (2.0 * w * w)).exp()).collect())
                .collect();
            let h: Vec<Vec<f64>> = (0..n)
                .map(|a| (0..n).map(|b| f64::from(u8::from(a == b)) - 1.0 / n as f64).collect())
                .collect();
            let mul = |p: &Vec<Vec<f64>>, q: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                (0..n).map(|a| (0..n).map(|b| (0..n).map(|c| p[a][c] * q[c][b]).sum()).collect()).collect()
            };
            mul(&mul(&h, &k), &h)
        };
        let (kc, lc) = (dense(&u), dense(&v));
        let mut tr = 0.0;
        for a in 0..n {
            for b in 0..n {
                tr += kc[a][b] * lc[b][a];
            }
        }
        let packed_k = HsicKernel::new(&u).unwrap();
        for a in 0..n {
            for b in 0..n {
                assert!((packed_k.get(a, b) - kc[a][b]).abs() < 1e-12);
            }
        }
        let got = hsic_statistic(&packed_k, &HsicKernel::new(&v).unwrap()).unwrap();
        assert!((got - tr / (n * n) as f64).abs() < 1e-12);
    }
}
