//! Penalised additive regression `y = c + sum_m g_m(x_m) + e`.
//!
//! Each `g_m` is a cubic B-spline with 10 basis functions, knots at equally
//! spaced quantiles of `x_m`, and a second-order difference penalty. The
//! sum-to-zero constraint on every component is absorbed by a Householder
//! reflection, leaving 9 free coefficients per predictor. One smoothing
//! parameter, shared by all components, is picked by GCV.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const N_BASIS: usize = 10;
pub const DEGREE: usize = 3;
/// Free coefficients per component after the centring constraint.
pub const N_COEF: usize = N_BASIS - 1;
pub const LAMBDA_GRID: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];
pub const MIN_SAMPLES: usize = 20;

/// Cubic B-spline basis for one predictor, with the centring constraint.
#[derive(Debug, Clone)]
pub struct SplineBasis {
    knots: Vec<f64>,
    // Householder vector; the constrained basis is columns 1.. of (I - 2vv'/v'v)
    house: [f64; N_BASIS],
    house_norm: f64,
}

impl SplineBasis {
    pub fn new(x: &[f64]) -> Self {
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let n_interior = N_BASIS - DEGREE - 1;
        let mut knots = vec![lo; DEGREE + 1];
        for q in 1..=n_interior {
            knots.push(quantile(&sorted, q as f64 / (n_interior + 1) as f64));
        }
        knots.extend(std::iter::repeat_n(hi, DEGREE + 1));

        let mut basis = SplineBasis {
            knots,
            house: [0.0; N_BASIS],
            house_norm: 1.0,
        };
        let mut means = [0.0; N_BASIS];
        for &v in x {
            let (span, vals) = basis.raw(v);
            for (r, b) in vals.iter().enumerate() {
                means[span - DEGREE + r] += b;
            }
        }
        means.iter_mut().for_each(|m| *m /= x.len() as f64);
        let norm = means.iter().map(|m| m * m).sum::<f64>().sqrt();
        let mut v = means;
        if norm == 0.0 {
            // constant predictor: every basis function vanishes, any null space will do
            v = [0.0; N_BASIS];
            v[0] = 1.0;
        } else {
            v[0] += if means[0] >= 0.0 { norm } else { -norm };
        }
        basis.house = v;
        basis.house_norm = v.iter().map(|a| a * a).sum();
        basis
    }

    pub fn lower(&self) -> f64 {
        self.knots[0]
    }

    pub fn upper(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Non-zero raw basis values at `x` (clamped into the knot range),
    /// together with the knot span; values belong to basis functions
    /// `span - 3 ..= span`.
    fn raw(&self, x: f64) -> (usize, [f64; DEGREE + 1]) {
        let (lo, hi) = (self.lower(), self.upper());
        let x = x.clamp(lo, hi);
        let t = &self.knots;
        let mut out = [0.0; DEGREE + 1];
        if hi <= lo {
            return (DEGREE, out);
        }
        let span = (t.partition_point(|&k| k <= x).saturating_sub(1)).clamp(DEGREE, N_BASIS - 1);
        // Cox-de Boor, triangular scheme
        let mut left = [0.0; DEGREE + 1];
        let mut right = [0.0; DEGREE + 1];
        out[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let tmp = if denom > 0.0 { out[r] / denom } else { 0.0 };
                out[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            out[j] = saved;
        }
        (span, out)
    }

    /// The full raw basis row.
    pub fn raw_row(&self, x: f64) -> [f64; N_BASIS] {
        let (span, vals) = self.raw(x);
        let mut row = [0.0; N_BASIS];
        for (r, b) in vals.iter().enumerate() {
            row[span - DEGREE + r] = *b;
        }
        row
    }

    /// Constrained basis row.
    pub fn row(&self, x: f64) -> [f64; N_COEF] {
        let b = self.raw_row(x);
        let dot: f64 = b.iter().zip(&self.house).map(|(a, v)| a * v).sum();
        let s = 2.0 * dot / self.house_norm;
        std::array::from_fn(|k| b[k + 1] - s * self.house[k + 1])
    }

    /// Constraint null-space matrix `Z` (10 x 9).
    fn z(&self) -> DMatrix<f64> {
        DMatrix::from_fn(N_BASIS, N_COEF, |r, k| {
            let delta = if r == k + 1 { 1.0 } else { 0.0 };
            delta - 2.0 * self.house[r] * self.house[k + 1] / self.house_norm
        })
    }

    /// `Z' D'D Z` for the second-order difference matrix `D`.
    pub fn penalty(&self) -> DMatrix<f64> {
        let d = DMatrix::from_fn(N_BASIS - 2, N_BASIS, |r, c| match c as isize - r as isize {
            0 | 2 => 1.0,
            1 => -2.0,
            _ => 0.0,
        });
        let dz = d * self.z();
        dz.transpose() * dz
    }

    pub fn design(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(x.len(), N_COEF);
        for (r, &v) in x.iter().enumerate() {
            for (c, b) in self.row(v).into_iter().enumerate() {
                m[(r, c)] = b;
            }
        }
        m
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// A fitted additive model.
#[derive(Debug, Clone)]
pub struct AdditiveFit {
    /// Column indices of the predictors, in fitting order.
    pub predictors: Vec<usize>,
    pub intercept: f64,
    /// Smoothing parameter per predictor (one shared value).
    pub lambdas: Vec<f64>,
    pub gcv: f64,
    bases: Vec<SplineBasis>,
    coefs: Vec<[f64; N_COEF]>,
    /// Stacked coefficient vector.
    beta: DVector<f64>,
}

impl AdditiveFit {
    pub fn n_predictors(&self) -> usize {
        self.predictors.len()
    }

    /// `g_m(x)` for the `m`-th predictor.
    pub fn component(&self, m: usize, x: f64) -> f64 {
        self.bases[m].row(x).iter().zip(&self.coefs[m]).map(|(b, c)| b * c).sum()
    }

    /// Prediction at one point; `xs[m]` is the value of the `m`-th predictor.
    pub fn predict_one(&self, xs: &[f64]) -> f64 {
        self.intercept + (0..self.n_predictors()).map(|m| self.component(m, xs[m])).sum::<f64>()
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn bases(&self) -> &[SplineBasis] {
        &self.bases
    }

    pub fn fitted(&self, predictors: &[&[f64]]) -> Result<Vec<f64>> {
        if predictors.len() != self.n_predictors() {
            return Err(Error::invalid(format!(
                "fit has {} predictors, got {} columns",
                self.n_predictors(),
                predictors.len()
            )));
        }
        let n = predictors.first().map(|c| c.len());
        if predictors.iter().any(|c| Some(c.len()) != n) {
            return Err(Error::invalid("predictor columns differ in length"));
        }
        let n = n.unwrap_or(0);
        let mut out = vec![self.intercept; n];
        for (m, col) in predictors.iter().enumerate() {
            for (o, &x) in out.iter_mut().zip(col.iter()) {
                *o += self.component(m, x);
            }
        }
        Ok(out)
    }
}

/// `y - prediction`, elementwise.
pub fn residual(fit: &AdditiveFit, y: &[f64], predictors: &[&[f64]]) -> Result<Vec<f64>> {
    if predictors.iter().any(|c| c.len() != y.len()) {
        return Err(Error::invalid("response and predictors differ in length"));
    }
    let pred = if predictors.is_empty() {
        vec![fit.intercept; y.len()]
    } else {
        fit.fitted(predictors)?
    };
    Ok(y.iter().zip(pred).map(|(a, b)| a - b).collect())
}

/// Fits `y` on the given predictor columns.
pub fn fit_additive(y: &[f64], predictors: &[&[f64]]) -> Result<AdditiveFit> {
    let mut cols: Vec<Vec<f64>> = predictors.iter().map(|c| c.to_vec()).collect();
    cols.push(y.to_vec());
    let design = AdditiveDesign::new(&cols)?;
    let q = predictors.len();
    design.fit(q, &(0..q).collect::<Vec<_>>())
}

/// Per-column spline bases and cross-products, shared by every regression
/// among a fixed set of columns.
#[derive(Debug, Clone)]
pub struct AdditiveDesign {
    n: usize,
    p: usize,
    centered: Vec<Vec<f64>>,
    means: Vec<f64>,
    yty: Vec<f64>,
    bases: Vec<SplineBasis>,
    designs: Vec<DMatrix<f64>>,
    penalties: Vec<DMatrix<f64>>,
    // gram[a * p + b] = X_a' X_b
    gram: Vec<DMatrix<f64>>,
    // xty[a * p + i] = X_a' (y_i - mean)
    xty: Vec<DVector<f64>>,
}

impl AdditiveDesign {
    pub fn new(columns: &[Vec<f64>]) -> Result<Self> {
        let p = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if p == 0 || n == 0 || columns.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("columns must be non-empty and of equal length"));
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("regression input contains non-finite values"));
        }
        let means: Vec<f64> = columns.iter().map(|c| mean(c)).collect();
        let centered: Vec<Vec<f64>> = columns
            .iter()
            .zip(&means)
            .map(|(c, m)| c.iter().map(|v| v - m).collect())
            .collect();
        let yty = centered.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        let bases: Vec<SplineBasis> = columns.iter().map(|c| SplineBasis::new(c)).collect();
        let designs: Vec<DMatrix<f64>> = bases.iter().zip(columns).map(|(b, c)| b.design(c)).collect();
        let penalties = bases.iter().map(SplineBasis::penalty).collect();
        let mut gram = Vec::with_capacity(p * p);
        let mut xty = Vec::with_capacity(p * p);
        for a in 0..p {
            let xa_t = designs[a].transpose();
            for b in 0..p {
                gram.push(&xa_t * &designs[b]);
                xty.push(&xa_t * DVector::from_column_slice(&centered[b]));
            }
        }
        Ok(AdditiveDesign {
            n,
            p,
            centered,
            means,
            yty,
            bases,
            designs,
            penalties,
            gram,
            xty,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Fits column `i` on columns `preds`.
    pub fn fit(&self, i: usize, preds: &[usize]) -> Result<AdditiveFit> {
        if i >= self.p || preds.iter().any(|&m| m >= self.p || m == i) {
            return Err(Error::invalid(format!("bad regression of column {i} on {preds:?}")));
        }
        let q = preds.len();
        if q == 0 {
            return Ok(AdditiveFit {
                predictors: Vec::new(),
                intercept: self.means[i],
                lambdas: Vec::new(),
                gcv: self.yty[i] / self.n as f64,
                bases: Vec::new(),
                coefs: Vec::new(),
                beta: DVector::zeros(0),
            });
        }
        if self.n < MIN_SAMPLES {
            return Err(Error::invalid(format!(
                "additive regression needs at least {MIN_SAMPLES} samples, got {}",
                self.n
            )));
        }
        let k = q * N_COEF;
        let mut g = DMatrix::zeros(k, k);
        let mut s = DMatrix::zeros(k, k);
        let mut xy = DVector::zeros(k);
        for (ba, &a) in preds.iter().enumerate() {
            for (bb, &b) in preds.iter().enumerate() {
                g.view_mut((ba * N_COEF, bb * N_COEF), (N_COEF, N_COEF))
                    .copy_from(&self.gram[a * self.p + b]);
            }
            s.view_mut((ba * N_COEF, ba * N_COEF), (N_COEF, N_COEF))
                .copy_from(&self.penalties[a]);
            xy.rows_mut(ba * N_COEF, N_COEF).copy_from(&self.xty[a * self.p + i]);
        }
        let ridge = ridge_for(&g);
        let n = self.n as f64;

        let mut best: Option<(f64, f64, DVector<f64>)> = None;
        for &lambda in &LAMBDA_GRID {
            let Some((beta, inv)) = solve_penalised(&g, &s, &xy, lambda, ridge) else {
                continue;
            };
            let edf: f64 = inv.component_mul(&g).sum();
            let rss = (self.yty[i] - 2.0 * beta.dot(&xy) + beta.dot(&(&g * &beta))).max(0.0);
            let denom = (n - 1.0 - edf).max(1e-8);
            let gcv = n * rss / (denom * denom);
            if best.as_ref().is_none_or(|(b, _, _)| gcv < *b) {
                best = Some((gcv, lambda, beta));
            }
        }
        let (gcv, lambda, beta) =
            best.ok_or_else(|| Error::Numerical("penalised normal equations could not be factorised".into()))?;
        let coefs = (0..q)
            .map(|m| std::array::from_fn(|c| beta[m * N_COEF + c]))
            .collect();
        Ok(AdditiveFit {
            predictors: preds.to_vec(),
            intercept: self.means[i],
            lambdas: vec![lambda; q],
            gcv,
            bases: preds.iter().map(|&m| self.bases[m].clone()).collect(),
            coefs,
            beta,
        })
    }

    /// Residual of column `i` regressed on `preds`, computed from the stored designs.
    pub fn residual(&self, i: usize, preds: &[usize]) -> Result<Vec<f64>> {
        let fit = self.fit(i, preds)?;
        let mut r = self.centered[i].clone();
        for (m, &a) in preds.iter().enumerate() {
            let coef = DVector::from_column_slice(&fit.coefs[m]);
            let contrib = &self.designs[a] * coef;
            for (x, c) in r.iter_mut().zip(contrib.iter()) {
                *x -= c;
            }
        }
        Ok(r)
    }

    /// `X' X`, penalty and `X' y` for a regression, as used by the solver.
    pub fn normal_equations(&self, i: usize, preds: &[usize]) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let k = preds.len() * N_COEF;
        let mut x = DMatrix::zeros(self.n, k);
        let mut s = DMatrix::zeros(k, k);
        for (m, &a) in preds.iter().enumerate() {
            x.view_mut((0, m * N_COEF), (self.n, N_COEF)).copy_from(&self.designs[a]);
            s.view_mut((m * N_COEF, m * N_COEF), (N_COEF, N_COEF))
                .copy_from(&self.penalties[a]);
        }
        let y = DVector::from_column_slice(&self.centered[i]);
        (x.clone(), s, x.transpose() * y)
    }
}

/// Solves `(G + lambda S + eps I) beta = xy`, raising `eps` tenfold on
/// factorisation failure. Returns the solution and the inverse system matrix.
fn solve_penalised(
    g: &DMatrix<f64>,
    s: &DMatrix<f64>,
    xy: &DVector<f64>,
    lambda: f64,
    ridge: f64,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let k = g.nrows();
    let mut eps = ridge;
    for _ in 0..8 {
        let a = g + s * lambda + DMatrix::identity(k, k) * eps;
        if let Some(ch) = a.cholesky() {
            let beta = ch.solve(xy);
            if beta.iter().all(|v| v.is_finite()) {
                return Some((beta, ch.inverse()));
            }
        }
        eps *= 10.0;
    }
    None
}

/// The ridge actually used for a regression, for diagnostics.
pub fn ridge_for(g: &DMatrix<f64>) -> f64 {
    1e-8 * (g.trace() / g.nrows() as f64).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn normals(n: usize, seed: u64, sd: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sd).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn basis_is_a_partition_of_unity() {
        let x = normals(200, 1, 1.0);
        let b = SplineBasis::new(&x);
        for v in [-3.0, -0.7, 0.0, 0.4, 2.5, b.lower(), b.upper()] {
            let s: f64 = b.raw_row(v).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "{v}: {s}");
        }
    }

    #[test]
    fn constrained_columns_sum_to_zero() {
        let x = normals(300, 2, 1.0);
        let d = SplineBasis::new(&x).design(&x);
        for c in 0..N_COEF {
            assert!(d.column(c).sum().abs() < 1e-9);
        }
    }

    #[test]
    fn intercept_only() {
        let y = vec![1.0, 2.0, 6.0];
        let fit = fit_additive(&y, &[]).unwrap();
        assert_eq!(fit.intercept, 3.0);
        assert_eq!(residual(&fit, &y, &[]).unwrap(), vec![-2.0, -1.0, 3.0]);
    }

    #[test]
    fn quadratic_is_recovered() {
        let x = normals(500, 3, 1.0);
        let e = normals(500, 4, 0.1);
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a * a + b).collect();
        let fit = fit_additive(&y, &[&x]).unwrap();
        let grid: Vec<f64> = (0..=40).map(|k| -2.0 + 0.1 * k as f64).collect();
        let mse = grid
            .iter()
            .map(|&g| (fit.predict_one(&[g]) - g * g).powi(2))
            .sum::<f64>()
            / grid.len() as f64;
        assert!(mse.sqrt() <= 0.1, "rmse {}", mse.sqrt());
    }

    #[test]
    fn linear_slope_matches_least_squares() {
        let x = normals(500, 5, 1.0);
        let e = normals(500, 6, 0.5);
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| 2.0 * a + b).collect();
        let (mx, my) = (mean(&x), mean(&y));
        let ols = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
            / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
        let fit = fit_additive(&y, &[&x]).unwrap();
        let slope = (fit.component(0, 1.0) - fit.component(0, -1.0)) / 2.0;
        assert!((slope - ols).abs() <= 0.05, "slope {slope} vs {ols}");
    }

    #[test]
    fn residual_is_orthogonal_to_the_design() {
        let x1 = normals(400, 7, 1.0);
        let x2 = normals(400, 8, 1.0);
        let e = normals(400, 9, 0.3);
        let y: Vec<f64> = (0..400).map(|r| x1[r].sin() + x2[r].powi(3) / 4.0 + e[r]).collect();
        let design = AdditiveDesign::new(&[x1, x2, y]).unwrap();
        let fit = design.fit(2, &[0, 1]).unwrap();
        let r = DVector::from_vec(design.residual(2, &[0, 1]).unwrap());
        let (x, s, xty) = design.normal_equations(2, &[0, 1]);
        let g = x.transpose() * &x;
        let eps = ridge_for(&g);
        let lhs = x.transpose() * r;
        let k = s.nrows();
        let rhs = (s * fit.lambdas[0] + DMatrix::identity(k, k) * eps) * fit.coefficients();
        assert!((lhs - rhs).norm() <= 1e-6 * xty.norm());
    }

    #[test]
    fn small_or_bad_input_is_rejected() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(fit_additive(&x, &[&x]).is_err());
        let mut y = vec![0.0; 30];
        y[3] = f64::NAN;
        assert!(fit_additive(&y, &[]).is_err());
    }

    #[test]
    fn constant_predictor_does_not_crash() {
        let y = normals(50, 10, 1.0);
        let c = vec![2.0; 50];
        let fit = fit_additive(&y, &[&c]).unwrap();
        assert!(fit.coefficients().iter().all(|v| v.is_finite()));
    }
}
