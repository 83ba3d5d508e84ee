//! Gaussian linear model fitting by least squares.
//!
//! [`LeastSquares`] factorises a design once (Householder QR) and can then be
//! refit against any number of response vectors. The permutation tests lean on
//! this: the predictors stay put while the outcomes are shuffled.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Columns whose QR diagonal falls below this fraction of the largest
/// diagonal are treated as collinear.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// A fit is rejected as perfect when `RSS / n` is below this fraction of the
/// response variance.
pub const PERFECT_FIT_TOLERANCE: f64 = 1e-12;

/// Leverages within this distance of 1 are treated as exactly 1.
pub const LEVERAGE_TOLERANCE: f64 = 1e-10;

/// Dense regressor matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DesignMatrix {
    pub fn from_row_major(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyDesign { rows, cols });
        }
        if values.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "design values",
                expected: rows * cols,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDesign {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::LengthMismatch {
                    what: "design row",
                    expected: cols,
                    actual: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), cols, values)
    }

    /// Builds a design from whole columns, all of the same length.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.as_ref().len());
        let cols = columns.len();
        for c in columns {
            if c.as_ref().len() != rows {
                return Err(Error::LengthMismatch {
                    what: "design column",
                    expected: rows,
                    actual: c.as_ref().len(),
                });
            }
        }
        let mut values = vec![0.0; rows * cols];
        for (j, c) in columns.iter().enumerate() {
            for (i, &v) in c.as_ref().iter().enumerate() {
                values[i * cols + j] = v;
            }
        }
        Self::from_row_major(rows, cols, values)
    }

    /// Single intercept column of ones.
    pub fn intercept(rows: usize) -> Result<Self> {
        Self::from_row_major(rows, 1, vec![1.0; rows])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, col)).collect()
    }

    /// Copy of the design with the listed rows removed.
    pub fn without_rows(&self, drop: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(self.values.len());
        let mut kept = 0;
        for i in 0..self.rows {
            if !drop.contains(&i) {
                values.extend_from_slice(self.row(i));
                kept += 1;
            }
        }
        Self::from_row_major(kept, self.cols, values)
    }
}

/// Maximum-likelihood Gaussian linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub coefficients: Vec<f64>,
    /// MLE residual variance, `RSS / n`.
    pub sigma2: f64,
    /// Natural-log likelihood at the maximum.
    pub loglik: f64,
    pub n_obs: usize,
    /// Parameter count used by information criteria: coefficients plus one
    /// for the variance, unless overridden.
    pub k_params: usize,
    pub rss: f64,
}

impl FittedModel {
    /// Replaces the parameter count used for penalties.
    pub fn with_k_params(mut self, k: usize) -> Self {
        self.k_params = k;
        self
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum()
    }
}

/// Gaussian log-likelihood at the MLE variance, from the residual sum of
/// squares.
pub fn gaussian_loglik(rss: f64, n: usize) -> f64 {
    let n = n as f64;
    -0.5 * n * ((2.0 * PI * rss / n).ln() + 1.0)
}

/// Population variance (divisor `n`).
pub(crate) fn variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// True when `rss` is negligible relative to the spread of `y`.
pub(crate) fn is_perfect_fit(rss: f64, y: &[f64]) -> bool {
    let n = y.len() as f64;
    let var = variance(y);
    // A constant response leaves roundoff residuals; compare against its
    // magnitude instead.
    let scale = if var > 0.0 {
        var
    } else {
        y.iter().map(|v| v * v).sum::<f64>() / n
    };
    scale == 0.0 || rss / n < PERFECT_FIT_TOLERANCE * scale
}

/// Thin QR factorisation of a fixed design, reusable across responses.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    n: usize,
    p: usize,
    /// Orthonormal `n x p` factor, column-major.
    q: Vec<f64>,
    /// Upper-triangular `p x p` factor, row-major.
    r: Vec<f64>,
}

impl LeastSquares {
    pub fn new(design: &DesignMatrix) -> Result<Self> {
        let (n, p) = (design.rows(), design.cols());
        if n < p {
            return Err(Error::RankDeficient { column: n });
        }

        // Householder reduction on a column-major copy.
        let mut a = vec![0.0; n * p];
        for i in 0..n {
            for j in 0..p {
                a[j * n + i] = design.get(i, j);
            }
        }
        let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(p);
        let mut diag = vec![0.0; p];
        for j in 0..p {
            let col = &a[j * n + j..(j + 1) * n];
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                reflectors.push(Vec::new());
                diag[j] = 0.0;
                continue;
            }
            let alpha = if col[0] > 0.0 { -norm } else { norm };
            let mut v = col.to_vec();
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            diag[j] = alpha;
            for c in j..p {
                let target = &mut a[c * n + j..(c + 1) * n];
                let dot: f64 = v.iter().zip(target.iter()).map(|(x, y)| x * y).sum();
                let s = 2.0 * dot / vnorm2;
                for (t, x) in target.iter_mut().zip(&v) {
                    *t -= s * x;
                }
            }
            reflectors.push(v);
        }

        let max_diag = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if let Some(column) = diag
            .iter()
            .position(|d| max_diag == 0.0 || d.abs() < RANK_TOLERANCE * max_diag)
        {
            return Err(Error::RankDeficient { column });
        }

        let mut r = vec![0.0; p * p];
        for i in 0..p {
            for j in i..p {
                r[i * p + j] = a[j * n + i];
            }
        }

        // Thin Q: apply reflectors in reverse to the first p unit vectors.
        let mut q = vec![0.0; n * p];
        for c in 0..p {
            let col = &mut q[c * n..(c + 1) * n];
            col[c] = 1.0;
            for j in (0..p).rev() {
                let v = &reflectors[j];
                if v.is_empty() {
                    continue;
                }
                let vnorm2: f64 = v.iter().map(|x| x * x).sum();
                let sub = &mut col[j..];
                let dot: f64 = v.iter().zip(sub.iter()).map(|(x, y)| x * y).sum();
                let s = 2.0 * dot / vnorm2;
                for (t, x) in sub.iter_mut().zip(v) {
                    *t -= s * x;
                }
            }
        }

        Ok(Self { n, p, q, r })
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn n_coefficients(&self) -> usize {
        self.p
    }

    /// Diagonal of the hat matrix.
    pub fn leverages(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.p).map(|j| self.q[j * self.n + i].powi(2)).sum())
            .collect()
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n {
            return Err(Error::LengthMismatch {
                what: "response",
                expected: self.n,
                actual: y.len(),
            });
        }
        Ok(())
    }

    /// Projects `y` onto the column space, writing residuals into `resid` and
    /// returning `Q'y`.
    fn project(&self, y: &[f64], resid: &mut [f64]) -> Vec<f64> {
        let n = self.n;
        let qty: Vec<f64> = (0..self.p)
            .map(|j| {
                self.q[j * n..(j + 1) * n]
                    .iter()
                    .zip(y)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        resid.copy_from_slice(y);
        for (j, c) in qty.iter().enumerate() {
            for (r, qij) in resid.iter_mut().zip(&self.q[j * n..(j + 1) * n]) {
                *r -= qij * c;
            }
        }
        qty
    }

    /// Residuals and residual sum of squares for `y`, without the perfect-fit
    /// check.
    pub fn residuals(&self, y: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_len(y)?;
        let mut resid = vec![0.0; self.n];
        self.project(y, &mut resid);
        let rss = resid.iter().map(|e| e * e).sum();
        Ok((resid, rss))
    }

    pub fn fit(&self, y: &[f64]) -> Result<FittedModel> {
        self.check_len(y)?;
        let mut resid = vec![0.0; self.n];
        let qty = self.project(y, &mut resid);
        let rss: f64 = resid.iter().map(|e| e * e).sum();
        if is_perfect_fit(rss, y) {
            return Err(Error::PerfectFit { rss });
        }
        let p = self.p;
        let mut beta = vec![0.0; p];
        for i in (0..p).rev() {
            let tail: f64 = ((i + 1)..p).map(|j| self.r[i * p + j] * beta[j]).sum();
            beta[i] = (qty[i] - tail) / self.r[i * p + i];
        }
        Ok(FittedModel {
            coefficients: beta,
            sigma2: rss / self.n as f64,
            loglik: gaussian_loglik(rss, self.n),
            n_obs: self.n,
            k_params: p + 1,
            rss,
        })
    }
}

/// Least-squares Gaussian fit of `y` on `design`.
pub fn fit_linear_gaussian(design: &DesignMatrix, y: &[f64]) -> Result<FittedModel> {
    if y.len() != design.rows() {
        return Err(Error::LengthMismatch {
            what: "response",
            expected: design.rows(),
            actual: y.len(),
        });
    }
    LeastSquares::new(design)?.fit(y)
}

/// Cook's distance for each observation.
pub fn cooks_distance(design: &DesignMatrix, y: &[f64]) -> Result<Vec<f64>> {
    let ls = LeastSquares::new(design)?;
    let fitted = ls.fit(y)?;
    let (resid, _) = ls.residuals(y)?;
    let n = ls.n_obs();
    let p = ls.n_coefficients();
    let s2 = fitted.rss / (n - p) as f64;
    let h = ls.leverages();
    if let Some(index) = h.iter().position(|&h| h >= 1.0 - LEVERAGE_TOLERANCE) {
        return Err(Error::LeverageOne { index });
    }
    Ok(resid
        .iter()
        .zip(&h)
        .map(|(e, h)| e * e / (p as f64 * s2) * h / ((1.0 - h) * (1.0 - h)))
        .collect())
}
