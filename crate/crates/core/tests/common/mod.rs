//! Reference computations that share no code with the library: least squares
//! through the normal equations and Gaussian elimination, and statistics
//! evaluated straight from their definitions.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (dst, src) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// `(X'X)^-1 X'y` for rows of `x`.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            xty[i] += row[i] * yi;
            for j in 0..p {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    solve(xtx, xty)
}

pub fn predict(beta: &[f64], row: &[f64]) -> f64 {
    beta.iter().zip(row).map(|(b, x)| b * x).sum()
}

pub fn rss(x: &[Vec<f64>], y: &[f64]) -> f64 {
    let beta = normal_equations(x, y);
    x.iter()
        .zip(y)
        .map(|(r, yi)| (yi - predict(&beta, r)).powi(2))
        .sum()
}

/// Gaussian log-likelihood summed observation by observation at the MLE.
pub fn loglik(x: &[Vec<f64>], y: &[f64]) -> f64 {
    let beta = normal_equations(x, y);
    let n = y.len() as f64;
    let s2 = rss(x, y) / n;
    x.iter()
        .zip(y)
        .map(|(r, yi)| {
            let e = yi - predict(&beta, r);
            -0.5 * (2.0 * PI * s2).ln() - e * e / (2.0 * s2)
        })
        .sum()
}

pub fn aic(x: &[Vec<f64>], y: &[f64]) -> f64 {
    -2.0 * loglik(x, y) + 2.0 * (x[0].len() + 1) as f64
}

pub fn aicc(x: &[Vec<f64>], y: &[f64]) -> f64 {
    let k = (x[0].len() + 1) as f64;
    let n = y.len() as f64;
    aic(x, y) + 2.0 * k * (k + 1.0) / (n - k - 1.0)
}

fn drop_row<T: Clone>(v: &[T], i: usize) -> Vec<T> {
    v.iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, t)| t.clone())
        .collect()
}

/// Leave-one-out mean ignorance by explicit refits.
pub fn loo_ignorance(x: &[Vec<f64>], y: &[f64]) -> f64 {
    let n = y.len();
    (0..n)
        .map(|i| {
            let xt = drop_row(x, i);
            let yt = drop_row(y, i);
            let beta = normal_equations(&xt, &yt);
            let s2 = rss(&xt, &yt) / (n - 1) as f64;
            let mu = predict(&beta, &x[i]);
            let dens = (-(y[i] - mu).powi(2) / (2.0 * s2)).exp() / (2.0 * PI * s2).sqrt();
            -dens.log2()
        })
        .sum::<f64>()
        / n as f64
}

/// Cook's distance by refitting without each observation.
pub fn cooks_by_refit(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let p = x[0].len();
    let beta = normal_equations(x, y);
    let s2 = rss(x, y) / (n - p) as f64;
    (0..n)
        .map(|i| {
            let bi = normal_equations(&drop_row(x, i), &drop_row(y, i));
            x.iter()
                .map(|r| (predict(&beta, r) - predict(&bi, r)).powi(2))
                .sum::<f64>()
                / (p as f64 * s2)
        })
        .collect()
}

/// Every permutation of `0..n` with no fixed point, by filtering all `n!`.
pub fn derangements_by_filtering(n: usize) -> Vec<Vec<usize>> {
    fn perms(items: Vec<usize>) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.clone();
            let head = rest.remove(i);
            for mut tail in perms(rest) {
                tail.insert(0, head);
                out.push(tail);
            }
        }
        out
    }
    perms((0..n).collect())
        .into_iter()
        .filter(|p| p.iter().enumerate().all(|(i, &m)| i != m))
        .collect()
}

pub fn permute(y: &[f64], mapping: &[usize]) -> Vec<f64> {
    mapping.iter().map(|&m| y[m]).collect()
}

/// Rows `[1, x_1, ..., x_k]` from predictor columns.
pub fn rows_with_intercept(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = columns[0].len();
    (0..n)
        .map(|i| std::iter::once(1.0).chain(columns.iter().map(|c| c[i])).collect())
        .collect()
}
