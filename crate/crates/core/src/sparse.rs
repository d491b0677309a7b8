//! Compressed-row matrices and a banded Cholesky factorization.
//!
//! Tensor-grid stencils have bandwidth equal to the product of all interior
//! counts except the slowest axis, so a band solver is a direct method of
//! cost `O(N b²)` to factor and `O(N b)` per solve.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(col, value)` lists, sorting columns and merging
    /// duplicates.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix {
            nrows,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.vals[k] * y[self.cols[k]];
            }
            acc += xi * row;
        }
        acc
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    /// Largest `|i - j|` over stored entries of the permuted matrix, where
    /// `inv[old] = new`.
    pub fn bandwidth(&self, inv: &[usize]) -> usize {
        let mut b = 0;
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                b = b.max(inv[i].abs_diff(inv[j]));
            }
        }
        b
    }
}

/// Lower Cholesky factor `L` of a symmetric positive-definite band matrix,
/// stored row by row: row `i` keeps columns `i-b ..= i`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    b: usize,
    l: Vec<f64>,
    /// `perm[new] = old`.
    perm: Vec<usize>,
}

impl BandCholesky {
    /// Factors `P A Pᵀ` where `perm[new] = old`. Only the lower triangle of
    /// the permuted matrix is read.
    pub fn factor(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.nrows;
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let b = a.bandwidth(&inv);
        let w = b + 1;
        let mut l = vec![0.0; n * w];
        for old in 0..n {
            let i = inv[old];
            for (c, v) in a.row(old) {
                let j = inv[c];
                if j <= i {
                    l[i * w + (j + b - i)] = v;
                }
            }
        }
        for i in 0..n {
            let k0 = i.saturating_sub(b);
            for j in k0..=i {
                let (head, tail) = l.split_at_mut(i * w);
                let row_i = &mut tail[..w];
                let dot = if j > k0 {
                    let ri = &row_i[(k0 + b - i)..(j + b - i)];
                    let rj: &[f64] = if j == i {
                        ri
                    } else {
                        &head[j * w + (k0 + b - j)..j * w + b]
                    };
                    ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>()
                } else {
                    0.0
                };
                let s = row_i[j + b - i] - dot;
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::Domain(format!(
                            "matrix not positive definite at pivot {i} ({s:e})"
                        )));
                    }
                    row_i[b] = s.sqrt();
                } else {
                    row_i[j + b - i] = s / head[j * w + b];
                }
            }
        }
        Ok(BandCholesky { n, b, l, perm })
    }

    pub fn bandwidth(&self) -> usize {
        self.b
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, b, w) = (self.n, self.b, self.b + 1);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| rhs[old]).collect();
        for i in 0..n {
            let k0 = i.saturating_sub(b);
            let row = &self.l[i * w..(i + 1) * w];
            let dot: f64 = row[(k0 + b - i)..b]
                .iter()
                .zip(&y[k0..i])
                .map(|(a, c)| a * c)
                .sum();
            y[i] = (y[i] - dot) / row[b];
        }
        for i in (0..n).rev() {
            let row = &self.l[i * w..(i + 1) * w];
            let xi = y[i] / row[b];
            y[i] = xi;
            let k0 = i.saturating_sub(b);
            for (yk, lk) in y[k0..i].iter_mut().zip(&row[(k0 + b - i)..b]) {
                *yk -= lk * xi;
            }
        }
        let mut out = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = y[new];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final residual estimate in the preconditioner norm, relative to the
    /// right-hand side.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned MINRES for a symmetric (possibly indefinite) operator.
/// `precond` must apply a symmetric positive-definite approximation of the
/// inverse. Follows Paige and Saunders; the residual is measured in the
/// norm induced by `precond`.
pub fn minres<A, M>(apply: A, precond: M, b: &[f64], rtol: f64, max_iter: usize) -> MinresOutcome
where
    A: Fn(&[f64]) -> Vec<f64>,
    M: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut y = precond(&r1);
    let beta1 = dot(&r1, &y).max(0.0).sqrt();
    if beta1 == 0.0 {
        return MinresOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let mut r2 = r1.clone();
    let (mut oldb, mut beta, mut dbar, mut epsln) = (0.0, beta1, 0.0, 0.0);
    let (mut phibar, mut cs, mut sn) = (beta1, -1.0, 0.0);
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut iterations = 0;
    for itn in 1..=max_iter {
        iterations = itn;
        let v: Vec<f64> = y.iter().map(|yi| yi / beta).collect();
        y = apply(&v);
        if itn >= 2 {
            let c = beta / oldb;
            y.iter_mut().zip(&r1).for_each(|(yi, ri)| *yi -= c * ri);
        }
        let alfa = dot(&v, &y);
        let c = alfa / beta;
        y.iter_mut().zip(&r2).for_each(|(yi, ri)| *yi -= c * ri);
        r1 = std::mem::replace(&mut r2, y);
        y = precond(&r2);
        oldb = beta;
        beta = dot(&r2, &y).max(0.0).sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let w1 = std::mem::replace(&mut w2, std::mem::take(&mut w));
        w = v
            .iter()
            .zip(w1.iter().zip(&w2))
            .map(|(vi, (a, b))| (vi - oldeps * a - delta * b) / gamma)
            .collect();
        x.iter_mut().zip(&w).for_each(|(xi, wi)| *xi += phi * wi);
        if phibar <= rtol * beta1 || beta == 0.0 {
            break;
        }
    }
    MinresOutcome {
        x,
        iterations,
        relative_residual: phibar / beta1,
    }
}
