//! Small dense/sparse kernels shared by the solvers.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += s * x
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn scale(s: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= s);
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Compressed sparse row matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Build from per-row (column, value) lists; duplicates are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in r {
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
            rows: n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map(|e| e.1).unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    /// x^T M y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let my = self.mul_vec(y);
        dot(x, &my)
    }

    /// max |M_ij - M_ji|
    pub fn symmetry_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn bandwidth(&self) -> usize {
        (0..self.rows)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    /// Triplets (row, col, value) in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.rows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.rows;
        let mut d = vec![0.0; n * n];
        for (i, j, v) in self.triplets() {
            d[i * n + j] = v;
        }
        d
    }
}

/// Cholesky factor of a symmetric positive definite band matrix, stored
/// row-wise as the lower band L[i, i-bw..=i].
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(m: &CsrMatrix) -> Result<Self> {
        let n = m.rows();
        let bw = m.bandwidth();
        let w = bw + 1;
        // band[i * w + (j + bw - i)] holds L[i, j] for i - bw <= j <= i.
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in m.row(i) {
                if j <= i {
                    band[i * w + (j + bw - i)] = v;
                }
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = band[i * w + (j + bw - i)];
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= band[i * w + (k + bw - i)] * band[j * w + (k + bw - j)];
                }
                if j == i {
                    if s <= 0.0 {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    band[i * w + bw] = s.sqrt();
                } else {
                    band[i * w + (j + bw - i)] = s / band[j * w + bw];
                }
            }
        }
        Ok(BandCholesky { n, bw, band })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.band[i * w + (k + bw - i)] * y[k];
            }
            y[i] = s / self.band[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                s -= self.band[k * w + (i + bw - k)] * y[k];
            }
            y[i] = s / self.band[i * w + bw];
        }
        y
    }
}

/// Largest Ritz value of a symmetric matrix from a short Lanczos run with a
/// fixed deterministic start vector.
pub fn largest_ritz_value(m: &CsrMatrix, steps: usize) -> f64 {
    let n = m.rows();
    let steps = steps.min(n);
    let mut q: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64 * 0.754_877_666).fract() - 0.5))
        .collect();
    let nq = norm(&q);
    scale(1.0 / nq, &mut q);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    for j in 0..steps {
        let mut w = m.mul_vec(&basis[j]);
        let a = dot(&w, &basis[j]);
        alphas.push(a);
        for b in &basis {
            let c = dot(&w, b);
            axpy(-c, b, &mut w);
        }
        let beta = norm(&w);
        if beta < 1e-12 * a.abs().max(1.0) || j + 1 == steps {
            break;
        }
        scale(1.0 / beta, &mut w);
        betas.push(beta);
        basis.push(w);
    }
    let k = alphas.len();
    let t = faer::Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alphas[i]
        } else if i.abs_diff(j) == 1 {
            betas[i.min(j)]
        } else {
            0.0
        }
    });
    let ev = t
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("tridiagonal eigenvalues");
    ev.into_iter().fold(f64::MIN, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> CsrMatrix {
        CsrMatrix::from_rows(
            (0..n)
                .map(|i| {
                    let mut r = vec![(i, 2.0)];
                    if i > 0 {
                        r.push((i - 1, -1.0));
                    }
                    if i + 1 < n {
                        r.push((i + 1, -1.0));
                    }
                    r
                })
                .collect(),
        )
    }

    #[test]
    fn band_cholesky_solves() {
        let m = tridiag(20);
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let b = m.mul_vec(&x);
        let f = BandCholesky::factor(&m).unwrap();
        let y = f.solve(&b);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn band_cholesky_rejects_indefinite() {
        let m = CsrMatrix::from_rows(vec![vec![(0, 1.0), (1, 2.0)], vec![(0, 2.0), (1, 1.0)]]);
        assert!(matches!(
            BandCholesky::factor(&m),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn ritz_estimate_of_tridiagonal() {
        let n = 50;
        let exact = 2.0 - 2.0 * (std::f64::consts::PI * n as f64 / (n as f64 + 1.0)).cos();
        let est = largest_ritz_value(&tridiag(n), 50);
        assert!((est - exact).abs() < 1e-8 * exact, "{est} vs {exact}");
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_rows(vec![vec![(0, 1.0), (0, 2.0)]]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.nnz(), 1);
    }
}
