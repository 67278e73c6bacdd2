//! Naive reference implementations used as test oracles. None of them share
//! code with the library kernels.
#![allow(dead_code)]

use john_ellipsoid::linalg::{gaussian_matrix, DenseMatrix};
use john_ellipsoid::Matrix;

pub fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix {
    gaussian_matrix::<f64>(n, d, seed).unwrap().matrix
}

/// Random SPD matrix `B^T B + shift I`.
pub fn random_spd(d: usize, seed: u64, shift: f64) -> Matrix {
    let b = random_matrix(d + 3, d, seed);
    let mut m = naive_gram(&b, &vec![1.0; d + 3]);
    for i in 0..d {
        m[(i, i)] += shift;
    }
    m
}

pub fn identity_stack(copies: usize, d: usize) -> Matrix {
    DenseMatrix::from_fn(copies * d, d, |i, j| if i % d == j { 1.0 } else { 0.0 })
}

/// `sum_i w_i a_i a_i^T` by the textbook triple loop.
pub fn naive_gram(a: &Matrix, w: &[f64]) -> Matrix {
    let (n, d) = a.shape();
    let mut out = DenseMatrix::zeros(d, d);
    for j in 0..d {
        for k in 0..d {
            let mut s = 0.0;
            for i in 0..n {
                s += w[i] * a[(i, j)] * a[(i, k)];
            }
            out[(j, k)] = s;
        }
    }
    out
}

pub fn naive_multiply(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    let mut out = DenseMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

pub fn transpose(a: &Matrix) -> Matrix {
    DenseMatrix::from_fn(a.cols(), a.rows(), |i, j| a[(j, i)])
}

/// Gauss-Jordan inversion with partial pivoting. Panics on a singular input.
pub fn gauss_jordan_inverse(m: &Matrix) -> Matrix {
    let n = m.rows();
    assert_eq!(n, m.cols());
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| m[(i, j)]).collect();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        assert!(aug[piv][col].abs() > 1e-300, "singular matrix in oracle");
        aug.swap(col, piv);
        let p = aug[col][col];
        for x in aug[col].iter_mut() {
            *x /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
    }
    DenseMatrix::from_fn(n, n, |i, j| aug[i][n + j])
}

/// `a^T M^{-1} a` through the Gauss-Jordan inverse.
pub fn inverse_quad_form(minv: &Matrix, a: &[f64]) -> f64 {
    let d = a.len();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += a[i] * minv[(i, j)] * a[j];
        }
    }
    s
}

/// Numerical rank by Gaussian elimination with full pivoting.
pub fn rank_full_pivot(m: &Matrix, rel_tol: f64) -> usize {
    let (r, c) = m.shape();
    let mut a: Vec<Vec<f64>> = m.to_rows();
    let scale = a.iter().flatten().fold(0.0f64, |s, x| s.max(x.abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    let mut cols: Vec<usize> = (0..c).collect();
    for step in 0..r.min(c) {
        let mut best = (step, step, 0.0);
        for i in step..r {
            for (jj, &j) in cols.iter().enumerate().skip(step) {
                if a[i][j].abs() > best.2 {
                    best = (i, jj, a[i][j].abs());
                }
            }
        }
        if best.2 <= rel_tol * scale {
            break;
        }
        a.swap(step, best.0);
        cols.swap(step, best.1);
        let pc = cols[step];
        for i in step + 1..r {
            let f = a[i][pc] / a[step][pc];
            for &j in &cols[step..] {
                a[i][j] -= f * a[step][j];
            }
        }
        rank += 1;
    }
    rank
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method, ascending.
pub fn jacobi_eigenvalues(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut a = m.to_rows();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky(m: &Matrix) -> Matrix {
    let n = m.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                assert!(s > 0.0, "matrix not positive definite in oracle");
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    l
}

/// Extreme eigenvalues of `L^{-1} X L^{-T}` where `reference = L L^T`: the
/// tightest `(lo, hi)` with `lo * reference <= X <= hi * reference`.
pub fn spectral_sandwich(reference: &Matrix, x: &Matrix) -> (f64, f64) {
    let linv = gauss_jordan_inverse(&cholesky(reference));
    let m = naive_multiply(&naive_multiply(&linv, x), &transpose(&linv));
    let sym = DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let ev = jacobi_eigenvalues(&sym);
    (ev[0], ev[ev.len() - 1])
}

pub fn rel_frobenius(x: &Matrix, reference: &Matrix) -> f64 {
    let diff: f64 = x
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let norm: f64 = reference.as_slice().iter().map(|b| b * b).sum();
    (diff / norm).sqrt()
}

/// Leverage scores of `sqrt(W) A` through explicit inversion of the naive Gram.
pub fn naive_leverage(a: &Matrix, w: &[f64]) -> Vec<f64> {
    let minv = gauss_jordan_inverse(&naive_gram(a, w));
    (0..a.rows()).map(|i| w[i] * inverse_quad_form(&minv, a.row(i))).collect()
}

/// Exact product weights `v^(t)_i = w0_i prod_{t' <= t} a_i^T Q_{t'-1}^{-1} a_i`
/// for every row, `t = 0..=forms.len()`.
pub fn product_weight_replay(a: &Matrix, forms: &[Matrix], w0: &[f64]) -> Vec<Vec<f64>> {
    let inverses: Vec<Matrix> = forms.iter().map(gauss_jordan_inverse).collect();
    let mut out = vec![w0.to_vec()];
    for inv in &inverses {
        let prev = out.last().unwrap();
        let next = (0..a.rows()).map(|i| prev[i] * inverse_quad_form(inv, a.row(i))).collect();
        out.push(next);
    }
    out
}

/// In-memory replay of the multi-pass recursion: `Q^(0) = w0 A^T A`,
/// `w^(t)_i = w0 prod_{t'<t} a_i^T (Q^(t'))^{-1} a_i`, `Q^(t) = A^T W^(t) A`;
/// returns `(mean_t Q^(t), mean_t w^(t))` over `t = 0..=T`.
pub fn streaming_replay(a: &Matrix, iterations: usize, w0: f64) -> (Matrix, Vec<f64>) {
    let n = a.rows();
    let mut w = vec![w0; n];
    let mut q = naive_gram(a, &w);
    let mut q_sum = q.clone();
    let mut w_sum = w.clone();
    for _ in 0..iterations {
        let inv = gauss_jordan_inverse(&q);
        for i in 0..n {
            w[i] *= inverse_quad_form(&inv, a.row(i));
        }
        q = naive_gram(a, &w);
        for (s, x) in q_sum.as_mut_slice().iter_mut().zip(q.as_slice()) {
            *s += x;
        }
        for (s, x) in w_sum.iter_mut().zip(&w) {
            *s += x;
        }
    }
    let c = 1.0 / (iterations + 1) as f64;
    (q_sum.scaled(c), w_sum.into_iter().map(|x| x * c).collect())
}

pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
