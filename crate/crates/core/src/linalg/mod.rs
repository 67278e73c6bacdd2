//! Dense matrix primitives shared by every solver.

mod eigen;
mod gaussian;
mod matrix;
mod multiply;
mod spd;

pub use eigen::symmetric_eigen;
pub use gaussian::{gaussian_matrix, GaussianSketch};
pub(crate) use gaussian::fill_standard_normal;
pub use matrix::{dot, norm_sq, DenseMatrix};
pub use multiply::{
    blocked_multiply, blocked_multiply_map, blocked_multiply_with, blocked_row_norms_sq, BlockSizes,
};
pub use spd::SpdForm;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Checks a weight vector against `n` rows: right length, finite, nonnegative.
pub fn check_weights<T: Scalar>(n: usize, w: &[T]) -> Result<()> {
    if w.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {n} rows",
            w.len()
        )));
    }
    for (index, &v) in w.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row: index, col: 0 });
        }
        if v < T::zero() {
            return Err(Error::NegativeWeight {
                index,
                value: v.to_f64_lossy(),
            });
        }
    }
    Ok(())
}

/// `A^T diag(w) A` as a plain symmetric matrix.
///
/// Rows are split into a fixed number of contiguous chunks (a function of `n`
/// only), each chunk accumulates the upper triangle, and the partial sums are
/// added in chunk order before mirroring. The result does not depend on the
/// thread count.
pub fn gram_matrix<T: Scalar>(a: &DenseMatrix<T>, w: &[T]) -> Result<DenseMatrix<T>> {
    check_weights(a.rows(), w)?;
    let (n, d) = a.shape();
    let chunk = (n.div_ceil(32)).max(512);

    let partials: Vec<Vec<T>> = a
        .as_slice()
        .par_chunks(chunk * d)
        .zip(w.par_chunks(chunk))
        .map(|(rows, ws)| {
            let mut acc = vec![T::zero(); d * d];
            let mut scaled = vec![T::zero(); d];
            for (row, &wi) in rows.chunks_exact(d).zip(ws) {
                if wi == T::zero() {
                    continue;
                }
                for (s, &x) in scaled.iter_mut().zip(row) {
                    *s = wi * x;
                }
                for j in 0..d {
                    let sj = scaled[j];
                    if sj == T::zero() {
                        continue;
                    }
                    let out = &mut acc[j * d + j..(j + 1) * d];
                    for (o, &x) in out.iter_mut().zip(&row[j..]) {
                        *o += sj * x;
                    }
                }
            }
            acc
        })
        .collect();

    let mut g = vec![T::zero(); d * d];
    for p in &partials {
        for (x, &y) in g.iter_mut().zip(p) {
            *x += y;
        }
    }
    for j in 0..d {
        for k in (j + 1)..d {
            g[k * d + j] = g[j * d + k];
        }
    }
    Ok(DenseMatrix::from_vec_unchecked(d, d, g))
}

/// `A^T diag(w) A` with its spectral factorisation.
pub fn gram<T: Scalar>(a: &DenseMatrix<T>, w: &[T]) -> Result<SpdForm<T>> {
    SpdForm::new(gram_matrix(a, w)?)
}

/// `diag(s) A`.
pub fn scale_rows<T: Scalar>(a: &DenseMatrix<T>, s: &[T]) -> DenseMatrix<T> {
    assert_eq!(a.rows(), s.len());
    let mut out = a.clone();
    for (i, &si) in s.iter().enumerate() {
        for x in out.row_mut(i) {
            *x *= si;
        }
    }
    out
}
