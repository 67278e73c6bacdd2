use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Panel sizes for [`blocked_multiply_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSizes {
    pub rows: usize,
    pub inner: usize,
    pub cols: usize,
}

impl Default for BlockSizes {
    fn default() -> Self {
        Self {
            rows: 64,
            inner: 64,
            cols: 64,
        }
    }
}

/// `A B` with the default 64x64x64 panel schedule.
pub fn blocked_multiply<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    blocked_multiply_with(a, b, BlockSizes::default())
}

/// Cache-blocked `A B`.
///
/// Row panels of the output are independent and may run in parallel. Every
/// output entry accumulates its inner products in ascending `k` order no
/// matter how the panels are sized, so the result is bitwise identical for
/// any block sizes and thread count.
pub fn blocked_multiply_with<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    blocks: BlockSizes,
) -> Result<DenseMatrix<T>> {
    if a.cols() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if blocks.rows == 0 || blocks.inner == 0 || blocks.cols == 0 {
        return Err(Error::InvalidParameter("block sizes must be positive".into()));
    }
    let (n, t) = (a.rows(), b.cols());
    let mut out = vec![T::zero(); n * t];
    if n == 0 || t == 0 {
        return Ok(DenseMatrix::from_vec_unchecked(n, t, out));
    }
    out.par_chunks_mut(blocks.rows * t)
        .enumerate()
        .for_each(|(panel, out_panel)| {
            panel_product(a, b, panel * blocks.rows, out_panel, blocks);
        });
    Ok(DenseMatrix::from_vec_unchecked(n, t, out))
}

/// Computes `A B` panel by panel and reduces each output row with `f`
/// instead of materialising the full `n x t` product.
pub fn blocked_multiply_map<T, R, F>(
    a: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    blocks: BlockSizes,
    f: F,
) -> Result<Vec<R>>
where
    T: Scalar,
    R: Send,
    F: Fn(usize, &[T]) -> R + Sync,
{
    if a.cols() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if blocks.rows == 0 || blocks.inner == 0 || blocks.cols == 0 {
        return Err(Error::InvalidParameter("block sizes must be positive".into()));
    }
    let n = a.rows();
    let t = b.cols();
    let panels: Vec<Vec<R>> = (0..n.div_ceil(blocks.rows))
        .into_par_iter()
        .map(|panel| {
            let row0 = panel * blocks.rows;
            let rows = blocks.rows.min(n - row0);
            let mut buf = vec![T::zero(); rows * t];
            panel_product(a, b, row0, &mut buf, blocks);
            (0..rows)
                .map(|r| f(row0 + r, &buf[r * t..(r + 1) * t]))
                .collect()
        })
        .collect();
    Ok(panels.into_iter().flatten().collect())
}

/// Squared Euclidean norm of every row of `A B`.
pub fn blocked_row_norms_sq<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<Vec<T>> {
    blocked_multiply_map(a, b, BlockSizes::default(), |_, row| {
        row.iter().fold(T::zero(), |acc, &x| acc + x * x)
    })
}

/// Accumulates rows `row0..row0 + out_panel.len() / t` of `A B` into `out_panel`.
fn panel_product<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    row0: usize,
    out_panel: &mut [T],
    blocks: BlockSizes,
) {
    let inner = a.cols();
    let t = b.cols();
    if t == 0 {
        return;
    }
    let a_data = a.as_slice();
    let b_data = b.as_slice();
    let panel_rows = out_panel.len() / t;
    for k0 in (0..inner).step_by(blocks.inner) {
        let k1 = (k0 + blocks.inner).min(inner);
        for j0 in (0..t).step_by(blocks.cols) {
            let j1 = (j0 + blocks.cols).min(t);
            for r in 0..panel_rows {
                let a_row = &a_data[(row0 + r) * inner..(row0 + r + 1) * inner];
                let o = &mut out_panel[r * t + j0..r * t + j1];
                for k in k0..k1 {
                    let aik = a_row[k];
                    let b_row = &b_data[k * t + j0..k * t + j1];
                    for (x, &bv) in o.iter_mut().zip(b_row) {
                        *x += aik * bv;
                    }
                }
            }
        }
    }
}
