use crate::error::{Error, Result};
use crate::linalg::{blocked_multiply, symmetric_eigen, DenseMatrix};
use crate::scalar::Scalar;

/// Symmetric positive-semidefinite `d x d` quadratic form with a cached
/// spectral factorisation.
///
/// Eigenvalues at or below `rank_tolerance * lambda_max` are treated as zero:
/// they are clamped in [`eigenvalues`](Self::eigenvalues) and dropped from every
/// pseudo-inverse operation.
#[derive(Clone, Debug)]
pub struct SpdForm<T> {
    matrix: DenseMatrix<T>,
    eigenvalues: Vec<T>,
    eigenvectors: DenseMatrix<T>,
    rank_tolerance: T,
    rank: usize,
    /// `d x rank`, column `j` is `v_j / sqrt(lambda_j)`, so `F F^T = Q^-`.
    pinv_sqrt: DenseMatrix<T>,
}

impl<T: Scalar> SpdForm<T> {
    /// Default relative rank cutoff: `d * machine epsilon`.
    pub fn default_tolerance(dim: usize) -> T {
        T::of_usize(dim.max(1)) * T::epsilon()
    }

    pub fn new(matrix: DenseMatrix<T>) -> Result<Self> {
        let tol = Self::default_tolerance(matrix.rows());
        Self::with_tolerance(matrix, tol)
    }

    pub fn with_tolerance(matrix: DenseMatrix<T>, rank_tolerance: T) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "quadratic form must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        if !(rank_tolerance >= T::zero()) {
            return Err(Error::InvalidParameter("rank tolerance must be >= 0".into()));
        }
        let d = matrix.rows();
        let sym_tol = T::of(1e-12);
        for i in 0..d {
            for j in (i + 1)..d {
                let diff = (matrix[(i, j)] - matrix[(j, i)]).abs();
                if diff > sym_tol * T::one().max(matrix[(i, j)].abs()) {
                    return Err(Error::NotSymmetric {
                        i,
                        j,
                        diff: diff.to_f64_lossy(),
                    });
                }
            }
        }
        let mut matrix = matrix;
        let half = T::of(0.5);
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = half * (matrix[(i, j)] + matrix[(j, i)]);
                matrix[(i, j)] = avg;
                matrix[(j, i)] = avg;
            }
        }

        let (mut eigenvalues, eigenvectors) = symmetric_eigen(&matrix);
        let lambda_max = eigenvalues[0].max(T::zero());
        let lambda_min = eigenvalues[d - 1];
        // Rounding in a Gram product leaves negative eigenvalues of order
        // eps * lambda_max; anything far beyond that is a genuinely indefinite input.
        if lambda_min < -(T::epsilon().sqrt() * lambda_max.max(T::min_positive_value())) {
            return Err(Error::NotPsd {
                min: lambda_min.to_f64_lossy(),
                max: lambda_max.to_f64_lossy(),
            });
        }
        let cutoff = rank_tolerance * lambda_max;
        let mut rank = 0;
        for lam in eigenvalues.iter_mut() {
            if *lam > cutoff && *lam > T::zero() {
                rank += 1;
            } else {
                *lam = T::zero();
            }
        }

        let pinv_sqrt = DenseMatrix::from_fn(d, rank, |i, j| {
            eigenvectors[(i, j)] / eigenvalues[j].sqrt()
        });

        Ok(Self {
            matrix,
            eigenvalues,
            eigenvectors,
            rank_tolerance,
            rank,
            pinv_sqrt,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix<T> {
        self.matrix
    }

    /// Nonincreasing, with sub-cutoff values clamped to zero.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors stored as columns.
    pub fn eigenvectors(&self) -> &DenseMatrix<T> {
        &self.eigenvectors
    }

    pub fn rank_tolerance(&self) -> T {
        self.rank_tolerance
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.dim()
    }

    /// `d x rank` factor `F` with `F F^T = Q^-`.
    pub fn pinv_sqrt_factor(&self) -> &DenseMatrix<T> {
        &self.pinv_sqrt
    }

    /// `a^T Q^- a`.
    pub fn quad_form_pinv(&self, a: &[T]) -> Result<T> {
        if a.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} against {}x{} form",
                a.len(),
                self.dim(),
                self.dim()
            )));
        }
        Ok(self.quad_form_pinv_unchecked(a))
    }

    pub(crate) fn quad_form_pinv_unchecked(&self, a: &[T]) -> T {
        let r = self.rank;
        let mut y = vec![T::zero(); r];
        for (&ai, frow) in a.iter().zip(self.pinv_sqrt.row_iter()) {
            if ai != T::zero() {
                for (yj, &f) in y.iter_mut().zip(frow) {
                    *yj += ai * f;
                }
            }
        }
        y.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }

    /// `a_i^T Q^- a_i` for every row of `a`, through one blocked product.
    pub fn row_quad_forms(&self, a: &DenseMatrix<T>) -> Result<Vec<T>> {
        if a.cols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} rows against {}x{} form",
                a.rows(),
                a.cols(),
                self.dim(),
                self.dim()
            )));
        }
        if self.rank == 0 {
            return Ok(vec![T::zero(); a.rows()]);
        }
        let y = blocked_multiply(a, &self.pinv_sqrt)?;
        Ok(y.row_iter().map(crate::linalg::norm_sq).collect())
    }

    /// `Q^{-1/2} G` using the pseudo inverse square root on the range of `Q`.
    pub fn inv_sqrt_apply(&self, g: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if g.rows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} right-hand side against {}x{} form",
                g.rows(),
                g.cols(),
                self.dim(),
                self.dim()
            )));
        }
        let d = self.dim();
        if self.rank == 0 {
            return Ok(DenseMatrix::zeros(d, g.cols()));
        }
        // V_r diag(lambda^{-1/2}) V_r^T G
        let mut proj = DenseMatrix::zeros(self.rank, g.cols());
        for j in 0..self.rank {
            let s = self.eigenvalues[j].sqrt().recip();
            let out = proj.row_mut(j);
            for i in 0..d {
                let vij = self.eigenvectors[(i, j)] * s;
                if vij != T::zero() {
                    for (o, &gv) in out.iter_mut().zip(g.row(i)) {
                        *o += vij * gv;
                    }
                }
            }
        }
        let vr = DenseMatrix::from_fn(d, self.rank, |i, j| self.eigenvectors[(i, j)]);
        blocked_multiply(&vr, &proj)
    }

    /// Dense pseudo-inverse `Q^-`.
    pub fn pinv(&self) -> DenseMatrix<T> {
        let d = self.dim();
        let f = &self.pinv_sqrt;
        DenseMatrix::from_fn(d, d, |i, j| crate::linalg::dot(f.row(i), f.row(j)))
    }

    /// `log det Q`; fails on rank deficiency.
    pub fn logdet(&self) -> Result<T> {
        if !self.is_full_rank() {
            return Err(Error::Singular {
                rank: self.rank,
                dim: self.dim(),
            });
        }
        Ok(self.eigenvalues.iter().map(|l| l.ln()).sum())
    }

    pub fn max_eigenvalue(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn scaled(&self, c: T) -> Result<Self> {
        Self::with_tolerance(self.matrix.scaled(c), self.rank_tolerance)
    }
}
