use rand::Rng as _;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// A `rows_in x cols_out` matrix of i.i.d. standard normals, reproducible from its seed.
#[derive(Clone, Debug)]
pub struct GaussianSketch<T> {
    pub rows_in: usize,
    pub cols_out: usize,
    pub seed: u64,
    pub matrix: DenseMatrix<T>,
}

pub fn gaussian_matrix<T: Scalar>(d: usize, k: usize, seed: u64) -> Result<GaussianSketch<T>> {
    if d == 0 || k == 0 {
        return Err(Error::InvalidParameter(format!(
            "Gaussian sketch dimensions must be positive, got {d}x{k}"
        )));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let mut data = vec![T::zero(); d * k];
    fill_standard_normal(&mut rng, &mut data);
    Ok(GaussianSketch {
        rows_in: d,
        cols_out: k,
        seed,
        matrix: DenseMatrix::from_vec_unchecked(d, k, data),
    })
}

pub(crate) fn fill_standard_normal<T: Scalar>(rng: &mut Rng, out: &mut [T]) {
    for x in out {
        let z: f64 = rng.sample(StandardNormal);
        *x = T::of(z);
    }
}
