//! Leverage scores of `sqrt(W) A`: exact, sketched `(1 +- eps)`, and
//! leverage-score row sampling.

use std::ops::Deref;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{
    blocked_row_norms_sq, check_weights, fill_standard_normal, gaussian_matrix, gram,
    gram_matrix, DenseMatrix, SpdForm,
};
use crate::rng::{derive_seed, rng_from};
use crate::scalar::Scalar;

/// Nonnegative, finite per-row weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector<T>(Vec<T>);

impl<T: Scalar> WeightVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        check_weights(values.len(), &values)?;
        Ok(Self(values))
    }

    pub fn uniform(n: usize, value: T) -> Self {
        Self(vec![value; n])
    }

    pub fn sum(&self) -> T {
        self.0.iter().copied().sum()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

impl<T> Deref for WeightVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Rows kept by a Bernoulli leverage-score sample, i.e. the nonzero diagonal
/// of the sampling matrix `S` with `S_ii = 1 / sqrt(p_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledRowSet<T> {
    pub indices: Vec<usize>,
    pub scales: Vec<T>,
    pub probabilities: Vec<T>,
}

impl<T: Scalar> SampledRowSet<T> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `(S sqrt(W) A)^T (S sqrt(W) A)`.
    pub fn sampled_gram(&self, a: &DenseMatrix<T>, w: &[T]) -> Result<SpdForm<T>> {
        check_weights(a.rows(), w)?;
        let d = a.cols();
        if self.is_empty() {
            return SpdForm::new(DenseMatrix::zeros(d, d));
        }
        let mut data = Vec::with_capacity(self.len() * d);
        let mut weights = Vec::with_capacity(self.len());
        for ((&i, &s), _) in self.indices.iter().zip(&self.scales).zip(&self.probabilities) {
            data.extend_from_slice(a.row(i));
            weights.push(w[i] * s * s);
        }
        let sub = DenseMatrix::from_vec_unchecked(self.len(), d, data);
        gram(&sub, &weights)
    }
}

/// `tau_i(sqrt(W) A) = w_i a_i^T (A^T W A)^- a_i`, clamped to `[0, 1]`.
pub fn exact_leverage_scores<T: Scalar>(a: &DenseMatrix<T>, w: &[T]) -> Result<Vec<T>> {
    let q = gram(a, w)?;
    let forms = q.row_quad_forms(a)?;
    Ok(forms
        .into_iter()
        .zip(w)
        .map(|(f, &wi)| (wi * f).max(T::zero()).min(T::one()))
        .collect())
}

/// Sizing constants for [`sketched_leverage_scores_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SketchParams {
    /// Embedding rows per column of `A`.
    pub embed_per_dim: f64,
    /// Embedding rows per unit of `ln(1/delta)`.
    pub embed_per_log: f64,
    /// `C` in `t = ceil(C eps^-2 ln(n/delta))` Gaussian projection columns.
    pub jl_const: f64,
    /// Fraction of `eps` granted to each of the two sketching stages.
    pub stage_share: f64,
    /// Replace a stage by its exact counterpart whenever sketching costs at
    /// least as much: a dense `s x d` embedding of `n` rows takes `n s d`
    /// flops against `n d^2` for the exact Gram, so it is skipped once
    /// `s >= min(n, d)`; the projection is skipped once its columns reach `d`.
    pub exact_when_cheaper: bool,
}

impl Default for SketchParams {
    fn default() -> Self {
        Self {
            embed_per_dim: 4.0,
            embed_per_log: 32.0,
            jl_const: 32.0,
            stage_share: 0.5,
            exact_when_cheaper: false,
        }
    }
}

impl SketchParams {
    /// Rows of the Gaussian subspace embedding.
    pub fn embedding_rows(&self, d: usize, eps: f64, delta: f64) -> usize {
        let e = self.stage_share * eps;
        ((self.embed_per_dim * d as f64 + self.embed_per_log * (1.0 / delta).ln()) / (e * e))
            .ceil()
            .max(1.0) as usize
    }

    /// Columns of the Gaussian row-norm projection.
    pub fn projection_cols(&self, n: usize, eps: f64, delta: f64) -> usize {
        let e = self.stage_share * eps;
        (self.jl_const / (e * e) * (n as f64 / delta).ln())
            .ceil()
            .max(1.0) as usize
    }
}

fn check_eps_delta(eps: f64, delta: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// `(1 +- eps)` leverage scores of `sqrt(W) A` with default sizing.
pub fn sketched_leverage_scores<T: Scalar>(
    a: &DenseMatrix<T>,
    w: &[T],
    eps: f64,
    delta: f64,
    seed: u64,
) -> Result<Vec<T>> {
    sketched_leverage_scores_with(a, w, eps, delta, seed, &SketchParams::default())
}

/// Sketched leverage scores.
///
/// 1. A Gaussian subspace embedding `Pi sqrt(W) A` (`s x d`, scaled by
///    `1/sqrt(s)`) is accumulated one input row at a time.
/// 2. Its Gram `M` gives the change of basis `M^{-1/2}`, which whitens the row
///    space of `sqrt(W) A` (pseudo inverse on the range if rank deficient).
/// 3. A `d x t` Gaussian `G` compresses that basis, and the scores are the
///    squared row norms of `sqrt(W) A M^{-1/2} G` divided by `t`, evaluated by
///    one blocked product.
pub fn sketched_leverage_scores_with<T: Scalar>(
    a: &DenseMatrix<T>,
    w: &[T],
    eps: f64,
    delta: f64,
    seed: u64,
    params: &SketchParams,
) -> Result<Vec<T>> {
    check_eps_delta(eps, delta)?;
    check_weights(a.rows(), w)?;
    let (n, d) = a.shape();

    let s = params.embedding_rows(d, eps, delta);
    let embedded = if params.exact_when_cheaper && s >= n.min(d) {
        gram(a, w)?
    } else {
        let mut rng = rng_from(seed, &[0x5e]);
        let mut sketch = DenseMatrix::<T>::zeros(s, d);
        let mut pi = vec![T::zero(); s];
        let inv_sqrt_s = T::of((s as f64).sqrt().recip());
        let data = sketch.as_mut_slice();
        for (row, &wi) in a.row_iter().zip(w) {
            fill_standard_normal(&mut rng, &mut pi);
            let sw = wi.sqrt() * inv_sqrt_s;
            if sw == T::zero() {
                continue;
            }
            for (out, &p) in data.chunks_exact_mut(d).zip(&pi) {
                let c = p * sw;
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += c * x;
                }
            }
        }
        SpdForm::new(gram_matrix(&sketch, &vec![T::one(); s])?)?
    };

    let t = params.projection_cols(n, eps, delta);
    let (basis, scale) = if params.exact_when_cheaper && t >= d {
        (embedded.inv_sqrt_apply(&DenseMatrix::identity(d))?, T::one())
    } else {
        let g = gaussian_matrix::<T>(d, t, derive_seed(seed, &[0x71]))?;
        (embedded.inv_sqrt_apply(&g.matrix)?, T::of(1.0 / t as f64))
    };

    let norms = blocked_row_norms_sq(a, &basis)?;
    Ok(norms
        .into_iter()
        .zip(w)
        .map(|(nsq, &wi)| wi * nsq * scale)
        .collect())
}

/// Constants of the leverage-score sampler.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleParams {
    /// `c_s` in `alpha = c_s eps^2 / ln(d/delta)`.
    pub alpha_const: f64,
}

impl Default for SampleParams {
    fn default() -> Self {
        Self { alpha_const: 1.0 / 16.0 }
    }
}

impl SampleParams {
    pub fn alpha(&self, d: usize, eps: f64, delta: f64) -> f64 {
        self.alpha_const * eps * eps / (d as f64 / delta).ln()
    }
}

/// Bernoulli leverage-score sample with default constants.
pub fn leverage_sample<T: Scalar>(
    a: &DenseMatrix<T>,
    w: &[T],
    tau_over: &[T],
    eps: f64,
    delta: f64,
    seed: u64,
) -> Result<SampledRowSet<T>> {
    leverage_sample_with(a, w, tau_over, eps, delta, seed, &SampleParams::default())
}

/// Keeps row `i` independently with probability `p_i = min(1, tau_over_i / alpha)`
/// and records the rescaling `1 / sqrt(p_i)`.
///
/// `tau_over` must overestimate the leverage scores of `sqrt(W) A`; the
/// matrix itself is only consulted for its shape.
pub fn leverage_sample_with<T: Scalar>(
    a: &DenseMatrix<T>,
    w: &[T],
    tau_over: &[T],
    eps: f64,
    delta: f64,
    seed: u64,
    params: &SampleParams,
) -> Result<SampledRowSet<T>> {
    check_eps_delta(eps, delta)?;
    check_weights(a.rows(), w)?;
    if tau_over.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} score estimates for {} rows",
            tau_over.len(),
            a.rows()
        )));
    }
    if let Some(index) = tau_over.iter().position(|&t| !(t >= T::zero())) {
        return Err(Error::InvalidParameter(format!(
            "leverage overestimate at row {index} is negative or NaN"
        )));
    }
    let alpha = params.alpha(a.cols(), eps, delta);
    let mut rng = rng_from(seed, &[0x5a]);
    let mut set = SampledRowSet {
        indices: Vec::new(),
        scales: Vec::new(),
        probabilities: Vec::new(),
    };
    for (i, &tau) in tau_over.iter().enumerate() {
        let p = (tau.to_f64_lossy() / alpha).min(1.0);
        let u: f64 = rng.random();
        if p > 0.0 && u < p {
            set.indices.push(i);
            set.probabilities.push(T::of(p));
            set.scales.push(T::of(p.sqrt().recip()));
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_rows_have_unit_scores() {
        let a = DenseMatrix::<f64>::identity(3);
        let tau = exact_leverage_scores(&a, &[1.0; 3]).unwrap();
        assert!(tau.iter().all(|&t| (t - 1.0).abs() < 1e-15));
    }

    #[test]
    fn duplicated_rows_split_the_score() {
        let a = DenseMatrix::<f64>::identity(2).tile_rows(2);
        let tau = exact_leverage_scores(&a, &[1.0; 4]).unwrap();
        assert!(tau.iter().all(|&t| (t - 0.5).abs() < 1e-15));
    }

    #[test]
    fn zero_weight_row_has_zero_score() {
        let a = DenseMatrix::<f64>::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let tau = exact_leverage_scores(&a, &[1.0, 1.0, 0.0]).unwrap();
        assert_eq!(tau[2], 0.0);
        assert!((tau[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_row_sketch() {
        let a = DenseMatrix::<f64>::new(1, 1, vec![5.0]).unwrap();
        let tau = sketched_leverage_scores(&a, &[1.0], 0.2, 0.1, 3).unwrap();
        assert!((tau[0] - 1.0).abs() <= 0.2, "{}", tau[0]);
    }

    #[test]
    fn sketch_parameter_validation() {
        let a = DenseMatrix::<f64>::identity(2);
        assert!(sketched_leverage_scores(&a, &[1.0; 2], 0.0, 0.1, 1).is_err());
        assert!(sketched_leverage_scores(&a, &[1.0; 2], 0.5, 1.0, 1).is_err());
        assert!(sketched_leverage_scores(&a, &[1.0], 0.5, 0.1, 1).is_err());
    }

    #[test]
    fn exact_shortcut_reproduces_exact_scores() {
        let a = DenseMatrix::from_fn(12, 3, |i, j| ((i * 3 + j * 7) % 5) as f64 - 2.0 + 0.1 * j as f64);
        let w: Vec<f64> = (0..12).map(|i| 0.5 + i as f64 * 0.1).collect();
        let params = SketchParams {
            exact_when_cheaper: true,
            ..SketchParams::default()
        };
        let sk = sketched_leverage_scores_with(&a, &w, 0.1, 0.1, 9, &params).unwrap();
        let ex = exact_leverage_scores(&a, &w).unwrap();
        for (s, e) in sk.iter().zip(&ex) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_probabilities_keep_everything() {
        let a = DenseMatrix::<f64>::identity(4);
        let set = leverage_sample(&a, &[1.0; 4], &[1.0; 4], 0.01, 0.1, 5).unwrap();
        assert_eq!(set.indices, vec![0, 1, 2, 3]);
        assert!(set.scales.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn negative_overestimates_rejected() {
        let a = DenseMatrix::<f64>::identity(2);
        assert!(leverage_sample(&a, &[1.0; 2], &[0.5, -0.1], 0.3, 0.1, 1).is_err());
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![1.0, -1.0]).is_err());
        assert!(WeightVector::new(vec![1.0, f64::INFINITY]).is_err());
        assert_eq!(WeightVector::new(vec![1.0, 2.0]).unwrap().sum(), 3.0);
    }
}
