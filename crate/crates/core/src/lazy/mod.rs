//! Lazy-update John ellipsoid solver.
//!
//! Within a block of `T` iterations the per-row weights are never
//! materialised. [`approx_quadratic`] keeps only cheap chi-squared-noisy
//! estimates `u` to drive a leverage-score sample and computes exact product
//! weights for the sampled rows alone. At the end of the block
//! [`reset_weights`] recovers all `T` weight vectors from a single product of
//! `A` with the concatenated inverse square roots.

pub mod chi2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::{check_eps, finish, iteration_count, normalize_mass, residual_from_scores, validate_problem, EllipsoidResult};
use crate::leverage::{leverage_sample_with, sketched_leverage_scores_with, SampleParams, SketchParams};
use crate::linalg::{
    blocked_multiply_map, blocked_row_norms_sq, gaussian_matrix, gram, BlockSizes, DenseMatrix, SpdForm,
};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

/// How the block-end weights are recovered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResetMode {
    /// Gaussian projection with `m` columns unless `m >= d`, then exact.
    Auto,
    /// `G = I_d`: exact product weights.
    Exact,
    /// Always project onto `m` Gaussian columns.
    Sketched,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LazyConfig {
    pub eps: f64,
    /// Drift exponent `theta ∈ (0, 1/4]`.
    pub theta: f64,
    /// Chi-squared degrees of freedom per inner iteration; `ceil(8 / theta)` if unset.
    pub k: Option<usize>,
    /// Inner block length `T = min(ceil(c log2 n), remaining)`.
    pub c: f64,
    /// Fixed inner block length, overriding `c`.
    pub inner: Option<usize>,
    /// Fixed total iteration count, overriding `ceil(iteration_const / eps * ln(n/d))`.
    pub total_override: Option<usize>,
    pub iteration_const: f64,
    /// Reset projection columns; derived from `eps`, `B` and `T` if unset.
    pub m: Option<usize>,
    pub reset: ResetMode,
    /// Leverage oversampling factor; `n^(2 theta)` if unset.
    pub oversample: Option<f64>,
    pub sample: SampleParams,
    /// Accuracy of the score estimates of `sqrt(U) A` fed to the sampler.
    pub score_eps: f64,
    pub sketch: SketchParams,
    pub max_retries: usize,
    pub seed: u64,
    pub certify: bool,
    /// Keep the low-accuracy weights `u^(t)` in the history (test diagnostics).
    pub trace: bool,
}

impl LazyConfig {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            theta: 0.1,
            k: None,
            c: 0.1,
            inner: None,
            total_override: None,
            iteration_const: 4.0,
            m: None,
            reset: ResetMode::Auto,
            oversample: None,
            sample: SampleParams::default(),
            score_eps: 0.5,
            sketch: SketchParams {
                exact_when_cheaper: true,
                ..SketchParams::default()
            },
            max_retries: 3,
            seed: 0,
            certify: false,
            trace: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_certificate(mut self) -> Self {
        self.certify = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_eps(self.eps)?;
        if !(self.theta > 0.0 && self.theta <= 0.25) {
            return Err(Error::InvalidParameter(format!("theta must lie in (0, 1/4], got {}", self.theta)));
        }
        if matches!(self.k, Some(k) if k < 2) {
            return Err(Error::InvalidParameter("k must be at least 2".into()));
        }
        if matches!(self.m, Some(0)) || matches!(self.inner, Some(0)) || matches!(self.total_override, Some(0)) {
            return Err(Error::InvalidParameter("m, T and the iteration count must be positive".into()));
        }
        if !(self.c > 0.0) || !(self.score_eps > 0.0 && self.score_eps < 1.0) {
            return Err(Error::InvalidParameter("c must be positive and score_eps in (0, 1)".into()));
        }
        if matches!(self.oversample, Some(o) if !(o >= 1.0)) {
            return Err(Error::InvalidParameter("oversampling factor must be >= 1".into()));
        }
        Ok(())
    }

    /// Resolves every derived constant for an `n x d` input.
    pub fn plan(&self, n: usize, d: usize) -> Result<LazyPlan> {
        self.validate()?;
        let total = self
            .total_override
            .unwrap_or_else(|| iteration_count(self.iteration_const, self.eps, n, d));
        let inner = self
            .inner
            .unwrap_or_else(|| (self.c * (n as f64).log2()).ceil().max(1.0) as usize)
            .min(total);
        let blocks = total.div_ceil(inner);
        let k = self.k.unwrap_or_else(|| (8.0 / self.theta).ceil() as usize);
        let bt = (blocks * inner) as f64;
        let m = self.m.unwrap_or_else(|| {
            let e = self.eps / bt;
            (32.0 / (e * e) * (n as f64 * bt * 100.0).ln()).ceil().min(usize::MAX as f64 / 4.0) as usize
        });
        let exact_reset = match self.reset {
            ResetMode::Exact => true,
            ResetMode::Sketched => false,
            ResetMode::Auto => m >= d,
        };
        Ok(LazyPlan {
            total,
            inner,
            blocks,
            k,
            m: if exact_reset { d } else { m },
            exact_reset,
            oversample: self.oversample.unwrap_or_else(|| (n as f64).powf(2.0 * self.theta)),
            delta: 1.0 / n.max(2) as f64,
        })
    }
}

/// Constants of one lazy solve after resolving defaults against `n` and `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LazyPlan {
    /// Total iterations `B T`, or fewer when the last block is short.
    pub total: usize,
    pub inner: usize,
    pub blocks: usize,
    pub k: usize,
    pub m: usize,
    pub exact_reset: bool,
    pub oversample: f64,
    pub delta: f64,
}

impl LazyPlan {
    /// Length of block `b` (0-based); the last block takes the remainder.
    pub fn block_len(&self, b: usize) -> usize {
        self.inner.min(self.total - b * self.inner)
    }
}

/// `Q~^(0), ..., Q~^(T)` from one call of [`approx_quadratic`].
#[derive(Clone, Debug)]
pub struct QuadraticHistory<T> {
    pub forms: Vec<SpdForm<T>>,
    /// Seed of the `d x k` Gaussian drawn in iteration `t` (1-based, so
    /// `seeds[t - 1]`).
    pub seeds: Vec<u64>,
    /// Rows kept by the sample of iteration `t`.
    pub sample_sizes: Vec<usize>,
    /// Oversampling retries needed per iteration.
    pub retries: Vec<usize>,
    /// `u^(1), ..., u^(T)` when tracing.
    pub low_accuracy: Vec<Vec<T>>,
}

/// Exact product weights `v_i^(t) = w0_i prod_{t'<=t} a_i^T (Q~^(t'-1))^- a_i`,
/// evaluated lazily per row and memoised so each factor is computed once.
struct ProductWeights<'a, T> {
    a: &'a DenseMatrix<T>,
    done: Vec<usize>,
    value: Vec<T>,
}

impl<'a, T: Scalar> ProductWeights<'a, T> {
    fn new(a: &'a DenseMatrix<T>, w0: &[T]) -> Self {
        Self {
            a,
            done: vec![0; a.rows()],
            value: w0.to_vec(),
        }
    }

    fn get(&mut self, i: usize, t: usize, forms: &[SpdForm<T>]) -> T {
        while self.done[i] < t {
            let f = forms[self.done[i]].quad_form_pinv_unchecked(self.a.row(i));
            self.value[i] *= f;
            self.done[i] += 1;
        }
        self.value[i]
    }
}

/// Algorithm 1 of the lazy scheme for `rounds` iterations.
///
/// Iteration `t`:
/// 1. `u_i <- u_i |e_i^T A (Q~^(t-1))^{-1/2} G|^2 / k` with a fresh `d x k` Gaussian.
/// 2. Leverage-score sample of `sqrt(U) A`, with score estimates inflated by the
///    oversampling factor.
/// 3. Exact product weights `v_i^(t)` for the sampled rows only.
/// 4. `Q~^(t) = sum over kept rows of (v_i / p_i) a_i a_i^T`.
///
/// A rank-deficient sample is redrawn with doubled oversampling up to
/// `max_retries` times.
pub fn approx_quadratic<T: Scalar>(
    a: &DenseMatrix<T>,
    w0: &[T],
    rounds: usize,
    cfg: &LazyConfig,
    plan: &LazyPlan,
    seed: u64,
) -> Result<QuadraticHistory<T>> {
    let (n, d) = a.shape();
    if w0.len() != n {
        return Err(Error::DimensionMismatch(format!("{} weights for {n} rows", w0.len())));
    }
    if let Some(i) = w0.iter().position(|&x| !(x > T::zero()) || !x.is_finite()) {
        return Err(Error::InvalidParameter(format!("initial weight {i} is not positive")));
    }
    let q0 = gram(a, w0)?;
    if !q0.is_full_rank() {
        return Err(Error::Singular { rank: q0.rank(), dim: d });
    }
    let mut history = QuadraticHistory {
        forms: vec![q0],
        seeds: Vec::with_capacity(rounds),
        sample_sizes: Vec::with_capacity(rounds),
        retries: Vec::with_capacity(rounds),
        low_accuracy: Vec::new(),
    };
    let mut u = w0.to_vec();
    let mut v = ProductWeights::new(a, w0);
    let inv_k = T::one() / T::of_usize(plan.k);

    for t in 1..=rounds {
        let g_seed = derive_seed(seed, &[t as u64, 0x6]);
        history.seeds.push(g_seed);
        let g = gaussian_matrix::<T>(d, plan.k, g_seed)?;
        let y = history.forms[t - 1].inv_sqrt_apply(&g.matrix)?;
        let norms = blocked_row_norms_sq(a, &y)?;
        for (ui, ni) in u.iter_mut().zip(norms) {
            *ui *= ni * inv_k;
        }

        let tau = sketched_leverage_scores_with(
            a,
            &u,
            cfg.score_eps,
            plan.delta,
            derive_seed(seed, &[t as u64, 0x7]),
            &cfg.sketch,
        )?;
        let inflate = 1.0 / (1.0 - cfg.score_eps);

        let mut attempt = 0;
        let form = loop {
            let factor = T::of(plan.oversample * inflate * f64::from(1u32 << attempt.min(30)));
            let over: Vec<T> = tau.iter().map(|&x| x * factor).collect();
            let sample = leverage_sample_with(
                a,
                &u,
                &over,
                cfg.eps,
                plan.delta,
                derive_seed(seed, &[t as u64, 0x8, attempt as u64]),
                &cfg.sample,
            )?;
            let mut data = Vec::with_capacity(sample.len() * d);
            let mut weights = Vec::with_capacity(sample.len());
            for (&i, &p) in sample.indices.iter().zip(&sample.probabilities) {
                data.extend_from_slice(a.row(i));
                weights.push(v.get(i, t, &history.forms) / p);
            }
            if !sample.is_empty() {
                let q = gram(&DenseMatrix::new(sample.len(), d, data)?, &weights)?;
                if q.is_full_rank() {
                    history.sample_sizes.push(sample.len());
                    history.retries.push(attempt);
                    break q;
                }
            }
            attempt += 1;
            if attempt > cfg.max_retries {
                return Err(Error::RankDeficientSample { attempts: attempt });
            }
        };
        history.forms.push(form);
        if cfg.trace {
            history.low_accuracy.push(u.clone());
        }
    }
    Ok(history)
}

/// `[Q~^(0)^{-1/2} G^(0) | ... | Q~^(T-1)^{-1/2} G^(T-1)]`, or the same with
/// `G = I_d` in exact mode. Returns the matrix and the per-segment width.
fn reset_panel<T: Scalar>(
    history: &QuadraticHistory<T>,
    rounds: usize,
    plan: &LazyPlan,
    seed: u64,
) -> Result<(DenseMatrix<T>, usize)> {
    let d = history.forms[0].dim();
    let width = if plan.exact_reset { d } else { plan.m };
    let mut cat = DenseMatrix::zeros(d, rounds * width);
    for t in 0..rounds {
        let g = if plan.exact_reset {
            DenseMatrix::identity(d)
        } else {
            gaussian_matrix::<T>(d, plan.m, derive_seed(seed, &[t as u64, 0x9]))?.matrix
        };
        let seg = history.forms[t].inv_sqrt_apply(&g)?;
        for r in 0..d {
            cat.row_mut(r)[t * width..(t + 1) * width].copy_from_slice(seg.row(r));
        }
    }
    Ok((cat, width))
}

fn chain_products<T: Scalar>(w0: &[T], factors: &[Vec<T>], rounds: usize) -> Vec<Vec<T>> {
    let mut out = Vec::with_capacity(rounds);
    let mut cur = w0.to_vec();
    for t in 0..rounds {
        for (c, f) in cur.iter_mut().zip(&factors[t]) {
            *c *= *f;
        }
        out.push(cur.clone());
    }
    out
}

/// Recovers `w~^(1), ..., w~^(T)` with
/// `w~_i^(t) = w0_i prod_{t'<=t} (1/m) |e_i^T A (Q~^(t'-1))^{-1/2} G^(t'-1)|^2`
/// from ONE blocked product of `A` with the concatenated panel. `T` is
/// `history.forms.len() - 1` unless `rounds` says otherwise.
pub fn reset_weights<T: Scalar>(
    a: &DenseMatrix<T>,
    history: &QuadraticHistory<T>,
    w0: &[T],
    rounds: usize,
    plan: &LazyPlan,
    seed: u64,
) -> Result<Vec<Vec<T>>> {
    check_reset_args(a, history, w0, rounds, plan)?;
    let (cat, width) = reset_panel(history, rounds, plan, seed)?;
    let scale = if plan.exact_reset { T::one() } else { T::one() / T::of_usize(plan.m) };
    let per_row: Vec<Vec<T>> = blocked_multiply_map(a, &cat, BlockSizes::default(), |_, row| {
        row.chunks_exact(width)
            .map(|seg| seg.iter().fold(T::zero(), |acc, &x| acc + x * x) * scale)
            .collect()
    })?;
    let factors: Vec<Vec<T>> = (0..rounds)
        .map(|t| per_row.iter().map(|r| r[t]).collect())
        .collect();
    Ok(chain_products(w0, &factors, rounds))
}

/// [`reset_weights`] with one product per iteration instead of the batched
/// one. Same seeds, same result; kept as the reference for the batching.
pub fn reset_weights_sequential<T: Scalar>(
    a: &DenseMatrix<T>,
    history: &QuadraticHistory<T>,
    w0: &[T],
    rounds: usize,
    plan: &LazyPlan,
    seed: u64,
) -> Result<Vec<Vec<T>>> {
    check_reset_args(a, history, w0, rounds, plan)?;
    let (cat, width) = reset_panel(history, rounds, plan, seed)?;
    let d = a.cols();
    let scale = if plan.exact_reset { T::one() } else { T::one() / T::of_usize(plan.m) };
    let mut factors = Vec::with_capacity(rounds);
    for t in 0..rounds {
        let seg = DenseMatrix::from_fn(d, width, |r, c| cat[(r, t * width + c)]);
        let norms = blocked_row_norms_sq(a, &seg)?;
        factors.push(norms.into_iter().map(|x| x * scale).collect::<Vec<T>>());
    }
    Ok(chain_products(w0, &factors, rounds))
}

fn check_reset_args<T: Scalar>(
    a: &DenseMatrix<T>,
    history: &QuadraticHistory<T>,
    w0: &[T],
    rounds: usize,
    plan: &LazyPlan,
) -> Result<()> {
    if history.forms.is_empty() || rounds == 0 || rounds > history.forms.len() {
        return Err(Error::InvalidParameter(format!(
            "{rounds} reset rounds from a history of {} forms",
            history.forms.len()
        )));
    }
    if plan.m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    if a.cols() != history.forms[0].dim() || w0.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix, {}-dimensional history, {} weights",
            a.rows(),
            a.cols(),
            history.forms[0].dim(),
            w0.len()
        )));
    }
    Ok(())
}

/// Block-resetting driver: `B` blocks of [`approx_quadratic`] followed by
/// [`reset_weights`], chaining `w~^(0) <- w~^(b,T)` and averaging all
/// `w~^(b,t)`. The last quadratic of each block is never used by the reset,
/// so each block asks [`approx_quadratic`] for `T - 1` rounds.
pub fn solve_lazy<T: Scalar>(a: &DenseMatrix<T>, cfg: &LazyConfig) -> Result<EllipsoidResult<T>> {
    validate_problem(a)?;
    let (n, d) = a.shape();
    let plan = cfg.plan(n, d)?;
    let mut w0 = vec![T::of_usize(d) / T::of_usize(n); n];
    let mut sum = vec![T::zero(); n];
    let mut residuals = Vec::with_capacity(plan.total);
    for b in 0..plan.blocks {
        let len = plan.block_len(b);
        let block_seed = derive_seed(cfg.seed, &[0x1a2, b as u64]);
        let history = approx_quadratic(a, &w0, len - 1, cfg, &plan, block_seed)?;
        let weights = reset_weights(a, &history, &w0, len, &plan, derive_seed(block_seed, &[0xe5]))?;
        let mut prev = w0.as_slice();
        for w in &weights {
            residuals.push(residual_from_scores(prev, w).unwrap_or(f64::INFINITY));
            for (s, &x) in sum.iter_mut().zip(w) {
                *s += x;
            }
            prev = w;
        }
        w0 = weights.into_iter().next_back().expect("block has at least one iteration");
        if w0.iter().any(|&x| !(x > T::zero())) {
            // Exact zeros only arise from underflow; keep the row alive so the
            // next block's initial weights stay strictly positive.
            let floor = T::min_positive_value();
            for x in w0.iter_mut() {
                if !(*x > floor) {
                    *x = floor;
                }
            }
        }
    }
    let inv = T::one() / T::of_usize(plan.total);
    let mut weights: Vec<T> = sum.into_iter().map(|s| s * inv).collect();
    normalize_mass(&mut weights, d)?;
    finish(a, weights, plan.total, residuals, cfg.certify.then_some(cfg.eps))
}
