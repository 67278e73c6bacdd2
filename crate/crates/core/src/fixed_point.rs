//! Baseline fixed-point iteration `w_i <- tau_i(sqrt(W) A)`.

use serde::{Deserialize, Serialize};

use crate::certify::{certify, Certificate};
use crate::error::{Error, Result};
use crate::leverage::{exact_leverage_scores, sketched_leverage_scores_with, SketchParams, WeightVector};
use crate::linalg::{gram, DenseMatrix, SpdForm};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Exact,
    Sketched,
}

/// Which weights the solver returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// The last iterate `w^(T)`.
    Final,
    /// The mean of `w^(1), ..., w^(T)`.
    Average,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub eps: f64,
    pub t_override: Option<usize>,
    pub score_mode: ScoreMode,
    pub seed: u64,
    pub averaging: Averaging,
    /// `c` in `T = ceil(c / eps * ln(n / d))`.
    pub iteration_const: f64,
    pub certify: bool,
    /// Sizing of the sketched score pipeline. The solver runs it at accuracy
    /// `eps / 4` and failure probability `1 / n`.
    pub sketch: SketchParams,
}

impl SolverConfig {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            t_override: None,
            score_mode: ScoreMode::Exact,
            seed: 0,
            averaging: Averaging::Average,
            iteration_const: 4.0,
            certify: false,
            sketch: SketchParams {
                exact_when_cheaper: true,
                ..SketchParams::default()
            },
        }
    }

    pub fn sketched(mut self) -> Self {
        self.score_mode = ScoreMode::Sketched;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, t: usize) -> Self {
        self.t_override = Some(t);
        self
    }

    pub fn with_averaging(mut self, averaging: Averaging) -> Self {
        self.averaging = averaging;
        self
    }

    pub fn with_certificate(mut self) -> Self {
        self.certify = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_eps(self.eps)?;
        if self.t_override == Some(0) {
            return Err(Error::InvalidParameter("iteration count must be >= 1".into()));
        }
        if !(self.iteration_const > 0.0) {
            return Err(Error::InvalidParameter("iteration constant must be positive".into()));
        }
        Ok(())
    }

    pub fn iterations(&self, n: usize, d: usize) -> usize {
        self.t_override
            .unwrap_or_else(|| iteration_count(self.iteration_const, self.eps, n, d))
    }
}

/// `ceil(c / eps * ln(n / d))`, at least one.
pub fn iteration_count(c: f64, eps: f64, n: usize, d: usize) -> usize {
    let t = (c / eps * (n as f64 / d as f64).ln()).ceil();
    if t.is_finite() && t >= 1.0 {
        t as usize
    } else {
        1
    }
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")))
    }
}

/// Output of every solver: the quadratic `Q = A^T W A` together with the
/// weights that produced it.
#[derive(Clone, Debug)]
pub struct EllipsoidResult<T> {
    pub quadratic: SpdForm<T>,
    pub weights: WeightVector<T>,
    pub iterations: usize,
    pub per_iteration_residuals: Vec<f64>,
    pub certificate: Option<Certificate>,
}

/// Rejects inputs whose polytope `{x : |Ax|_inf <= 1}` is unbounded or
/// degenerate: fewer rows than columns, an all-zero row, or rank below `d`.
pub fn validate_problem<T: Scalar>(a: &DenseMatrix<T>) -> Result<SpdForm<T>> {
    let (n, d) = a.shape();
    if n < d {
        return Err(Error::TooFewRows { n, d });
    }
    if let Some(i) = a.row_iter().position(|r| r.iter().all(|&x| x == T::zero())) {
        return Err(Error::ZeroRow(i));
    }
    let q = gram(a, &vec![T::one(); n])?;
    if !q.is_full_rank() {
        return Err(Error::RankDeficient { rank: q.rank(), dim: d });
    }
    Ok(q)
}

/// `max_i |tau_i(sqrt(W) A) / w_i - 1|` over rows with `w_i > 0`.
pub fn fixed_point_residual<T: Scalar>(a: &DenseMatrix<T>, w: &[T]) -> Result<f64> {
    let tau = exact_leverage_scores(a, w)?;
    residual_from_scores(w, &tau)
}

pub(crate) fn residual_from_scores<T: Scalar>(w: &[T], tau: &[T]) -> Result<f64> {
    let mut worst: Option<f64> = None;
    for (&wi, &ti) in w.iter().zip(tau) {
        if wi > T::zero() {
            let r = (ti / wi - T::one()).abs().to_f64_lossy();
            worst = Some(worst.map_or(r, |m: f64| m.max(r)));
        }
    }
    worst.ok_or(Error::ZeroWeights)
}

/// Rescales `w` so that it sums to `d`. Exact scores already sum to `d` up to
/// rounding; sketched ones only to `(1 +- eps) d`, which would break the weight
/// mass half of the certificate.
pub(crate) fn normalize_mass<T: Scalar>(w: &mut [T], d: usize) -> Result<()> {
    let total: T = w.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::ZeroWeights);
    }
    let c = T::of_usize(d) / total;
    for x in w.iter_mut() {
        *x *= c;
    }
    Ok(())
}

/// Runs `T` updates from `w^(0) = (d/n) 1` with exact or sketched scores and
/// returns the weights selected by the averaging policy.
///
/// `per_iteration_residuals[t-1]` is `max_i |w_i^(t) / w_i^(t-1) - 1|`, which
/// in exact mode is the fixed-point residual of `w^(t-1)`.
pub fn solve_baseline<T: Scalar>(a: &DenseMatrix<T>, cfg: &SolverConfig) -> Result<EllipsoidResult<T>> {
    cfg.validate()?;
    validate_problem(a)?;
    let (n, d) = a.shape();
    let iterations = cfg.iterations(n, d);
    let delta = 1.0 / n.max(2) as f64;

    let mut w = vec![T::of_usize(d) / T::of_usize(n); n];
    let mut sum = vec![T::zero(); n];
    let mut residuals = Vec::with_capacity(iterations);
    for t in 1..=iterations {
        let next = match cfg.score_mode {
            ScoreMode::Exact => exact_leverage_scores(a, &w)?,
            ScoreMode::Sketched => sketched_leverage_scores_with(
                a,
                &w,
                cfg.eps / 4.0,
                delta,
                derive_seed(cfg.seed, &[0xba5e, t as u64]),
                &cfg.sketch,
            )?,
        };
        residuals.push(residual_from_scores(&w, &next).unwrap_or(f64::INFINITY));
        for (s, &x) in sum.iter_mut().zip(&next) {
            *s += x;
        }
        w = next;
    }

    let mut weights = match cfg.averaging {
        Averaging::Final => w,
        Averaging::Average => {
            let inv = T::one() / T::of_usize(iterations);
            sum.into_iter().map(|s| s * inv).collect()
        }
    };
    normalize_mass(&mut weights, d)?;
    finish(a, weights, iterations, residuals, cfg.certify.then_some(cfg.eps))
}

/// Builds `Q = gram(A, w)` and optionally attaches a certificate at `eps`.
pub(crate) fn finish<T: Scalar>(
    a: &DenseMatrix<T>,
    weights: Vec<T>,
    iterations: usize,
    per_iteration_residuals: Vec<f64>,
    certify_eps: Option<f64>,
) -> Result<EllipsoidResult<T>> {
    let quadratic = gram(a, &weights)?;
    let mut result = EllipsoidResult {
        quadratic,
        weights: WeightVector::new(weights)?,
        iterations,
        per_iteration_residuals,
        certificate: None,
    };
    if let Some(eps) = certify_eps {
        result.certificate = Some(certify(a, &result, eps)?);
    }
    Ok(result)
}
