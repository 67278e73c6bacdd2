//! A posteriori containment certificates and a small-instance optimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::{validate_problem, EllipsoidResult};
use crate::linalg::{gram, DenseMatrix, SpdForm};
use crate::scalar::Scalar;

/// Relative slack on the inner check: `max_row_form <= 1 + eps + INNER_SLACK * eps`.
pub const INNER_SLACK: f64 = 0.05;
/// Absolute tolerance on the weight mass: `sum w <= d + MASS_TOLERANCE`.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Evidence for `(1/sqrt(1+eps)) Q ⊆ P ⊆ sqrt(d) Q`.
///
/// `max_row_form = max_i a_i^T Q^- a_i` is the largest value of `(a_i^T x)^2`
/// over `{x : x^T Q x <= 1}`, so the shrunken ellipsoid lies in `P` iff it is
/// at most `1 + eps`. For `x ∈ P`, `x^T Q x = sum_i w_i (a_i^T x)^2 <= sum_i w_i`,
/// so `P ⊆ sqrt(d) Q` whenever the weight mass is at most `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub max_row_form: f64,
    pub weight_mass: f64,
    pub dim: usize,
    pub eps_used: f64,
    pub inner_slack: f64,
    pub mass_tolerance: f64,
    pub inner_ok: bool,
    pub outer_ok: bool,
    pub logdet: f64,
}

impl Certificate {
    pub fn from_parts(max_row_form: f64, weight_mass: f64, dim: usize, eps: f64, logdet: f64) -> Self {
        let mut c = Self {
            max_row_form,
            weight_mass,
            dim,
            eps_used: eps,
            inner_slack: INNER_SLACK,
            mass_tolerance: MASS_TOLERANCE,
            inner_ok: false,
            outer_ok: false,
            logdet,
        };
        c.inner_ok = c.inner_holds();
        c.outer_ok = c.outer_holds();
        c
    }

    pub fn inner_holds(&self) -> bool {
        self.max_row_form <= 1.0 + self.eps_used + self.inner_slack * self.eps_used
    }

    pub fn outer_holds(&self) -> bool {
        self.weight_mass <= self.dim as f64 + self.mass_tolerance
    }

    /// Both checks pass and the stored flags agree with the stored reals.
    pub fn passed(&self) -> bool {
        self.inner_ok && self.outer_ok && self.is_consistent()
    }

    pub fn is_consistent(&self) -> bool {
        self.inner_ok == self.inner_holds() && self.outer_ok == self.outer_holds()
    }
}

/// Certifies a solver result. Only `A`, `Q` and the weights are consulted.
pub fn certify<T: Scalar>(a: &DenseMatrix<T>, result: &EllipsoidResult<T>, eps: f64) -> Result<Certificate> {
    certify_parts(a, &result.quadratic, &result.weights, eps)
}

pub fn certify_parts<T: Scalar>(a: &DenseMatrix<T>, q: &SpdForm<T>, w: &[T], eps: f64) -> Result<Certificate> {
    if a.cols() != q.dim() || w.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix, {}x{} form, {} weights",
            a.rows(),
            a.cols(),
            q.dim(),
            q.dim(),
            w.len()
        )));
    }
    let logdet = q.logdet()?.to_f64_lossy();
    let max_row_form = q
        .row_quad_forms(a)?
        .into_iter()
        .map(|x| x.to_f64_lossy())
        .fold(0.0, f64::max);
    let weight_mass = w.iter().map(|x| x.to_f64_lossy()).sum();
    Ok(Certificate::from_parts(max_row_form, weight_mass, q.dim(), eps, logdet))
}

/// High-accuracy reference optimum.
#[derive(Clone, Debug)]
pub struct MveeSolution<T> {
    pub quadratic: SpdForm<T>,
    pub weights: Vec<T>,
    pub residual: f64,
    pub iterations: usize,
}

/// Exact fixed-point iteration run to `fixed_point_residual <= tol`.
pub fn brute_force_mvee<T: Scalar>(a: &DenseMatrix<T>, tol: f64, max_iters: usize) -> Result<SpdForm<T>> {
    brute_force_mvee_solution(a, tol, max_iters).map(|s| s.quadratic)
}

/// The multiplicative update `w_i <- w_i a_i^T Q^- a_i` with support
/// elimination: a row whose form falls below the Harman-Pronzato threshold
/// cannot carry weight at the optimum and is zeroed. Weights that would
/// otherwise decay geometrically towards zero would keep the residual (taken
/// over rows with positive weight) away from zero forever.
///
/// Before returning, every eliminated row is checked against the optimality
/// condition `a_i^T Q^- a_i <= 1 + tol`; violators are reinstated and the
/// iteration resumes.
pub fn brute_force_mvee_solution<T: Scalar>(
    a: &DenseMatrix<T>,
    tol: f64,
    max_iters: usize,
) -> Result<MveeSolution<T>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    validate_problem(a)?;
    let (n, d) = a.shape();
    let df = d as f64;
    let mut w = vec![T::of(df / n as f64); n];
    let mut residual = f64::INFINITY;

    for iter in 0..max_iters {
        let q = gram(a, &w)?;
        if !q.is_full_rank() {
            return Err(Error::Singular { rank: q.rank(), dim: d });
        }
        let g: Vec<f64> = q.row_quad_forms(a)?.into_iter().map(|x| x.to_f64_lossy()).collect();
        residual = w
            .iter()
            .zip(&g)
            .filter(|(wi, _)| **wi > T::zero())
            .map(|(_, gi)| (gi - 1.0).abs())
            .fold(0.0, f64::max);

        if residual <= tol {
            let violators: Vec<usize> = (0..n)
                .filter(|&i| w[i] == T::zero() && g[i] > 1.0 + tol)
                .collect();
            if violators.is_empty() {
                return Ok(MveeSolution {
                    quadratic: q,
                    weights: w,
                    residual,
                    iterations: iter,
                });
            }
            for i in violators {
                w[i] = T::of(1e-3 * df / n as f64);
            }
            renormalize(&mut w, df);
            continue;
        }

        let excess = g.iter().copied().fold(0.0, f64::max) - 1.0;
        let threshold = if excess > 0.0 {
            1.0 + excess / 2.0 - (excess * (4.0 + excess - 4.0 / df)).max(0.0).sqrt() / 2.0
        } else {
            0.0
        };
        for (wi, &gi) in w.iter_mut().zip(&g) {
            *wi = if gi < threshold { T::zero() } else { *wi * T::of(gi) };
        }
        renormalize(&mut w, df);
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        residual,
    })
}

fn renormalize<T: Scalar>(w: &mut [T], d: f64) {
    let total: f64 = w.iter().map(|x| x.to_f64_lossy()).sum();
    let c = T::of(d / total);
    for x in w.iter_mut() {
        *x *= c;
    }
}

/// `(logdet Q* - logdet Q) / 2`, the log volume ratio of the ellipsoid of `Q`
/// to that of `Q*`.
pub fn volume_gap<T: Scalar>(q: &SpdForm<T>, qstar: &SpdForm<T>) -> Result<f64> {
    if q.dim() != qstar.dim() {
        return Err(Error::DimensionMismatch(format!(
            "forms of dimension {} and {}",
            q.dim(),
            qstar.dim()
        )));
    }
    Ok((qstar.logdet()?.to_f64_lossy() - q.logdet()?.to_f64_lossy()) / 2.0)
}
