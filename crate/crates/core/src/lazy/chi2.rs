//! Chernoff bounds for products of i.i.d. chi-squared variables, and a Monte
//! Carlo check of the drift they control.

use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    /// `Pr[prod X_i <= 1/R] <= C_{-s,k}^t R^{-s}`, `s ∈ (0, k/2)`.
    Lower,
    /// `Pr[prod X_i >= R] <= C_{s,k}^t R^{-s}`, `s > -k/2`.
    Upper,
}

/// `ln C_{s,k} = ln E[X^s]` for `X ~ chi^2_k`, i.e.
/// `s ln 2 + ln Gamma(s + k/2) - ln Gamma(k/2)`. Requires `s > -k/2`.
pub fn chi2_log_mgf(s: f64, k: usize) -> Result<f64> {
    let half = k as f64 / 2.0;
    if k == 0 || !(s + half > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "E[X^s] of chi^2_{k} is infinite for s = {s}"
        )));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    if s > 0.0 && s <= 64.0 && s.fract() == 0.0 {
        // Gamma recurrence: C_{s,k} = k (k + 2) ... (k + 2s - 2).
        return Ok((0..s as usize).map(|j| (k as f64 + 2.0 * j as f64).ln()).sum());
    }
    Ok(s * std::f64::consts::LN_2 + ln_gamma(s + half) - ln_gamma(half))
}

/// `C_{s,k} = 2^s Gamma(s + k/2) / Gamma(k/2)`.
pub fn chi2_moment(s: f64, k: usize) -> Result<f64> {
    chi2_log_mgf(s, k).map(f64::exp)
}

fn check_tail_range(s: f64, k: usize, tail: Tail) -> Result<()> {
    let half = k as f64 / 2.0;
    let ok = match tail {
        Tail::Lower => s > 0.0 && s < half,
        Tail::Upper => s > -half,
    };
    if k == 0 || !ok {
        return Err(Error::InvalidParameter(format!(
            "s = {s} outside the valid range of the {tail:?} tail for k = {k}"
        )));
    }
    Ok(())
}

/// Natural log of the tail bound at a given `s`, valid for any `R > 0`.
fn log_bound(s: f64, k: usize, t: usize, r: f64, tail: Tail) -> Result<f64> {
    check_tail_range(s, k, tail)?;
    let exponent = match tail {
        Tail::Lower => -s,
        Tail::Upper => s,
    };
    Ok(t as f64 * chi2_log_mgf(exponent, k)? - s * r.ln())
}

/// `C_{±s,k}^t R^{-s}`, evaluated in log space so large `t` cannot overflow.
/// The sign of the moment index follows `tail`. The value is not clamped to 1.
pub fn chi2_product_bound(s: f64, k: usize, t: usize, r: f64, tail: Tail) -> Result<f64> {
    if !(r > 1.0) {
        return Err(Error::InvalidParameter(format!("R must exceed 1, got {r}")));
    }
    log_bound(s, k, t, r, tail).map(f64::exp)
}

/// Minimises the bound over the valid range of `s`. Returns `(s, bound)`.
///
/// The log bound is convex in `s`, so golden-section search suffices. The
/// upper tail is searched on `(0, s_max]`; negative `s` never helps for `R > 1`.
pub fn chi2_product_bound_inf(k: usize, t: usize, r: f64, tail: Tail, s_max: f64) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("R must be positive, got {r}")));
    }
    let half = k as f64 / 2.0;
    let (lo, hi) = match tail {
        Tail::Lower => (half * 1e-9, half * (1.0 - 1e-12)),
        Tail::Upper => (half * 1e-9, s_max.max(half * 1e-9)),
    };
    let f = |s: f64| log_bound(s, k, t, r, tail).unwrap_or(f64::INFINITY);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let candidates = [lo, hi, (a + b) / 2.0];
    let best = candidates
        .into_iter()
        .map(|s| (s, f(s)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("non-empty");
    Ok((best.0, best.1.exp()))
}

/// Bound for the normalized product `prod X_i / k` leaving `[1/R, R]` on one
/// side: the event `prod X_i/k >= R` is `prod X_i >= R k^t`, and
/// `prod X_i/k <= 1/R` is `prod X_i <= k^t / R`. Clamped to 1.
pub fn normalized_chi2_bound(s: f64, k: usize, t: usize, r: f64, tail: Tail) -> Result<f64> {
    let kt = t as f64 * (k as f64).ln();
    let ln_r = match tail {
        Tail::Upper => r.ln() + kt,
        Tail::Lower => r.ln() - kt,
    };
    Ok(log_bound(s, k, t, ln_r.exp(), tail)?.exp().min(1.0))
}

/// [`normalized_chi2_bound`] minimised over `s` (upper tail searched on `(0, k]`).
pub fn normalized_chi2_bound_inf(k: usize, t: usize, r: f64, tail: Tail) -> Result<(f64, f64)> {
    let kt = t as f64 * (k as f64).ln();
    let ln_r = match tail {
        Tail::Upper => r.ln() + kt,
        Tail::Lower => r.ln() - kt,
    };
    let (s, b) = chi2_product_bound_inf(k, t, ln_r.exp(), tail, k as f64)?;
    Ok((s, b.min(1.0)))
}

/// Empirical frequency with which a product of `t` i.i.d. `chi^2_k / k`
/// variables leaves `[n^-theta, n^theta]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftCheck {
    pub trials: usize,
    pub below: usize,
    pub above: usize,
}

impl DriftCheck {
    pub fn rate(&self) -> f64 {
        (self.below + self.above) as f64 / self.trials as f64
    }

    pub fn lower_rate(&self) -> f64 {
        self.below as f64 / self.trials as f64
    }

    pub fn upper_rate(&self) -> f64 {
        self.above as f64 / self.trials as f64
    }
}

const DRIFT_CHUNK: usize = 4096;

pub fn chi2_drift_check(k: usize, t: usize, n: usize, theta: f64, trials: usize, seed: u64) -> Result<DriftCheck> {
    if trials < 1000 {
        return Err(Error::InvalidParameter(format!("need at least 1000 trials, got {trials}")));
    }
    if k == 0 || n < 2 || !(theta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "drift check needs k >= 1, n >= 2, theta > 0 (got {k}, {n}, {theta})"
        )));
    }
    let dist = ChiSquared::new(k as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let bound = theta * (n as f64).ln();
    let kf = k as f64;
    let chunks = trials.div_ceil(DRIFT_CHUNK);
    let counts: Vec<(usize, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from(seed, &[0xc412, c as u64]);
            let len = DRIFT_CHUNK.min(trials - c * DRIFT_CHUNK);
            let (mut below, mut above) = (0, 0);
            for _ in 0..len {
                let log_prod: f64 = (0..t).map(|_| (dist.sample(&mut rng) / kf).ln()).sum();
                if log_prod < -bound {
                    below += 1;
                } else if log_prod > bound {
                    above += 1;
                }
            }
            (below, above)
        })
        .collect();
    let (below, above) = counts
        .into_iter()
        .fold((0, 0), |(b, a), (x, y)| (b + x, a + y));
    Ok(DriftCheck { trials, below, above })
}
