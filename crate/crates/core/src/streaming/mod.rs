//! Multi-pass streaming solver. Pass `t` recomputes every row's weight
//! `w_i^(t) = w0 prod_{t'<t} a_i^T (Q^(t'))^- a_i` from the inverses cached at
//! earlier pass boundaries, so nothing of size `n` is ever stored.

mod source;

pub use source::{file_source, BinaryFileSource, CsvFileSource, MemorySource, RowCursor, RowSource, RowStream};

use serde::{Deserialize, Serialize};

use crate::certify::Certificate;
use crate::error::{Error, Result};
use crate::fixed_point::{check_eps, iteration_count, EllipsoidResult};
use crate::leverage::WeightVector;
use crate::linalg::{blocked_multiply_map, BlockSizes, DenseMatrix, SpdForm};
use crate::scalar::Scalar;

/// Weight of every row in the first pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InitialWeights {
    /// `w^(0) = 1`, so `Q^(0) = A^T A`.
    Unit,
    /// `w^(0) = d/n`, the starting point of the in-memory solvers.
    DOverN,
}

/// How `(Q^(t))^-` is produced at the end of pass `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InverseMode {
    /// Eigendecompose the accumulated `Q^(t)` once per pass.
    PerPass,
    /// Maintain `(lambda0 I + sum w a a^T)^-1` by rank-one updates while the
    /// pass runs, then remove `lambda0 I` with `d` rank-one downdates.
    ShermanMorrison,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamingConfig {
    pub eps: f64,
    pub t_override: Option<usize>,
    pub iteration_const: f64,
    pub initial: InitialWeights,
    pub inverse: InverseMode,
    /// Spend one extra pass reconstructing the averaged weights and certifying.
    pub certify: bool,
}

impl StreamingConfig {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            t_override: None,
            iteration_const: 4.0,
            initial: InitialWeights::DOverN,
            inverse: InverseMode::PerPass,
            certify: false,
        }
    }

    pub fn with_certificate(mut self) -> Self {
        self.certify = true;
        self
    }

    pub fn iterations(&self, n: usize, d: usize) -> usize {
        self.t_override
            .unwrap_or_else(|| iteration_count(self.iteration_const, self.eps, n, d))
    }
}

/// Matrices held between row arrivals, with a running word meter.
#[derive(Clone, Debug)]
pub struct PassState<T> {
    d: usize,
    iterations: usize,
    /// `Q^(0), ..., Q^(t)`.
    pub accumulators: Vec<DenseMatrix<T>>,
    /// `(Q^(0))^-, ..., (Q^(t-1))^-`.
    pub inverses: Vec<DenseMatrix<T>>,
    /// Extra `d x d` buffers alive between rows (running inverse, output form).
    pub working: Vec<DenseMatrix<T>>,
    words_used: usize,
    peak_words: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceReport {
    pub words_used: usize,
    pub peak_words: usize,
    /// `3 d^2 (T + 1)`.
    pub bound: usize,
    pub within_bound: bool,
}

impl<T: Scalar> PassState<T> {
    pub fn new(d: usize, iterations: usize) -> Self {
        Self {
            d,
            iterations,
            accumulators: Vec::new(),
            inverses: Vec::new(),
            working: Vec::new(),
            words_used: 0,
            peak_words: 0,
        }
    }

    /// Recounts the words held. Only `d x d` matrices are ever stored here, so
    /// the count cannot depend on `n`.
    fn meter(&mut self) {
        let words: usize = self
            .accumulators
            .iter()
            .chain(&self.inverses)
            .chain(&self.working)
            .map(|m| m.rows() * m.cols())
            .sum();
        self.words_used = words;
        self.peak_words = self.peak_words.max(words);
        debug_assert!(self.peak_words <= self.bound(), "streaming state exceeded its space bound");
    }

    pub fn bound(&self) -> usize {
        3 * self.d * self.d * (self.iterations + 1)
    }

    pub fn words_used(&self) -> usize {
        self.words_used
    }

    pub fn peak_words(&self) -> usize {
        self.peak_words
    }
}

pub fn space_report<T: Scalar>(state: &PassState<T>) -> SpaceReport {
    SpaceReport {
        words_used: state.words_used,
        peak_words: state.peak_words,
        bound: state.bound(),
        within_bound: state.peak_words <= state.bound(),
    }
}

/// `(M + w a a^T)^-1` from `M^-1` in `O(d^2)`.
pub fn sherman_morrison_update<T: Scalar>(minv: &DenseMatrix<T>, a: &[T], w: T) -> Result<DenseMatrix<T>> {
    if !minv.is_square() || a.len() != minv.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} inverse with a vector of length {}",
            minv.rows(),
            minv.cols(),
            a.len()
        )));
    }
    if !(w >= T::zero()) {
        return Err(Error::NegativeWeight {
            index: 0,
            value: w.to_f64_lossy(),
        });
    }
    let mut out = minv.clone();
    let mut scratch = vec![T::zero(); a.len()];
    rank_one_update(&mut out, a, w, &mut scratch)?;
    Ok(out)
}

/// In-place Sherman-Morrison step; `w` may be negative (downdates).
fn rank_one_update<T: Scalar>(minv: &mut DenseMatrix<T>, a: &[T], w: T, y: &mut [T]) -> Result<()> {
    if w == T::zero() {
        return Ok(());
    }
    let d = a.len();
    for (yi, row) in y.iter_mut().zip(minv.row_iter()) {
        *yi = crate::linalg::dot(row, a);
    }
    let den = T::one() + w * crate::linalg::dot(a, y);
    let tol = SpdForm::<T>::default_tolerance(d);
    if !(den > tol) {
        return Err(Error::IllConditionedUpdate(den.to_f64_lossy()));
    }
    let c = w / den;
    for i in 0..d {
        let ci = c * y[i];
        for (m, &yj) in minv.row_mut(i).iter_mut().zip(y.iter()) {
            *m -= ci * yj;
        }
    }
    Ok(())
}

fn add_outer_upper<T: Scalar>(q: &mut DenseMatrix<T>, a: &[T], w: T) {
    if w == T::zero() {
        return;
    }
    let d = a.len();
    for j in 0..d {
        let s = w * a[j];
        if s == T::zero() {
            continue;
        }
        for (o, &x) in q.row_mut(j)[j..].iter_mut().zip(&a[j..]) {
            *o += s * x;
        }
    }
}

fn mirror_upper<T: Scalar>(q: &mut DenseMatrix<T>) {
    let d = q.rows();
    for j in 0..d {
        for k in (j + 1)..d {
            q[(k, j)] = q[(j, k)];
        }
    }
}

/// Rows handled per kernel call. The chunk buffer is `CHUNK_ROWS x d` words of
/// scratch, `O(d^2)` and independent of `n`.
const CHUNK_ROWS: usize = 64;

struct ChunkWeights<T> {
    /// `w^(t-1)` per row.
    prev: Vec<T>,
    /// `w^(t)` per row.
    last: Vec<T>,
    /// `sum_{s=0}^{t} w^(s)` per row.
    total: Vec<T>,
}

/// Product weights of every row in `chunk` after `t = inverses.len()` factors,
/// one blocked product per cached inverse.
fn chunk_weights<T: Scalar>(chunk: &DenseMatrix<T>, inverses: &[DenseMatrix<T>], w0: T) -> Result<ChunkWeights<T>> {
    let r = chunk.rows();
    let mut prev = vec![w0; r];
    let mut last = vec![w0; r];
    let mut total = vec![w0; r];
    for inv in inverses {
        let forms = blocked_multiply_map(chunk, inv, BlockSizes::default(), |i, z| {
            crate::linalg::dot(z, chunk.row(i))
        })?;
        for (((p, l), s), f) in prev.iter_mut().zip(last.iter_mut()).zip(total.iter_mut()).zip(forms) {
            *p = *l;
            *l *= f;
            *s += *l;
        }
    }
    Ok(ChunkWeights { prev, last, total })
}

/// Result of [`solve_streaming`].
#[derive(Clone, Debug)]
pub struct StreamingOutcome<T> {
    /// `weights` is empty unless the certification pass ran.
    pub result: EllipsoidResult<T>,
    pub passes: usize,
    pub space: SpaceReport,
}

/// Runs `T + 1` passes (one more with certification).
///
/// Pass 0 accumulates `Q^(0) = sum_i w0 a_i a_i^T`; pass `t >= 1` accumulates
/// `Q^(t) = sum_i w_i^(t) a_i a_i^T`. The returned quadratic is
/// `(1/(T+1)) sum_{t=0}^T Q^(t)`, i.e. `gram(A, w_bar)` for the averaged weights
/// `w_bar = (1/(T+1)) sum_{t=0}^T w^(t)`, which the certification pass
/// reconstructs row by row.
///
/// `per_iteration_residuals[t-1] = max_i |w_i^(t) / w_i^(t-1) - 1|`, tracked
/// with a running maximum.
pub fn solve_streaming<T: Scalar>(stream: &mut RowStream<'_>, cfg: &StreamingConfig) -> Result<StreamingOutcome<T>> {
    check_eps(cfg.eps)?;
    if cfg.t_override == Some(0) {
        return Err(Error::InvalidParameter("iteration count must be >= 1".into()));
    }
    let (n, d) = (stream.n(), stream.d());
    if n < d {
        return Err(Error::TooFewRows { n, d });
    }
    let iterations = cfg.iterations(n, d);
    let w0 = match cfg.initial {
        InitialWeights::Unit => T::one(),
        InitialWeights::DOverN => T::of_usize(d) / T::of_usize(n),
    };
    let mut state = PassState::<T>::new(d, iterations);
    let mut residuals = Vec::with_capacity(iterations);
    let mut scratch = vec![T::zero(); d];

    let mut q0 = DenseMatrix::zeros(d, d);
    let mut zero_row = None;
    stream.pass::<T>(|i, a| {
        if zero_row.is_none() && a.iter().all(|&x| x == T::zero()) {
            zero_row = Some(i);
        }
        add_outer_upper(&mut q0, a, w0);
        Ok(())
    })?;
    if let Some(i) = zero_row {
        return Err(Error::ZeroRow(i));
    }
    mirror_upper(&mut q0);
    let f0 = SpdForm::new(q0.clone())?;
    if !f0.is_full_rank() {
        return Err(Error::RankDeficient { rank: f0.rank(), dim: d });
    }
    state.accumulators.push(q0);
    state.inverses.push(f0.pinv());
    state.meter();

    for t in 1..=iterations {
        let mut qt = DenseMatrix::zeros(d, d);
        let sm = cfg.inverse == InverseMode::ShermanMorrison && t < iterations;
        let lambda0 = {
            let prev = &state.accumulators[t - 1];
            (0..d).map(|j| prev[(j, j)]).sum::<T>() / T::of_usize(d)
        };
        if sm {
            state
                .working
                .push(DenseMatrix::identity(d).scaled(T::one() / lambda0));
            state.meter();
        }
        let mut worst = 0.0f64;
        let inverses = &state.inverses[..t];
        let mut running = if sm { state.working.last_mut() } else { None };
        stream.pass_chunks::<T>(CHUNK_ROWS, |_, chunk| {
            let cw = chunk_weights(chunk, inverses, w0)?;
            for (r, a) in chunk.row_iter().enumerate() {
                let (prev, w) = (cw.prev[r], cw.last[r]);
                if prev > T::zero() {
                    worst = worst.max((w / prev - T::one()).abs().to_f64_lossy());
                }
                add_outer_upper(&mut qt, a, w);
                if let Some(m) = running.as_deref_mut() {
                    rank_one_update(m, a, w, &mut scratch)?;
                }
            }
            Ok(())
        })?;
        residuals.push(worst);
        mirror_upper(&mut qt);

        if t < iterations {
            let inv = if sm {
                let mut m = state.working.pop().expect("running inverse");
                let mut e = vec![T::zero(); d];
                for j in 0..d {
                    e[j] = T::one();
                    rank_one_update(&mut m, &e, -lambda0, &mut scratch)?;
                    e[j] = T::zero();
                }
                symmetrize(&mut m);
                m
            } else {
                let f = SpdForm::new(qt.clone())?;
                if !f.is_full_rank() {
                    return Err(Error::RankDeficient { rank: f.rank(), dim: d });
                }
                f.pinv()
            };
            state.inverses.push(inv);
        }
        state.accumulators.push(qt);
        state.meter();
    }

    let scale = T::one() / T::of_usize(iterations + 1);
    let mut avg = DenseMatrix::zeros(d, d);
    for q in &state.accumulators {
        avg.add_assign_scaled(q, scale);
    }
    symmetrize(&mut avg);
    let quadratic = SpdForm::new(avg)?;

    let mut weights = Vec::new();
    let mut certificate = None;
    if cfg.certify {
        // The accumulators are folded into the output form; keep only what
        // the last pass reads.
        state.accumulators.clear();
        state.working.push(quadratic.matrix().clone());
        state.working.push(quadratic.pinv());
        state.meter();
        let out_pinv = state.working.last().expect("output pinv");
        let inverses = &state.inverses;
        let mut max_form = 0.0f64;
        let mut mass = 0.0f64;
        weights.reserve(n);
        stream.pass_chunks::<T>(CHUNK_ROWS, |_, chunk| {
            let cw = chunk_weights(chunk, inverses, w0)?;
            let forms = blocked_multiply_map(chunk, out_pinv, BlockSizes::default(), |i, z| {
                crate::linalg::dot(z, chunk.row(i))
            })?;
            for (total, form) in cw.total.into_iter().zip(forms) {
                let wbar = total * scale;
                mass += wbar.to_f64_lossy();
                max_form = max_form.max(form.to_f64_lossy());
                weights.push(wbar);
            }
            Ok(())
        })?;
        let logdet = quadratic.logdet()?.to_f64_lossy();
        certificate = Some(Certificate::from_parts(max_form, mass, d, cfg.eps, logdet));
    }

    Ok(StreamingOutcome {
        result: EllipsoidResult {
            quadratic,
            weights: WeightVector::new(weights)?,
            iterations,
            per_iteration_residuals: residuals,
            certificate,
        },
        passes: stream.passes_made(),
        space: space_report(&state),
    })
}

fn symmetrize<T: Scalar>(m: &mut DenseMatrix<T>) {
    let d = m.rows();
    let half = T::of(0.5);
    for i in 0..d {
        for j in (i + 1)..d {
            let v = half * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
