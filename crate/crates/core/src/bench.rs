//! Benchmark suites and the single-run driver shared with the CLI.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::{solve_baseline, EllipsoidResult, SolverConfig};
use crate::io::{generate, InstanceKind, InstanceSpec};
use crate::lazy::{solve_lazy, LazyConfig};
use crate::linalg::DenseMatrix;
use crate::report::{
    Algorithm, BenchError, BenchReport, BenchSummary, ConfigEcho, InstanceInfo, RunReport, Solution, StreamMeter,
    SCHEMA_VERSION,
};
use crate::streaming::{solve_streaming, InitialWeights, InverseMode, RowStream, StreamingConfig};

/// Settings for one solver invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub algorithm: Algorithm,
    pub eps: f64,
    pub seed: u64,
    pub certify: bool,
    pub iterations: Option<usize>,
    /// Lazy drift exponent.
    pub theta: Option<f64>,
    pub inverse: InverseMode,
    pub initial: InitialWeights,
    /// Embed `Q` and the weights in the report.
    pub keep_solution: bool,
}

impl RunOptions {
    pub fn new(algorithm: Algorithm, eps: f64, seed: u64) -> Self {
        Self {
            algorithm,
            eps,
            seed,
            certify: true,
            iterations: None,
            theta: None,
            inverse: InverseMode::PerPass,
            initial: InitialWeights::DOverN,
            keep_solution: true,
        }
    }

    fn baseline_config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.eps).with_seed(self.seed);
        if self.algorithm == Algorithm::Sketched {
            cfg = cfg.sketched();
        }
        cfg.t_override = self.iterations;
        cfg.certify = self.certify;
        cfg
    }

    fn lazy_config(&self) -> LazyConfig {
        let mut cfg = LazyConfig::new(self.eps).with_seed(self.seed);
        if let Some(theta) = self.theta {
            cfg.theta = theta;
        }
        cfg.total_override = self.iterations;
        cfg.certify = self.certify;
        cfg
    }

    fn streaming_config(&self) -> StreamingConfig {
        let mut cfg = StreamingConfig::new(self.eps);
        cfg.t_override = self.iterations;
        cfg.inverse = self.inverse;
        cfg.initial = self.initial;
        cfg.certify = self.certify;
        cfg
    }
}

fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn report_from(
    opts: &RunOptions,
    instance: InstanceInfo,
    result: EllipsoidResult<f64>,
    elapsed_ms: f64,
    extra: Vec<(String, String)>,
    stream: Option<StreamMeter>,
) -> RunReport {
    let solution = opts.keep_solution.then(|| Solution {
        quadratic: result.quadratic.matrix().to_rows(),
        weights: result.weights.as_slice().to_vec(),
    });
    RunReport {
        schema_version: SCHEMA_VERSION,
        algorithm: opts.algorithm,
        config: ConfigEcho {
            eps: opts.eps,
            seed: opts.seed,
            iterations: result.iterations,
            certify: opts.certify,
            extra,
        },
        instance,
        wall_time_ms: elapsed_ms,
        iterations: result.iterations,
        certificate: result.certificate,
        per_iteration_residuals: result.per_iteration_residuals,
        stream,
        seeds: vec![opts.seed],
        solution,
    }
}

/// Solves an in-memory instance with the requested algorithm.
pub fn run_matrix(a: &DenseMatrix<f64>, label: &str, opts: &RunOptions) -> Result<RunReport> {
    let mut stream = RowStream::from_matrix(a);
    run_with_stream(Some(a), &mut stream, label, opts)
}

/// Streams rows from `stream`; the other algorithms need `a`.
pub fn run_with_stream(
    a: Option<&DenseMatrix<f64>>,
    stream: &mut RowStream<'_>,
    label: &str,
    opts: &RunOptions,
) -> Result<RunReport> {
    let instance = InstanceInfo {
        label: label.to_string(),
        n: stream.n(),
        d: stream.d(),
    };
    let need_matrix = || a.ok_or_else(|| Error::InvalidParameter("algorithm needs the matrix in memory".into()));
    let start = Instant::now();
    let ms = |s: Instant| s.elapsed().as_secs_f64() * 1e3;
    match opts.algorithm {
        Algorithm::Baseline | Algorithm::Sketched => {
            let a = need_matrix()?;
            let cfg = opts.baseline_config();
            let result = solve_baseline(a, &cfg)?;
            let elapsed = ms(start);
            let mut extra = vec![kv("averaging", format!("{:?}", cfg.averaging).to_lowercase())];
            if opts.algorithm == Algorithm::Sketched {
                extra.push(kv("score_eps", cfg.eps / 4.0));
            }
            Ok(report_from(opts, instance, result, elapsed, extra, None))
        }
        Algorithm::Lazy => {
            let a = need_matrix()?;
            let cfg = opts.lazy_config();
            let result = solve_lazy(a, &cfg)?;
            let elapsed = ms(start);
            let plan = cfg.plan(a.rows(), a.cols())?;
            let extra = vec![
                kv("theta", cfg.theta),
                kv("inner", plan.inner),
                kv("blocks", plan.blocks),
                kv("k", plan.k),
                kv("m", plan.m),
                kv("exact_reset", plan.exact_reset),
                kv("oversample", plan.oversample),
            ];
            Ok(report_from(opts, instance, result, elapsed, extra, None))
        }
        Algorithm::Streaming => {
            let cfg = opts.streaming_config();
            let out = solve_streaming::<f64>(stream, &cfg)?;
            let elapsed = ms(start);
            let extra = vec![
                kv("initial", serde_json::to_value(cfg.initial)?.as_str().unwrap_or_default()),
                kv("inverse", serde_json::to_value(cfg.inverse)?.as_str().unwrap_or_default()),
            ];
            let meter = StreamMeter {
                passes: out.passes,
                space: out.space,
            };
            Ok(report_from(opts, instance, out.result, elapsed, extra, Some(meter)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// Three small instances, every algorithm, `eps = 0.25`.
    Smoke,
    /// The 20-instance certification corpus, every algorithm.
    Corpus,
    /// One 50000 x 200 instance, baseline against lazy (slow).
    Scale,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Self::Smoke => "smoke",
            Self::Corpus => "corpus",
            Self::Scale => "scale",
        }
    }

    pub fn entries(self) -> Vec<CorpusEntry> {
        match self {
            Self::Smoke => vec![
                CorpusEntry::new(InstanceKind::Gaussian, 200, 4, 0.25, 1),
                CorpusEntry::new(InstanceKind::DuplicatedIdentity, 120, 3, 0.25, 2),
                CorpusEntry::new(InstanceKind::ScaledSkew, 300, 5, 0.25, 3),
            ],
            Self::Corpus => corpus(),
            Self::Scale => vec![CorpusEntry::new(InstanceKind::Gaussian, 50_000, 200, 0.25, 1)],
        }
    }

    pub fn algorithms(self) -> &'static [Algorithm] {
        match self {
            Self::Scale => &[Algorithm::Baseline, Algorithm::Lazy],
            _ => &Algorithm::ALL,
        }
    }
}

/// One instance of a suite with its accuracy parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusEntry {
    pub spec: InstanceSpec,
    pub eps: f64,
}

impl CorpusEntry {
    pub fn new(kind: InstanceKind, n: usize, d: usize, eps: f64, seed: u64) -> Self {
        Self {
            spec: InstanceSpec::new(kind, n, d, seed),
            eps,
        }
    }

    pub fn label(&self) -> String {
        format!("{}-eps{}", self.spec.label(), self.eps)
    }
}

/// The fixed certification corpus: Gaussian, duplicated-identity and
/// scaled-skew instances over `n ∈ {500, 2000, 5000}`, `d ∈ {5, 20, 50}`,
/// `eps ∈ {0.1, 0.25}`.
pub fn corpus() -> Vec<CorpusEntry> {
    use InstanceKind::*;
    let table: [(InstanceKind, usize, usize, f64); 20] = [
        (Gaussian, 500, 5, 0.1),
        (Gaussian, 500, 20, 0.25),
        (Gaussian, 500, 50, 0.1),
        (Gaussian, 2000, 5, 0.25),
        (Gaussian, 2000, 20, 0.1),
        (Gaussian, 2000, 50, 0.25),
        (Gaussian, 5000, 5, 0.1),
        (Gaussian, 5000, 20, 0.25),
        (Gaussian, 5000, 50, 0.25),
        (DuplicatedIdentity, 500, 5, 0.1),
        (DuplicatedIdentity, 2000, 20, 0.25),
        (DuplicatedIdentity, 5000, 50, 0.25),
        (DuplicatedIdentity, 2000, 5, 0.1),
        (ScaledSkew, 500, 5, 0.25),
        (ScaledSkew, 500, 20, 0.1),
        (ScaledSkew, 2000, 5, 0.1),
        (ScaledSkew, 2000, 20, 0.25),
        (ScaledSkew, 5000, 5, 0.25),
        (ScaledSkew, 5000, 20, 0.1),
        (ScaledSkew, 2000, 50, 0.25),
    ];
    table
        .into_iter()
        .enumerate()
        .map(|(i, (kind, n, d, eps))| CorpusEntry::new(kind, n, d, eps, 1000 + i as u64))
        .collect()
}

/// Runs every algorithm of `suite` on every instance, certifying each run.
/// Solver errors are recorded rather than propagated.
pub fn run_suite(suite: Suite, seed: u64) -> Result<BenchReport> {
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    for entry in suite.entries() {
        let a = generate(&entry.spec)?;
        let label = entry.label();
        for &algorithm in suite.algorithms() {
            let mut opts = RunOptions::new(algorithm, entry.eps, seed);
            opts.keep_solution = false;
            match run_matrix(&a, &label, &opts) {
                Ok(r) => runs.push(r),
                Err(e) => errors.push(BenchError {
                    algorithm,
                    instance: label.clone(),
                    message: e.to_string(),
                }),
            }
        }
    }
    let certified = runs.iter().filter(|r| r.certificate.is_some()).count();
    let passed = runs.iter().filter(|r| r.passed() == Some(true)).count();
    let summary = BenchSummary {
        runs: runs.len(),
        certified,
        passed,
        failed: certified - passed,
        errors: errors.len(),
    };
    Ok(BenchReport {
        schema_version: SCHEMA_VERSION,
        suite: suite.name().to_string(),
        runs,
        errors,
        summary,
    })
}
