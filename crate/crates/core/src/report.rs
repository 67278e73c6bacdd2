//! JSON run and benchmark reports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::certify::Certificate;
use crate::error::Result;
use crate::streaming::SpaceReport;

pub const SCHEMA_VERSION: u32 = 1;

/// JSON Schema of [`RunReport`].
pub const RUN_REPORT_SCHEMA: &str = include_str!("../schema/run-report.schema.json");
/// JSON Schema of [`BenchReport`].
pub const BENCH_REPORT_SCHEMA: &str = include_str!("../schema/bench-report.schema.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Baseline,
    Sketched,
    Lazy,
    Streaming,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Self::Baseline, Self::Sketched, Self::Lazy, Self::Streaming];

    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Sketched => "sketched",
            Self::Lazy => "lazy",
            Self::Streaming => "streaming",
        }
    }
}

/// Settings echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub eps: f64,
    pub seed: u64,
    pub iterations: usize,
    pub certify: bool,
    /// Algorithm-specific settings as `key = value` pairs.
    #[serde(default)]
    pub extra: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceInfo {
    pub label: String,
    pub n: usize,
    pub d: usize,
}

/// Streaming-only counters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamMeter {
    pub passes: usize,
    pub space: SpaceReport,
}

/// The computed ellipsoid: `Q` row by row and the weights behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub quadratic: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub config: ConfigEcho,
    pub instance: InstanceInfo,
    pub wall_time_ms: f64,
    pub iterations: usize,
    pub certificate: Option<Certificate>,
    pub per_iteration_residuals: Vec<f64>,
    pub stream: Option<StreamMeter>,
    pub seeds: Vec<u64>,
    pub solution: Option<Solution>,
}

impl RunReport {
    /// Every float in the report is finite.
    pub fn all_finite(&self) -> bool {
        let mut vals: Vec<f64> = vec![self.config.eps, self.wall_time_ms];
        vals.extend(&self.per_iteration_residuals);
        if let Some(c) = &self.certificate {
            vals.extend([c.max_row_form, c.weight_mass, c.eps_used, c.inner_slack, c.mass_tolerance, c.logdet]);
        }
        if let Some(s) = &self.solution {
            vals.extend(s.quadratic.iter().flatten());
            vals.extend(&s.weights);
        }
        vals.iter().all(|x| x.is_finite())
    }

    /// Copy with timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_ms: 0.0,
            ..self.clone()
        }
    }

    pub fn passed(&self) -> Option<bool> {
        self.certificate.as_ref().map(Certificate::passed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub runs: usize,
    pub certified: usize,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchError {
    pub algorithm: Algorithm,
    pub instance: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub suite: String,
    pub runs: Vec<RunReport>,
    pub errors: Vec<BenchError>,
    pub summary: BenchSummary,
}

/// Serialises `value` as pretty JSON to `path`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
