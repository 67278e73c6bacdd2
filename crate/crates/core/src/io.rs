//! Matrix files and synthetic instances.
//!
//! Binary layout: the 4 bytes `JEMX`, `n` and `d` as little-endian `u64`, then
//! `n * d` little-endian `f64` values in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, DenseMatrix};

pub const MAGIC: &[u8; 4] = b"JEMX";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFormat {
    Csv,
    MatrixMarket,
    Binary,
}

impl MatrixFormat {
    /// `.csv`, `.mtx` and `.bin`/`.jemx`.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => Ok(Self::Csv),
            Some("mtx") | Some("mm") => Ok(Self::MatrixMarket),
            Some("bin") | Some("jemx") => Ok(Self::Binary),
            _ => Err(Error::Format(format!(
                "cannot infer matrix format from {}",
                path.display()
            ))),
        }
    }
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<DenseMatrix<f64>> {
    match format {
        MatrixFormat::Csv => load_csv(path),
        MatrixFormat::MatrixMarket => load_matrix_market(path),
        MatrixFormat::Binary => load_binary(path),
    }
}

pub fn load_matrix_auto(path: &Path) -> Result<DenseMatrix<f64>> {
    load_matrix(path, MatrixFormat::from_path(path)?)
}

pub fn save_matrix(path: &Path, m: &DenseMatrix<f64>, format: MatrixFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        MatrixFormat::Csv => {
            for row in m.row_iter() {
                let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
                writeln!(out, "{}", line.join(","))?;
            }
        }
        MatrixFormat::MatrixMarket => {
            writeln!(out, "%%MatrixMarket matrix array real general")?;
            writeln!(out, "{} {}", m.rows(), m.cols())?;
            for j in 0..m.cols() {
                for i in 0..m.rows() {
                    writeln!(out, "{}", m[(i, j)])?;
                }
            }
        }
        MatrixFormat::Binary => {
            out.write_all(MAGIC)?;
            out.write_all(&(m.rows() as u64).to_le_bytes())?;
            out.write_all(&(m.cols() as u64).to_le_bytes())?;
            for x in m.as_slice() {
                out.write_all(&x.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn finite(x: f64, row: usize, col: usize) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite { row, col })
    }
}

fn load_csv(path: &Path) -> Result<DenseMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Format(format!(
                    "row {rows} has {} fields, expected {c}",
                    record.len()
                )))
            }
            _ => {}
        }
        for (j, field) in record.iter().enumerate() {
            let x: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("row {rows}, column {j}: cannot parse {field:?}")))?;
            data.push(finite(x, rows, j)?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format("empty CSV file".into()))?;
    DenseMatrix::new(rows, cols, data)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn load_matrix_market(path: &Path) -> Result<DenseMatrix<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let banner = lines
        .next()
        .ok_or_else(|| Error::Format("empty Matrix Market file".into()))??;
    let tokens: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Format(format!("bad Matrix Market banner {banner:?}")));
    }
    if tokens[2] != "array" || !(tokens[3] == "real" || tokens[3] == "integer") || tokens[4] != "general" {
        return Err(Error::Format(format!(
            "only dense real general arrays are supported, got {banner:?}"
        )));
    }
    let mut body = lines.filter(|l| match l {
        Ok(s) => !s.trim().is_empty() && !s.trim_start().starts_with('%'),
        Err(_) => true,
    });
    let size = body
        .next()
        .ok_or_else(|| Error::Format("missing size line".into()))??;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad size line {size:?}"))))
        .collect::<Result<_>>()?;
    let (n, d) = match dims.as_slice() {
        [n, d] if *n > 0 && *d > 0 => (*n, *d),
        _ => return Err(Error::Format(format!("bad size line {size:?}"))),
    };
    let mut col_major = Vec::with_capacity(n * d);
    for line in body {
        let line = line?;
        for tok in line.split_whitespace() {
            let k = col_major.len();
            let x: f64 = tok
                .parse()
                .map_err(|_| Error::Format(format!("cannot parse entry {tok:?}")))?;
            col_major.push(finite(x, k % n, k / n)?);
        }
    }
    if col_major.len() != n * d {
        return Err(Error::Format(format!(
            "{n}x{d} array needs {} entries, found {}",
            n * d,
            col_major.len()
        )));
    }
    Ok(DenseMatrix::from_fn(n, d, |i, j| col_major[j * n + i]))
}

fn load_binary(path: &Path) -> Result<DenseMatrix<f64>> {
    let mut reader = BinaryRowReader::open(path)?;
    let (n, d) = (reader.n, reader.d);
    let mut data = vec![0.0; n * d];
    for row in data.chunks_exact_mut(d) {
        if !reader.next_row(row)? {
            return Err(Error::Format("binary file ends early".into()));
        }
    }
    let mut probe = [0u8; 1];
    if reader.inner.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after binary matrix".into()));
    }
    DenseMatrix::new(n, d, data)
}

/// Sequential reader over the rows of a binary matrix file.
pub struct BinaryRowReader {
    inner: BufReader<File>,
    pub n: usize,
    pub d: usize,
    read: usize,
    buf: Vec<u8>,
}

impl BinaryRowReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut inner = BufReader::new(File::open(path)?);
        let mut header = [0u8; 20];
        inner
            .read_exact(&mut header)
            .map_err(|_| Error::Format("binary header is truncated".into()))?;
        if &header[..4] != MAGIC {
            return Err(Error::Format("missing JEMX magic bytes".into()));
        }
        let n = u64::from_le_bytes(header[4..12].try_into().expect("8 bytes"));
        let d = u64::from_le_bytes(header[12..20].try_into().expect("8 bytes"));
        if n == 0 || d == 0 || n.checked_mul(d).is_none() {
            return Err(Error::Format(format!("bad binary dimensions {n}x{d}")));
        }
        let d = usize::try_from(d).map_err(|_| Error::Format("dimension overflows usize".into()))?;
        Ok(Self {
            inner,
            n: usize::try_from(n).map_err(|_| Error::Format("row count overflows usize".into()))?,
            d,
            read: 0,
            buf: vec![0u8; 8 * d],
        })
    }

    /// Reads the next row into `out`; `false` once all `n` rows are consumed.
    pub fn next_row(&mut self, out: &mut [f64]) -> Result<bool> {
        if self.read == self.n {
            return Ok(false);
        }
        self.inner
            .read_exact(&mut self.buf)
            .map_err(|_| Error::Format(format!("binary file ends at row {}", self.read)))?;
        for (j, (x, b)) in out.iter_mut().zip(self.buf.chunks_exact(8)).enumerate() {
            *x = finite(f64::from_le_bytes(b.try_into().expect("8 bytes")), self.read, j)?;
        }
        self.read += 1;
        Ok(true)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceKind {
    Gaussian,
    DuplicatedIdentity,
    ScaledSkew,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub kind: InstanceKind,
    pub n: usize,
    pub d: usize,
    pub scale_max: f64,
    pub seed: u64,
    pub path: Option<PathBuf>,
}

impl InstanceSpec {
    pub fn new(kind: InstanceKind, n: usize, d: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            d,
            scale_max: 1e3,
            seed,
            path: None,
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            InstanceKind::Gaussian => format!("gaussian-{}x{}-s{}", self.n, self.d, self.seed),
            InstanceKind::DuplicatedIdentity => format!("dup-identity-{}x{}", self.n, self.d),
            InstanceKind::ScaledSkew => {
                format!("scaled-skew-{}x{}-c{}-s{}", self.n, self.d, self.scale_max, self.seed)
            }
            InstanceKind::File => format!(
                "file-{}",
                self.path.as_deref().map(Path::display).map(|p| p.to_string()).unwrap_or_default()
            ),
        }
    }
}

/// Builds the instance described by `spec`.
///
/// - `gaussian`: i.i.d. standard normals.
/// - `duplicated-identity`: row `i` is `e_(i mod d)`.
/// - `scaled-skew`: Gaussian rows, row `i` multiplied by `scale_max^(i/n)`.
/// - `file`: loaded from `path`, format by extension.
pub fn generate(spec: &InstanceSpec) -> Result<DenseMatrix<f64>> {
    let (n, d) = (spec.n, spec.d);
    if spec.kind != InstanceKind::File && (d == 0 || n < d) {
        return Err(Error::InvalidParameter(format!("generated instances need n >= d >= 1, got {n}x{d}")));
    }
    match spec.kind {
        InstanceKind::Gaussian => Ok(gaussian_matrix(n, d, spec.seed)?.matrix),
        InstanceKind::DuplicatedIdentity => Ok(DenseMatrix::from_fn(n, d, |i, j| if i % d == j { 1.0 } else { 0.0 })),
        InstanceKind::ScaledSkew => {
            if !(spec.scale_max > 0.0 && spec.scale_max.is_finite()) {
                return Err(Error::InvalidParameter(format!("scale_max must be positive, got {}", spec.scale_max)));
            }
            let mut m = gaussian_matrix(n, d, spec.seed)?.matrix;
            for i in 0..n {
                let s = spec.scale_max.powf(i as f64 / n as f64);
                for x in m.row_mut(i) {
                    *x *= s;
                }
            }
            Ok(m)
        }
        InstanceKind::File => {
            let path = spec
                .path
                .as_deref()
                .ok_or_else(|| Error::InvalidParameter("file instance without a path".into()))?;
            load_matrix_auto(path)
        }
    }
}
