use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{BinaryRowReader, MatrixFormat};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// A replayable provider of rows. Every call to [`open`](Self::open) starts a
/// new pass from the first row.
pub trait RowSource {
    /// Declared `(n, d)`.
    fn dims(&self) -> (usize, usize);
    fn open(&self) -> Result<Box<dyn RowCursor + '_>>;
}

pub trait RowCursor {
    /// Writes the next row into `out` (length `d`); `false` at the end.
    fn next_row(&mut self, out: &mut [f64]) -> Result<bool>;
}

/// Rows of a matrix already in memory.
pub struct MemorySource<'a, T> {
    matrix: &'a DenseMatrix<T>,
}

impl<'a, T: Scalar> MemorySource<'a, T> {
    pub fn new(matrix: &'a DenseMatrix<T>) -> Self {
        Self { matrix }
    }
}

struct MemoryCursor<'a, T> {
    matrix: &'a DenseMatrix<T>,
    next: usize,
}

impl<T: Scalar> RowSource for MemorySource<'_, T> {
    fn dims(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    fn open(&self) -> Result<Box<dyn RowCursor + '_>> {
        Ok(Box::new(MemoryCursor {
            matrix: self.matrix,
            next: 0,
        }))
    }
}

impl<T: Scalar> RowCursor for MemoryCursor<'_, T> {
    fn next_row(&mut self, out: &mut [f64]) -> Result<bool> {
        if self.next == self.matrix.rows() {
            return Ok(false);
        }
        for (o, &x) in out.iter_mut().zip(self.matrix.row(self.next)) {
            *o = x.to_f64_lossy();
        }
        self.next += 1;
        Ok(true)
    }
}

/// A binary matrix file, reopened for every pass.
pub struct BinaryFileSource {
    path: PathBuf,
    n: usize,
    d: usize,
}

impl BinaryFileSource {
    pub fn open(path: &Path) -> Result<Self> {
        let r = BinaryRowReader::open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            n: r.n,
            d: r.d,
        })
    }
}

impl RowSource for BinaryFileSource {
    fn dims(&self) -> (usize, usize) {
        (self.n, self.d)
    }

    fn open(&self) -> Result<Box<dyn RowCursor + '_>> {
        let r = BinaryRowReader::open(&self.path)?;
        if (r.n, r.d) != (self.n, self.d) {
            return Err(Error::Format(format!(
                "{} changed shape between passes",
                self.path.display()
            )));
        }
        Ok(Box::new(r))
    }
}

impl RowCursor for BinaryRowReader {
    fn next_row(&mut self, out: &mut [f64]) -> Result<bool> {
        BinaryRowReader::next_row(self, out)
    }
}

/// A CSV file. The shape is taken from one scan at construction time.
pub struct CsvFileSource {
    path: PathBuf,
    n: usize,
    d: usize,
}

struct CsvCursor {
    reader: csv::Reader<File>,
    record: csv::StringRecord,
    d: usize,
    row: usize,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(e.to_string()))
}

impl CsvFileSource {
    pub fn open(path: &Path) -> Result<Self> {
        let mut probe = CsvCursor {
            reader: csv_reader(path)?,
            record: csv::StringRecord::new(),
            d: 0,
            row: 0,
        };
        let mut buf = Vec::new();
        while probe.advance()? {
            if probe.d == 0 {
                probe.d = probe.record.len();
                buf = vec![0.0; probe.d];
            }
            probe.parse_into(&mut buf)?;
            probe.row += 1;
        }
        if probe.row == 0 {
            return Err(Error::Format("empty CSV file".into()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            n: probe.row,
            d: probe.d,
        })
    }
}

impl CsvCursor {
    /// Reads the next non-blank record.
    fn advance(&mut self) -> Result<bool> {
        loop {
            let more = self
                .reader
                .read_record(&mut self.record)
                .map_err(|e| Error::Format(e.to_string()))?;
            if !more {
                return Ok(false);
            }
            if !self.record.iter().all(str::is_empty) {
                return Ok(true);
            }
        }
    }

    fn parse_into(&self, out: &mut [f64]) -> Result<()> {
        if self.record.len() != self.d {
            return Err(Error::Format(format!(
                "row {} has {} fields, expected {}",
                self.row,
                self.record.len(),
                self.d
            )));
        }
        for (j, (o, field)) in out.iter_mut().zip(self.record.iter()).enumerate() {
            let x: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("row {}, column {j}: cannot parse {field:?}", self.row)))?;
            if !x.is_finite() {
                return Err(Error::NonFinite { row: self.row, col: j });
            }
            *o = x;
        }
        Ok(())
    }
}

impl RowSource for CsvFileSource {
    fn dims(&self) -> (usize, usize) {
        (self.n, self.d)
    }

    fn open(&self) -> Result<Box<dyn RowCursor + '_>> {
        Ok(Box::new(CsvCursor {
            reader: csv_reader(&self.path)?,
            record: csv::StringRecord::new(),
            d: self.d,
            row: 0,
        }))
    }
}

impl RowCursor for CsvCursor {
    fn next_row(&mut self, out: &mut [f64]) -> Result<bool> {
        if !self.advance()? {
            return Ok(false);
        }
        self.parse_into(out)?;
        self.row += 1;
        Ok(true)
    }
}

/// Opens a file source by format.
pub fn file_source(path: &Path, format: MatrixFormat) -> Result<Box<dyn RowSource>> {
    match format {
        MatrixFormat::Binary => Ok(Box::new(BinaryFileSource::open(path)?)),
        MatrixFormat::Csv => Ok(Box::new(CsvFileSource::open(path)?)),
        MatrixFormat::MatrixMarket => Err(Error::Format(
            "Matrix Market arrays are column-major and cannot be streamed by rows".into(),
        )),
    }
}

/// A row source together with its pass counter.
pub struct RowStream<'s> {
    source: Box<dyn RowSource + 's>,
    n: usize,
    d: usize,
    passes_made: usize,
}

impl<'s> RowStream<'s> {
    pub fn new(source: Box<dyn RowSource + 's>) -> Self {
        let (n, d) = source.dims();
        Self {
            source,
            n,
            d,
            passes_made: 0,
        }
    }

    pub fn from_matrix<T: Scalar>(m: &'s DenseMatrix<T>) -> Self {
        Self::new(Box::new(MemorySource::new(m)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn passes_made(&self) -> usize {
        self.passes_made
    }

    /// One full sequential read delivered in consecutive chunks of at most
    /// `rows` rows; `f` receives the index of the chunk's first row. The chunk
    /// buffer is the only per-pass scratch and its size does not depend on `n`.
    pub fn pass_chunks<T: Scalar>(
        &mut self,
        rows: usize,
        mut f: impl FnMut(usize, &DenseMatrix<T>) -> Result<()>,
    ) -> Result<()> {
        let rows = rows.max(1);
        let d = self.d;
        let mut buf: Vec<T> = Vec::with_capacity(rows * d);
        let mut first = 0;
        self.pass::<T>(|i, row| {
            buf.extend_from_slice(row);
            if buf.len() == rows * d {
                let chunk = DenseMatrix::from_vec_unchecked(rows, d, std::mem::take(&mut buf));
                f(first, &chunk)?;
                buf = chunk.into_vec();
                buf.clear();
                first = i + 1;
            }
            Ok(())
        })?;
        if !buf.is_empty() {
            let r = buf.len() / d;
            f(first, &DenseMatrix::from_vec_unchecked(r, d, buf))?;
        }
        Ok(())
    }

    /// One full sequential read; `f` sees every row in order. Fails if the
    /// pass does not yield exactly `n` rows.
    pub fn pass<T: Scalar>(&mut self, mut f: impl FnMut(usize, &[T]) -> Result<()>) -> Result<()> {
        let pass = self.passes_made;
        self.passes_made += 1;
        let mut cursor = self.source.open()?;
        let mut raw = vec![0.0f64; self.d];
        let mut row = vec![T::zero(); self.d];
        let mut count = 0;
        while cursor.next_row(&mut raw)? {
            if count == self.n {
                return Err(Error::StreamLength {
                    pass,
                    expected: self.n,
                    got: count + 1,
                });
            }
            for (r, &x) in row.iter_mut().zip(&raw) {
                *r = T::of(x);
            }
            f(count, &row)?;
            count += 1;
        }
        if count != self.n {
            return Err(Error::StreamLength {
                pass,
                expected: self.n,
                got: count,
            });
        }
        Ok(())
    }
}
