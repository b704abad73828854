//! CSV ingestion and the seeded synthetic data generator.
//!
//! Ingestion is chunked: a reader never holds more than `chunk_rows` parsed
//! rows, and decomposed pipelines fold each chunk into the constant-size
//! accumulator before the next one is read.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use smpctd_core::ingest::{parse_csv_row, Accumulator};
use smpctd_core::linalg::Matrix;

pub const DEFAULT_CHUNK_ROWS: usize = 1000;

/// Streams a CSV file as row chunks of at most `chunk_rows` rows.
pub struct ChunkReader {
    lines: std::io::Lines<BufReader<File>>,
    pub dim: usize,
    chunk_rows: usize,
    next_line: usize,
    pending: Option<Vec<f64>>,
}

impl ChunkReader {
    /// Opens the file and reads the first row to fix the column count.
    pub fn open(path: &Path, chunk_rows: usize, header: bool) -> Result<ChunkReader> {
        assert!(chunk_rows > 0);
        let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
        let mut lines = BufReader::new(file).lines();
        let mut line_no = 0usize;
        if header {
            lines.next().transpose()?;
            line_no += 1;
        }
        let first = loop {
            match lines.next() {
                None => bail!("{}: no data rows", path.display()),
                Some(text) => {
                    let text = text?;
                    line_no += 1;
                    if !text.trim().is_empty() {
                        break text;
                    }
                }
            }
        };
        let dim = first.split(',').count();
        let row = parse_csv_row(&first, dim, line_no).map_err(|e| anyhow::anyhow!("{e:?}"))?;
        Ok(ChunkReader {
            lines,
            dim,
            chunk_rows,
            next_line: line_no,
            pending: Some(row),
        })
    }

    /// Next chunk as a rows x dim matrix; `None` at end of file.
    pub fn next_chunk(&mut self) -> Result<Option<Matrix>> {
        let mut data = Vec::new();
        let mut rows = 0usize;
        if let Some(row) = self.pending.take() {
            data.extend(row);
            rows += 1;
        }
        while rows < self.chunk_rows {
            match self.lines.next() {
                None => break,
                Some(text) => {
                    let text = text?;
                    self.next_line += 1;
                    if text.trim().is_empty() {
                        continue;
                    }
                    let row = parse_csv_row(&text, self.dim, self.next_line)
                        .map_err(|e| anyhow::anyhow!("{e:?}"))?;
                    data.extend(row);
                    rows += 1;
                }
            }
        }
        if rows == 0 {
            return Ok(None);
        }
        Ok(Some(Matrix::from_vec(rows, self.dim, data)))
    }
}

/// Folds a whole CSV file into an accumulator, chunk by chunk.
pub fn accumulate_file(
    path: &Path,
    chunk_rows: usize,
    max_abs: f64,
    header: bool,
) -> Result<Accumulator> {
    let mut reader = ChunkReader::open(path, chunk_rows, header)?;
    let mut acc = Accumulator::new(reader.dim, max_abs);
    let mut first_line = 1;
    while let Some(chunk) = reader.next_chunk()? {
        let rows = chunk.rows;
        acc.push_chunk(&chunk, first_line)
            .map_err(|e| anyhow::anyhow!("{e:?}"))?;
        first_line += rows;
    }
    Ok(acc)
}

/// Loads a whole CSV file into memory (traditional mode and the oracle).
pub fn read_matrix(path: &Path, header: bool) -> Result<Matrix> {
    let mut reader = ChunkReader::open(path, usize::MAX >> 1, header)?;
    let first = reader.next_chunk()?;
    first.ok_or_else(|| anyhow::anyhow!("{}: no data rows", path.display()))
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = BufWriter::new(
        File::create(path).with_context(|| format!("create {}", path.display()))?,
    );
    for i in 0..m.rows {
        let row: Vec<String> = (0..m.cols).map(|j| format!("{}", m.get(i, j))).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Seeded correlated Gaussian rows.
///
/// Column `j` of a row is `mu_j + sd_j * (z_j + 0.35 z_{j+1} - 0.2 z_{j+2})`
/// (indices mod d) over i.i.d. standard normals, clamped to `max_abs`. The
/// mixing keeps every covariance and correlation eigenvalue well inside the
/// public spectral bounds the pipelines assume.
pub fn synthetic_rows(seed: u64, n: usize, d: usize, max_abs: f64) -> Matrix {
    assert!(d >= 1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let cap = max_abs - 0.05;
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        for j in 0..d {
            let mu = 0.7 * j as f64 - 1.4;
            let sd = 0.8 + 0.15 * (j % 4) as f64;
            let mixed = z[j] + 0.35 * z[(j + 1) % d] - 0.2 * z[(j + 2) % d];
            data.push((mu + sd * mixed).clamp(-cap, cap));
        }
    }
    Matrix::from_vec(n, d, data)
}
