//! Dense complex matrices stored column-major, plus the handful of kernels
//! the solvers need.
//!
//! Every kernel here is bitwise deterministic regardless of the rayon pool
//! size: products are split over rows (forward) or columns (adjoint), never
//! over the summation index, so each output entry is reduced in the same
//! order on any thread count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::complex_gaussian;

pub type C64 = Complex64;

/// Magic bytes opening the binary matrix cache format.
pub const MATRIX_MAGIC: &[u8; 8] = b"SPIMTX01";

const ROW_BLOCK: usize = 128;
const PAIR_BLOCK: usize = 64;

/// Dense complex matrix, column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length columns.
    pub fn from_columns<I, V>(rows: usize, columns: I) -> Result<Self>
    where
        I: IntoIterator<Item = V>,
        V: AsRef<[C64]>,
    {
        let mut data = Vec::new();
        let mut cols = 0;
        for col in columns {
            let col = col.as_ref();
            if col.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    actual: col.len(),
                });
            }
            data.extend_from_slice(col);
            cols += 1;
        }
        Ok(Self { rows, cols, data })
    }

    /// Row-major convenience constructor, mostly for tests.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: entries.len(),
            });
        }
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[c * rows + r] = entries[r * cols + c];
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[col * self.rows + row]
    }

    pub fn column(&self, k: usize) -> &[C64] {
        &self.data[k * self.rows..(k + 1) * self.rows]
    }

    pub fn column_mut(&mut self, k: usize) -> &mut [C64] {
        &mut self.data[k * self.rows..(k + 1) * self.rows]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[C64]> + '_ {
        // chunks_exact panics on zero, and a 0-row matrix has no data anyway
        let step = self.rows.max(1);
        self.data
            .chunks_exact(step)
            .take(if self.rows == 0 { 0 } else { self.cols })
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.columns().map(norm2).collect()
    }

    /// `[self | other]`.
    pub fn hcat(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                actual: other.rows,
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(CMatrix {
            rows: self.rows,
            cols: self.cols + other.cols,
            data,
        })
    }

    /// Selects a subset of columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> CMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for &k in idx {
            data.extend_from_slice(self.column(k));
        }
        CMatrix {
            rows: self.rows,
            cols: idx.len(),
            data,
        }
    }

    /// `A x`. Zero entries of `x` are skipped, which makes sparse iterates cheap.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len(self.cols, x.len())?;
        let mut y = vec![C64::new(0.0, 0.0); self.rows];
        let active: Vec<usize> = (0..self.cols).filter(|&k| x[k] != C64::new(0.0, 0.0)).collect();
        y.par_chunks_mut(ROW_BLOCK)
            .enumerate()
            .for_each(|(blk, out)| {
                let r0 = blk * ROW_BLOCK;
                for &k in &active {
                    let col = &self.column(k)[r0..r0 + out.len()];
                    axpy(x[k], col, out);
                }
            });
        Ok(y)
    }

    /// `A^* y` (conjugate transpose).
    pub fn apply_adjoint(&self, y: &[C64]) -> Result<Vec<C64>> {
        check_len(self.rows, y.len())?;
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        self.apply_adjoint_into(y, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_adjoint_into(&self, y: &[C64], out: &mut [C64]) {
        debug_assert_eq!(out.len(), self.cols);
        if self.rows == 0 {
            out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
            return;
        }
        out.par_iter_mut()
            .with_min_len(64)
            .zip(self.data.par_chunks_exact(self.rows).with_min_len(64))
            .for_each(|(o, col)| *o = dot_conj(col, y));
    }

    /// Estimate of the largest singular value by power iteration on `A^* A`.
    ///
    /// The start vector is a fixed complex Gaussian draw, so the estimate is
    /// reproducible. Power iteration approaches sigma_max from below.
    pub fn spectral_norm_estimate(&self, iterations: usize, seed: u64) -> f64 {
        if self.cols == 0 || self.rows == 0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = complex_gaussian(&mut rng, self.cols, 1.0);
        let n = norm2(&v);
        v.iter_mut().for_each(|x| *x /= n);
        let mut sigma_sq = 0.0;
        for _ in 0..iterations.max(1) {
            let av = self.apply(&v).expect("shape");
            let w = self.apply_adjoint(&av).expect("shape");
            sigma_sq = norm2(&w);
            if sigma_sq == 0.0 {
                return 0.0;
            }
            v = w.into_iter().map(|x| x / sigma_sq).collect();
        }
        sigma_sq.sqrt()
    }

    /// Writes the binary cache format: magic, rows and cols as little-endian
    /// u64, then column-major (re, im) pairs as little-endian f64.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MATRIX_MAGIC)?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        for z in &self.data {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<CMatrix> {
        let bad = |reason: &str| Error::MatrixFormat {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MATRIX_MAGIC {
            return Err(bad("wrong magic bytes"));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
        let rows = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
        let cols = u64::from_le_bytes(word) as usize;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| bad("dimensions overflow"))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != len * 16 {
            return Err(bad(&format!(
                "payload has {} bytes, expected {}",
                bytes.len(),
                len * 16
            )));
        }
        let data = bytes
            .chunks_exact(16)
            .map(|b| {
                let re = f64::from_le_bytes(b[..8].try_into().unwrap());
                let im = f64::from_le_bytes(b[8..].try_into().unwrap());
                C64::new(re, im)
            })
            .collect();
        Ok(CMatrix { rows, cols, data })
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// `sum_i conj(a_i) b_i`, linear in the second argument.
#[inline]
pub fn dot_conj(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    let mut re = [0.0f64; 4];
    let mut im = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            re[l] += x[l].re * y[l].re + x[l].im * y[l].im;
            im[l] += x[l].re * y[l].im - x[l].im * y[l].re;
        }
    }
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        re[0] += x.re * y.re + x.im * y.im;
        im[0] += x.re * y.im - x.im * y.re;
    }
    C64::new((re[0] + re[1]) + (re[2] + re[3]), (im[0] + im[1]) + (im[2] + im[3]))
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        yi.re += alpha.re * xi.re - alpha.im * xi.im;
        yi.im += alpha.re * xi.im + alpha.im * xi.re;
    }
}

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm1(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, |s, x| s + x)
}

pub fn norm_inf(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max_i |a_i - b_i|`.
pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Visits `|<a_i, a_j>|` for every pair `i < j`, blocked for cache reuse and
/// parallel over block rows. Returns one accumulator per block row, in order.
pub(crate) fn fold_column_pairs<T, I, F>(m: &CMatrix, init: I, visit: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> T + Sync,
    F: Fn(&mut T, usize, usize, f64) + Sync,
{
    let k = m.cols();
    let blocks = k.div_ceil(PAIR_BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|bi| {
            let mut acc = init();
            let i0 = bi * PAIR_BLOCK;
            let i1 = (i0 + PAIR_BLOCK).min(k);
            for bj in bi..blocks {
                let j0 = bj * PAIR_BLOCK;
                let j1 = (j0 + PAIR_BLOCK).min(k);
                for i in i0..i1 {
                    let ci = m.column(i);
                    for j in j0.max(i + 1)..j1 {
                        let g = dot_conj(ci, m.column(j)).norm();
                        visit(&mut acc, i, j, g);
                    }
                }
            }
            acc
        })
        .collect()
}
