//! Dense row-major f64 matrices.
//!
//! Every public operation validates that its result contains only finite
//! values; a NaN or infinity anywhere surfaces as [`Error::Numerical`] instead
//! of propagating silently through a training run. Values are immutable once a
//! matrix is returned, so matrices can be shared freely across threads for
//! reading.
//!
//! `matmul` is backed by `matrixmultiply::dgemm`. Large products are split
//! into fixed-size row chunks processed in parallel; because the chunk
//! boundaries are fixed and each output row is accumulated sequentially, the
//! result is identical for any thread count.

use rayon::prelude::*;

use crate::{Error, Result};

/// Row chunk size for parallel matmul. Fixed (not thread-count dependent) so
/// results are bitwise identical no matter how many threads run.
const MATMUL_CHUNK_ROWS: usize = 128;

/// Minimum flop count before matmul bothers with the thread pool.
const MATMUL_PAR_THRESHOLD: usize = 1 << 22;

/// Dense 2-D array of f64 in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Elementwise function tags accepted by [`Matrix::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementwiseOp {
    Relu,
    Tanh,
    Sine,
    /// exp(-(spread * x)^2)
    Gaussian { spread: f64 },
    /// Round half away from zero (the f64 `round` semantics).
    Round,
}

impl ElementwiseOp {
    /// Parses an op tag as it appears in config files. `gaussian` takes its
    /// spread separately and defaults to 1 here.
    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "relu" => Ok(Self::Relu),
            "tanh" => Ok(Self::Tanh),
            "sine" => Ok(Self::Sine),
            "gaussian" => Ok(Self::Gaussian { spread: 1.0 }),
            "round" => Ok(Self::Round),
            other => Err(Error::Config(format!("unknown elementwise op tag: {other:?}"))),
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Self::Relu => x.max(0.0),
            Self::Tanh => x.tanh(),
            Self::Sine => x.sin(),
            Self::Gaussian { spread } => (-(spread * x).powi(2)).exp(),
            Self::Round => x.round(),
        }
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn ones(rows: usize, cols: usize) -> Matrix {
        Matrix { rows, cols, data: vec![1.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data. Errors if the length does not
    /// match or any value is non-finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        let m = Matrix { rows, cols, data };
        m.ensure_finite("from_vec")?;
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Matrix> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix::from_vec(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        self.data[r * self.cols + c]
    }

    /// Sets one entry. Non-finite values are a programmer error and panic.
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        assert!(v.is_finite(), "attempted to store non-finite value {v}");
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn ensure_finite(&self, ctx: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            let idx = self.data.iter().position(|v| !v.is_finite()).unwrap();
            Err(Error::Numerical(format!(
                "{ctx}: non-finite value at ({}, {})",
                idx / self.cols.max(1),
                idx % self.cols.max(1)
            )))
        }
    }

    /// Standard matrix product `self * b`.
    pub fn matmul(&self, b: &Matrix) -> Result<Matrix> {
        if self.cols != b.rows {
            return Err(Error::Shape(format!(
                "matmul: {}x{} * {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let c = gemm(self, b, false, false);
        c.ensure_finite("matmul")?;
        Ok(c)
    }

    /// `self * b^T` without materializing the transpose.
    pub fn matmul_nt(&self, b: &Matrix) -> Result<Matrix> {
        if self.cols != b.cols {
            return Err(Error::Shape(format!(
                "matmul_nt: {}x{} * ({}x{})^T",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let c = gemm(self, b, false, true);
        c.ensure_finite("matmul_nt")?;
        Ok(c)
    }

    /// `self^T * b` without materializing the transpose.
    pub fn matmul_tn(&self, b: &Matrix) -> Result<Matrix> {
        if self.rows != b.rows {
            return Err(Error::Shape(format!(
                "matmul_tn: ({}x{})^T * {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let c = gemm(self, b, true, false);
        c.ensure_finite("matmul_tn")?;
        Ok(c)
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, b: &Matrix) -> Result<Matrix> {
        self.zip_with(b, "hadamard", |x, y| x * y)
    }

    pub fn add(&self, b: &Matrix) -> Result<Matrix> {
        self.zip_with(b, "add", |x, y| x + y)
    }

    pub fn sub(&self, b: &Matrix) -> Result<Matrix> {
        self.zip_with(b, "sub", |x, y| x - y)
    }

    pub fn scale(&self, s: f64) -> Result<Matrix> {
        self.map("scale", |x| x * s)
    }

    /// Applies `f` to every entry; the result is finiteness-checked.
    pub fn map(&self, ctx: &str, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        let data = self.data.iter().map(|&x| f(x)).collect();
        let m = Matrix { rows: self.rows, cols: self.cols, data };
        m.ensure_finite(ctx)?;
        Ok(m)
    }

    /// Applies a tagged elementwise function.
    pub fn elementwise(&self, op: ElementwiseOp) -> Result<Matrix> {
        self.map("elementwise", |x| op.apply(x))
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// Sum of each column, e.g. bias gradients from a batch of row gradients.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols.max(1)) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }

    /// Adds a row vector to every row.
    pub fn add_row_broadcast(&self, v: &[f64]) -> Result<Matrix> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "add_row_broadcast: vector length {} vs {} columns",
                v.len(),
                self.cols
            )));
        }
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.cols) {
            for (x, b) in row.iter_mut().zip(v) {
                *x += b;
            }
        }
        out.ensure_finite("add_row_broadcast")?;
        Ok(out)
    }

    /// Selects the given rows into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.cols);
        for (k, &i) in indices.iter().enumerate() {
            out.data[k * self.cols..(k + 1) * self.cols].copy_from_slice(self.row(i));
        }
        out
    }

    /// Stacks `self` on top of `other` (column counts must match).
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "vstack: {} vs {} columns",
                self.cols, other.cols
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Matrix { rows: self.rows + other.rows, cols: self.cols, data })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.data.iter().sum::<f64>() / self.data.len() as f64
        }
    }

    fn zip_with(&self, b: &Matrix, ctx: &str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != b.shape() {
            return Err(Error::Shape(format!(
                "{ctx}: {}x{} vs {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let data = self.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        let m = Matrix { rows: self.rows, cols: self.cols, data };
        m.ensure_finite(ctx)?;
        Ok(m)
    }
}

/// gemm dispatcher: `a [^T] * b [^T]` with fixed-chunk row parallelism.
fn gemm(a: &Matrix, b: &Matrix, ta: bool, tb: bool) -> Matrix {
    let m = if ta { a.cols } else { a.rows };
    let k = if ta { a.rows } else { a.cols };
    let n = if tb { b.rows } else { b.cols };
    let mut c = Matrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }

    // Strides in elements for a (possibly transposed) view.
    let (rsa, csa) = if ta { (1isize, a.cols as isize) } else { (a.cols as isize, 1isize) };
    let (rsb, csb) = if tb { (1isize, b.cols as isize) } else { (b.cols as isize, 1isize) };

    let flops = 2 * m * n * k;
    // Splitting along transposed-a rows would need column strides into `a`;
    // only the untransposed case is split, which covers every hot path.
    if flops >= MATMUL_PAR_THRESHOLD && !ta && m > MATMUL_CHUNK_ROWS {
        let a_data = &a.data;
        let b_data = &b.data;
        c.data
            .par_chunks_mut(MATMUL_CHUNK_ROWS * n)
            .enumerate()
            .for_each(|(chunk_idx, c_chunk)| {
                let row0 = chunk_idx * MATMUL_CHUNK_ROWS;
                let rows_here = c_chunk.len() / n;
                unsafe {
                    matrixmultiply::dgemm(
                        rows_here,
                        k,
                        n,
                        1.0,
                        a_data.as_ptr().add(row0 * a.cols),
                        rsa,
                        csa,
                        b_data.as_ptr(),
                        rsb,
                        csb,
                        0.0,
                        c_chunk.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            });
    } else {
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data.as_ptr(),
                rsa,
                csa,
                b.data.as_ptr(),
                rsb,
                csb,
                0.0,
                c.data.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    c
}
