//! Row-major matrices and the dense kernels shared by the autodiff graph and
//! the incremental decoder.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating point element type of model tensors.
pub trait Real: Float + FromPrimitive + NumAssign + Default + Debug + Send + Sync + 'static {
    /// `c = alpha * op(a) * op(b) + beta * c` with explicit strides.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m x k`, `k x n` and `m x n`
    /// matrices; `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }
}

impl Real for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: T) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<T> = rows.iter().flat_map(|r| {
            assert_eq!(r.len(), cols, "ragged rows");
            r.iter().copied()
        }).collect();
        Matrix::from_vec(rows.len(), cols, data)
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn push_row(&mut self, row: &[T]) {
        if self.rows == 0 && self.cols == 0 {
            self.cols = row.len();
        }
        assert_eq!(row.len(), self.cols, "row width");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    /// Rows `start..start + n`.
    pub fn slice_rows(&self, start: usize, n: usize) -> Matrix<T> {
        Matrix::from_vec(n, self.cols, self.data[start * self.cols..(start + n) * self.cols].to_vec())
    }

    /// Columns `start..start + width`.
    pub fn slice_cols(&self, start: usize, width: usize) -> Matrix<T> {
        let mut out = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            out.extend_from_slice(&self.row(r)[start..start + width]);
        }
        Matrix::from_vec(self.rows, width, out)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        Matrix::from_vec(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn add_assign(&mut self, other: &Matrix<T>) {
        assert_eq!(self.shape(), other.shape(), "add shapes");
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
    }

    pub fn scale_assign(&mut self, s: T) {
        self.data.iter_mut().for_each(|a| *a *= s);
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix::from_vec(
            self.rows,
            self.cols,
            self.data.iter().map(|&x| U::from_f64(x.to_f64().unwrap()).unwrap()).collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &Matrix<T>) -> f64 {
        assert_eq!(self.shape(), other.shape(), "compared shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs().to_f64().unwrap())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `c = alpha * op(a) * op(b) + beta * c`.
pub fn gemm<T: Real>(alpha: T, a: &Matrix<T>, ta: bool, b: &Matrix<T>, tb: bool, beta: T, c: &mut Matrix<T>) {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, kb, "gemm inner dimensions");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.scale_assign(beta);
        return;
    }
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: shapes checked above; c is a distinct allocation.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        )
    }
}

/// `op(a) * op(b)`.
pub fn matmul<T: Real>(a: &Matrix<T>, ta: bool, b: &Matrix<T>, tb: bool) -> Matrix<T> {
    let m = if ta { a.cols } else { a.rows };
    let n = if tb { b.rows } else { b.cols };
    let mut c = Matrix::zeros(m, n);
    gemm(T::one(), a, ta, b, tb, T::zero(), &mut c);
    c
}

/// Which keys each query row may attend to.
#[derive(Debug, Clone, PartialEq)]
pub enum AttnMask {
    None,
    /// Query row `i` sits at absolute position `offset + i` and sees keys `0..=offset + i`.
    Causal { offset: usize },
    /// Per-key validity.
    Keys(Vec<bool>),
}

impl AttnMask {
    pub fn allows(&self, q: usize, k: usize) -> bool {
        match self {
            AttnMask::None => true,
            AttnMask::Causal { offset } => k <= offset + q,
            AttnMask::Keys(valid) => valid[k],
        }
    }
}

/// Row-wise softmax; masked entries become exactly zero. A fully masked row
/// is left all zero.
pub fn softmax_rows<T: Real>(x: &mut Matrix<T>, mask: &AttnMask) {
    let cols = x.cols;
    for r in 0..x.rows {
        let row = &mut x.data[r * cols..(r + 1) * cols];
        let mut max = T::neg_infinity();
        for (k, v) in row.iter().enumerate() {
            if mask.allows(r, k) && *v > max {
                max = *v;
            }
        }
        if max == T::neg_infinity() {
            row.iter_mut().for_each(|v| *v = T::zero());
            continue;
        }
        let mut sum = T::zero();
        for (k, v) in row.iter_mut().enumerate() {
            if mask.allows(r, k) {
                *v = (*v - max).exp();
                sum += *v;
            } else {
                *v = T::zero();
            }
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Normalizes each row to zero mean and unit variance (before gain and
/// bias). Returns the normalized rows and the per-row inverse std.
pub fn layer_norm_rows<T: Real>(x: &Matrix<T>, gain: &[T], bias: &[T]) -> (Matrix<T>, Matrix<T>, Vec<T>) {
    let n = T::from_usize(x.cols).unwrap();
    let eps = T::lit(LAYER_NORM_EPS);
    let mut xhat = Matrix::zeros(x.rows, x.cols);
    let mut out = Matrix::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().fold(T::zero(), |a, &b| a + b) / n;
        let var = row.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) / n;
        let is = T::one() / (var + eps).sqrt();
        inv_std.push(is);
        for c in 0..x.cols {
            let h = (row[c] - mean) * is;
            xhat.data[r * x.cols + c] = h;
            out.data[r * x.cols + c] = h * gain[c] + bias[c];
        }
    }
    (out, xhat, inv_std)
}

/// Log-softmax of one row, accumulated in `f64`.
pub fn log_softmax<T: Real>(row: &[T]) -> Vec<f64> {
    let max = row.iter().map(|v| v.to_f64().unwrap()).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v.to_f64().unwrap() - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v.to_f64().unwrap() - lse).collect()
}

/// Fixed sinusoidal position table.
pub fn sinusoidal_positions<T: Real>(max_positions: usize, d_model: usize) -> Matrix<T> {
    let mut m = Matrix::zeros(max_positions, d_model);
    for pos in 0..max_positions {
        for i in 0..d_model {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d_model as f64);
            let v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
            m.set(pos, i, T::lit(v));
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(matmul(&a, false, &b, false), Matrix::from_rows(&[vec![4.0, 5.0], vec![10.0, 11.0]]));
        let at = matmul(&a, true, &a, false);
        assert_eq!(at.shape(), (3, 3));
        assert_eq!(at.get(0, 0), 17.0);
        let abt = matmul(&a, false, &a, true);
        assert_eq!(abt, Matrix::from_rows(&[vec![14.0, 32.0], vec![32.0, 77.0]]));
    }

    #[test]
    fn softmax_respects_masks() {
        let mut x = Matrix::from_rows(&[vec![1.0f64, 2.0, 3.0], vec![1.0, 2.0, 3.0]]);
        softmax_rows(&mut x, &AttnMask::Causal { offset: 0 });
        assert_eq!(x.get(0, 0), 1.0);
        assert_eq!(x.get(0, 1), 0.0);
        let s: f64 = x.row(1).iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(x.get(1, 2), 0.0);
    }

    #[test]
    fn layer_norm_moments() {
        let x = Matrix::from_rows(&[vec![1.0f64, 2.0, 3.0, 6.0]]);
        let (y, _, _) = layer_norm_rows(&x, &[1.0; 4], &[0.0; 4]);
        let mean: f64 = y.row(0).iter().sum::<f64>() / 4.0;
        let var: f64 = y.row(0).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn log_softmax_normalizes() {
        let ls = log_softmax(&[0.5f32, -1.0, 2.0]);
        let s: f64 = ls.iter().map(|v| v.exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
