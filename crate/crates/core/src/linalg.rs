//! Dense row-major matrix kernel: products, power-iteration spectral norm,
//! Gaussian sampling, and an independent Jacobi eigendecomposition oracle for
//! singular values at small scale.

use crate::error::{Error, Result};
use crate::rng::Pcg32;

/// Power iteration defaults: relative tolerance on the singular-value
/// estimate and the iteration cap.
pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Largest matrix side accepted by [`svd_oracle`].
pub const SVD_ORACLE_MAX_DIM: usize = 64;

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Checked construction from row-major values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Convenience constructor for literals in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("ragged rows".to_string()));
        }
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        // i-k-j order keeps both inner accesses sequential.
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T`; both operands are walked along contiguous rows.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by transpose of {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                let b_row = other.row(j);
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out.data[i * other.rows + j] = acc;
            }
        }
        Ok(out)
    }

    /// `self^T * other`.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::dim(format!(
                "cannot multiply transpose of {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::dim(format!(
                "matrix is {}x{} but vector has length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = 0.0;
            for (&a, &x) in row.iter().zip(v) {
                acc += a * x;
            }
            *o = acc;
        }
        Ok(out)
    }

    /// `self^T * v`.
    pub fn matvec_t(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::dim(format!(
                "matrix is {}x{} but vector has length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &x) in v.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let row = self.row(i);
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * x;
            }
        }
        Ok(out)
    }

    /// Multiply row `i` by `factors[i]` in place.
    pub fn scale_rows(&mut self, factors: &[f64]) -> Result<()> {
        if factors.len() != self.rows {
            return Err(Error::dim(format!(
                "{} row factors for a {}x{} matrix",
                factors.len(),
                self.rows,
                self.cols
            )));
        }
        for (i, &f) in factors.iter().enumerate() {
            for v in self.row_mut(i) {
                *v *= f;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Result of a power-iteration spectral norm estimate. `converged` is false
/// when the iteration cap was reached first; the value is still the best
/// estimate and callers surface the flag rather than discarding it.
#[derive(Debug, Clone, Copy)]
pub struct SpectralNorm {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Largest singular value by power iteration on the Gram matrix of the
/// smaller side, with a seeded random start vector. Terminates when the
/// relative change of the estimate drops below `rel_tol`.
pub fn max_singular_value(
    m: &Matrix,
    rel_tol: f64,
    max_iter: usize,
    rng: &mut Pcg32,
) -> Result<SpectralNorm> {
    if !(rel_tol > 0.0) {
        return Err(Error::invalid("rel_tol must be positive"));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be positive"));
    }
    let left = m.rows <= m.cols;
    let k = if left { m.rows } else { m.cols };

    let mut v: Vec<f64> = (0..k).map(|_| rng.next_gaussian()).collect();
    let norm = vec_norm(&v);
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        for x in &mut v {
            *x /= norm;
        }
    }

    let mut estimate = 0.0;
    for iteration in 1..=max_iter {
        // w = (m m^T) v  or  (m^T m) v, whichever Gram side is smaller.
        let w = if left {
            m.matvec(&m.matvec_t(&v)?)?
        } else {
            m.matvec_t(&m.matvec(&v)?)?
        };
        let rayleigh: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let s = rayleigh.max(0.0).sqrt();
        let w_norm = vec_norm(&w);
        if w_norm == 0.0 {
            // v is (numerically) in the null space; with a random start this
            // only happens for the zero matrix.
            return Ok(SpectralNorm {
                value: 0.0,
                converged: true,
                iterations: iteration,
            });
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / w_norm;
        }
        if (s - estimate).abs() <= rel_tol * s.max(f64::MIN_POSITIVE) {
            return Ok(SpectralNorm {
                value: s,
                converged: true,
                iterations: iteration,
            });
        }
        estimate = s;
    }
    Ok(SpectralNorm {
        value: estimate,
        converged: false,
        iterations: max_iter,
    })
}

/// [`max_singular_value`] with the default tolerance and iteration cap.
pub fn spectral_norm(m: &Matrix, rng: &mut Pcg32) -> SpectralNorm {
    max_singular_value(m, DEFAULT_REL_TOL, DEFAULT_MAX_ITER, rng)
        .expect("default power iteration parameters are valid")
}

/// All singular values in descending order, by cyclic Jacobi rotations on the
/// Gram matrix of the smaller side. Deliberately shares no code with the
/// power iteration path so the two can check each other; limited to
/// [`SVD_ORACLE_MAX_DIM`] on the smaller dimension.
pub fn svd_oracle(m: &Matrix) -> Result<Vec<f64>> {
    let k = m.rows.min(m.cols);
    if k > SVD_ORACLE_MAX_DIM {
        return Err(Error::invalid(format!(
            "svd oracle accepts matrices with min dimension <= {SVD_ORACLE_MAX_DIM}, got {k}"
        )));
    }
    let mut a = if m.rows <= m.cols {
        m.matmul_nt(m)?
    } else {
        m.matmul_tn(m)?
    };

    let scale = a.frobenius_norm();
    if scale > 0.0 {
        let off_tolerance = (f64::EPSILON * scale).powi(2);
        for _sweep in 0..100 {
            if off_diagonal_sq(&a) <= off_tolerance {
                break;
            }
            for p in 0..k {
                for q in (p + 1)..k {
                    jacobi_rotate(&mut a, p, q);
                }
            }
        }
    }

    let mut singular: Vec<f64> = (0..k).map(|i| a.get(i, i).max(0.0).sqrt()).collect();
    singular.sort_by(|x, y| y.partial_cmp(x).expect("singular values are finite"));
    Ok(singular)
}

fn off_diagonal_sq(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a.get(i, j) * a.get(i, j);
            }
        }
    }
    sum
}

/// One Jacobi rotation annihilating the (p, q) entry of a symmetric matrix.
fn jacobi_rotate(a: &mut Matrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta >= 0.0 {
        1.0 / (theta + (1.0 + theta * theta).sqrt())
    } else {
        1.0 / (theta - (1.0 + theta * theta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    let n = a.rows();
    for i in 0..n {
        let aip = a.get(i, p);
        let aiq = a.get(i, q);
        a.set(i, p, c * aip - s * aiq);
        a.set(i, q, s * aip + c * aiq);
    }
    for j in 0..n {
        let apj = a.get(p, j);
        let aqj = a.get(q, j);
        a.set(p, j, c * apj - s * aqj);
        a.set(q, j, s * apj + c * aqj);
    }
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);
}

/// Matrix with i.i.d. N(0, std^2) entries drawn from `rng`.
pub fn sample_gaussian_matrix(
    rows: usize,
    cols: usize,
    std: f64,
    rng: &mut Pcg32,
) -> Result<Matrix> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::invalid(format!(
            "standard deviation must be finite and non-negative, got {std}"
        )));
    }
    let mut m = Matrix::zeros(rows, cols);
    if std > 0.0 {
        for v in &mut m.data {
            *v = std * rng.next_gaussian();
        }
    }
    Ok(m)
}

fn vec_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
