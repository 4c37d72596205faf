//! Small dense matrices and the two exponential kernels the calibration
//! needs: `exp(A)` by diagonal Padé approximation with scaling and
//! squaring, and the Van Loan block-triangular integral
//! `∫₀ᵗ exp(A(t−s)) B exp(As) ds`.
//!
//! Matrices here are tiny (twice the model order at most), so everything is
//! a flat row-major `Vec<f64>` with no blocking or SIMD.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense square matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        SquareMatrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(SquareMatrix { dim, data })
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {dim}x{dim} matrix",
                data.len()
            )));
        }
        Ok(SquareMatrix { dim, data })
    }

    /// Outer product `col · rowᵀ`.
    pub fn outer(col: &[f64], row: &[f64]) -> Result<Self> {
        if col.len() != row.len() {
            return Err(Error::DimensionMismatch("outer product operands".into()));
        }
        let dim = col.len();
        let mut data = Vec::with_capacity(dim * dim);
        for &c in col {
            data.extend(row.iter().map(|&r| c * r));
        }
        Ok(SquareMatrix { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, factor: f64) -> Self {
        SquareMatrix {
            dim: self.dim,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    /// `self + factor·other`, in place.
    pub fn add_scaled(&mut self, other: &SquareMatrix, factor: f64) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    /// Left-multiplication by `diag(d)`: scales row i by `d[i]`.
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        let mut out = self.clone();
        for (i, &di) in d.iter().enumerate() {
            for x in &mut out.data[i * self.dim..(i + 1) * self.dim] {
                *x *= di;
            }
        }
        out
    }

    /// Right-multiplication by `diag(d)`: scales column j by `d[j]`.
    pub fn scale_cols(&self, d: &[f64]) -> Self {
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.dim) {
            for (x, &dj) in row.iter_mut().zip(d) {
                *x *= dj;
            }
        }
        out
    }

    /// Row vector times matrix: `vᵀ·M`.
    pub fn left_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o += vi * m;
            }
        }
        out
    }

    /// Matrix times column vector: `M·v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(m, x)| m * x).sum())
            .collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.data
            .chunks(self.dim.max(1))
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &SquareMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Block `[r0..r0+d, c0..c0+d]`.
    pub fn block(&self, r0: usize, c0: usize, d: usize) -> Self {
        let mut out = Self::zeros(d);
        for i in 0..d {
            out.data[i * d..(i + 1) * d]
                .copy_from_slice(&self.data[(r0 + i) * self.dim + c0..(r0 + i) * self.dim + c0 + d]);
        }
        out
    }

    /// Solves `self · X = rhs` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, rhs: &SquareMatrix) -> Result<SquareMatrix> {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
                .unwrap_or(col);
            if a[pivot * n + col] == 0.0 {
                return Err(Error::NonFinite("singular Padé denominator"));
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot * n + k);
                    b.swap(col * n + k, pivot * n + k);
                }
            }
            let p = a[col * n + col];
            for row in col + 1..n {
                let f = a[row * n + col] / p;
                if f == 0.0 {
                    continue;
                }
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                for k in 0..n {
                    b[row * n + k] -= f * b[col * n + k];
                }
            }
        }
        for col in (0..n).rev() {
            let p = a[col * n + col];
            for k in 0..n {
                b[col * n + k] /= p;
            }
            for row in 0..col {
                let f = a[row * n + col];
                if f == 0.0 {
                    continue;
                }
                for k in 0..n {
                    b[row * n + k] -= f * b[col * n + k];
                }
            }
        }
        Ok(SquareMatrix { dim: n, data: b })
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &SquareMatrix {
    type Output = SquareMatrix;
    fn mul(self, rhs: &SquareMatrix) -> SquareMatrix {
        let n = self.dim;
        debug_assert_eq!(n, rhs.dim);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let o = &mut out[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for (x, &b) in o.iter_mut().zip(&rhs.data[k * n..(k + 1) * n]) {
                    *x += a * b;
                }
            }
        }
        SquareMatrix { dim: n, data: out }
    }
}

impl Add for &SquareMatrix {
    type Output = SquareMatrix;
    fn add(self, rhs: &SquareMatrix) -> SquareMatrix {
        let mut out = self.clone();
        out.add_scaled(rhs, 1.0);
        out
    }
}

impl Sub for &SquareMatrix {
    type Output = SquareMatrix;
    fn sub(self, rhs: &SquareMatrix) -> SquareMatrix {
        let mut out = self.clone();
        out.add_scaled(rhs, -1.0);
        out
    }
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SquareMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SquareMatrix::from_rows(&rows)
    }
}

impl From<SquareMatrix> for Vec<Vec<f64>> {
    fn from(m: SquareMatrix) -> Self {
        m.to_rows()
    }
}

/// Degree of the diagonal Padé approximant. With the argument scaled to
/// `‖A‖∞ ≤ 1/2` the truncation error bound is below 4e-16.
const PADE_DEGREE: usize = 6;

/// Matrix exponential `exp(A)`.
///
/// Scales `A` by `2^-s` so that `‖A‖∞/2^s ≤ 1/2`, evaluates the [6/6]
/// diagonal Padé approximant and squares the result `s` times. The 1×1 case
/// is the scalar exponential.
pub fn expm(a: &SquareMatrix) -> Result<SquareMatrix> {
    if !a.is_finite() {
        return Err(Error::NonFinite("expm argument"));
    }
    let n = a.dim();
    if n == 1 {
        return Ok(SquareMatrix { dim: 1, data: vec![a.data[0].exp()] });
    }
    let norm = a.norm_inf();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let x = a.scale(0.5f64.powi(squarings));

    let mut c = 1.0;
    let mut power = SquareMatrix::identity(n);
    let mut numer = SquareMatrix::identity(n);
    let mut denom = SquareMatrix::identity(n);
    let q = PADE_DEGREE as f64;
    for k in 1..=PADE_DEGREE {
        let kf = k as f64;
        c *= (q - kf + 1.0) / ((2.0 * q - kf + 1.0) * kf);
        power = &x * &power;
        numer.add_scaled(&power, c);
        denom.add_scaled(&power, if k % 2 == 0 { c } else { -c });
    }
    let mut result = denom.solve(&numer)?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    if !result.is_finite() {
        return Err(Error::NonFinite("expm result"));
    }
    Ok(result)
}

/// Block-triangular matrix `[[A, B], [0, A]]` whose exponential carries the
/// Van Loan integral in its upper-right block.
#[derive(Debug, Clone)]
pub struct VanLoanBlock {
    a: SquareMatrix,
    b: SquareMatrix,
}

impl VanLoanBlock {
    pub fn new(a: SquareMatrix, b: SquareMatrix) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch(format!(
                "Van Loan blocks {}x{} and {}x{}",
                a.dim(),
                a.dim(),
                b.dim(),
                b.dim()
            )));
        }
        Ok(VanLoanBlock { a, b })
    }

    /// The assembled `2d × 2d` matrix, scaled by `t`.
    pub fn assemble(&self, t: f64) -> SquareMatrix {
        let d = self.a.dim();
        let mut c = SquareMatrix::zeros(2 * d);
        for i in 0..d {
            for j in 0..d {
                c[(i, j)] = self.a[(i, j)] * t;
                c[(i, j + d)] = self.b[(i, j)] * t;
                c[(i + d, j + d)] = self.a[(i, j)] * t;
            }
        }
        c
    }

    /// Evaluates the integral together with `exp(A t)`.
    pub fn evaluate(&self, t: f64) -> Result<VanLoanOutput> {
        let d = self.a.dim();
        if t == 0.0 {
            return Ok(VanLoanOutput {
                integral: SquareMatrix::zeros(d),
                exp_at: SquareMatrix::identity(d),
            });
        }
        let e = expm(&self.assemble(t))?;
        let exp_at = e.block(0, 0, d);
        debug_assert!({
            let lower = e.block(d, d, d);
            exp_at.max_abs_diff(&lower) <= 1e-10 * (1.0 + exp_at.norm_inf())
        });
        Ok(VanLoanOutput { integral: e.block(0, d, d), exp_at })
    }
}

#[derive(Debug, Clone)]
pub struct VanLoanOutput {
    /// `∫₀ᵗ exp(A(t−s)) B exp(As) ds`
    pub integral: SquareMatrix,
    /// `exp(A t)`, read off the diagonal block.
    pub exp_at: SquareMatrix,
}

/// `∫₀ᵗ exp(A(t−s))·B·exp(As) ds`, as the upper-right block of
/// `exp([[A, B], [0, A]]·t)`.
pub fn van_loan_integral(a: &SquareMatrix, b: &SquareMatrix, t: f64) -> Result<SquareMatrix> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::NonFinite("Van Loan interval length"));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("Van Loan operands"));
    }
    Ok(VanLoanBlock::new(a.clone(), b.clone())?.evaluate(t)?.integral)
}
