//! Small dense kernels for symmetric matrices.
//!
//! Everything here works on row-major `f64` storage and is sized for the
//! parameter counts a metric lives in (tens to a few hundred). The
//! eigensolver is cyclic Jacobi; square roots and inverse square roots go
//! through the eigendecomposition, and SPD solves use Cholesky.

use crate::error::{Error, Result};

/// Absolute asymmetry tolerated when a [`SymMatrix`] is constructed.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues in `[-PSD_CLAMP, 0)` are treated as round-off and clamped to zero.
pub const PSD_CLAMP: f64 = 1e-10;
/// Default floor used by [`sym_inv_sqrt`] callers.
pub const DEFAULT_EPS_FLOOR: f64 = 1e-12;

const JACOBI_REL_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;
const CHOLESKY_PIVOT_REL: f64 = 1e-14;

/// General dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    expected: c,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], v))
            .collect())
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Symmetric square matrix, dense row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    /// Builds a symmetric matrix, rejecting asymmetry above [`SYMMETRY_TOL`].
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("matrix dimension must be >= 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let gap = (entries[i * dim + j] - entries[j * dim + i]).abs();
                if gap > SYMMETRY_TOL {
                    return Err(Error::NotSymmetric {
                        row: i,
                        col: j,
                        gap,
                    });
                }
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows)?;
        Self::try_from(m)
    }

    /// Fills the upper triangle from `f` and mirrors it, so the result is
    /// exactly symmetric.
    pub fn from_upper(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                entries[i * dim + j] = v;
                entries[j * dim + i] = v;
            }
        }
        Self { dim, entries }
    }

    /// Symmetrizes a square matrix as `(m + mᵀ)/2`.
    pub fn symmetrize(m: &Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NonSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        Ok(Self::from_upper(m.rows(), |i, j| {
            0.5 * (m.get(i, j) + m.get(j, i))
        }))
    }

    pub fn identity(dim: usize) -> Self {
        Self::diag(&vec![1.0; dim])
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let dim = values.len();
        Self::from_upper(dim, |i, j| if i == j { values[i] } else { 0.0 })
    }

    /// Mean of `v vᵀ` over the given vectors, upper triangle accumulated and mirrored.
    pub fn outer_product_mean<'a, I>(dim: usize, vectors: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut acc = vec![0.0; dim * dim];
        let mut count = 0usize;
        for v in vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            for i in 0..dim {
                for j in i..dim {
                    acc[i * dim + j] += v[i] * v[j];
                }
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptyData);
        }
        let n = count as f64;
        Ok(Self::from_upper(dim, |i, j| acc[i * dim + j] / n))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix {
            rows: self.dim,
            cols: self.dim,
            data: self.entries.clone(),
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(self
            .entries
            .chunks_exact(self.dim)
            .map(|row| dot(row, v))
            .collect())
    }

    pub fn matmul(&self, other: &SymMatrix) -> Result<Matrix> {
        self.to_matrix().matmul(&other.to_matrix())
    }

    /// `self + shift·I`
    pub fn shifted(&self, shift: f64) -> SymMatrix {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.entries[i * self.dim + i] += shift;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl TryFrom<Matrix> for SymMatrix {
    type Error = Error;

    fn try_from(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NonSquare {
                rows: m.rows,
                cols: m.cols,
            });
        }
        SymMatrix::new(m.rows, m.data)
    }
}

/// Eigendecomposition `V·diag(λ)·Vᵀ`, eigenvalues ascending, eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigenPair {
    /// `V·diag(f(λ))·Vᵀ`, mirrored so the result is exactly symmetric.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.eigenvalues.len();
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let v = &self.eigenvectors;
        SymMatrix::from_upper(n, |i, j| {
            (0..n).map(|k| v.get(i, k) * mapped[k] * v.get(j, k)).sum()
        })
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|l| l)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("dim >= 1")
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn sym_eig(m: &SymMatrix) -> Result<EigenPair> {
    let n = m.dim();
    let mut a = m.to_matrix();
    let mut v = Matrix::identity(n);
    let initial = a.frobenius_norm();

    let off_norm = |a: &Matrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a.get(i, j) * a.get(i, j);
                }
            }
        }
        s.sqrt()
    };

    let mut converged = initial == 0.0;
    let mut sweep = 0;
    while !converged {
        if off_norm(&a) < JACOBI_REL_TOL * initial {
            converged = true;
            break;
        }
        if sweep == JACOBI_MAX_SWEEPS {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
        sweep += 1;
    }
    if !converged {
        return Err(Error::NonConvergence { dim: n, sweeps: sweep });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let eigenvalues = order.iter().map(|&i| a.get(i, i)).collect();
    let eigenvectors = Matrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok(EigenPair {
        eigenvalues,
        eigenvectors,
    })
}

// A <- PᵀAP and V <- VP for the plane rotation in (p, q).
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for k in 0..n {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.set(k, p, c * akp - s * akq);
        a.set(k, q, s * akp + c * akq);
    }
    for k in 0..n {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.set(p, k, c * apk - s * aqk);
        a.set(q, k, s * apk + c * aqk);
    }
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Principal square root of a positive semidefinite matrix.
pub fn sym_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eig(m)?;
    if eig.min() < -PSD_CLAMP {
        return Err(Error::NotPositiveSemidefinite {
            eigenvalue: eig.min(),
        });
    }
    Ok(eig.reconstruct_with(|l| l.max(0.0).sqrt()))
}

/// Inverse principal square root, with eigenvalues floored at `eps_floor`.
///
/// With `eps_floor == 0` any non-positive eigenvalue is an error.
pub fn sym_inv_sqrt(m: &SymMatrix, eps_floor: f64) -> Result<SymMatrix> {
    let eig = sym_eig(m)?;
    let floored_min = eig.min().max(eps_floor);
    if (eps_floor == 0.0 && eig.min() <= 0.0) || floored_min <= 0.0 {
        return Err(Error::Singular(format!(
            "smallest eigenvalue {:e} cannot be inverted; regularize the metric",
            eig.min()
        )));
    }
    Ok(eig.reconstruct_with(|l| 1.0 / l.max(eps_floor).sqrt()))
}

/// Cholesky factor `L` with `m = L·Lᵀ`, lower triangle row-major.
pub fn cholesky(m: &SymMatrix) -> Result<Matrix> {
    let n = m.dim();
    let max_diag = m.diagonal().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max_diag <= 0.0 {
        return Err(Error::Singular(format!(
            "largest diagonal entry {max_diag:e} is not positive"
        )));
    }
    let threshold = CHOLESKY_PIVOT_REL * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > threshold) {
            return Err(Error::Singular(format!(
                "pivot {d:e} at row {j} below {threshold:e}"
            )));
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &Matrix, rhs: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Solves `m·x = rhs` for symmetric positive definite `m`.
pub fn solve_spd(m: &SymMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: rhs.len(),
        });
    }
    let l = cholesky(m)?;
    Ok(cholesky_solve(&l, rhs))
}

/// Solves `m·X = B` column by column with a single factorization.
pub fn solve_spd_matrix(m: &SymMatrix, b: &Matrix) -> Result<Matrix> {
    if b.rows() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: b.rows(),
        });
    }
    let l = cholesky(m)?;
    let mut out = Matrix::zeros(b.rows(), b.cols());
    for c in 0..b.cols() {
        let col: Vec<f64> = (0..b.rows()).map(|r| b.get(r, c)).collect();
        for (r, x) in cholesky_solve(&l, &col).into_iter().enumerate() {
            out.set(r, c, x);
        }
    }
    Ok(out)
}

/// True iff the smallest eigenvalue exceeds `1e-12` times the largest.
pub fn is_positive_definite(m: &SymMatrix) -> bool {
    match sym_eig(m) {
        Ok(eig) => eig.max() > 0.0 && eig.min() > 1e-12 * eig.max(),
        Err(_) => false,
    }
}

/// Singular values (ascending) of a general matrix, via the eigenvalues of `mᵀm`.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    let gram = SymMatrix::symmetrize(&m.transpose().matmul(m)?)?;
    Ok(sym_eig(&gram)?
        .eigenvalues
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute error when `b` is zero.
pub fn relative_frobenius_error(a: &Matrix, b: &Matrix) -> f64 {
    let diff = a.sub(b).map(|d| d.frobenius_norm()).unwrap_or(f64::INFINITY);
    let scale = b.frobenius_norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
