//! Small dense complex linear-algebra kernel.
//!
//! Only what the precoders and the Gaussian information computations need:
//! null spaces via a column-pivoted Householder factorization, a Hermitian
//! Cholesky factorization with log-determinant and solves, and a handful of
//! matrix helpers. Everything here is deterministic and allocation-light;
//! no randomness, no global state.

use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Relative rank tolerance, applied to the largest pivot magnitude of the
/// row-equilibrated matrix.
pub const RANK_TOL: f64 = 1e-10;

/// Pivot candidates within this relative margin of the best count as tied;
/// ties go to the lowest index.
pub const PIVOT_TIE_TOL: f64 = 1e-12;

/// Entries below this magnitude never anchor the phase convention.
pub const PHASE_ANCHOR_TOL: f64 = 1e-12;

/// Relative tolerance used when checking that a matrix is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("matrix is rank deficient: numerical rank {rank} < {rows} rows")]
    RankDeficient { rank: usize, rows: usize },
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix has a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// Dense row-major complex matrix.
///
/// A matrix may have zero rows (an empty constraint set, e.g. the D-slot
/// data constraints for two users) but always has at least one column.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if cols == 0 {
            return Err(LinalgError::Dimension("matrix needs at least one column".into()));
        }
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite { row: i / cols, col: i % cols });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Matrix with no rows and `cols` columns.
    pub fn empty(cols: usize) -> Result<Self, LinalgError> {
        Self::new(0, cols, Vec::new())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(cols > 0, "matrix needs at least one column");
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
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

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    /// New matrix made of the listed rows, in the listed order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    /// Copy of the matrix without row `skip`.
    pub fn without_row(&self, skip: usize) -> Self {
        let idx: Vec<usize> = (0..self.rows).filter(|&i| i != skip).collect();
        self.select_rows(&idx)
    }

    /// Panics on a zero-row matrix, whose adjoint would have no columns.
    pub fn conj_transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols, "vector length must match column count");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest |M_ij - conj(M_ji)|; infinite for non-square matrices.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut dev: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Unit-norm complex vector whose first entry of magnitude above
/// [`PHASE_ANCHOR_TOL`] is real and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<C64>);

impl UnitVector {
    /// Normalizes `v` and applies the phase convention.
    pub fn normalized(mut v: Vec<C64>) -> Result<Self, LinalgError> {
        let n = norm(&v);
        if !(n.is_finite() && n > 0.0) {
            return Err(LinalgError::Dimension("cannot normalize a zero or non-finite vector".into()));
        }
        for z in &mut v {
            *z /= n;
        }
        if let Some(anchor) = v.iter().copied().find(|z| z.norm() > PHASE_ANCHOR_TOL) {
            let rot = anchor.conj() / anchor.norm();
            for z in &mut v {
                *z *= rot;
            }
            // the anchor itself is exactly real after rotation up to rounding
            if let Some(z) = v.iter_mut().find(|z| z.norm() > PHASE_ANCHOR_TOL) {
                *z = C64::new(z.norm(), 0.0);
            }
        }
        Ok(Self(v))
    }

    /// Canonical basis vector `e_index`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = vec![C64::new(0.0, 0.0); dim];
        v[index] = C64::new(1.0, 0.0);
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<C64> {
        self.0
    }
}

impl std::ops::Deref for UnitVector {
    type Target = [C64];

    fn deref(&self) -> &[C64] {
        &self.0
    }
}

/// Plain bilinear product `sum_i a_i b_i` (no conjugation).
///
/// Channel rows are stored as `h^H`, so `dot(row, v)` is the Hermitian
/// inner product `<h, v> = h^H v`.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hermitian inner product `a^H b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Pivoted Householder factorization of `A^H`, keeping only what the null
/// space needs: the numerical rank and the reflectors that built `Q`.
struct PivotedQr {
    n: usize,
    rank: usize,
    reflectors: Vec<Vec<C64>>,
}

impl PivotedQr {
    fn of_adjoint(a: &ComplexMatrix) -> Self {
        let n = a.cols;
        let m = a.rows;
        // columns of A^H, i.e. conjugated rows of A, equilibrated to unit norm
        // so that scaling a row cannot change the pivot order
        let mut cols: Vec<Vec<C64>> = (0..m)
            .map(|i| {
                let r = a.row(i);
                let s = norm(r);
                let s = if s > 0.0 { s } else { 1.0 };
                r.iter().map(|z| z.conj() / s).collect()
            })
            .collect();
        let mut reflectors = Vec::new();
        let mut largest = 0.0;
        let mut rank = 0;

        for j in 0..m.min(n) {
            // ascending pivot order: first column with the largest trailing norm
            let mut pivot = j;
            let mut best = -1.0;
            for (c, col) in cols.iter().enumerate().skip(j) {
                let s = norm(&col[j..]);
                if s > best * (1.0 + PIVOT_TIE_TOL) {
                    best = s;
                    pivot = c;
                }
            }
            if j == 0 {
                largest = best;
            }
            if best <= RANK_TOL * largest || best == 0.0 {
                break;
            }
            cols.swap(j, pivot);

            let x = &cols[j][j..];
            let x0 = x[0];
            let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
            let alpha = -phase * best;
            let mut w: Vec<C64> = x.to_vec();
            w[0] -= alpha;
            let wn = norm(&w);
            for z in &mut w {
                *z /= wn;
            }
            for col in cols.iter_mut().skip(j) {
                apply_reflector(&w, &mut col[j..]);
            }
            reflectors.push(w);
            rank += 1;
        }
        Self { n, rank, reflectors }
    }

    /// Column `j` of `Q = H_0 H_1 ... H_{r-1}`.
    fn q_column(&self, j: usize) -> Vec<C64> {
        let mut e = vec![C64::new(0.0, 0.0); self.n];
        e[j] = C64::new(1.0, 0.0);
        for (k, w) in self.reflectors.iter().enumerate().rev() {
            apply_reflector(w, &mut e[k..]);
        }
        e
    }
}

/// `x <- (I - 2 w w^H) x` for unit `w`.
fn apply_reflector(w: &[C64], x: &mut [C64]) {
    let s = inner(w, x) * 2.0;
    for (xi, wi) in x.iter_mut().zip(w) {
        *xi -= wi * s;
    }
}

/// Numerical rank of `a` under [`RANK_TOL`].
pub fn numerical_rank(a: &ComplexMatrix) -> usize {
    PivotedQr::of_adjoint(a).rank
}

/// Orthonormal basis of the numerical null space of `a`.
///
/// The basis is the trailing block of `Q` in the pivoted factorization of
/// `A^H`, in column order, each vector under the phase convention. An empty
/// (zero-row) matrix yields the canonical basis.
pub fn null_space_basis(a: &ComplexMatrix) -> Result<Vec<UnitVector>, LinalgError> {
    if a.rows > a.cols {
        return Err(LinalgError::Dimension(format!(
            "null-space basis needs rows <= cols, got {}x{}",
            a.rows, a.cols
        )));
    }
    let qr = PivotedQr::of_adjoint(a);
    (qr.rank..qr.n).map(|j| UnitVector::normalized(qr.q_column(j))).collect()
}

/// First vector of [`null_space_basis`] for a full-row-rank wide matrix.
pub fn null_space_unit_vector(a: &ComplexMatrix) -> Result<UnitVector, LinalgError> {
    if a.rows >= a.cols {
        return Err(LinalgError::Dimension(format!(
            "null vector needs rows < cols, got {}x{}",
            a.rows, a.cols
        )));
    }
    let qr = PivotedQr::of_adjoint(a);
    if qr.rank < a.rows {
        return Err(LinalgError::RankDeficient { rank: qr.rank, rows: a.rows });
    }
    UnitVector::normalized(qr.q_column(qr.rank))
}

/// Cholesky factor `M = L L^H` of a Hermitian positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    // row-major lower triangle, real positive diagonal
    l: Vec<C64>,
}

impl Cholesky {
    pub fn factor(m: &ComplexMatrix) -> Result<Self, LinalgError> {
        if !m.is_square() || m.rows == 0 {
            return Err(LinalgError::Dimension(format!("Cholesky needs a square matrix, got {}x{}", m.rows, m.cols)));
        }
        let deviation = m.hermitian_deviation();
        if deviation > HERMITIAN_TOL * m.max_abs().max(1.0) {
            return Err(LinalgError::NotHermitian { deviation });
        }
        let n = m.rows;
        let mut l = vec![C64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let mut d = m[(j, j)].re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > 0.0) {
                return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = C64::new(djj, 0.0);
            for i in (j + 1)..n {
                // lower triangle taken from M_ij; the upper triangle is ignored
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn diag(&self, i: usize) -> f64 {
        self.l[i * self.n + i].re
    }

    /// `log_base det(M)`.
    pub fn log_det(&self, base: f64) -> f64 {
        2.0 * (0..self.n).map(|i| self.diag(i).ln()).sum::<f64>() / base.ln()
    }

    /// Ratio of the largest to the smallest squared pivot; a cheap
    /// conditioning indicator (a lower bound on the 2-norm condition number
    /// is not implied, it is only a diagnostic).
    pub fn pivot_ratio(&self) -> f64 {
        let sq: Vec<f64> = (0..self.n).map(|i| self.diag(i).powi(2)).collect();
        let max = sq.iter().copied().fold(0.0, f64::max);
        let min = sq.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.diag(i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i].conj() * y[k];
            }
            y[i] = s / self.diag(i);
        }
        y
    }

    pub fn inverse(&self) -> ComplexMatrix {
        let n = self.n;
        let mut out = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            let col = self.solve(&e);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        // symmetrize so the result passes the Hermitian check exactly
        for i in 0..n {
            out[(i, i)] = C64::new(out[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let avg = (out[(i, j)] + out[(j, i)].conj()) * 0.5;
                out[(i, j)] = avg;
                out[(j, i)] = avg.conj();
            }
        }
        out
    }
}

/// `log_base det(M)` for Hermitian positive-definite `M`.
pub fn log_det_hermitian_pd(m: &ComplexMatrix, base: f64) -> Result<f64, LinalgError> {
    Ok(Cholesky::factor(m)?.log_det(base))
}
