//! Dense square complex matrices and the Hermitian newtype built on them.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;

use super::LinalgError;

pub type C64 = Complex64;

/// Column vector of complex amplitudes.
pub type CVector = Vec<C64>;

/// Relative tolerance used when accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `<u|v>` with the first argument conjugated.
pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn vector_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Dense `dim x dim` complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from rows, rejecting ragged or non-square input.
    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self, LinalgError> {
        let dim = rows.len();
        if dim == 0 {
            return Err(LinalgError::Empty);
        }
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(LinalgError::NotSquare {
                    rows: dim,
                    cols: row.len(),
                });
            }
            data.extend(row);
        }
        Ok(Self { dim, data })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
                .collect(),
        )
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    /// `|u><v|`
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        assert_eq!(u.len(), v.len(), "outer product of unequal lengths");
        Self::from_fn(u.len(), |i, j| u[i] * v[j].conj())
    }

    /// `sum_k w_k |v_k><v_k|`
    pub fn weighted_projector_sum<'a>(
        dim: usize,
        terms: impl IntoIterator<Item = (f64, &'a [C64])>,
    ) -> Self {
        let mut m = Self::zeros(dim);
        for (w, v) in terms {
            for (i, vi) in v.iter().enumerate().take(dim) {
                let vi = vi * w;
                for (j, vj) in v.iter().enumerate().take(dim) {
                    m.data[i * dim + j] += vi * vj.conj();
                }
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> CVector {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Largest entry modulus.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Spectral norm, via the largest eigenvalue of `A^dagger A`.
    pub fn spectral_norm(&self) -> f64 {
        let gram = HermitianMatrix::hermitian_part(&(&self.adjoint() * self));
        match super::eigh(&gram) {
            Ok(es) => es
                .eigenvalues
                .last()
                .copied()
                .unwrap_or(0.0)
                .max(0.0)
                .sqrt(),
            Err(_) => self.frobenius(),
        }
    }

    pub fn mat_vec(&self, v: &[C64]) -> CVector {
        assert_eq!(v.len(), self.dim, "matrix-vector dimension mismatch");
        (0..self.dim)
            .map(|i| {
                let row = &self.data[i * self.dim..(i + 1) * self.dim];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `<u|A|v>`
    pub fn sandwich(&self, u: &[C64], v: &[C64]) -> C64 {
        inner(u, &self.mat_vec(v))
    }

    /// Compresses onto the span of `basis`: returns `B^dagger A B`.
    pub fn compress(&self, basis: &[CVector]) -> Self {
        let images: Vec<CVector> = basis.iter().map(|b| self.mat_vec(b)).collect();
        Self::from_fn(basis.len(), |i, j| inner(&basis[i], &images[j]))
    }

    /// `Tr(A B)` without forming the product.
    pub fn trace_product(&self, other: &ComplexMatrix) -> C64 {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += self.data[i * n + k] * other.data[k * n + i];
            }
        }
        acc
    }

    /// Maximum entrywise distance `‖A − B‖_max`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:>+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix product dimension mismatch");
        let n = self.dim;
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix sum dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix difference dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale(-1.0)
    }
}

/// A complex matrix accepted as Hermitian (`‖H − H†‖_max ≤ 1e-12·max(1, ‖H‖_max)`).
///
/// The stored entries are the exact Hermitian part of the input, so later
/// spectral routines see a perfectly symmetric array.
#[derive(Clone, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self, LinalgError> {
        let residual = m.max_abs_diff(&m.adjoint());
        let limit = HERMITIAN_TOL * m.norm_max().max(1.0);
        if residual > limit {
            return Err(LinalgError::NotHermitian { residual });
        }
        Ok(Self::hermitian_part(&m))
    }

    /// `(A + A†)/2`, for products that are Hermitian up to rounding.
    pub fn hermitian_part(m: &ComplexMatrix) -> Self {
        let n = m.dim();
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            out[(i, i)] = C64::new(m[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                out[(i, j)] = z;
                out[(j, i)] = z.conj();
            }
        }
        Self(out)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(ComplexMatrix::zeros(dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim))
    }

    pub fn diag(values: &[f64]) -> Self {
        Self(ComplexMatrix::diag(values))
    }

    /// `|v><v|`
    pub fn projector(v: &[C64]) -> Self {
        Self::hermitian_part(&ComplexMatrix::outer(v, v))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        Self::new(ComplexMatrix::from_real_rows(rows)?)
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn real_trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `A H A†`, re-symmetrized.
    pub fn congruence(&self, a: &ComplexMatrix) -> Self {
        Self::hermitian_part(&(&(a * &self.0) * &a.adjoint()))
    }

    /// `A H A` for Hermitian `A`, re-symmetrized.
    pub fn sandwiched_by(&self, a: &HermitianMatrix) -> Self {
        Self::hermitian_part(&(&(&a.0 * &self.0) * &a.0))
    }

    pub fn add(&self, other: &HermitianMatrix) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &HermitianMatrix) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    /// Hermitian compression `B† H B` onto an orthonormal set of vectors.
    pub fn compress(&self, basis: &[CVector]) -> Self {
        Self::hermitian_part(&self.0.compress(basis))
    }

    /// `<v|H|v>`, which is real.
    pub fn expectation(&self, v: &[C64]) -> f64 {
        self.0.sandwich(v, v).re
    }
}

impl std::ops::Deref for HermitianMatrix {
    type Target = ComplexMatrix;
    fn deref(&self) -> &ComplexMatrix {
        &self.0
    }
}

impl fmt::Debug for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hermitian{:?}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_hermitian() {
        let m = ComplexMatrix::from_rows(vec![
            vec![c(1.0, 0.0), c(0.0, 1.0)],
            vec![c(0.0, 1.0), c(1.0, 0.0)],
        ])
        .unwrap();
        assert!(matches!(
            HermitianMatrix::new(m),
            Err(LinalgError::NotHermitian { .. })
        ));
    }

    #[test]
    fn accepts_rounding_level_asymmetry() {
        let m = ComplexMatrix::from_rows(vec![
            vec![c(1.0, 0.0), c(0.5, 0.25 + 1e-14)],
            vec![c(0.5, -0.25), c(2.0, 1e-15)],
        ])
        .unwrap();
        let h = HermitianMatrix::new(m).unwrap();
        assert_eq!(h.max_abs_diff(&h.adjoint()), 0.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows = vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(1.0, 0.0)]];
        assert!(ComplexMatrix::from_rows(rows).is_err());
    }

    #[test]
    fn product_and_trace() {
        let a = ComplexMatrix::from_rows(vec![
            vec![c(1.0, 1.0), c(2.0, 0.0)],
            vec![c(0.0, -1.0), c(3.0, 0.5)],
        ])
        .unwrap();
        let b = a.adjoint();
        let p = &a * &b;
        assert!((p.trace().re - a.frobenius().powi(2)).abs() < 1e-12);
        assert!((a.trace_product(&b) - p.trace()).norm() < 1e-12);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = ComplexMatrix::diag(&[0.5, -3.0, 2.0]);
        assert!((m.spectral_norm() - 3.0).abs() < 1e-12);
    }
}
