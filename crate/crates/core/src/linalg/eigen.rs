//! Cyclic complex Jacobi eigensolver for small Hermitian matrices.

use std::cmp::Ordering;

use super::matrix::{CVector, ComplexMatrix, HermitianMatrix, C64};
use super::LinalgError;

/// Upper bound on full Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 100;

/// Eigenvalues closer than this (relative to `max(1, ‖H‖)`) are treated as
/// degenerate when fixing the eigenvector order.
const DEGENERACY_TOL: f64 = 1e-10;

/// Coordinates are rounded to this grid before the lexicographic comparison.
const ORDERING_GRID: f64 = 1e-8;

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, k: usize) -> CVector {
        self.eigenvectors.column(k)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// `max |λ|`, the spectral norm of the decomposed matrix.
    pub fn spectral_radius(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }

    /// Rebuilds `V f(Λ) V†`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let n = self.dim();
        let vectors: Vec<CVector> = (0..n).map(|k| self.vector(k)).collect();
        let m = ComplexMatrix::weighted_projector_sum(
            n,
            self.eigenvalues
                .iter()
                .zip(&vectors)
                .map(|(&l, v)| (f(l), v.as_slice())),
        );
        HermitianMatrix::hermitian_part(&m)
    }
}

/// Hermitian eigendecomposition.
///
/// Output is a pure function of the input: fixed sweep order, eigenvector
/// phases normalized so the largest-modulus component is real and positive,
/// and degenerate eigenvectors ordered lexicographically by rounded
/// coordinates.
pub fn eigh(h: &HermitianMatrix) -> Result<EigenSystem, LinalgError> {
    let n = h.dim();
    let mut a = h.as_matrix().clone();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius();

    if n > 1 && scale > 0.0 {
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            if off_diagonal_norm(&a) <= 1e-15 * scale {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
        if !converged && off_diagonal_norm(&a) > 1e-13 * scale {
            return Err(LinalgError::NoConvergence { sweeps: MAX_SWEEPS });
        }
    }

    let mut pairs: Vec<(f64, CVector)> = (0..n)
        .map(|k| (a[(k, k)].re, normalize_phase(v.column(k))))
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal));

    let degenerate = DEGENERACY_TOL * h.norm_max().max(1.0);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && pairs[end].0 - pairs[end - 1].0 <= degenerate {
            end += 1;
        }
        if end - start > 1 {
            pairs[start..end].sort_by(|x, y| lexicographic(&x.1, &y.1));
        }
        start = end;
    }

    let eigenvalues = pairs.iter().map(|p| p.0).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, |i, j| pairs[j].1[i]);
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// One two-sided rotation `A ← G† A G`, `V ← V G` annihilating `A[p,q]`.
///
/// `G = diag(1, e^{-iφ}) R(θ)` on the `(p, q)` plane, where the phase first
/// makes the pivot real and `R` is the classical real Jacobi rotation.
fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let g = apq.norm();
    if g == 0.0 {
        return;
    }
    let n = a.dim();
    let phase = apq / g;
    let pc = phase.conj();
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * g);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
        sign / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let cs = 1.0 / (t * t + 1.0).sqrt();
    let sn = t * cs;

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * cs - akq * pc * sn;
        a[(k, q)] = akp * sn + akq * pc * cs;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * cs - aqk * phase * sn;
        a[(q, k)] = apk * sn + aqk * phase * cs;
    }
    a[(p, q)] = C64::new(0.0, 0.0);
    a[(q, p)] = C64::new(0.0, 0.0);
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * cs - vkq * pc * sn;
        v[(k, q)] = vkp * sn + vkq * pc * cs;
    }
}

fn normalize_phase(mut col: CVector) -> CVector {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, z) in col.iter().enumerate() {
        // first index wins among near-equal moduli
        if z.norm() > best_abs + 1e-12 {
            best = i;
            best_abs = z.norm();
        }
    }
    if best_abs > 0.0 {
        let rot = col[best].conj() / best_abs;
        for z in col.iter_mut() {
            *z *= rot;
        }
        col[best] = C64::new(col[best].re, 0.0);
    }
    col
}

fn lexicographic(x: &[C64], y: &[C64]) -> Ordering {
    let round = |t: f64| (t / ORDERING_GRID).round() as i64;
    for (a, b) in x.iter().zip(y) {
        let ord = round(b.re)
            .cmp(&round(a.re))
            .then(round(b.im).cmp(&round(a.im)));
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}
