//! Small dense complex-Hermitian linear algebra.
//!
//! Everything here works on matrices of dimension up to about 16 and is
//! deterministic: identical input always produces bit-identical output.

mod eigen;
mod matrix;

use thiserror::Error;

pub use eigen::{eigh, EigenSystem, MAX_SWEEPS};
pub use matrix::{c, inner, vector_norm, CVector, ComplexMatrix, HermitianMatrix, C64};

/// Default relative cutoff below which an eigenvalue counts as zero.
pub const DEFAULT_RANK_CUTOFF: f64 = 1e-10;

/// Default relative tolerance for positive semi-definiteness.
pub const DEFAULT_PSD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is empty")]
    Empty,
    #[error("matrix is not square: {rows} rows but a row of length {cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (max |H - H^dagger| = {residual:e})")]
    NotHermitian { residual: f64 },
    #[error("matrix is not positive semi-definite (eigenvalue {eigenvalue:e})")]
    NotPositiveSemidefinite { eigenvalue: f64 },
    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Support and kernel projectors of a PSD operator.
#[derive(Clone, Debug)]
pub struct SupportDecomposition {
    pub support_projector: HermitianMatrix,
    pub kernel_projector: HermitianMatrix,
    pub rank: usize,
    /// Absolute eigenvalue threshold that separated support from kernel.
    pub cutoff_used: f64,
    /// Orthonormal eigenvectors spanning the support.
    pub support_basis: Vec<CVector>,
    /// Orthonormal eigenvectors spanning the kernel.
    pub kernel_basis: Vec<CVector>,
    /// Eigenvalues belonging to `support_basis`, in the same order.
    pub support_eigenvalues: Vec<f64>,
}

impl SupportDecomposition {
    pub fn dim(&self) -> usize {
        self.support_basis.len() + self.kernel_basis.len()
    }
}

/// Unique PSD square root. Eigenvalues in `[-tol·‖A‖₂, 0)` are clamped to zero.
pub fn sqrt_psd(a: &HermitianMatrix, tol: f64) -> Result<HermitianMatrix, LinalgError> {
    let es = eigh(a)?;
    sqrt_from_eigen(&es, tol * es.spectral_radius())
}

fn sqrt_from_eigen(es: &EigenSystem, allowance: f64) -> Result<HermitianMatrix, LinalgError> {
    let min = es.min();
    if min < -allowance {
        return Err(LinalgError::NotPositiveSemidefinite { eigenvalue: min });
    }
    Ok(es.reconstruct_with(|l| l.max(0.0).sqrt()))
}

/// Splits the space into the span of eigenvectors with eigenvalue above
/// `rel_cutoff·λ_max` and its orthogonal complement.
pub fn support_decomposition(
    a: &HermitianMatrix,
    rel_cutoff: f64,
) -> Result<SupportDecomposition, LinalgError> {
    let es = eigh(a)?;
    Ok(support_from_eigen(&es, rel_cutoff))
}

pub(crate) fn support_from_eigen(es: &EigenSystem, rel_cutoff: f64) -> SupportDecomposition {
    let n = es.dim();
    let lmax = es.max();
    let cutoff = if lmax > 0.0 { rel_cutoff * lmax } else { 0.0 };
    let mut support_basis = Vec::new();
    let mut support_eigenvalues = Vec::new();
    let mut kernel_basis = Vec::new();
    for (k, &l) in es.eigenvalues.iter().enumerate() {
        if lmax > 0.0 && l > cutoff {
            support_basis.push(es.vector(k));
            support_eigenvalues.push(l);
        } else {
            kernel_basis.push(es.vector(k));
        }
    }
    let proj = |basis: &[CVector]| {
        HermitianMatrix::hermitian_part(&ComplexMatrix::weighted_projector_sum(
            n,
            basis.iter().map(|v| (1.0, v.as_slice())),
        ))
    };
    SupportDecomposition {
        support_projector: proj(&support_basis),
        kernel_projector: proj(&kernel_basis),
        rank: support_basis.len(),
        cutoff_used: cutoff,
        support_basis,
        kernel_basis,
        support_eigenvalues,
    }
}

/// Square root that is exactly zero on the numerical kernel.
///
/// Eigenvalues at or below `rel_cutoff·λ_max` are dropped instead of rooted,
/// so rounding noise of order `ε` in the kernel does not turn into `√ε`.
pub fn sqrt_psd_on_support(
    a: &HermitianMatrix,
    tol: f64,
    rel_cutoff: f64,
) -> Result<(HermitianMatrix, SupportDecomposition), LinalgError> {
    let es = eigh(a)?;
    let min = es.min();
    if min < -tol * es.spectral_radius() {
        return Err(LinalgError::NotPositiveSemidefinite { eigenvalue: min });
    }
    let support = support_from_eigen(&es, rel_cutoff);
    let root = ComplexMatrix::weighted_projector_sum(
        a.dim(),
        support
            .support_eigenvalues
            .iter()
            .zip(&support.support_basis)
            .map(|(&l, v)| (l.sqrt(), v.as_slice())),
    );
    Ok((HermitianMatrix::hermitian_part(&root), support))
}

/// Moore-Penrose pseudo-inverse; only eigenvalues with `|λ| > rel_cutoff·max|λ|`
/// are inverted.
pub fn pseudo_inverse(
    a: &HermitianMatrix,
    rel_cutoff: f64,
) -> Result<HermitianMatrix, LinalgError> {
    let es = eigh(a)?;
    let cutoff = rel_cutoff * es.spectral_radius();
    Ok(es.reconstruct_with(|l| {
        if l.abs() > cutoff && l != 0.0 {
            1.0 / l
        } else {
            0.0
        }
    }))
}

/// `(is_psd, λ_min)` with `is_psd ⇔ λ_min ≥ −tol·max(1, ‖A‖₂)`.
pub fn psd_check(a: &HermitianMatrix, tol: f64) -> Result<(bool, f64), LinalgError> {
    let es = eigh(a)?;
    let min = es.min();
    Ok((min >= -tol * es.spectral_radius().max(1.0), min))
}

/// Rank at a relative eigenvalue cutoff.
pub fn rank(a: &HermitianMatrix, rel_cutoff: f64) -> Result<usize, LinalgError> {
    Ok(support_decomposition(a, rel_cutoff)?.rank)
}

/// Unitary factor `V` of a polar decomposition `A = V |A|`.
///
/// On the kernel of `A` the factor is completed by pairing the kernel of
/// `A†A` with an orthonormal complement of the range, both in eigenvector
/// order, which keeps the result deterministic.
pub fn polar_unitary(a: &ComplexMatrix, rel_cutoff: f64) -> Result<ComplexMatrix, LinalgError> {
    let n = a.dim();
    let gram = HermitianMatrix::hermitian_part(&(&a.adjoint() * a));
    let es = eigh(&gram)?;
    let cutoff = rel_cutoff * es.max().max(0.0);

    let mut right = Vec::with_capacity(n);
    let mut left = Vec::with_capacity(n);
    let mut right_kernel = Vec::new();
    // largest singular values first, so the range is well conditioned
    for k in (0..n).rev() {
        let w = es.vector(k);
        let s2 = es.eigenvalues[k];
        if s2 > cutoff && s2 > 0.0 {
            let u: CVector = a.mat_vec(&w).into_iter().map(|z| z / s2.sqrt()).collect();
            left.push(u);
            right.push(w);
        } else {
            right_kernel.push(w);
        }
    }
    if !right_kernel.is_empty() {
        let complement = orthonormal_complement(n, &left)?;
        for (w, u) in right_kernel.into_iter().zip(complement) {
            right.push(w);
            left.push(u);
        }
    }
    let mut v = ComplexMatrix::zeros(n);
    for (u, w) in left.iter().zip(&right) {
        v = &v + &ComplexMatrix::outer(u, w);
    }
    Ok(v)
}

/// Orthonormal basis of the complement of `span(vectors)` (assumed orthonormal).
pub fn orthonormal_complement(
    dim: usize,
    vectors: &[CVector],
) -> Result<Vec<CVector>, LinalgError> {
    let proj =
        ComplexMatrix::weighted_projector_sum(dim, vectors.iter().map(|v| (1.0, v.as_slice())));
    let complement = HermitianMatrix::hermitian_part(&(&ComplexMatrix::identity(dim) - &proj));
    let es = eigh(&complement)?;
    Ok((0..dim)
        .rev()
        .filter(|&k| es.eigenvalues[k] > 0.5)
        .map(|k| es.vector(k))
        .collect())
}

/// Orthonormal basis of `span(basis) ∩ S`, where `S` is the range of the
/// projector `target`: vectors of the span whose projection onto `S` keeps
/// squared norm at least `1 − tol`.
pub fn subspace_intersection(
    basis: &[CVector],
    target: &HermitianMatrix,
    tol: f64,
) -> Result<Vec<CVector>, LinalgError> {
    if basis.is_empty() {
        return Ok(Vec::new());
    }
    let dim = basis[0].len();
    let compressed = target.compress(basis);
    let es = eigh(&compressed)?;
    Ok((0..basis.len())
        .rev()
        .filter(|&k| es.eigenvalues[k] >= 1.0 - tol)
        .map(|k| {
            let coeffs = es.vector(k);
            let mut v = vec![C64::new(0.0, 0.0); dim];
            for (ck, bk) in coeffs.iter().zip(basis) {
                for (vi, bi) in v.iter_mut().zip(bk) {
                    *vi += ck * bi;
                }
            }
            v
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_spectrum() {
        let es = eigh(&HermitianMatrix::identity(3)).unwrap();
        assert_eq!(es.eigenvalues, vec![1.0, 1.0, 1.0]);
        // degenerate vectors come out in lexicographic order: e1, e2, e3
        for k in 0..3 {
            assert!(approx(es.eigenvectors[(k, k)].re, 1.0, 1e-15));
        }
    }

    #[test]
    fn diagonal_spectrum_and_vectors() {
        let es = eigh(&HermitianMatrix::diag(&[2.0, -1.0])).unwrap();
        assert_eq!(es.eigenvalues, vec![-1.0, 2.0]);
        assert!(approx(es.vector(0)[1].re, 1.0, 1e-15));
        assert!(approx(es.vector(1)[0].re, 1.0, 1e-15));
    }

    #[test]
    fn complex_two_by_two() {
        // [[1, i],[−i, 1]] has eigenvalues 0 and 2
        let h = HermitianMatrix::new(
            ComplexMatrix::from_rows(vec![
                vec![c(1.0, 0.0), c(0.0, 1.0)],
                vec![c(0.0, -1.0), c(1.0, 0.0)],
            ])
            .unwrap(),
        )
        .unwrap();
        let es = eigh(&h).unwrap();
        assert!(approx(es.eigenvalues[0], 0.0, 1e-14));
        assert!(approx(es.eigenvalues[1], 2.0, 1e-14));
        let back = es.reconstruct_with(|l| l);
        assert!(back.max_abs_diff(&h) < 1e-14);
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let s = sqrt_psd(&HermitianMatrix::identity(4), DEFAULT_PSD_TOL).unwrap();
        assert!(s.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
        let s = sqrt_psd(&HermitianMatrix::diag(&[4.0, 9.0]), DEFAULT_PSD_TOL).unwrap();
        assert!(s.max_abs_diff(&ComplexMatrix::diag(&[2.0, 3.0])) < 1e-14);
    }

    #[test]
    fn sqrt_rejects_negative() {
        let err = sqrt_psd(&HermitianMatrix::diag(&[1.0, -0.5]), DEFAULT_PSD_TOL).unwrap_err();
        assert_eq!(
            err,
            LinalgError::NotPositiveSemidefinite { eigenvalue: -0.5 }
        );
    }

    #[test]
    fn sqrt_clamps_rounding_negatives() {
        let s = sqrt_psd(&HermitianMatrix::diag(&[1.0, -1e-14]), DEFAULT_PSD_TOL).unwrap();
        assert_eq!(s[(1, 1)].re, 0.0);
    }

    #[test]
    fn support_of_diag_and_zero() {
        let sd = support_decomposition(&HermitianMatrix::diag(&[1.0, 0.0]), DEFAULT_RANK_CUTOFF)
            .unwrap();
        assert_eq!(sd.rank, 1);
        assert!(
            sd.support_projector
                .max_abs_diff(&ComplexMatrix::diag(&[1.0, 0.0]))
                < 1e-15
        );
        assert!(
            sd.kernel_projector
                .max_abs_diff(&ComplexMatrix::diag(&[0.0, 1.0]))
                < 1e-15
        );

        let sd = support_decomposition(&HermitianMatrix::zeros(3), DEFAULT_RANK_CUTOFF).unwrap();
        assert_eq!(sd.rank, 0);
        assert_eq!(sd.support_projector.norm_max(), 0.0);
        assert!(
            sd.kernel_projector
                .max_abs_diff(&ComplexMatrix::identity(3))
                < 1e-15
        );
    }

    #[test]
    fn pseudo_inverse_of_simple_cases() {
        let p = pseudo_inverse(&HermitianMatrix::identity(2), DEFAULT_RANK_CUTOFF).unwrap();
        assert!(p.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
        let p = pseudo_inverse(&HermitianMatrix::diag(&[2.0, 0.0]), DEFAULT_RANK_CUTOFF).unwrap();
        assert!(p.max_abs_diff(&ComplexMatrix::diag(&[0.5, 0.0])) < 1e-15);
    }

    #[test]
    fn psd_check_cases() {
        assert_eq!(
            psd_check(&HermitianMatrix::identity(2), DEFAULT_PSD_TOL).unwrap(),
            (true, 1.0)
        );
        assert_eq!(
            psd_check(&HermitianMatrix::diag(&[1.0, -0.5]), DEFAULT_PSD_TOL).unwrap(),
            (false, -0.5)
        );
    }

    #[test]
    fn polar_factor_of_rank_deficient_matrix() {
        // A = |0><1| has |A| = |1><1| and V must send e1 to e0
        let a = ComplexMatrix::outer(&[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(1.0, 0.0)]);
        let v = polar_unitary(&a, DEFAULT_RANK_CUTOFF).unwrap();
        assert!((&v.adjoint() * &v).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-14);
        let abs = sqrt_psd(&HermitianMatrix::hermitian_part(&(&a.adjoint() * &a)), 1e-9).unwrap();
        assert!((&v * &abs).max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn intersection_of_planes() {
        // span{e0, e1} ∩ span{e1, e2} = span{e1}
        let e = |i: usize| {
            let mut v = vec![c(0.0, 0.0); 3];
            v[i] = c(1.0, 0.0);
            v
        };
        let target = HermitianMatrix::diag(&[0.0, 1.0, 1.0]);
        let found = subspace_intersection(&[e(0), e(1)], &target, 1e-9).unwrap();
        assert_eq!(found.len(), 1);
        assert!(approx(found[0][1].norm(), 1.0, 1e-14));
    }
}
