//! Fidelity operators, the overall failure bound, and the rank-condition tests.

use serde::Serialize;

use crate::error::{Result, UsdError};
use crate::linalg::{
    self, eigh, pseudo_inverse, sqrt_psd_on_support, CVector, ComplexMatrix, HermitianMatrix,
    LinalgError, SupportDecomposition, DEFAULT_PSD_TOL, DEFAULT_RANK_CUTOFF,
};
use crate::problem::UsdProblem;

/// Allowed disagreement between the two independently computed traces.
pub const TRACE_AGREEMENT_TOL: f64 = 1e-9;
/// Slack applied to both sides of the prior-ratio window.
pub const REGIME_SLACK: f64 = 1e-9;
/// Fidelities at or below this count as zero.
pub const FIDELITY_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct FidelityData {
    /// `√(√ρ₀ ρ₁ √ρ₀)`
    pub f0: HermitianMatrix,
    /// `√(√ρ₁ ρ₀ √ρ₁)`
    pub f1: HermitianMatrix,
    pub fidelity: f64,
    /// `ρ₀ + ρ₁`
    pub sigma: HermitianMatrix,
    pub sigma_pinv: HermitianMatrix,
    pub sqrt_rho0: HermitianMatrix,
    pub sqrt_rho1: HermitianMatrix,
    pub support0: SupportDecomposition,
    pub support1: SupportDecomposition,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RankConditionReport {
    /// Smallest eigenvalue of `ρ₀ − √(η₁/η₀)F₀`.
    pub op0_min_eig: f64,
    /// Smallest eigenvalue of `ρ₁ − √(η₀/η₁)F₁`.
    pub op1_min_eig: f64,
    pub both_psd: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PriorRegime {
    pub low: f64,
    pub high: f64,
    pub ratio: f64,
    pub inside: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TighterBound {
    pub bound: f64,
    /// Smallest non-vanishing eigenvalue of `P₁⊥ ρ₀ P₁⊥`.
    pub lambda_min: f64,
    /// `η₀ Tr(P₁ρ₀)`
    pub naive: f64,
}

/// Computes `F₀`, `F₁` and `F`, cross-checking `Tr F₀` against `Tr F₁`.
pub fn fidelity_operators(p: &UsdProblem) -> Result<FidelityData> {
    fidelity_operators_with(p, DEFAULT_PSD_TOL, DEFAULT_RANK_CUTOFF)
}

pub fn fidelity_operators_with(
    p: &UsdProblem,
    psd_tol: f64,
    rel_cutoff: f64,
) -> Result<FidelityData> {
    let rho0 = p.rho0();
    let rho1 = p.rho1();
    let (sqrt_rho0, support0) = sqrt_psd_on_support(rho0, psd_tol, rel_cutoff)?;
    let (sqrt_rho1, support1) = sqrt_psd_on_support(rho1, psd_tol, rel_cutoff)?;
    let scale = rho0.spectral_norm() * rho1.spectral_norm();

    let max_rank = support0.rank.min(support1.rank);
    let f0 = root_of_sandwich(&support0, rho1, max_rank, psd_tol, scale)?;
    let f1 = root_of_sandwich(&support1, rho0, max_rank, psd_tol, scale)?;
    let t0 = f0.real_trace();
    let t1 = f1.real_trace();
    if (t0 - t1).abs() > TRACE_AGREEMENT_TOL {
        return Err(UsdError::Numerical(format!(
            "Tr F0 = {t0:.15e} and Tr F1 = {t1:.15e} disagree"
        )));
    }

    let sigma = rho0.add(rho1);
    let sigma_pinv = pseudo_inverse(&sigma, rel_cutoff)?;
    Ok(FidelityData {
        f0,
        f1,
        fidelity: t0,
        sigma,
        sigma_pinv,
        sqrt_rho0,
        sqrt_rho1,
        support0,
        support1,
    })
}

/// `√(√ρ σ √ρ)` evaluated inside the support of `ρ`.
///
/// With `√ρ = B S B†` the sandwich is `B (S B†σB S) B†`, so only the
/// `rank(ρ)`-dimensional middle factor is decomposed. Its rank cannot exceed
/// `max_rank`; eigenvalues past that are rounding noise and are not rooted.
fn root_of_sandwich(
    support: &SupportDecomposition,
    sigma: &HermitianMatrix,
    max_rank: usize,
    psd_tol: f64,
    scale: f64,
) -> Result<HermitianMatrix> {
    let dim = sigma.dim();
    let basis = &support.support_basis;
    if basis.is_empty() {
        return Ok(HermitianMatrix::zeros(dim));
    }
    let roots: Vec<f64> = support
        .support_eigenvalues
        .iter()
        .map(|l| l.sqrt())
        .collect();
    let compressed = sigma.compress(basis);
    let middle = HermitianMatrix::hermitian_part(&ComplexMatrix::from_fn(basis.len(), |i, j| {
        compressed[(i, j)] * (roots[i] * roots[j])
    }));
    let es = eigh(&middle)?;
    let allowance = psd_tol * scale.max(es.spectral_radius());
    if es.min() < -allowance {
        return Err(LinalgError::NotPositiveSemidefinite {
            eigenvalue: es.min(),
        }
        .into());
    }
    let k = es.dim();
    let kept: Vec<(f64, CVector)> = (k.saturating_sub(max_rank)..k)
        .map(|i| (es.eigenvalues[i].max(0.0).sqrt(), es.vector(i)))
        .collect();
    let small_root =
        ComplexMatrix::weighted_projector_sum(k, kept.iter().map(|(w, v)| (*w, v.as_slice())));
    Ok(HermitianMatrix::hermitian_part(&lift(
        &small_root,
        basis,
        dim,
    )))
}

/// `B M B†` for an orthonormal list `B` of `dim`-vectors.
pub(crate) fn lift(m: &ComplexMatrix, basis: &[CVector], dim: usize) -> ComplexMatrix {
    let k = basis.len();
    ComplexMatrix::from_fn(dim, |i, j| {
        let mut acc = num_complex::Complex64::new(0.0, 0.0);
        for a in 0..k {
            for b in 0..k {
                acc += basis[a][i] * m[(a, b)] * basis[b][j].conj();
            }
        }
        acc
    })
}

/// `2√(η₀η₁) F`, clamped to `[0, 1]`.
pub fn failure_lower_bound(p: &UsdProblem) -> Result<f64> {
    let fd = fidelity_operators(p)?;
    Ok(bound_from_fidelity(p, fd.fidelity))
}

pub fn bound_from_fidelity(p: &UsdProblem, fidelity: f64) -> f64 {
    (2.0 * (p.eta0 * p.eta1).sqrt() * fidelity).clamp(0.0, 1.0)
}

/// Fails with [`UsdError::OverlappingSupports`] when the two supports share a direction.
pub fn require_disjoint_supports(p: &UsdProblem, rel_cutoff: f64) -> Result<()> {
    let r0 = linalg::rank(p.rho0(), rel_cutoff)?;
    let r1 = linalg::rank(p.rho1(), rel_cutoff)?;
    let rs = linalg::rank(&p.rho0().add(p.rho1()), rel_cutoff)?;
    if r0 + r1 > rs {
        return Err(UsdError::OverlappingSupports {
            rank0: r0,
            rank1: r1,
            rank_sum: rs,
        });
    }
    Ok(())
}

/// The two operators whose positivity decides the first class.
pub fn rank_condition_operators(
    p: &UsdProblem,
    fd: &FidelityData,
) -> (HermitianMatrix, HermitianMatrix) {
    let w0 = (p.eta1 / p.eta0).sqrt();
    let w1 = (p.eta0 / p.eta1).sqrt();
    (
        p.rho0().sub(&fd.f0.scale(w0)),
        p.rho1().sub(&fd.f1.scale(w1)),
    )
}

pub fn rank_condition_check(p: &UsdProblem, tol: f64) -> Result<RankConditionReport> {
    require_disjoint_supports(p, DEFAULT_RANK_CUTOFF)?;
    let fd = fidelity_operators(p)?;
    rank_condition_from(p, &fd, tol)
}

pub fn rank_condition_from(
    p: &UsdProblem,
    fd: &FidelityData,
    tol: f64,
) -> Result<RankConditionReport> {
    let (op0, op1) = rank_condition_operators(p, fd);
    let (ok0, m0) = linalg::psd_check(&op0, tol)?;
    let (ok1, m1) = linalg::psd_check(&op1, tol)?;
    Ok(RankConditionReport {
        op0_min_eig: m0,
        op1_min_eig: m1,
        both_psd: ok0 && ok1,
    })
}

/// The window `Tr(P₁ρ₀)/F ≤ √(η₁/η₀) ≤ F/Tr(P₀ρ₁)`.
pub fn prior_regime_bounds(p: &UsdProblem) -> Result<PriorRegime> {
    let fd = fidelity_operators(p)?;
    prior_regime_from(p, &fd)
}

pub fn prior_regime_from(p: &UsdProblem, fd: &FidelityData) -> Result<PriorRegime> {
    let f = fd.fidelity;
    if f <= FIDELITY_FLOOR {
        return Err(UsdError::DegenerateBound(format!(
            "fidelity {f:e} vanishes, the states are perfectly distinguishable"
        )));
    }
    let leak0 = fd.support1.support_projector.trace_product(p.rho0()).re;
    let leak1 = fd.support0.support_projector.trace_product(p.rho1()).re;
    let low = leak0 / f;
    let high = if leak1 > 0.0 {
        f / leak1
    } else {
        f64::INFINITY
    };
    let ratio = (p.eta1 / p.eta0).sqrt();
    Ok(PriorRegime {
        low,
        high,
        ratio,
        inside: low <= ratio + REGIME_SLACK && ratio <= high + REGIME_SLACK,
    })
}

/// Lower bound on `Q₀` valid for POVMs with `E₁ = U E₀ U`.
pub fn tighter_q0_bound(p: &UsdProblem) -> Result<TighterBound> {
    if p.gu_involution.is_none() {
        return Err(UsdError::PreconditionFail(
            "the tighter bound needs a declared involution".into(),
        ));
    }
    let s1 = linalg::support_decomposition(p.rho1(), DEFAULT_RANK_CUTOFF)?;
    let squeezed = p.rho0().sandwiched_by(&s1.kernel_projector);
    let es = eigh(&squeezed)?;
    let cutoff = DEFAULT_RANK_CUTOFF * es.max().max(0.0);
    let lambda_min = es
        .eigenvalues
        .iter()
        .copied()
        .find(|&l| l > cutoff && l > 0.0)
        .ok_or_else(|| UsdError::DegenerateBound("P1perp rho0 P1perp vanishes".into()))?;
    let naive = p.eta0 * s1.support_projector.trace_product(p.rho0()).re;
    Ok(TighterBound {
        bound: naive / (1.0 - lambda_min / 2.0),
        lambda_min,
        naive,
    })
}
