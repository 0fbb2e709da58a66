//! Analytic optimal-USD solvers and the structural checks around them.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::certificate::{
    build_fidelity_certificate_from, certificate_residuals, fit_certificate_with,
    verify_certificate, OptimalityCertificate,
};
use crate::error::{Result, UsdError};
use crate::fidelity::{
    bound_from_fidelity, fidelity_operators_with, rank_condition_from, rank_condition_operators,
    require_disjoint_supports, FidelityData,
};
use crate::linalg::{
    self, eigh, inner, subspace_intersection, support_decomposition, vector_norm, CVector,
    ComplexMatrix, HermitianMatrix, C64,
};
use crate::oracle::{oracle_optimize, OracleSettings};
use crate::problem::{
    failure_probability, validate_povm, validate_problem, Povm, Tolerances, UsdProblem,
    ValidationReport,
};

/// Cross terms `|⟨0|ρ₀|1⟩|` at or below this leave the phase undefined; zero is used.
pub const PHASE_FLOOR: f64 = 1e-12;
/// Agreement required between `⟨x|ρ₀|x⟩` and its expanded form.
pub const SUCCESS_EXPANSION_TOL: f64 = 1e-10;
/// Eigenvalues of `E_?`, `E₀`, `E₁` at or above `1 − this` count as unit eigenvalues.
pub const UNIT_EIGENVALUE_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    FirstClassFidelity,
    GuProjective,
    OracleOnly,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::FirstClassFidelity => "first-class-fidelity",
            Branch::GuProjective => "gu-projective",
            Branch::OracleOnly => "oracle-only",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct SolutionReport {
    pub q_opt: f64,
    pub q0: f64,
    pub q1: f64,
    pub povm: Povm,
    pub branch: Branch,
    pub diagnostics: Vec<(String, f64)>,
    /// Present whenever the result was certified.
    pub certificate: Option<OptimalityCertificate>,
}

impl SolutionReport {
    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| *v)
    }
}

/// The rank-one measurement of the second class.
#[derive(Clone, Debug)]
pub struct GuSolution {
    /// `P₁⊥UP₁⊥` restricted to the kernel of `ρ₁`, in the `{|0⟩, |1⟩}` basis.
    pub kernel_operator: HermitianMatrix,
    pub a: f64,
    pub b: f64,
    /// In `[0, 2π)`.
    pub phase: f64,
    pub x_vector: CVector,
    /// `|0⟩` (eigenvalue `a`) and `|1⟩` (eigenvalue `−b`) in the full space.
    pub eigenbasis: [CVector; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HostState {
    Rho0,
    Rho1,
}

#[derive(Clone, Debug)]
pub struct SplitOffSubspace {
    pub e_vector: CVector,
    pub e_prime_vector: CVector,
    pub host_state: HostState,
    pub residuals: Vec<(String, f64)>,
}

/// Picks the applicable analytic branch, falling back to the oracle.
pub fn solve(p: &UsdProblem, tol: &Tolerances) -> Result<SolutionReport> {
    solve_with(p, tol, &OracleSettings::default())
}

pub fn solve_with(
    p: &UsdProblem,
    tol: &Tolerances,
    oracle: &OracleSettings,
) -> Result<SolutionReport> {
    if gu_4d_preconditions(p, tol).is_ok() {
        return solve_gu_4d_with(p, tol).map(|(r, _)| r);
    }
    match solve_first_class_with(p, tol) {
        Err(UsdError::RankConditionsFail { .. }) => solve_with_oracle(p, tol, oracle),
        other => other,
    }
}

/// Oracle optimum, certified when a certificate can be fitted to it.
pub fn solve_with_oracle(
    p: &UsdProblem,
    tol: &Tolerances,
    oracle: &OracleSettings,
) -> Result<SolutionReport> {
    validate_problem(p).into_result()?;
    require_disjoint_supports(p, tol.rank)?;
    let fd = fidelity_operators_with(p, tol.psd, tol.rank)?;
    let res = oracle_optimize(p, oracle.restarts, oracle.max_iters, oracle.seed)?;
    let certificate = fit_certificate_with(p, &res.best_povm, tol.certificate);
    let mut diagnostics = vec![
        (
            "lower_bound".to_string(),
            bound_from_fidelity(p, fd.fidelity),
        ),
        ("oracle_iterations".to_string(), res.iterations as f64),
        (
            "oracle_converged".to_string(),
            f64::from(u8::from(res.converged)),
        ),
    ];
    if let Some(c) = &certificate {
        push_residuals(&mut diagnostics, p, &res.best_povm, c)?;
    }
    let fp = failure_probability(p, &res.best_povm);
    Ok(SolutionReport {
        q_opt: fp.q,
        q0: fp.q0,
        q1: fp.q1,
        povm: res.best_povm,
        branch: Branch::OracleOnly,
        diagnostics,
        certificate,
    })
}

pub fn solve_first_class(p: &UsdProblem) -> Result<SolutionReport> {
    solve_first_class_with(p, &Tolerances::default())
}

/// First-class optimum `Q = 2√(η₀η₁)F`, certificate-gated.
pub fn solve_first_class_with(p: &UsdProblem, tol: &Tolerances) -> Result<SolutionReport> {
    validate_problem(p).into_result()?;
    require_disjoint_supports(p, tol.rank)?;
    let fd = fidelity_operators_with(p, tol.psd, tol.rank)?;
    first_class_from(p, &fd, tol)
}

fn first_class_from(p: &UsdProblem, fd: &FidelityData, tol: &Tolerances) -> Result<SolutionReport> {
    let rc = rank_condition_from(p, fd, tol.psd)?;
    if !rc.both_psd {
        return Err(UsdError::RankConditionsFail {
            op0_min_eig: rc.op0_min_eig,
            op1_min_eig: rc.op1_min_eig,
        });
    }
    let povm = first_class_povm(p, fd);
    let report = validate_povm(p, &povm, tol.povm);
    if !report.is_valid() {
        return Err(UsdError::Numerical(format!(
            "first-class POVM invalid: {report}"
        )));
    }
    let cert = build_fidelity_certificate_from(p, fd)?;
    let check = verify_certificate(p, &povm, &cert, tol.certificate);
    if !check.is_valid() {
        return Err(UsdError::CertificateRejected(check));
    }

    let fp = failure_probability(p, &povm);
    let bound = bound_from_fidelity(p, fd.fidelity);
    let mut diagnostics = vec![
        ("lower_bound".to_string(), bound),
        ("bound_gap".to_string(), (fp.q - bound).abs()),
        ("op0_min_eig".to_string(), rc.op0_min_eig),
        ("op1_min_eig".to_string(), rc.op1_min_eig),
    ];
    push_residuals(&mut diagnostics, p, &povm, &cert)?;
    Ok(SolutionReport {
        q_opt: fp.q,
        q0: fp.q0,
        q1: fp.q1,
        povm,
        branch: Branch::FirstClassFidelity,
        diagnostics,
        certificate: Some(cert),
    })
}

/// `E₀ = Σ⁺√ρ₀(ρ₀ − √(η₁/η₀)F₀)√ρ₀Σ⁺`, `E₁` likewise, `E_? = I − E₀ − E₁`.
pub fn first_class_povm(p: &UsdProblem, fd: &FidelityData) -> Povm {
    let (op0, op1) = rank_condition_operators(p, fd);
    let a0 = fd.sigma_pinv.as_matrix() * fd.sqrt_rho0.as_matrix();
    let a1 = fd.sigma_pinv.as_matrix() * fd.sqrt_rho1.as_matrix();
    Povm::from_conclusive(op0.congruence(&a0), op1.congruence(&a1))
}

fn push_residuals(
    out: &mut Vec<(String, f64)>,
    p: &UsdProblem,
    m: &Povm,
    c: &OptimalityCertificate,
) -> Result<()> {
    let r = certificate_residuals(p, m, c)?;
    out.extend(
        r.named()
            .iter()
            .map(|(k, v)| (format!("certificate.{k}"), *v)),
    );
    out.push(("certificate.success_trace".to_string(), c.success_trace));
    Ok(())
}

fn gu_4d_preconditions<'a>(p: &'a UsdProblem, tol: &Tolerances) -> Result<&'a HermitianMatrix> {
    let report = validate_problem(p);
    if !report.is_valid() {
        return Err(UsdError::Invalid(report));
    }
    if p.dim() != 4 {
        return Err(UsdError::PreconditionFail(format!(
            "dimension is {}, the second class needs 4",
            p.dim()
        )));
    }
    let u = p
        .gu_involution
        .as_ref()
        .ok_or_else(|| UsdError::PreconditionFail("no involution declared".into()))?;
    if !p.has_equal_priors() {
        return Err(UsdError::PreconditionFail(format!(
            "priors ({}, {}) are not equal",
            p.eta0, p.eta1
        )));
    }
    let r0 = linalg::rank(p.rho0(), tol.rank)?;
    let r1 = linalg::rank(p.rho1(), tol.rank)?;
    if r0 != 2 || r1 != 2 {
        return Err(UsdError::PreconditionFail(format!(
            "ranks are ({r0}, {r1}), the second class needs (2, 2)"
        )));
    }
    require_disjoint_supports(p, tol.rank)?;
    Ok(u)
}

pub fn solve_gu_4d(p: &UsdProblem) -> Result<(SolutionReport, Option<GuSolution>)> {
    solve_gu_4d_with(p, &Tolerances::default())
}

/// Second-class solver for equal-prior GU pairs of rank 2 in four dimensions.
pub fn solve_gu_4d_with(
    p: &UsdProblem,
    tol: &Tolerances,
) -> Result<(SolutionReport, Option<GuSolution>)> {
    gu_4d_preconditions(p, tol)?;
    let fd = fidelity_operators_with(p, tol.psd, tol.rank)?;
    let (first_class_ok, _) = linalg::psd_check(&p.rho0().sub(&fd.f0), tol.psd)?;
    if first_class_ok {
        return Ok((first_class_from(p, &fd, tol)?, None));
    }
    let (report, sol) = gu_projective_from(p, &fd, tol)?;
    Ok((report, Some(sol)))
}

/// Forces the rank-one projective branch, regardless of `ρ₀ − F₀`.
pub fn gu_projective_measurement(
    p: &UsdProblem,
    tol: &Tolerances,
) -> Result<(SolutionReport, GuSolution)> {
    gu_4d_preconditions(p, tol)?;
    let fd = fidelity_operators_with(p, tol.psd, tol.rank)?;
    gu_projective_from(p, &fd, tol)
}

fn gu_projective_from(
    p: &UsdProblem,
    fd: &FidelityData,
    tol: &Tolerances,
) -> Result<(SolutionReport, GuSolution)> {
    let u = p.gu_involution.as_ref().expect("checked by preconditions");
    let sol = gu_solution(p, u, tol)?;
    let e0 = HermitianMatrix::projector(&sol.x_vector);
    let e1 = e0.sandwiched_by(u);
    let povm = Povm::from_conclusive(e0, e1);

    let success = p.rho0().expectation(&sol.x_vector);
    let expanded = expanded_success(p.rho0(), &sol);
    if (success - expanded).abs() > SUCCESS_EXPANSION_TOL {
        return Err(UsdError::Numerical(format!(
            "success {success:.15e} disagrees with its expansion {expanded:.15e}"
        )));
    }
    let report = validate_povm(p, &povm, tol.povm);
    if !report.is_valid() {
        return Err(UsdError::Numerical(format!(
            "projective POVM invalid: {report}"
        )));
    }
    let cert = fit_certificate_with(p, &povm, tol.certificate).ok_or_else(|| {
        let fallback = OptimalityCertificate::new(HermitianMatrix::zeros(p.dim()));
        UsdError::CertificateRejected(verify_certificate(p, &povm, &fallback, tol.certificate))
    })?;

    let fp = failure_probability(p, &povm);
    let mut diagnostics = vec![
        (
            "lower_bound".to_string(),
            bound_from_fidelity(p, fd.fidelity),
        ),
        ("a".to_string(), sol.a),
        ("b".to_string(), sol.b),
        ("phase".to_string(), sol.phase),
        (
            "success_expansion_gap".to_string(),
            (success - expanded).abs(),
        ),
        (
            "one_minus_success_gap".to_string(),
            (fp.q - (1.0 - success)).abs(),
        ),
    ];
    push_residuals(&mut diagnostics, p, &povm, &cert)?;
    Ok((
        SolutionReport {
            q_opt: fp.q,
            q0: fp.q0,
            q1: fp.q1,
            povm,
            branch: Branch::GuProjective,
            diagnostics,
            certificate: Some(cert),
        },
        sol,
    ))
}

/// `(b⟨0|ρ₀|0⟩ + a⟨1|ρ₀|1⟩ + 2√(ab) Re(⟨0|ρ₀|1⟩e^{−iΦ})) / (a + b)`
pub fn expanded_success(rho0: &HermitianMatrix, sol: &GuSolution) -> f64 {
    let [v0, v1] = &sol.eigenbasis;
    let (a, b) = (sol.a, sol.b);
    let cross = rho0.sandwich(v0, v1) * C64::from_polar(1.0, -sol.phase);
    (b * rho0.expectation(v0) + a * rho0.expectation(v1) + 2.0 * (a * b).sqrt() * cross.re)
        / (a + b)
}

/// `|x(Φ)⟩ = (e^{iΦ}√b|0⟩ + √a|1⟩)/√(a+b)` for an arbitrary phase.
pub fn x_vector_at_phase(sol: &GuSolution, phase: f64) -> CVector {
    let [v0, v1] = &sol.eigenbasis;
    let norm = (sol.a + sol.b).sqrt();
    let w0 = C64::from_polar(sol.b.sqrt() / norm, phase);
    let w1 = C64::new(sol.a.sqrt() / norm, 0.0);
    v0.iter().zip(v1).map(|(x, y)| w0 * x + w1 * y).collect()
}

fn gu_solution(p: &UsdProblem, u: &HermitianMatrix, tol: &Tolerances) -> Result<GuSolution> {
    let kernel = support_decomposition(p.rho1(), tol.rank)?.kernel_basis;
    let k = u.compress(&kernel);
    let es = eigh(&k)?;
    let floor = tol.rank * u.spectral_norm().max(1.0);
    let (low, high) = (es.eigenvalues[0], es.eigenvalues[1]);
    if !(high > floor && low < -floor) {
        return Err(UsdError::SpectrumAnomaly {
            eigenvalues: vec![high, low],
        });
    }
    let embed = |coeffs: &CVector| -> CVector {
        let mut v = vec![C64::new(0.0, 0.0); p.dim()];
        for (c, basis) in coeffs.iter().zip(&kernel) {
            for (vi, bi) in v.iter_mut().zip(basis) {
                *vi += c * bi;
            }
        }
        v
    };
    let v_pos = embed(&es.vector(1));
    let v_neg = embed(&es.vector(0));
    let kernel_operator = HermitianMatrix::diag(&[high, low]);

    let cross = p.rho0().sandwich(&v_pos, &v_neg);
    let phase = if cross.norm() <= PHASE_FLOOR {
        0.0
    } else {
        cross.arg().rem_euclid(TAU)
    };
    let mut sol = GuSolution {
        kernel_operator,
        a: high,
        b: -low,
        phase,
        x_vector: Vec::new(),
        eigenbasis: [v_pos, v_neg],
    };
    sol.x_vector = x_vector_at_phase(&sol, phase);
    Ok(sol)
}

/// Nonzero eigenvalues of `P₁⊥UP₁⊥`, largest first.
pub fn gu_kernel_spectrum(p: &UsdProblem) -> Result<Vec<f64>> {
    let tol = Tolerances::default();
    let u = gu_4d_preconditions(p, &tol)?;
    let kernel = support_decomposition(p.rho1(), tol.rank)?.kernel_basis;
    let es = eigh(&u.compress(&kernel))?;
    let floor = tol.rank * u.spectral_norm().max(1.0);
    Ok(es
        .eigenvalues
        .iter()
        .rev()
        .copied()
        .filter(|l| l.abs() > floor)
        .collect())
}

/// Whether the nonzero spectrum of `P₀UP₀` is minus that of `P₀⊥UP₀⊥`.
pub fn spectrum_negation_check(p: &UsdProblem, tol: f64) -> bool {
    let Some(u) = &p.gu_involution else {
        return false;
    };
    let Ok(s0) = support_decomposition(p.rho0(), linalg::DEFAULT_RANK_CUTOFF) else {
        return false;
    };
    let nonzero = |basis: &[CVector]| -> Option<Vec<f64>> {
        if basis.is_empty() {
            return Some(Vec::new());
        }
        let es = eigh(&u.compress(basis)).ok()?;
        Some(
            es.eigenvalues
                .into_iter()
                .filter(|l| l.abs() > 1e-10)
                .collect(),
        )
    };
    let (Some(on_support), Some(on_kernel)) =
        (nonzero(&s0.support_basis), nonzero(&s0.kernel_basis))
    else {
        return false;
    };
    let mut negated: Vec<f64> = on_kernel.iter().map(|l| -l).collect();
    negated.sort_by(f64::total_cmp);
    on_support.len() == negated.len()
        && on_support
            .iter()
            .zip(&negated)
            .all(|(x, y)| (x - y).abs() <= tol)
}

/// Idempotence, orthogonality of the conclusive elements, and `rank(E_?) = 2`.
pub fn projectivity_check(m: &Povm, tol: f64) -> ValidationReport {
    let mut report = ValidationReport::new();
    for (name, e) in [("e0", &m.e0), ("e1", &m.e1), ("eq", &m.eq)] {
        let sq = e.as_matrix() * e.as_matrix();
        report.at_most(format!("{name}.idempotence"), sq.max_abs_diff(e), tol);
    }
    report.at_most("tr(e0 e1)", m.e0.trace_product(&m.e1).re.abs(), tol);
    match linalg::rank(&m.eq, linalg::DEFAULT_RANK_CUTOFF) {
        Ok(r) => report.flag(format!("eq.rank == 2 (got {r})"), r == 2, r as f64),
        Err(e) => report.flag(format!("eq.rank ({e})"), false, f64::NAN),
    }
    report
}

/// Looks for the two-dimensional split-off subspace in an optimal measurement.
///
/// Returns `None` when the problem is in the first class or when no pair of
/// unit eigenvectors with the required placement exists.
pub fn split_off_extraction(
    p: &UsdProblem,
    m: &Povm,
    tol: f64,
) -> Result<Option<SplitOffSubspace>> {
    let fd = fidelity_operators_with(p, linalg::DEFAULT_PSD_TOL, linalg::DEFAULT_RANK_CUTOFF)?;
    if rank_condition_from(p, &fd, linalg::DEFAULT_PSD_TOL)?.both_psd {
        return Ok(None);
    }
    let unit_eq = unit_eigenspace(&m.eq)?;
    let alternatives = [
        (HostState::Rho0, &fd.support0, &m.e1, &m.e0),
        (HostState::Rho1, &fd.support1, &m.e0, &m.e1),
    ];
    for (host, support, partner, other) in alternatives {
        let es = subspace_intersection(&unit_eq, &support.support_projector, tol)?;
        let eps =
            subspace_intersection(&unit_eigenspace(partner)?, &support.kernel_projector, tol)?;
        for e in &es {
            for ep in &eps {
                let residuals = split_residuals(m, partner, other, e, ep);
                if residuals.iter().all(|(_, r)| *r <= 1e-8) {
                    return Ok(Some(SplitOffSubspace {
                        e_vector: e.clone(),
                        e_prime_vector: ep.clone(),
                        host_state: host,
                        residuals,
                    }));
                }
            }
        }
    }
    Ok(None)
}

fn unit_eigenspace(e: &HermitianMatrix) -> Result<Vec<CVector>> {
    let es = eigh(e)?;
    Ok((0..es.dim())
        .rev()
        .filter(|&k| es.eigenvalues[k] >= 1.0 - UNIT_EIGENVALUE_TOL)
        .map(|k| es.vector(k))
        .collect())
}

fn split_residuals(
    m: &Povm,
    partner: &HermitianMatrix,
    other: &HermitianMatrix,
    e: &[C64],
    ep: &[C64],
) -> Vec<(String, f64)> {
    let fixed = |a: &ComplexMatrix, v: &[C64]| {
        let av = a.mat_vec(v);
        let diff: Vec<C64> = av.iter().zip(v).map(|(x, y)| x - y).collect();
        vector_norm(&diff)
    };
    let kills = |a: &ComplexMatrix, v: &[C64]| vector_norm(&a.mat_vec(v));
    vec![
        ("overlap".to_string(), inner(e, ep).norm()),
        ("eq_fixes_e".to_string(), fixed(&m.eq, e)),
        ("partner_fixes_e_prime".to_string(), fixed(partner, ep)),
        ("other_kills_e".to_string(), kills(other, e)),
        ("other_kills_e_prime".to_string(), kills(other, ep)),
        ("partner_kills_e".to_string(), kills(partner, e)),
        ("eq_kills_e_prime".to_string(), kills(&m.eq, ep)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::problem::DensityMatrix;

    fn ket(v: &[f64]) -> Vec<C64> {
        v.iter().map(|&x| c(x, 0.0)).collect()
    }

    #[test]
    fn orthogonal_pure_states_are_solved_perfectly() {
        let p = UsdProblem::new(
            DensityMatrix::pure(&ket(&[1.0, 0.0])),
            DensityMatrix::pure(&ket(&[0.0, 1.0])),
            0.5,
            0.5,
        );
        let r = solve_first_class(&p).unwrap();
        assert!(r.q_opt.abs() < 1e-12);
        assert_eq!(r.branch, Branch::FirstClassFidelity);
        assert!(r.povm.e0.max_abs_diff(&HermitianMatrix::diag(&[1.0, 0.0])) < 1e-12);
        assert!(r.povm.e1.max_abs_diff(&HermitianMatrix::diag(&[0.0, 1.0])) < 1e-12);
    }

    #[test]
    fn pure_pair_reaches_overlap_bound() {
        let s: f64 = 0.6;
        let p = UsdProblem::new(
            DensityMatrix::pure(&ket(&[1.0, 0.0])),
            DensityMatrix::pure(&ket(&[s, (1.0 - s * s).sqrt()])),
            0.5,
            0.5,
        );
        let r = solve_first_class(&p).unwrap();
        assert!((r.q_opt - s).abs() < 1e-10);
        assert!((r.q0 + r.q1 - r.q_opt).abs() < 1e-15);
    }

    #[test]
    fn skewed_priors_fall_back_to_the_oracle() {
        let s: f64 = 0.5;
        let p = UsdProblem::new(
            DensityMatrix::pure(&ket(&[1.0, 0.0])),
            DensityMatrix::pure(&ket(&[s, (1.0 - s * s).sqrt()])),
            1.0 / 101.0,
            100.0 / 101.0,
        );
        assert!(matches!(
            solve_first_class(&p),
            Err(UsdError::RankConditionsFail { .. })
        ));
        let r = solve(&p, &Tolerances::default()).unwrap();
        assert_eq!(r.branch, Branch::OracleOnly);
        // only |ψ₁⟩ is ever identified: Q = η₀ + η₁ s²
        let expected = p.eta0 + p.eta1 * s * s;
        assert!(
            (r.q_opt - expected).abs() < 1e-7,
            "{} vs {expected}",
            r.q_opt
        );
    }

    #[test]
    fn scaled_projector_is_not_projective() {
        let x = ket(&[1.0, 0.0]);
        let m = Povm::from_conclusive(
            HermitianMatrix::projector(&x).scale(0.5),
            HermitianMatrix::zeros(2),
        );
        let r = projectivity_check(&m, 1e-9);
        assert!(r.violations().any(|c| c.name == "e0.idempotence"));
    }

    #[test]
    fn branch_names_are_kebab_case() {
        assert_eq!(Branch::GuProjective.to_string(), "gu-projective");
        assert_eq!(
            serde_json::to_string(&Branch::FirstClassFidelity).unwrap(),
            "\"first-class-fidelity\""
        );
    }
}
