//! USD instances, measurements, and the report-style validators around them.

use std::fmt;

use serde::Serialize;

use crate::error::{Result, UsdError};
use crate::linalg::{
    self, eigh, support_decomposition, vector_norm, ComplexMatrix, HermitianMatrix, C64,
    DEFAULT_PSD_TOL, DEFAULT_RANK_CUTOFF,
};

/// Trace of a density matrix must be within this of one.
pub const TRACE_TOL: f64 = 1e-10;
/// Priors must sum to one within this.
pub const PRIOR_SUM_TOL: f64 = 1e-12;
/// Default tolerance for POVM residuals.
pub const DEFAULT_POVM_TOL: f64 = 1e-9;
/// Default tolerance for `‖ρ₁ − Uρ₀U‖_max` when a problem declares an involution.
pub const DEFAULT_GU_TOL: f64 = 1e-9;

/// Numerical thresholds shared by the solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Relative allowance for negative eigenvalues in PSD tests.
    pub psd: f64,
    /// Relative eigenvalue cutoff for rank, support and kernel.
    pub rank: f64,
    /// Absolute tolerance for POVM validation residuals.
    pub povm: f64,
    /// Absolute tolerance for optimality-certificate residuals.
    pub certificate: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            psd: DEFAULT_PSD_TOL,
            rank: DEFAULT_RANK_CUTOFF,
            povm: DEFAULT_POVM_TOL,
            certificate: 1e-7,
        }
    }
}

/// One named numeric check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

/// Outcome of a validator: every check performed, with its residual.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a residual that must not exceed `limit`.
    pub fn at_most(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        let passed = value <= limit;
        self.checks.push(Check {
            name: name.into(),
            value,
            limit,
            passed,
        });
    }

    /// Records a quantity that must be at least `limit`.
    pub fn at_least(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        let passed = value >= limit;
        self.checks.push(Check {
            name: name.into(),
            value,
            limit,
            passed,
        });
    }

    pub fn flag(&mut self, name: impl Into<String>, passed: bool, value: f64) {
        self.checks.push(Check {
            name: name.into(),
            value,
            limit: f64::NAN,
            passed,
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.checks.extend(other.checks);
    }

    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(UsdError::Invalid(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bad: Vec<_> = self.violations().collect();
        if bad.is_empty() {
            return write!(f, "all {} checks passed", self.checks.len());
        }
        for (i, c) in bad.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            if c.limit.is_nan() {
                write!(f, "{} failed (value {:e})", c.name, c.value)?;
            } else {
                write!(f, "{} = {:e} (limit {:e})", c.name, c.value, c.limit)?;
            }
        }
        Ok(())
    }
}

/// A quantum state: PSD, unit trace.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    matrix: HermitianMatrix,
    declared_rank: Option<usize>,
}

impl DensityMatrix {
    /// Validates positivity, trace and the declared rank.
    pub fn new(matrix: HermitianMatrix, declared_rank: Option<usize>) -> Result<Self> {
        let dm = Self::unvalidated(matrix, declared_rank);
        let mut report = ValidationReport::new();
        dm.check_into("rho", &mut report);
        report.into_result()?;
        Ok(dm)
    }

    /// Wraps a matrix without checking it; see [`validate_problem`].
    pub fn unvalidated(matrix: HermitianMatrix, declared_rank: Option<usize>) -> Self {
        Self {
            matrix,
            declared_rank,
        }
    }

    /// Divides by the trace, then validates.
    pub fn renormalized(matrix: HermitianMatrix, declared_rank: Option<usize>) -> Result<Self> {
        let tr = matrix.real_trace();
        if tr.is_nan() || tr <= 0.0 {
            return Err(UsdError::Domain(format!(
                "cannot renormalize a matrix with trace {tr:e}"
            )));
        }
        Self::new(matrix.scale(1.0 / tr), declared_rank)
    }

    /// `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`
    pub fn pure(psi: &[C64]) -> Self {
        let n = vector_norm(psi);
        let v: Vec<C64> = psi.iter().map(|z| z / n).collect();
        Self::unvalidated(HermitianMatrix::projector(&v), Some(1))
    }

    /// `Σ_k w_k |ψ_k⟩⟨ψ_k|` for normalized `ψ_k` and weights summing to one.
    pub fn mixture(terms: &[(f64, &[C64])]) -> Result<Self> {
        let dim = terms.first().map(|t| t.1.len()).unwrap_or(0);
        let normalized: Vec<(f64, Vec<C64>)> = terms
            .iter()
            .map(|(w, v)| {
                let n = vector_norm(v);
                (*w, v.iter().map(|z| z / n).collect())
            })
            .collect();
        let m = ComplexMatrix::weighted_projector_sum(
            dim,
            normalized.iter().map(|(w, v)| (*w, v.as_slice())),
        );
        Self::new(HermitianMatrix::hermitian_part(&m), None)
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn declared_rank(&self) -> Option<usize> {
        self.declared_rank
    }

    pub fn rank(&self, rel_cutoff: f64) -> Result<usize> {
        Ok(linalg::rank(&self.matrix, rel_cutoff)?)
    }

    fn check_into(&self, name: &str, report: &mut ValidationReport) {
        let es = match eigh(&self.matrix) {
            Ok(es) => es,
            Err(e) => {
                report.flag(format!("{name}.eigensolver ({e})"), false, f64::NAN);
                return;
            }
        };
        let allowance = -DEFAULT_PSD_TOL * es.spectral_radius().max(1.0);
        report.at_least(format!("{name}.min_eigenvalue"), es.min(), allowance);
        report.at_most(
            format!("{name}.trace_error"),
            (self.matrix.real_trace() - 1.0).abs(),
            TRACE_TOL,
        );
        if let Some(declared) = self.declared_rank {
            let actual = linalg::support_from_eigen(&es, DEFAULT_RANK_CUTOFF).rank;
            report.flag(
                format!("{name}.declared_rank ({declared} vs computed {actual})"),
                declared == actual,
                actual as f64,
            );
        }
    }
}

/// Two states with priors, optionally related by an involution `ρ₁ = Uρ₀U`.
#[derive(Clone, Debug)]
pub struct UsdProblem {
    pub rho0: DensityMatrix,
    pub rho1: DensityMatrix,
    pub eta0: f64,
    pub eta1: f64,
    pub gu_involution: Option<HermitianMatrix>,
}

impl UsdProblem {
    pub fn new(rho0: DensityMatrix, rho1: DensityMatrix, eta0: f64, eta1: f64) -> Self {
        Self {
            rho0,
            rho1,
            eta0,
            eta1,
            gu_involution: None,
        }
    }

    pub fn with_involution(mut self, u: HermitianMatrix) -> Self {
        self.gu_involution = Some(u);
        self
    }

    /// Runs [`validate_problem`] and fails with the full report if anything is off.
    pub fn validated(self) -> Result<Self> {
        validate_problem(&self).into_result()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.rho0.dim()
    }

    pub fn rho0(&self) -> &HermitianMatrix {
        self.rho0.matrix()
    }

    pub fn rho1(&self) -> &HermitianMatrix {
        self.rho1.matrix()
    }

    pub fn has_equal_priors(&self) -> bool {
        (self.eta0 - 0.5).abs() <= PRIOR_SUM_TOL && (self.eta1 - 0.5).abs() <= PRIOR_SUM_TOL
    }
}

/// Measurement `{E₀, E₁, E_?}`; `eq` is the inconclusive element.
#[derive(Clone, Debug)]
pub struct Povm {
    pub e0: HermitianMatrix,
    pub e1: HermitianMatrix,
    pub eq: HermitianMatrix,
}

impl Povm {
    pub fn new(e0: HermitianMatrix, e1: HermitianMatrix, eq: HermitianMatrix) -> Self {
        Self { e0, e1, eq }
    }

    /// Completes `E₀, E₁` with `E_? = I − E₀ − E₁`.
    pub fn from_conclusive(e0: HermitianMatrix, e1: HermitianMatrix) -> Self {
        let eq = HermitianMatrix::identity(e0.dim()).sub(&e0).sub(&e1);
        Self { e0, e1, eq }
    }

    /// The measurement that never answers.
    pub fn always_fail(dim: usize) -> Self {
        Self {
            e0: HermitianMatrix::zeros(dim),
            e1: HermitianMatrix::zeros(dim),
            eq: HermitianMatrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.e0.dim()
    }
}

/// Total and partial failure probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FailureProbability {
    pub q: f64,
    pub q0: f64,
    pub q1: f64,
}

/// Structural facts that decide which reductions apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StandardFormReport {
    pub supports_overlap: bool,
    pub dim_equals_r0_plus_r1: bool,
    /// `dim(K_ρ0 ∩ S_ρ1)`
    pub kernel0_meets_support1_dim: usize,
    /// `dim(K_ρ1 ∩ S_ρ0)`
    pub kernel1_meets_support0_dim: usize,
    pub rank0: usize,
    pub rank1: usize,
}

impl StandardFormReport {
    pub fn is_standard(&self) -> bool {
        !self.supports_overlap
            && self.dim_equals_r0_plus_r1
            && self.kernel0_meets_support1_dim == 0
            && self.kernel1_meets_support0_dim == 0
    }
}

/// Lists every violated problem invariant. Never fails.
pub fn validate_problem(p: &UsdProblem) -> ValidationReport {
    let mut report = ValidationReport::new();
    report.at_most(
        "priors.sum_error",
        (p.eta0 + p.eta1 - 1.0).abs(),
        PRIOR_SUM_TOL,
    );
    report.flag("eta0 in (0,1)", p.eta0 > 0.0 && p.eta0 < 1.0, p.eta0);
    report.flag("eta1 in (0,1)", p.eta1 > 0.0 && p.eta1 < 1.0, p.eta1);
    let dims_match = p.rho0.dim() == p.rho1.dim();
    report.flag("dims_match", dims_match, p.rho1.dim() as f64);
    if !dims_match {
        return report;
    }
    p.rho0.check_into("rho0", &mut report);
    p.rho1.check_into("rho1", &mut report);
    if let Some(u) = &p.gu_involution {
        if u.dim() != p.dim() {
            report.flag("u.dims_match", false, u.dim() as f64);
        } else {
            report.extend(verify_gu_structure(&p.rho0, &p.rho1, u, DEFAULT_GU_TOL));
        }
    }
    report
}

/// Positivity, completeness and the two error-free conditions.
pub fn validate_povm(p: &UsdProblem, m: &Povm, tol: f64) -> ValidationReport {
    let mut report = ValidationReport::new();
    let d = p.dim();
    let dims_ok = [m.e0.dim(), m.e1.dim(), m.eq.dim()].iter().all(|&k| k == d);
    report.flag("povm.dims_match", dims_ok, m.e0.dim() as f64);
    if !dims_ok {
        return report;
    }
    for (name, e) in [("e0", &m.e0), ("e1", &m.e1), ("eq", &m.eq)] {
        match linalg::psd_check(e, tol) {
            Ok((_, min)) => report.at_least(format!("{name}.min_eigenvalue"), min, -tol),
            Err(err) => report.flag(format!("{name}.eigensolver ({err})"), false, f64::NAN),
        }
    }
    let sum = &(&m.e0.as_matrix().clone() + m.e1.as_matrix()) + m.eq.as_matrix();
    report.at_most(
        "completeness",
        sum.max_abs_diff(&ComplexMatrix::identity(d)),
        tol,
    );
    report.at_most(
        "error_free.tr(e0 rho1)",
        m.e0.trace_product(p.rho1()).re.abs(),
        tol,
    );
    report.at_most(
        "error_free.tr(e1 rho0)",
        m.e1.trace_product(p.rho0()).re.abs(),
        tol,
    );
    report
}

/// `Q = η₀Tr(E_?ρ₀) + η₁Tr(E_?ρ₁)` and its two parts.
pub fn failure_probability(p: &UsdProblem, m: &Povm) -> FailureProbability {
    let q0 = p.eta0 * m.eq.trace_product(p.rho0()).re;
    let q1 = p.eta1 * m.eq.trace_product(p.rho1()).re;
    FailureProbability { q: q0 + q1, q0, q1 }
}

/// Overlap and intersection structure of the two supports.
///
/// Intersection dimensions use `dim(A ∩ B) = dim A + dim B − dim(A + B)`,
/// with `dim(A + B)` read off the rank of the sum of the two projectors.
pub fn standard_form_report(p: &UsdProblem, rel_cutoff: f64) -> Result<StandardFormReport> {
    let d = p.dim();
    let s0 = support_decomposition(p.rho0(), rel_cutoff)?;
    let s1 = support_decomposition(p.rho1(), rel_cutoff)?;
    let sum = p.rho0().add(p.rho1());
    let rank_sum = linalg::rank(&sum, rel_cutoff)?;
    let meet = |a: &HermitianMatrix, dim_a: usize, b: &HermitianMatrix, dim_b: usize| {
        let span = linalg::rank(&a.add(b), rel_cutoff)?;
        Ok::<usize, UsdError>((dim_a + dim_b).saturating_sub(span))
    };
    Ok(StandardFormReport {
        supports_overlap: s0.rank + s1.rank > rank_sum,
        dim_equals_r0_plus_r1: d == s0.rank + s1.rank,
        kernel0_meets_support1_dim: meet(
            &s0.kernel_projector,
            d - s0.rank,
            &s1.support_projector,
            s1.rank,
        )?,
        kernel1_meets_support0_dim: meet(
            &s1.kernel_projector,
            d - s1.rank,
            &s0.support_projector,
            s0.rank,
        )?,
        rank0: s0.rank,
        rank1: s1.rank,
    })
}

/// Checks that `U` is a Hermitian unitary involution with `ρ₁ = Uρ₀U`.
pub fn verify_gu_structure(
    rho0: &DensityMatrix,
    rho1: &DensityMatrix,
    u: &HermitianMatrix,
    tol: f64,
) -> ValidationReport {
    let mut report = ValidationReport::new();
    let d = rho0.dim();
    if u.dim() != d || rho1.dim() != d {
        report.flag("u.dims_match", false, u.dim() as f64);
        return report;
    }
    let id = ComplexMatrix::identity(d);
    let um = u.as_matrix();
    report.at_most("u.unitarity", (&um.adjoint() * um).max_abs_diff(&id), tol);
    report.at_most("u.involution", (um * um).max_abs_diff(&id), tol);
    report.at_most("u.hermiticity", um.max_abs_diff(&um.adjoint()), tol);
    let image = rho0.matrix().sandwiched_by(u);
    report.at_most(
        "u.maps_rho0_to_rho1",
        image.max_abs_diff(rho1.matrix()),
        tol,
    );
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn ket(v: &[f64]) -> Vec<C64> {
        v.iter().map(|&x| c(x, 0.0)).collect()
    }

    fn orthogonal_pair() -> UsdProblem {
        UsdProblem::new(
            DensityMatrix::pure(&ket(&[1.0, 0.0])),
            DensityMatrix::pure(&ket(&[0.0, 1.0])),
            0.5,
            0.5,
        )
    }

    #[test]
    fn orthogonal_pure_states_are_valid() {
        assert!(validate_problem(&orthogonal_pair()).is_valid());
    }

    #[test]
    fn priors_must_sum_to_one() {
        let mut p = orthogonal_pair();
        p.eta0 = 0.7;
        p.eta1 = 0.7;
        let r = validate_problem(&p);
        assert!(!r.is_valid());
        let bad: Vec<_> = r.violations().collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].name, "priors.sum_error");
        assert!((bad[0].value - 0.4).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_state_is_reported() {
        let m = HermitianMatrix::diag(&[0.6, 0.6]);
        let r = validate_problem(&UsdProblem::new(
            DensityMatrix::unvalidated(m, None),
            DensityMatrix::pure(&ket(&[0.0, 1.0])),
            0.5,
            0.5,
        ));
        assert!(r.violations().any(|c| c.name == "rho0.trace_error"));
        assert!(DensityMatrix::renormalized(HermitianMatrix::diag(&[0.6, 0.6]), None).is_ok());
    }

    #[test]
    fn declared_rank_mismatch_is_reported() {
        let dm = DensityMatrix::unvalidated(HermitianMatrix::diag(&[0.5, 0.5]), Some(1));
        let p = UsdProblem::new(dm, DensityMatrix::pure(&ket(&[0.0, 1.0])), 0.5, 0.5);
        assert!(!validate_problem(&p).is_valid());
    }

    #[test]
    fn projective_povm_on_orthogonal_states() {
        let p = orthogonal_pair();
        let m = Povm::new(
            HermitianMatrix::diag(&[1.0, 0.0]),
            HermitianMatrix::diag(&[0.0, 1.0]),
            HermitianMatrix::zeros(2),
        );
        let r = validate_povm(&p, &m, DEFAULT_POVM_TOL);
        assert!(r.is_valid(), "{r}");
        assert!(r
            .checks
            .iter()
            .filter(|c| !c.limit.is_nan())
            .all(|c| c.value.abs() == 0.0));
        let fp = failure_probability(&p, &m);
        assert_eq!(fp.q, 0.0);
    }

    #[test]
    fn always_fail_is_a_valid_usd_povm() {
        let p = orthogonal_pair();
        let m = Povm::always_fail(2);
        assert!(validate_povm(&p, &m, DEFAULT_POVM_TOL).is_valid());
        assert_eq!(failure_probability(&p, &m).q, 1.0);
    }

    #[test]
    fn error_free_violation_detected() {
        let p = orthogonal_pair();
        let m = Povm::from_conclusive(HermitianMatrix::identity(2), HermitianMatrix::zeros(2));
        let r = validate_povm(&p, &m, DEFAULT_POVM_TOL);
        assert!(r.violations().any(|c| c.name == "error_free.tr(e0 rho1)"));
    }

    #[test]
    fn overlap_of_identical_states() {
        let half = DensityMatrix::new(HermitianMatrix::diag(&[0.5, 0.5]), None).unwrap();
        let p = UsdProblem::new(half.clone(), half, 0.5, 0.5);
        assert!(
            standard_form_report(&p, DEFAULT_RANK_CUTOFF)
                .unwrap()
                .supports_overlap
        );

        let psi = ket(&[0.6, 0.8]);
        let p = UsdProblem::new(
            DensityMatrix::pure(&psi),
            DensityMatrix::pure(&psi),
            0.5,
            0.5,
        );
        assert!(
            standard_form_report(&p, DEFAULT_RANK_CUTOFF)
                .unwrap()
                .supports_overlap
        );
    }

    #[test]
    fn kernel_support_intersection_dimension() {
        // ρ₀ = |0⟩⟨0|, ρ₁ = |1⟩⟨1| in 3D: K₀ ∩ S₁ = span{|1⟩}
        let p = UsdProblem::new(
            DensityMatrix::pure(&ket(&[1.0, 0.0, 0.0])),
            DensityMatrix::pure(&ket(&[0.0, 1.0, 0.0])),
            0.5,
            0.5,
        );
        let r = standard_form_report(&p, DEFAULT_RANK_CUTOFF).unwrap();
        assert!(!r.supports_overlap);
        assert!(!r.dim_equals_r0_plus_r1);
        assert_eq!(r.kernel0_meets_support1_dim, 1);
        assert_eq!(r.kernel1_meets_support0_dim, 1);
    }

    #[test]
    fn identity_involution_on_equal_states() {
        let psi = ket(&[0.6, 0.8]);
        let rho = DensityMatrix::pure(&psi);
        let r = verify_gu_structure(&rho, &rho, &HermitianMatrix::identity(2), 1e-12);
        assert!(r.is_valid());
    }
}
