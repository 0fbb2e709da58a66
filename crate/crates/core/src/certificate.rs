//! Dual certificates for USD optimality and their verification.

use serde::Serialize;

use crate::error::{Result, UsdError};
use crate::fidelity::{fidelity_operators, lift, FidelityData};
use crate::linalg::{
    eigh, polar_unitary, support_decomposition, CVector, ComplexMatrix, HermitianMatrix, C64,
    DEFAULT_RANK_CUTOFF,
};
use crate::problem::{failure_probability, Povm, UsdProblem, ValidationReport};

/// Default residual tolerance for accepting a certificate.
pub const DEFAULT_CERTIFICATE_TOL: f64 = 1e-7;

/// Eigenvalues of `E_?` at or below this are treated as its kernel when fitting.
const FIT_KERNEL_TOL: f64 = 1e-6;

/// A PSD operator `Z` whose trace is the success probability it certifies.
#[derive(Clone, Debug)]
pub struct OptimalityCertificate {
    pub z: HermitianMatrix,
    pub success_trace: f64,
}

impl OptimalityCertificate {
    pub fn new(z: HermitianMatrix) -> Self {
        let success_trace = z.real_trace();
        Self { z, success_trace }
    }
}

/// The five optimality residuals plus the trace identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CertificateResiduals {
    /// `‖Z E_?‖₂`
    pub z_times_eq: f64,
    /// `‖E₀(Z − η₀ρ₀)E₀‖₂`
    pub e0_balance: f64,
    /// `‖E₁(Z − η₁ρ₁)E₁‖₂`
    pub e1_balance: f64,
    /// `λ_min(P₁⊥(Z − η₀ρ₀)P₁⊥)`
    pub kernel1_min_eig: f64,
    /// `λ_min(P₀⊥(Z − η₁ρ₁)P₀⊥)`
    pub kernel0_min_eig: f64,
    pub z_min_eig: f64,
    /// `|Tr Z − (1 − Q)|`
    pub trace_gap: f64,
}

impl CertificateResiduals {
    pub fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("z_times_eq", self.z_times_eq),
            ("e0_balance", self.e0_balance),
            ("e1_balance", self.e1_balance),
            ("kernel1_min_eig", self.kernel1_min_eig),
            ("kernel0_min_eig", self.kernel0_min_eig),
            ("z_min_eig", self.z_min_eig),
            ("trace_gap", self.trace_gap),
        ]
    }
}

pub fn certificate_residuals(
    p: &UsdProblem,
    m: &Povm,
    c: &OptimalityCertificate,
) -> Result<CertificateResiduals> {
    let d = p.dim();
    if c.z.dim() != d || m.dim() != d {
        return Err(UsdError::Linalg(
            crate::linalg::LinalgError::DimensionMismatch {
                left: d,
                right: c.z.dim().max(m.dim()),
            },
        ));
    }
    let z = &c.z;
    let shifted0 = z.sub(&p.rho0().scale(p.eta0));
    let shifted1 = z.sub(&p.rho1().scale(p.eta1));
    let k1 = support_decomposition(p.rho1(), DEFAULT_RANK_CUTOFF)?.kernel_projector;
    let k0 = support_decomposition(p.rho0(), DEFAULT_RANK_CUTOFF)?.kernel_projector;
    let fp = failure_probability(p, m);
    Ok(CertificateResiduals {
        z_times_eq: (z.as_matrix() * m.eq.as_matrix()).spectral_norm(),
        e0_balance: shifted0.sandwiched_by(&m.e0).spectral_norm(),
        e1_balance: shifted1.sandwiched_by(&m.e1).spectral_norm(),
        kernel1_min_eig: eigh(&shifted0.sandwiched_by(&k1))?.min(),
        kernel0_min_eig: eigh(&shifted1.sandwiched_by(&k0))?.min(),
        z_min_eig: eigh(z)?.min(),
        trace_gap: (c.success_trace - (1.0 - fp.q)).abs(),
    })
}

/// Checks all five conditions and the trace identity at `tol`. Never fails.
pub fn verify_certificate(
    p: &UsdProblem,
    m: &Povm,
    c: &OptimalityCertificate,
    tol: f64,
) -> ValidationReport {
    let mut report = ValidationReport::new();
    match certificate_residuals(p, m, c) {
        Ok(r) => {
            report.at_most("z_times_eq", r.z_times_eq, tol);
            report.at_most("e0_balance", r.e0_balance, tol);
            report.at_most("e1_balance", r.e1_balance, tol);
            report.at_least("kernel1_min_eig", r.kernel1_min_eig, -tol);
            report.at_least("kernel0_min_eig", r.kernel0_min_eig, -tol);
            report.at_least("z_min_eig", r.z_min_eig, -tol);
            report.at_most("trace_gap", r.trace_gap, tol);
        }
        Err(e) => report.flag(format!("residuals ({e})"), false, f64::NAN),
    }
    report
}

/// Closed-form certificate for the first class: `Z = M†M` with
/// `M = −√η₀ V†√ρ₀ + √η₁ √ρ₁` and `V` the unitary polar factor of `√ρ₀√ρ₁`.
pub fn build_fidelity_certificate(p: &UsdProblem) -> Result<OptimalityCertificate> {
    let fd = fidelity_operators(p)?;
    build_fidelity_certificate_from(p, &fd)
}

pub fn build_fidelity_certificate_from(
    p: &UsdProblem,
    fd: &FidelityData,
) -> Result<OptimalityCertificate> {
    let product = fd.sqrt_rho0.as_matrix() * fd.sqrt_rho1.as_matrix();
    let v = polar_unitary(&product, DEFAULT_RANK_CUTOFF)?;
    let left = (&v.adjoint() * fd.sqrt_rho0.as_matrix()).scale(-p.eta0.sqrt());
    let m = &left + &fd.sqrt_rho1.as_matrix().scale(p.eta1.sqrt());
    let z = HermitianMatrix::hermitian_part(&(&m.adjoint() * &m));
    Ok(OptimalityCertificate::new(z))
}

/// Searches for a certificate of `m` by linear least squares.
///
/// `Z` is restricted to the kernel of `E_?` and fitted to
/// `P₁⊥(Z − η₀ρ₀)E₀ = 0` and `P₀⊥(Z − η₁ρ₁)E₁ = 0`, which every valid
/// certificate satisfies. The result is returned only if it verifies.
pub fn fit_certificate(p: &UsdProblem, m: &Povm) -> Option<OptimalityCertificate> {
    fit_certificate_with(p, m, DEFAULT_CERTIFICATE_TOL)
}

pub fn fit_certificate_with(p: &UsdProblem, m: &Povm, tol: f64) -> Option<OptimalityCertificate> {
    let z = fit_z(p, m).ok()?;
    let cert = OptimalityCertificate::new(z);
    verify_certificate(p, m, &cert, tol)
        .is_valid()
        .then_some(cert)
}

fn fit_z(p: &UsdProblem, m: &Povm) -> Result<HermitianMatrix> {
    let d = p.dim();
    let es = eigh(&m.eq)?;
    let basis: Vec<CVector> = (0..d)
        .filter(|&k| es.eigenvalues[k] <= FIT_KERNEL_TOL)
        .map(|k| es.vector(k))
        .collect();
    let q = basis.len();
    if q == 0 {
        return Ok(HermitianMatrix::zeros(d));
    }

    let k1 = support_decomposition(p.rho1(), DEFAULT_RANK_CUTOFF)?.kernel_projector;
    let k0 = support_decomposition(p.rho0(), DEFAULT_RANK_CUTOFF)?.kernel_projector;
    let k1m = k1.as_matrix();
    let k0m = k0.as_matrix();
    let e0 = m.e0.as_matrix();
    let e1 = m.e1.as_matrix();

    let apply = |z: &ComplexMatrix| -> Vec<f64> {
        let a = &(k1m * z) * e0;
        let b = &(k0m * z) * e1;
        a.entries()
            .iter()
            .chain(b.entries())
            .flat_map(|w| [w.re, w.im])
            .collect()
    };

    let columns: Vec<Vec<f64>> = hermitian_basis(q)
        .iter()
        .map(|h| apply(&lift(h, &basis, d)))
        .collect();
    let target = apply_rhs(p, k1m, k0m, e0, e1);

    let n = columns.len();
    let gram = ComplexMatrix::from_fn(n, |i, j| C64::new(dot(&columns[i], &columns[j]), 0.0));
    let rhs: Vec<f64> = columns.iter().map(|col| dot(col, &target)).collect();
    let solution = solve_symmetric(&HermitianMatrix::hermitian_part(&gram), &rhs)?;

    let coeffs = hermitian_basis(q)
        .iter()
        .zip(&solution)
        .fold(ComplexMatrix::zeros(q), |acc, (h, &w)| &acc + &h.scale(w));
    Ok(HermitianMatrix::hermitian_part(&lift(&coeffs, &basis, d)))
}

fn apply_rhs(
    p: &UsdProblem,
    k1: &ComplexMatrix,
    k0: &ComplexMatrix,
    e0: &ComplexMatrix,
    e1: &ComplexMatrix,
) -> Vec<f64> {
    let a = &(k1 * &p.rho0().as_matrix().scale(p.eta0)) * e0;
    let b = &(k0 * &p.rho1().as_matrix().scale(p.eta1)) * e1;
    a.entries()
        .iter()
        .chain(b.entries())
        .flat_map(|w| [w.re, w.im])
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimum-norm solution of `G x = r` for symmetric positive semi-definite `G`.
fn solve_symmetric(g: &HermitianMatrix, r: &[f64]) -> Result<Vec<f64>> {
    let es = eigh(g)?;
    let cutoff = 1e-13 * es.max().max(0.0);
    let n = r.len();
    let mut x = vec![0.0; n];
    for k in 0..n {
        let l = es.eigenvalues[k];
        if l <= cutoff {
            continue;
        }
        let v = es.vector(k);
        let proj: C64 = v.iter().zip(r).map(|(vi, ri)| vi.conj() * ri).sum();
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += (vi * proj).re / l;
        }
    }
    Ok(x)
}

/// Real basis of the Hermitian `q×q` matrices, `q²` elements.
pub(crate) fn hermitian_basis(q: usize) -> Vec<ComplexMatrix> {
    let mut out = Vec::with_capacity(q * q);
    for i in 0..q {
        let mut m = ComplexMatrix::zeros(q);
        m[(i, i)] = C64::new(1.0, 0.0);
        out.push(m);
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..q {
        for j in (i + 1)..q {
            let mut re = ComplexMatrix::zeros(q);
            re[(i, j)] = C64::new(r, 0.0);
            re[(j, i)] = C64::new(r, 0.0);
            out.push(re);
            let mut im = ComplexMatrix::zeros(q);
            im[(i, j)] = C64::new(0.0, r);
            im[(j, i)] = C64::new(0.0, -r);
            out.push(im);
        }
    }
    out
}
