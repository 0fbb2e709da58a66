//! Weak-coherent-pulse BB84 states and the two discrimination questions on them.

use serde::Serialize;

use crate::error::{Result, UsdError};
use crate::fidelity::fidelity_operators;
use crate::linalg::{c, eigh, ComplexMatrix, HermitianMatrix};
use crate::problem::{verify_gu_structure, DensityMatrix, Tolerances, UsdProblem};
use crate::solvers::{solve_first_class_with, solve_gu_4d_with, Branch};

/// Tolerance for the involution checks done while building the states.
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Agreement required between the basis solver and its closed form in a sweep.
pub const BASIS_CLOSED_FORM_TOL: f64 = 1e-8;
pub const BISECTION_TOL: f64 = 1e-9;
pub const MAX_BISECTIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoherentBb84Model {
    /// Mean photon number per pulse.
    pub mu: f64,
    pub c: [f64; 4],
}

/// Amplitudes `c₀..c₃` of the four-dimensional representation.
pub fn coefficients(mu: f64) -> Result<CoherentBb84Model> {
    if mu.is_nan() || mu < 0.0 || mu.is_infinite() {
        return Err(UsdError::Domain(format!(
            "mean photon number {mu} must be non-negative"
        )));
    }
    let pre = (-mu / 2.0).exp() / std::f64::consts::SQRT_2;
    let root = |x: f64| pre * x.max(0.0).sqrt();
    Ok(CoherentBb84Model {
        mu,
        c: [
            root(mu.cosh() + mu.cos()),
            root(mu.sinh() + mu.sin()),
            root(mu.cosh() - mu.cos()),
            root(mu.sinh() - mu.sin()),
        ],
    })
}

#[derive(Clone, Debug)]
pub struct Bb84States {
    pub model: CoherentBb84Model,
    pub rho_r: DensityMatrix,
    pub rho_i: DensityMatrix,
    pub rho_0: DensityMatrix,
    pub rho_1: DensityMatrix,
    /// Maps `ρ_r` to `ρ_i`.
    pub u_basis: HermitianMatrix,
    /// Maps `ρ₀` to `ρ₁`.
    pub u_bit: HermitianMatrix,
}

impl Bb84States {
    /// Which basis was used: `ρ_r` against `ρ_i`.
    pub fn basis_problem(&self) -> UsdProblem {
        UsdProblem::new(self.rho_r.clone(), self.rho_i.clone(), 0.5, 0.5)
            .with_involution(self.u_basis.clone())
    }

    /// Which bit was sent: `ρ₀` against `ρ₁`.
    pub fn bit_problem(&self) -> UsdProblem {
        UsdProblem::new(self.rho_0.clone(), self.rho_1.clone(), 0.5, 0.5)
            .with_involution(self.u_bit.clone())
    }
}

pub fn build_states(mu: f64) -> Result<Bb84States> {
    if mu.is_nan() || mu <= 0.0 {
        return Err(UsdError::Domain(format!(
            "mean photon number {mu} must be positive"
        )));
    }
    let model = coefficients(mu)?;
    let [c0, c1, c2, c3] = model.c;

    let real = |rows: [[f64; 4]; 4]| {
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        HermitianMatrix::from_real_rows(&refs)
    };
    let rho_r = real([
        [c0 * c0, 0.0, c0 * c2, 0.0],
        [0.0, c1 * c1, 0.0, c1 * c3],
        [c0 * c2, 0.0, c2 * c2, 0.0],
        [0.0, c1 * c3, 0.0, c3 * c3],
    ])?;
    let rho_i = real([
        [c0 * c0, 0.0, -c0 * c2, 0.0],
        [0.0, c1 * c1, 0.0, -c1 * c3],
        [-c0 * c2, 0.0, c2 * c2, 0.0],
        [0.0, -c1 * c3, 0.0, c3 * c3],
    ])?;

    let minus = c(0.5, -0.5);
    let plus = c(0.5, 0.5);
    let zero = c(0.0, 0.0);
    let bit = |sign: f64| -> Result<HermitianMatrix> {
        let s = c(sign, 0.0);
        let d = |x: f64| c(x * x, 0.0);
        let rows = vec![
            vec![d(c0), s * minus * (c0 * c1), zero, s * plus * (c0 * c3)],
            vec![s * plus * (c1 * c0), d(c1), s * minus * (c1 * c2), zero],
            vec![zero, s * plus * (c2 * c1), d(c2), s * minus * (c2 * c3)],
            vec![s * minus * (c3 * c0), zero, s * plus * (c3 * c2), d(c3)],
        ];
        Ok(HermitianMatrix::new(ComplexMatrix::from_rows(rows)?)?)
    };
    let rho_0 = bit(1.0)?;
    let rho_1 = bit(-1.0)?;

    let states = Bb84States {
        model,
        rho_r: DensityMatrix::new(rho_r, None)?,
        rho_i: DensityMatrix::new(rho_i, None)?,
        rho_0: DensityMatrix::new(rho_0, None)?,
        rho_1: DensityMatrix::new(rho_1, None)?,
        u_basis: HermitianMatrix::diag(&[1.0, 1.0, -1.0, -1.0]),
        u_bit: HermitianMatrix::diag(&[1.0, -1.0, 1.0, -1.0]),
    };
    verify_gu_structure(
        &states.rho_r,
        &states.rho_i,
        &states.u_basis,
        CONSTRUCTION_TOL,
    )
    .into_result()?;
    verify_gu_structure(
        &states.rho_0,
        &states.rho_1,
        &states.u_bit,
        CONSTRUCTION_TOL,
    )
    .into_result()?;
    Ok(states)
}

/// `e^{−μ}(|cos μ| + |sin μ|)`
pub fn q_basis_closed_form(mu: f64) -> f64 {
    (-mu).exp() * (mu.cos().abs() + mu.sin().abs())
}

/// `½(1 − e^{−μ} ± e^{−2μ}√(1 + e^{2μ} − 2e^{μ}cos 2μ))` as `(plus, minus)`.
pub fn bit_spectrum_closed_form(mu: f64) -> (f64, f64) {
    let root = (1.0 + (2.0 * mu).exp() - 2.0 * mu.exp() * (2.0 * mu).cos())
        .max(0.0)
        .sqrt();
    let spread = (-2.0 * mu).exp() * root;
    let base = 1.0 - (-mu).exp();
    (0.5 * (base + spread), 0.5 * (base - spread))
}

/// Eigenvalues of `ρ₀ − F₀` on the support of `ρ₀`, as `(largest, smallest)`.
///
/// The operator vanishes on the kernel of `ρ₀`, so only two eigenvalues carry
/// information.
pub fn bit_spectrum_numeric(states: &Bb84States) -> Result<(f64, f64)> {
    let p = states.bit_problem();
    let fd = fidelity_operators(&p)?;
    let op = p.rho0().sub(&fd.f0).compress(&fd.support0.support_basis);
    let es = eigh(&op)?;
    Ok((es.max(), es.min()))
}

/// Root of the smaller closed-form eigenvalue by bisection, with the step count.
pub fn bisect_mu0(low: f64, high: f64, tol: f64) -> Result<(f64, usize)> {
    let f = |mu: f64| bit_spectrum_closed_form(mu).1;
    let (mut a, mut b) = (low, high);
    let (fa, fb) = (f(a), f(b));
    if !(fa < 0.0 && fb > 0.0) {
        return Err(UsdError::BracketFail {
            low,
            high,
            f_low: fa,
            f_high: fb,
        });
    }
    let mut steps = 0;
    while b - a > tol && steps < MAX_BISECTIONS {
        let mid = 0.5 * (a + b);
        if f(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        steps += 1;
    }
    Ok((0.5 * (a + b), steps))
}

/// Photon number above which the bit-value problem is in the first class.
pub fn find_mu0() -> Result<f64> {
    bisect_mu0(0.1, 2.0, BISECTION_TOL).map(|(mu, _)| mu)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bb84SweepRow {
    pub mu: f64,
    pub q_basis: f64,
    pub q_bit: f64,
    pub branch_bit: Branch,
    /// Smallest eigenvalue of `ρ₀ − F₀` on the support of `ρ₀`.
    pub min_eig: f64,
}

pub fn sweep_row(mu: f64, tol: &Tolerances) -> Result<Bb84SweepRow> {
    let at = |e: UsdError| UsdError::AtMu {
        mu,
        source: Box::new(e),
    };
    let states = build_states(mu).map_err(at)?;
    let basis = solve_first_class_with(&states.basis_problem(), tol).map_err(at)?;
    let closed = q_basis_closed_form(mu);
    if (basis.q_opt - closed).abs() > BASIS_CLOSED_FORM_TOL {
        return Err(at(UsdError::Numerical(format!(
            "basis failure {:.12e} departs from closed form {closed:.12e}",
            basis.q_opt
        ))));
    }
    let (bit, _) = solve_gu_4d_with(&states.bit_problem(), tol).map_err(at)?;
    let (_, min_eig) = bit_spectrum_numeric(&states).map_err(at)?;
    Ok(Bb84SweepRow {
        mu,
        q_basis: basis.q_opt,
        q_bit: bit.q_opt,
        branch_bit: bit.branch,
        min_eig,
    })
}

/// `start, start + step, …` up to `end` inclusive, each point computed
/// from its index to avoid drift.
pub fn mu_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(start > 0.0 && end > start && step > 0.0) {
        return Err(UsdError::Domain(format!(
            "sweep needs 0 < start < end and step > 0 (got {start}, {end}, {step})"
        )));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + k as f64 * step).collect())
}

pub fn sweep(start: f64, end: f64, step: f64, tol: &Tolerances) -> Result<Vec<Bb84SweepRow>> {
    mu_grid(start, end, step)?
        .into_iter()
        .map(|mu| sweep_row(mu, tol))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rank;

    #[test]
    fn zero_photons_is_vacuum() {
        let m = coefficients(0.0).unwrap();
        assert_eq!(m.c, [1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(coefficients(-0.1), Err(UsdError::Domain(_))));
        assert!(matches!(build_states(0.0), Err(UsdError::Domain(_))));
    }

    #[test]
    fn amplitudes_are_normalized() {
        for mu in [0.01, 0.1, 1.0, 3.0, 5.0] {
            let m = coefficients(mu).unwrap();
            let s: f64 = m.c.iter().map(|x| x * x).sum();
            assert!((s - 1.0).abs() < 1e-12, "mu={mu}: {s}");
        }
    }

    #[test]
    fn states_have_unit_trace_and_rank_two() {
        for mu in [0.1, 1.0, 3.0] {
            let s = build_states(mu).unwrap();
            for rho in [&s.rho_r, &s.rho_i, &s.rho_0, &s.rho_1] {
                assert!((rho.matrix().real_trace() - 1.0).abs() < 1e-12);
                assert_eq!(rank(rho.matrix(), 1e-10).unwrap(), 2);
            }
        }
    }

    #[test]
    fn wrong_sign_pattern_is_rejected() {
        let s = build_states(1.0).unwrap();
        let r = verify_gu_structure(&s.rho_r, &s.rho_i, &s.u_bit, CONSTRUCTION_TOL);
        assert!(!r.is_valid());
    }

    #[test]
    fn closed_forms_at_simple_points() {
        assert_eq!(q_basis_closed_form(0.0), 1.0);
        let half_pi = std::f64::consts::FRAC_PI_2;
        assert!((q_basis_closed_form(half_pi) - (-half_pi).exp()).abs() < 1e-15);
        assert_eq!(bit_spectrum_closed_form(0.0), (0.0, 0.0));
        assert!(bit_spectrum_closed_form(0.5).1 < 0.0);
        assert!(bit_spectrum_closed_form(1.0).1 > 0.0);
    }

    #[test]
    fn grid_has_exact_endpoints() {
        let g = mu_grid(0.05, 3.0, 0.05).unwrap();
        assert_eq!(g.len(), 60);
        assert!((g[59] - 3.0).abs() < 1e-12);
        assert!(mu_grid(1.0, 0.5, 0.1).is_err());
    }
}
