//! Browser bindings: three operations, each returning a JSON string.

use serde::Serialize;
use usd_core::bb84::{build_states, find_mu0, sweep};
use usd_core::fidelity::{failure_lower_bound, prior_regime_bounds};
use usd_core::linalg::{c, eigh};
use usd_core::oracle::OracleSettings;
use usd_core::solvers::solve_gu_4d;
use usd_core::{solve_with, Branch, DensityMatrix, Tolerances, UsdError, UsdProblem};
use wasm_bindgen::prelude::*;

/// Restarts used when the pure-pair curve leaves the analytic regime.
const DEMO_RESTARTS: usize = 4;
const MAX_POINTS: usize = 400;

#[derive(Serialize)]
pub struct Curves {
    pub mu0: f64,
    pub mu: Vec<f64>,
    pub q_basis: Vec<f64>,
    pub q_bit: Vec<f64>,
    pub fidelity_bound: Vec<f64>,
    pub branch: Vec<Branch>,
}

#[derive(Serialize)]
pub struct BitValueSolution {
    pub mu: f64,
    pub branch: Branch,
    pub q_opt: f64,
    pub q0: f64,
    pub q1: f64,
    pub lower_bound: f64,
    pub e0_spectrum: Vec<f64>,
    pub inconclusive_spectrum: Vec<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub phase: Option<f64>,
    pub residuals: Vec<(String, f64)>,
}

#[derive(Serialize)]
pub struct PurePairCurve {
    pub overlap: f64,
    pub regime: (f64, f64),
    pub eta0: Vec<f64>,
    pub q_opt: Vec<f64>,
    pub lower_bound: Vec<f64>,
    pub branch: Vec<Branch>,
}

pub fn curves(mu_start: f64, mu_end: f64, mu_step: f64) -> Result<Curves, UsdError> {
    if (mu_end - mu_start) / mu_step > MAX_POINTS as f64 {
        return Err(UsdError::Domain(format!(
            "at most {MAX_POINTS} points per curve"
        )));
    }
    let rows = sweep(mu_start, mu_end, mu_step, &Tolerances::default())?;
    Ok(Curves {
        mu0: find_mu0()?,
        mu: rows.iter().map(|r| r.mu).collect(),
        q_basis: rows.iter().map(|r| r.q_basis).collect(),
        q_bit: rows.iter().map(|r| r.q_bit).collect(),
        fidelity_bound: rows.iter().map(|r| (-r.mu).exp()).collect(),
        branch: rows.iter().map(|r| r.branch_bit).collect(),
    })
}

pub fn bit_value_solution(mu: f64) -> Result<BitValueSolution, UsdError> {
    let p = build_states(mu)?.bit_problem();
    let (r, gu) = solve_gu_4d(&p)?;
    Ok(BitValueSolution {
        mu,
        branch: r.branch,
        q_opt: r.q_opt,
        q0: r.q0,
        q1: r.q1,
        lower_bound: failure_lower_bound(&p)?,
        e0_spectrum: eigh(&r.povm.e0)?.eigenvalues,
        inconclusive_spectrum: eigh(&r.povm.eq)?.eigenvalues,
        a: gu.as_ref().map(|g| g.a),
        b: gu.as_ref().map(|g| g.b),
        phase: gu.as_ref().map(|g| g.phase),
        residuals: r
            .diagnostics
            .into_iter()
            .filter(|(k, _)| k.starts_with("certificate."))
            .collect(),
    })
}

/// `|ψ₀⟩ = |0⟩`, `|ψ₁⟩ = s|0⟩ + √(1 − s²)|1⟩` across a grid of priors.
pub fn pure_pair_curve(overlap: f64, points: usize) -> Result<PurePairCurve, UsdError> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(UsdError::Domain(format!(
            "overlap {overlap} outside [0, 1)"
        )));
    }
    if !(3..=MAX_POINTS).contains(&points) {
        return Err(UsdError::Domain(format!(
            "points must lie in 3..={MAX_POINTS}"
        )));
    }
    let psi0 = [c(1.0, 0.0), c(0.0, 0.0)];
    let psi1 = [c(overlap, 0.0), c((1.0 - overlap * overlap).sqrt(), 0.0)];
    let pair = |eta0: f64| {
        UsdProblem::new(
            DensityMatrix::pure(&psi0),
            DensityMatrix::pure(&psi1),
            eta0,
            1.0 - eta0,
        )
    };
    let settings = OracleSettings {
        restarts: DEMO_RESTARTS,
        ..OracleSettings::default()
    };
    let tol = Tolerances::default();
    let regime = if overlap > 0.0 {
        let r = prior_regime_bounds(&pair(0.5))?;
        let to_eta0 = |ratio: f64| 1.0 / (1.0 + ratio * ratio);
        (to_eta0(r.high), to_eta0(r.low))
    } else {
        (0.0, 1.0)
    };
    let mut out = PurePairCurve {
        overlap,
        regime,
        eta0: Vec::with_capacity(points),
        q_opt: Vec::with_capacity(points),
        lower_bound: Vec::with_capacity(points),
        branch: Vec::with_capacity(points),
    };
    for k in 0..points {
        let eta0 = 0.01 + 0.98 * k as f64 / (points - 1) as f64;
        let p = pair(eta0);
        let r = solve_with(&p, &tol, &settings)?;
        out.eta0.push(eta0);
        out.q_opt.push(r.q_opt);
        out.lower_bound.push(failure_lower_bound(&p)?);
        out.branch.push(r.branch);
    }
    Ok(out)
}

fn to_js<T: Serialize>(value: Result<T, UsdError>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// Failure probabilities of both BB84 questions against the mean photon number.
#[wasm_bindgen(js_name = bb84Curves)]
pub fn bb84_curves_js(mu_start: f64, mu_end: f64, mu_step: f64) -> Result<String, JsError> {
    to_js(curves(mu_start, mu_end, mu_step))
}

/// Optimal bit-value measurement at one photon number.
#[wasm_bindgen(js_name = bitValueSolution)]
pub fn bit_value_solution_js(mu: f64) -> Result<String, JsError> {
    to_js(bit_value_solution(mu))
}

/// Optimal failure probability of a pure pair against the prior of the first state.
#[wasm_bindgen(js_name = purePairCurve)]
pub fn pure_pair_curve_js(overlap: f64, points: usize) -> Result<String, JsError> {
    to_js(pure_pair_curve(overlap, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_cover_the_grid_and_switch_branch() {
        let c = curves(0.05, 3.0, 0.05).unwrap();
        assert_eq!(c.mu.len(), 60);
        for (mu, branch) in c.mu.iter().zip(&c.branch) {
            assert_eq!(*branch == Branch::GuProjective, *mu < c.mu0);
        }
        assert!(curves(0.01, 3.0, 0.001).is_err());
    }

    #[test]
    fn bit_value_below_threshold_is_projective() {
        let s = bit_value_solution(0.3).unwrap();
        assert_eq!(s.branch, Branch::GuProjective);
        assert!(s.a.is_some() && s.phase.is_some());
        let top = *s.e0_spectrum.last().unwrap();
        assert!((top - 1.0).abs() < 1e-9);
        for (k, v) in &s.residuals {
            if k.ends_with("min_eig") {
                assert!(*v > -1e-7, "{k}");
            } else if !k.ends_with("success_trace") {
                assert!(*v < 1e-7, "{k}");
            }
        }
    }

    #[test]
    fn bit_value_above_threshold_meets_the_bound() {
        let s = bit_value_solution(1.0).unwrap();
        assert_eq!(s.branch, Branch::FirstClassFidelity);
        assert!((s.q_opt - s.lower_bound).abs() < 1e-9);
    }

    #[test]
    fn pure_pair_curve_follows_the_regime() {
        let c = pure_pair_curve(0.6, 21).unwrap();
        assert!((c.regime.0 - 0.36 / 1.36).abs() < 1e-9);
        assert!((c.regime.1 - 1.0 / 1.36).abs() < 1e-9);
        for k in 0..c.eta0.len() {
            let eta0 = c.eta0[k];
            let inside = eta0 > c.regime.0 + 1e-9 && eta0 < c.regime.1 - 1e-9;
            if inside {
                assert_eq!(c.branch[k], Branch::FirstClassFidelity);
                assert!((c.q_opt[k] - c.lower_bound[k]).abs() < 1e-9);
            }
            let outside = if eta0 < c.regime.0 {
                eta0 + (1.0 - eta0) * 0.36
            } else {
                (1.0 - eta0) + eta0 * 0.36
            };
            if !inside {
                assert!((c.q_opt[k] - outside).abs() < 1e-6, "eta0 {eta0}");
            }
        }
        assert!(pure_pair_curve(1.0, 10).is_err());
    }
}
