mod common;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use common::{random_gu_problem, random_problem, random_psd, random_state, random_unitary, rng};
use proptest::prelude::*;
use rand::Rng;
use usd_core::certificate::verify_certificate;
use usd_core::fidelity::{
    failure_lower_bound, fidelity_operators, prior_regime_bounds, rank_condition_check,
    tighter_q0_bound,
};
use usd_core::linalg::{self, eigh, support_decomposition, DEFAULT_PSD_TOL, DEFAULT_RANK_CUTOFF};
use usd_core::oracle::oracle_optimize;
use usd_core::problem::{failure_probability, validate_povm};
use usd_core::solvers::{
    gu_projective_measurement, solve_gu_4d, spectrum_negation_check, x_vector_at_phase,
};
use usd_core::{
    solve, Branch, ComplexMatrix, DensityMatrix, HermitianMatrix, Povm, Tolerances, UsdProblem,
};

fn conjugate(w: &ComplexMatrix, m: &HermitianMatrix) -> HermitianMatrix {
    HermitianMatrix::hermitian_part(&(&(w * m.as_matrix()) * &w.adjoint()))
}

fn state(h: HermitianMatrix) -> DensityMatrix {
    DensityMatrix::unvalidated(h, None)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fidelity_is_symmetric(seed in any::<u64>(), dim in 1usize..=6) {
        let mut r = rng(seed);
        let (k0, k1) = (r.random_range(1..=dim), r.random_range(1..=dim));
        let rho0 = random_state(&mut r, dim, k0);
        let rho1 = random_state(&mut r, dim, k1);
        let f01 = fidelity_operators(&UsdProblem::new(rho0.clone(), rho1.clone(), 0.5, 0.5)).unwrap();
        let f10 = fidelity_operators(&UsdProblem::new(rho1, rho0, 0.5, 0.5)).unwrap();
        prop_assert!((f01.fidelity - f10.fidelity).abs() <= 1e-9);
        prop_assert!(f01.fidelity <= 1.0 + 1e-9);
    }

    #[test]
    fn fidelity_is_unitarily_invariant(seed in any::<u64>(), dim in 1usize..=6) {
        let mut r = rng(seed);
        let (k0, k1) = (r.random_range(1..=dim), r.random_range(1..=dim));
        let rho0 = random_state(&mut r, dim, k0);
        let rho1 = random_state(&mut r, dim, k1);
        let w = random_unitary(&mut r, dim);
        let before = fidelity_operators(&UsdProblem::new(rho0.clone(), rho1.clone(), 0.5, 0.5)).unwrap();
        let moved = UsdProblem::new(
            state(conjugate(&w, rho0.matrix())),
            state(conjugate(&w, rho1.matrix())),
            0.5,
            0.5,
        );
        let after = fidelity_operators(&moved).unwrap();
        prop_assert!((before.fidelity - after.fidelity).abs() <= 1e-9);
    }

    #[test]
    fn solver_outputs_are_valid_and_above_the_bound(seed in any::<u64>()) {
        let p = random_problem(&mut rng(seed));
        let tol = Tolerances::default();
        let s = solve(&p, &tol).unwrap();
        let bound = failure_lower_bound(&p).unwrap();
        prop_assert!(validate_povm(&p, &s.povm, tol.povm).is_valid());
        prop_assert!(s.q_opt >= bound - 1e-8, "{} < {bound}", s.q_opt);
        if let Some(c) = &s.certificate {
            prop_assert!(verify_certificate(&p, &s.povm, c, 1e-7).is_valid());
            prop_assert!((s.q_opt - (1.0 - c.z.real_trace())).abs() <= 1e-7);
        } else {
            prop_assert_eq!(s.branch, Branch::OracleOnly);
        }
    }

    #[test]
    fn oracle_never_beats_the_bound(seed in any::<u64>()) {
        let p = random_problem(&mut rng(seed));
        let o = oracle_optimize(&p, 4, 5000, seed).unwrap();
        let bound = failure_lower_bound(&p).unwrap();
        prop_assert!(o.best_q >= bound - 1e-6);
        prop_assert!((0.0..=1.0).contains(&o.best_q));
        prop_assert!(validate_povm(&p, &o.best_povm, 1e-9).is_valid());
    }

    #[test]
    fn positive_rank_operators_imply_prior_regime(seed in any::<u64>()) {
        let p = random_problem(&mut rng(seed));
        if rank_condition_check(&p, DEFAULT_PSD_TOL).unwrap().both_psd {
            prop_assert!(prior_regime_bounds(&p).unwrap().inside);
        }
    }

    #[test]
    fn always_failing_measurement_fails_with_certainty(seed in any::<u64>()) {
        let p = random_problem(&mut rng(seed));
        let fp = failure_probability(&p, &Povm::always_fail(p.dim()));
        prop_assert!((fp.q - 1.0).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn branch_follows_the_sign_of_rho0_minus_f0(seed in any::<u64>()) {
        let p = random_gu_problem(&mut rng(seed));
        let fd = fidelity_operators(&p).unwrap();
        let (psd, _) = linalg::psd_check(&p.rho0().sub(&fd.f0), DEFAULT_PSD_TOL).unwrap();
        let (s, sol) = solve_gu_4d(&p).unwrap();
        prop_assert_eq!(s.branch == Branch::FirstClassFidelity, psd);
        prop_assert_eq!(sol.is_some(), !psd);
        let bound = failure_lower_bound(&p).unwrap();
        prop_assert!(s.q_opt >= bound - 1e-8);
    }

    #[test]
    fn output_is_symmetric_under_the_involution(seed in any::<u64>()) {
        let p = random_gu_problem(&mut rng(seed));
        let u = p.gu_involution.clone().unwrap();
        let (s, _) = solve_gu_4d(&p).unwrap();
        let m = &s.povm;
        prop_assert!(m.e1.max_abs_diff(&m.e0.sandwiched_by(&u)) <= 1e-10);
        prop_assert!(m.eq.max_abs_diff(&m.eq.sandwiched_by(&u)) <= 1e-10);
    }

    #[test]
    fn chosen_phase_is_optimal(seed in any::<u64>()) {
        let p = random_gu_problem(&mut rng(seed));
        let fd = fidelity_operators(&p).unwrap();
        let (psd, _) = linalg::psd_check(&p.rho0().sub(&fd.f0), DEFAULT_PSD_TOL).unwrap();
        prop_assume!(!psd);
        let (_, sol) = gu_projective_measurement(&p, &Tolerances::default()).unwrap();
        let at = |phase: f64| p.rho0().expectation(&x_vector_at_phase(&sol, phase));
        let best = at(sol.phase);
        for delta in [FRAC_PI_4, FRAC_PI_2, PI] {
            prop_assert!(at(sol.phase + delta) <= best + 1e-12);
        }
    }

    #[test]
    fn involution_spectra_are_negatives(seed in any::<u64>()) {
        let p = random_gu_problem(&mut rng(seed));
        prop_assert!(spectrum_negation_check(&p, 1e-8));
    }

    #[test]
    fn symmetric_measurements_respect_the_tighter_bound(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_gu_problem(&mut r);
        let u = p.gu_involution.clone().unwrap();
        let kernel = support_decomposition(p.rho1(), DEFAULT_RANK_CUTOFF).unwrap().kernel_projector;
        let rank = r.random_range(1..=2);
        let raw = random_psd(&mut r, 4, rank).sandwiched_by(&kernel);
        let sum = raw.add(&raw.sandwiched_by(&u));
        let e0 = raw.scale(r.random_range(0.05..1.0) / eigh(&sum).unwrap().max());
        let e1 = e0.sandwiched_by(&u);
        let m = Povm::from_conclusive(e0, e1);
        prop_assert!(validate_povm(&p, &m, 1e-9).is_valid());
        let q0 = failure_probability(&p, &m).q0;
        prop_assert!(q0 >= tighter_q0_bound(&p).unwrap().bound - 1e-8);
    }
}
