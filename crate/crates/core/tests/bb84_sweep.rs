use usd_core::bb84::{bisect_mu0, build_states, find_mu0, sweep, BISECTION_TOL};
use usd_core::fidelity::tighter_q0_bound;
use usd_core::linalg::eigh;
use usd_core::oracle::oracle_optimize;
use usd_core::solvers::{solve_gu_4d, split_off_extraction, HostState};
use usd_core::{
    fit_certificate, solve_first_class, verify_certificate, Branch, Tolerances, UsdError,
};

#[test]
fn sweep_switches_branch_at_the_threshold() {
    let mu0 = find_mu0().unwrap();
    let rows = sweep(0.05, 3.0, 0.05, &Tolerances::default()).unwrap();
    assert_eq!(rows.len(), 60);
    for row in &rows {
        let expected = if row.mu < mu0 {
            Branch::GuProjective
        } else {
            Branch::FirstClassFidelity
        };
        assert_eq!(row.branch_bit, expected, "mu = {}", row.mu);
        assert_eq!(row.min_eig >= 0.0, row.mu >= mu0, "mu = {}", row.mu);
        assert!(row.q_bit >= (-row.mu).exp() - 1e-12, "mu = {}", row.mu);
    }
}

#[test]
fn every_solver_output_on_the_grid_admits_a_certificate() {
    let tol = Tolerances::default();
    for k in 0..60 {
        let mu = 0.05 + 0.05 * k as f64;
        let states = build_states(mu).unwrap();
        for (p, r) in [
            (
                states.basis_problem(),
                solve_first_class(&states.basis_problem()).unwrap(),
            ),
            (
                states.bit_problem(),
                solve_gu_4d(&states.bit_problem()).unwrap().0,
            ),
        ] {
            let c = fit_certificate(&p, &r.povm).unwrap_or_else(|| panic!("no fit at mu = {mu}"));
            assert!(verify_certificate(&p, &r.povm, &c, tol.certificate).is_valid());
        }
    }
}

#[test]
fn branches_meet_at_the_threshold() {
    let mu0 = find_mu0().unwrap();
    for (mu, branch) in [
        (mu0 - 1e-4, Branch::GuProjective),
        (mu0 + 1e-4, Branch::FirstClassFidelity),
    ] {
        let (r, _) = solve_gu_4d(&build_states(mu).unwrap().bit_problem()).unwrap();
        assert_eq!(r.branch, branch, "mu = {mu}");
        assert!(r.certificate.is_some());
        assert!(
            (r.q_opt - (-mu).exp()).abs() <= 1e-6,
            "mu = {mu}: {}",
            r.q_opt
        );
    }
}

#[test]
fn below_threshold_inconclusive_element_has_a_unit_eigenvalue() {
    let p = build_states(0.3).unwrap().bit_problem();
    let (r, _) = solve_gu_4d(&p).unwrap();
    let es = eigh(&r.povm.eq).unwrap();
    assert!((es.max() - 1.0).abs() <= 1e-9);
    let split = split_off_extraction(&p, &r.povm, 1e-7)
        .unwrap()
        .expect("split-off subspace");
    assert_eq!(split.host_state, HostState::Rho0);
    assert!(split.residuals.iter().all(|(_, v)| *v <= 1e-8));
}

#[test]
fn first_class_instance_has_no_split_off() {
    let p = build_states(1.0).unwrap().bit_problem();
    let (r, _) = solve_gu_4d(&p).unwrap();
    assert!(split_off_extraction(&p, &r.povm, 1e-7).unwrap().is_none());
}

#[test]
fn oracle_reaches_the_first_class_optimum() {
    let p = build_states(1.0).unwrap().bit_problem();
    let o = oracle_optimize(&p, 16, 5000, 1).unwrap();
    assert!((o.best_q - (-1.0f64).exp()).abs() <= 1e-5);
}

#[test]
fn tighter_bound_holds_above_threshold() {
    let p = build_states(1.0).unwrap().bit_problem();
    let (r, _) = solve_gu_4d(&p).unwrap();
    let b = tighter_q0_bound(&p).unwrap();
    assert!(b.bound >= b.naive);
    assert!(b.bound <= r.q0 + 1e-12);
}

#[test]
fn bracket_without_sign_change_is_rejected() {
    assert!(matches!(
        bisect_mu0(1.0, 2.0, BISECTION_TOL),
        Err(UsdError::BracketFail { .. })
    ));
}
