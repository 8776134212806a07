use dhym_core::cone::PhaseSpec;
use dhym_core::torus::*;
use std::f64::consts::FRAC_PI_2;

fn phase(theta: f64) -> PhaseSpec {
    PhaseSpec::new(theta).unwrap()
}

fn field(n: usize, active: &[usize], m: usize, g: impl Fn(&[f64]) -> f64) -> PeriodicField {
    let sizes = vec![m; active.len()];
    PeriodicField::from_fn(n, active, &sizes, g).unwrap()
}

fn bump(c: &[f64], amp: f64) -> f64 {
    amp * (c[0].cos() + 0.5 * (c[1] + 0.3).sin() + 0.25 * (c[0] - 2.0 * c[1]).cos())
}

fn symmetric_root() -> FlatBackground {
    FlatBackground::diagonal(&[3f64.sqrt(); 3], phase(FRAC_PI_2)).unwrap()
}

#[test]
fn linearization_of_a_cosine_is_a_cosine() {
    for (n, mu) in [(1, vec![0.4]), (2, vec![1.5, 1.2]), (3, vec![2.4, 2.2, 2.0])] {
        let bg = FlatBackground::diagonal(&mu, phase(2.0)).unwrap();
        let f = field(n, &[0, 1], 16, |_| bg.target_mean().unwrap());
        let zero = field(n, &[0, 1], 16, |_| 0.0);
        let u = field(n, &[0, 1], 16, |c| c[0].cos());
        let out = linearized_apply(&zero, &u, 1.0, &f, &bg).unwrap();
        let amp = out.values()[0];
        assert!(amp.abs() > 1e-3);
        let cosine = u.map(|v| v * amp);
        assert!(out.axpy(-1.0, &cosine).sup_norm() < 1e-12 * amp.abs(), "n = {n}");
        // ∂²cos/∂z∂z̄ = −cos/4; the quotient form for n = 3 decreases in Ω
        let sign = if n == 3 { 1.0 } else { -1.0 };
        assert!(sign * amp > 0.0, "n = {n}: {amp}");
    }
}

#[test]
fn exact_state_is_a_fixed_point() {
    let bg = symmetric_root();
    let f = field(3, &[0, 2], 16, |_| 0.0);
    let problem = TwistedProblem::new(bg.clone(), f.clone()).unwrap();
    let zero = field(3, &[0, 2], 16, |_| 0.0);
    let state = ContinuityState::at(&problem, zero, 1.0).unwrap();
    assert!(state.residual_norm < 1e-14);
    let next = newton_at_t(&state, &f, &bg, &SolverConfig::default()).unwrap();
    assert_eq!(next.newton_iters, 0);
    assert!(next.phi.sup_norm() == 0.0);
}

#[test]
fn newton_converges_quadratically_near_the_symmetric_root() {
    let bg = symmetric_root();
    let f = field(3, &[0, 2], 32, |_| 0.0);
    let problem = TwistedProblem::new(bg, f).unwrap();
    let start = field(3, &[0, 2], 32, |c| bump(c, 0.3));
    let config = SolverConfig { linear_tol: 1e-13, linear_tol_tight: 1e-13, newton_tol: 1e-13, ..SolverConfig::default() };
    let state = newton_solve(&problem, start, 1.0, &config).unwrap();
    let h = &state.history;
    assert!(h.len() >= 4, "{h:?}");
    let mut quadratic_steps = 0;
    for w in h.windows(2) {
        if w[0] < 1e-2 && w[0] > 1e-7 {
            // r_{k+1} ≲ C r_k²
            assert!(w[1] <= 50.0 * w[0] * w[0], "{h:?}");
            quadratic_steps += 1;
        }
    }
    assert!(quadratic_steps >= 2, "{h:?}");
    let order: Vec<f64> = h.windows(3).map(|w| (w[2] / w[1]).ln() / (w[1] / w[0]).ln()).collect();
    assert!(order.iter().any(|&p| p > 1.7), "orders {order:?}");
    assert!(state.phi.sup_norm() < 1e-11);
}

#[test]
fn damping_keeps_stiff_steps_in_the_cone() {
    // pair products sit 0.05 above csc²θ; a large twist makes the first
    // full Newton step from φ = 0 leave the cone
    let ph = phase(2.0);
    let base = ph.csc();
    let bg = FlatBackground::diagonal(&[base + 0.35, base + 0.05, base + 0.05], ph).unwrap();
    let phi_star = field(3, &[0, 1], 32, |c| 1.5 * c[0].cos());
    let f = manufactured_twist(&phi_star, &bg).unwrap();
    let problem = TwistedProblem::new(bg, f).unwrap();
    let zero = field(3, &[0, 1], 32, |_| 0.0);
    let state = newton_solve(&problem, zero, 1.0, &SolverConfig::default()).unwrap();
    assert!(state.dampings.iter().any(|&s| s < 1.0), "dampings {:?}", state.dampings);
    assert!(state.cone_margin > 0.0);
    let err = state.phi.axpy(-1.0, &phi_star.minus_mean()).sup_norm();
    assert!(err < 1e-10, "error {err}");
}

#[test]
fn zero_twist_on_a_solving_background_is_trivial() {
    let bg = symmetric_root();
    let f = field(3, &[0, 1], 16, |_| 0.0);
    let report = continuity_run(&f, &bg, &SolverConfig::default()).unwrap();
    assert!(report.final_state.phi.sup_norm() < 1e-12);
    assert!(report.path.iter().all(|p| p.newton_iters == 0));
    assert_eq!(report.path.last().unwrap().t, 1.0);
}

#[test]
fn path_invariants_hold_on_a_manufactured_run() {
    let bg = FlatBackground::diagonal(&[2.4, 2.2, 2.0], phase(2.0)).unwrap();
    let phi_star = field(3, &[1, 4], 32, |c| bump(c, 0.3));
    let f = manufactured_twist(&phi_star, &bg).unwrap();
    let problem = TwistedProblem::new(bg.clone(), f.clone()).unwrap();
    let (res, d1) = residual_field(&phi_star, 1.0, &f, &bg).unwrap();
    assert!(res.sup_norm() <= 1e-10);
    assert_eq!(d1, 0.0);

    let report = continuity_run(&f, &bg, &SolverConfig::default()).unwrap();
    let mean_f = f.mean();
    assert!(report.path.len() >= 2);
    for p in &report.path {
        let want = (1.0 - p.t) * mean_f;
        assert!((p.d_t - want).abs() <= 1e-12 * want.abs().max(1e-300) || (p.d_t - want).abs() < 1e-15);
        assert!(p.residual_mean.abs() <= 1e-10);
        assert!(p.cone_margin > 0.0);
        assert!(p.slack.abs() <= 1e-8, "bordering constant {}", p.slack);
    }
    let guard = cone_guard(&report.final_state.phi, &bg).unwrap();
    assert!(guard.cone_margin() > 0.0);
    assert!(guard.am_gm_holds(&problem.z_field(1.0)));
    assert!(guard.sum_bound(&problem.z_field(1.0)) > 0.0);
}

#[test]
fn manufactured_error_decays_spectrally() {
    let bg = FlatBackground::diagonal(&[1.3, 1.1], phase(2.0)).unwrap();
    let mut errors = Vec::new();
    let analytic = |c: &[f64]| 0.15 * (c[0].cos() + 0.5 * c[1].sin()).exp();
    for m in [16, 32, 64] {
        let phi_star = field(2, &[0, 2], m, analytic);
        // the twist is computed on a fine grid and sampled at coarse nodes,
        // so the coarse problem is not solved exactly by the samples of φ*
        let fine = field(2, &[0, 2], 128, analytic);
        let f_fine = manufactured_twist(&fine, &bg).unwrap();
        let step = 128 / m;
        let f = PeriodicField::from_fn(2, &[0, 2], &[m, m], |c| {
            let i = (c[0] / (2.0 * std::f64::consts::PI) * 128.0).round() as usize % 128;
            let j = (c[1] / (2.0 * std::f64::consts::PI) * 128.0).round() as usize % 128;
            f_fine.values()[i * 128 + j]
        })
        .unwrap();
        assert_eq!(step * m, 128);
        // restore discrete compatibility, which sampling breaks at O(quadrature error)
        let shift = bg.target_mean().unwrap() - f.mean();
        let f = f.map(|v| v + shift);
        let report = continuity_run(&f, &bg, &SolverConfig::default()).unwrap();
        errors.push(report.final_state.phi.axpy(-1.0, &phi_star.minus_mean()).sup_norm());
    }
    assert!(errors[1] < 1e-2 * errors[0], "{errors:?}");
    assert!(errors[2] < 1e-9, "{errors:?}");
    assert!(errors[2] < 1e-2 * errors[1] || errors[2] < 1e-11, "{errors:?}");
}

#[test]
fn phase_interval_on_solved_instances() {
    let theta = 2.0;
    let upper = 2.6;
    // nonnegative twist: Σθᵢ ≤ θ everywhere
    let bg = FlatBackground::diagonal(&[2.4, 2.2, 2.0], phase(theta)).unwrap();
    let phi_star = field(3, &[0, 2], 32, |c| bump(c, 0.1));
    let f = manufactured_twist(&phi_star, &bg).unwrap();
    assert!(f.min() >= 0.0);
    let report = continuity_run(&f, &bg, &SolverConfig::default()).unwrap();
    let check = phase_interval_check(&report.final_state.phi, &f, &bg, upper).unwrap();
    assert!(check.passed() && check.nonneg_below_theta && check.below_upper);
    assert!(check.max_angle_sum <= theta + 1e-9);

    // slightly negative twist above the threshold
    let threshold = phase_lift_threshold(3, theta, upper);
    let bg = FlatBackground::diagonal(&[1.8, 1.75, 1.7], phase(theta)).unwrap();
    assert!(bg.target_mean().unwrap() > 0.0);
    let phi_star = field(3, &[0, 2], 32, |c| bump(c, 0.3));
    let f = manufactured_twist(&phi_star, &bg).unwrap();
    assert!(f.min() < 0.0 && f.min() > -threshold, "min f {} threshold {threshold}", f.min());
    let report = continuity_run(&f, &bg, &SolverConfig::default()).unwrap();
    let check = phase_interval_check(&report.final_state.phi, &f, &bg, upper).unwrap();
    assert!(check.twist_admissible);
    assert!(check.passed(), "{check:?}");
    assert!(check.max_angle_sum > theta);
}

#[test]
fn coarse_grid_compatibility_defect_is_reported() {
    let bg = FlatBackground::diagonal(&[1.3, 1.1], phase(2.0)).unwrap();
    let f = PeriodicField::from_fn(2, &[0, 2], &[8, 8], |c| 0.06 * (c[0].cos() + 0.5 * c[1].sin()).exp()).unwrap();
    let f = f.map(|v| v + bg.target_mean().unwrap() - f.mean());
    let problem = TwistedProblem::new(bg, f).unwrap();
    let zero = PeriodicField::zeros(2, &[0, 2], &[8, 8]).unwrap();
    let strict = SolverConfig { compat_tol: 1e-14, ..SolverConfig::default() };
    let err = newton_solve(&problem, zero, 1.0, &strict).unwrap_err();
    assert!(matches!(err, dhym_core::DhymError::NonConvergence { .. }), "{err}");
}
