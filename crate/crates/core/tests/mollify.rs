use dhym_core::cone::PhaseSpec;
use dhym_core::forms::CMatrix;
use dhym_core::mollify::*;
use dhym_core::DhymError;
use num_complex::Complex64;
use proptest::prelude::*;
use std::sync::LazyLock;

static KERNELS: LazyLock<Vec<MollifierKernel>> = LazyLock::new(|| (1..=3).map(|n| build_kernel(n).unwrap()).collect());

fn kernel(n: usize) -> MollifierKernel {
    KERNELS[n - 1].clone()
}

/// `∫₀¹ C(1 − t²)³ t^{2n−1} dt·|S|` and `−∫ … log t` in closed form from
/// `∫₀¹ t^k dt = 1/(k+1)` and `∫₀¹ t^k log t dt = −1/(k+1)²`.
fn closed_form_moments(n: usize) -> (f64, f64) {
    let binom = [1.0, -3.0, 3.0, -1.0];
    let (mut mass, mut log_moment) = (0.0, 0.0);
    for (j, b) in binom.iter().enumerate() {
        let k = (2 * j + 2 * n - 1) as f64;
        mass += b / (k + 1.0);
        log_moment += b / (k + 1.0).powi(2);
    }
    (mass, log_moment / mass)
}

#[test]
fn kernel_is_normalized() {
    for n in 1..=3 {
        let k = kernel(n);
        let mass = k.radial_integral(&[], |_| 1.0);
        assert!((mass - 1.0).abs() < 1e-10, "n = {n}: {mass}");
        assert_eq!(k.rho(1.5), 0.0);
        assert!(k.rho(1.0).abs() < 1e-15);
    }
}

#[test]
fn a_n_matches_closed_form() {
    for n in 1..=3 {
        let k = kernel(n);
        let (_, a0) = closed_form_moments(n);
        assert!((k.a_n_origin() - a0).abs() < 1e-9, "n = {n}: {} vs {a0}", k.a_n_origin());
        // the maximum over pole offsets is attained with the pole at the point
        assert!(k.a_n() >= k.a_n_origin());
        assert!((k.a_n() - a0).abs() < 1e-6, "n = {n}: {} vs {a0}", k.a_n());
    }
}

#[test]
fn sphere_means_of_poles_agree_with_generic_quadrature() {
    for n in 2..=3 {
        let k = kernel(n);
        let mut center = vec![0.0; 2 * n];
        center[0] = 0.3;
        center[3] = -0.2;
        let pole = LogPole { center, c: 1.5 };
        let x = vec![0.05; 2 * n];
        for r in [0.1, 0.7] {
            let reduced = sphere_mean(&pole, &k, &x, r);
            let generic = k.sphere_rule().mean(&x, r, |p| pole.eval(p));
            assert!((reduced - generic).abs() < 1e-6, "n = {n}, r = {r}: {reduced} vs {generic}");
        }
    }
}

#[test]
fn quadratic_hessian_is_preserved() {
    for n in 1..=2 {
        let k = kernel(n);
        let q = Quadratic { n, c: 1.0 };
        let center = vec![0.0; 2 * n];
        let h = 0.05;
        let points = if n == 1 { 40 } else { 22 };
        let sample = PotentialSample::sample(&q, &center, h, points).unwrap();
        let smooth = mollify_potential(&sample, &k, 8.0 * h).unwrap();
        assert_eq!(smooth.points(), points - 16);
        // second differences along each real axis give 2 for |z|²
        let m = smooth.points();
        let mid = vec![m / 2; 2 * n];
        for d in 0..2 * n {
            let mut plus = mid.clone();
            let mut minus = mid.clone();
            plus[d] += 1;
            minus[d] -= 1;
            let v = smooth.values();
            let second =
                (v[smooth.index_of(&plus)] - 2.0 * v[smooth.index_of(&mid)] + v[smooth.index_of(&minus)]) / (h * h);
            assert!((second - 2.0).abs() < 1e-8, "n = {n}, axis {d}: {second}");
        }
        // and the shift is a constant
        let shift: Vec<f64> =
            (0..smooth.len()).map(|i| smooth.values()[i] - q.eval(&smooth.node(i))).collect();
        let spread = shift.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - shift.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-10);
    }
}

#[test]
fn affine_functions_are_reproduced() {
    let k = kernel(1);
    let a = Affine { a: vec![0.7, -0.4], b: 1.0 };
    let sample = PotentialSample::sample(&a, &[0.2, -0.1], 0.02, 30).unwrap();
    let smooth = mollify_potential(&sample, &k, 0.16).unwrap();
    for i in 0..smooth.len() {
        assert!((smooth.values()[i] - a.eval(&smooth.node(i))).abs() < 1e-12);
    }
    assert!((mollify_at(&a, &k, &[0.3, 0.4], 0.5) - a.eval(&[0.3, 0.4])).abs() < 1e-12);
}

#[test]
fn grid_and_pointwise_mollification_agree() {
    let k = kernel(1);
    let phi = SmoothedLog { n: 1, c: 2.0, eps: 0.3 };
    let sample = PotentialSample::sample(&phi, &[0.0, 0.0], 0.01, 60).unwrap();
    let smooth = mollify_potential(&sample, &k, 0.16).unwrap();
    let idx = smooth.len() / 2 + smooth.points() / 3;
    let x = smooth.node(idx);
    let pointwise = mollify_at(&phi, &k, &x, 0.16);
    assert!((smooth.values()[idx] - pointwise).abs() < 1e-4, "{} vs {pointwise}", smooth.values()[idx]);
}

#[test]
fn rejects_delta_too_large_or_grid_too_coarse() {
    let k = kernel(1);
    let sample = PotentialSample::sample(&Quadratic { n: 1, c: 1.0 }, &[0.0, 0.0], 0.1, 20).unwrap();
    assert!(matches!(mollify_potential(&sample, &k, 0.5), Err(DhymError::Domain(_))));
    assert!(matches!(mollify_potential(&sample, &k, 1.0), Err(DhymError::Domain(_))));
    assert!(matches!(mollify_potential(&sample, &k, 5.0), Err(DhymError::Domain(_))));
}

#[test]
fn lelong_number_of_a_pole() {
    for n in 1..=3 {
        let k = kernel(n);
        let c = 1.7;
        let pole = LogPole::at_origin(n, c);
        let x = vec![0.0; 2 * n];
        for delta in [1e-1, 1e-2] {
            let est = lelong_level(&pole, &k, &x, delta, 1.0, 2.0).unwrap();
            assert!((est.nu - c).abs() < 1e-3, "n = {n}, delta = {delta}: {}", est.nu);
            assert!(est.holds(k.a_n()), "{est:?}");
        }
    }
}

#[test]
fn lelong_level_of_smooth_potential_decays() {
    let k = kernel(2);
    let phi = SmoothedLog { n: 2, c: 1.0, eps: 1e-3 };
    let x = vec![0.0; 4];
    let coarse = lelong_level(&phi, &k, &x, 1e-2, 1.0, 2.0).unwrap();
    let fine = lelong_level(&phi, &k, &x, 1e-6, 1.0, 2.0).unwrap();
    assert!(fine.nu < coarse.nu);
    assert!(coarse.holds(k.a_n()) && fine.holds(k.a_n()));
}

#[test]
fn lelong_inequalities_fail_for_non_psh() {
    let k = kernel(1);
    let est = lelong_level(&Concave { n: 1, c: 1.0 }, &k, &[0.0, 0.0], 0.05, 1.0, 2.0).unwrap();
    assert!(!est.holds(k.a_n()));
}

#[test]
fn lelong_rejects_bad_radii() {
    let k = kernel(1);
    let pole = LogPole::at_origin(1, 1.0);
    assert!(lelong_level(&pole, &k, &[0.0, 0.0], 0.3, 1.0, 2.0).is_err());
    assert!(lelong_level(&pole, &k, &[0.0, 0.0], 0.1, 1.0, 1.0).is_err());
}

#[test]
fn csv_round_trip() {
    let phi = LogPole::at_origin(1, 2.0);
    let sample = PotentialSample::sample(&phi, &[0.1, -0.2], 0.05, 12).unwrap();
    let mut buf = Vec::new();
    sample.write_csv(&mut buf).unwrap();
    let back = PotentialSample::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.n(), 1);
    assert_eq!(back.points(), 12);
    for (a, b) in back.values().iter().zip(sample.values()) {
        assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
    }
    assert!(PotentialSample::read_csv("n,spacing,points,c1,c2\n1,0.1,2,0,0\n1,2,3\n".as_bytes()).is_err());
}

#[test]
fn cone_condition_for_currents() {
    let k = kernel(1);
    let spec = PhaseSpec::new(std::f64::consts::FRAC_PI_2).unwrap();
    let chi = |_: &[f64]| CMatrix::identity(1, 1);
    let h = 0.01;
    let pole = LogPole::at_origin(1, 2.0);
    let sample = PotentialSample::sample(&pole, &[0.0, 0.0], h, 64).unwrap();
    let report = current_cone_check(&sample, &chi, &spec, &k, 8.0 * h, 1, 1e-3).unwrap();
    assert!(report.masked > 0);
    assert!(report.checked > 0);
    assert!(report.passed(), "{report:?}");

    let concave = PotentialSample::sample(&Concave { n: 1, c: 1.0 }, &[0.0, 0.0], h, 40).unwrap();
    let bad = current_cone_check(&concave, &chi, &spec, &k, 8.0 * h, 1, 1e-6).unwrap();
    assert!(!bad.passed());
    assert!((bad.worst_margin + 1.0).abs() < 1e-5);
}

#[test]
fn cone_condition_with_varying_chi() {
    let k = kernel(2);
    let spec = PhaseSpec::new(2.0).unwrap();
    let chi = |p: &[f64]| {
        let s = 1.0 + 0.2 * p[0];
        CMatrix::from_fn(2, 2, |i, j| if i == j { Complex64::new(s, 0.0) } else { Complex64::new(0.0, 0.0) })
    };
    let q = Quadratic { n: 2, c: 2.0 };
    let sample = PotentialSample::sample(&q, &[0.0; 4], 0.02, 22).unwrap();
    let report = current_cone_check(&sample, &chi, &spec, &k, 0.16, 2, 1e-9).unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn regularized_max_sandwich() {
    let f = PotentialSample::sample(&Quadratic { n: 1, c: 1.0 }, &[0.0, 0.0], 0.05, 20).unwrap();
    let g = PotentialSample::sample(&LogPole::at_origin(1, 1.0), &[0.0, 0.0], 0.05, 20).unwrap();
    let eta = 0.1;
    let m = regularized_max(&f, &g, eta).unwrap();
    for ((a, b), v) in f.values().iter().zip(g.values()).zip(m.values()) {
        let top = a.max(*b);
        assert!(*v >= top - 1e-12 && *v <= top + eta + 1e-12);
    }
    let other = PotentialSample::sample(&Quadratic { n: 1, c: 1.0 }, &[0.0, 0.0], 0.05, 21).unwrap();
    assert!(regularized_max(&f, &other, eta).is_err());
}

proptest! {
    #[test]
    fn regularized_max_bounds_and_monotonicity(a in -5.0..5.0f64, b in -5.0..5.0f64, eta in 0.01..2.0f64, da in 0.0..1.0f64) {
        let m = regularized_max_scalar(a, b, eta);
        prop_assert!(m >= a.max(b) - 1e-12);
        prop_assert!(m <= a.max(b) + eta + 1e-12);
        prop_assert!(regularized_max_scalar(a + da, b, eta) >= m - 1e-12);
        prop_assert!(regularized_max_scalar(a, b + da, eta) >= m - 1e-12);
        prop_assert!((regularized_max_scalar(b, a, eta) - m).abs() < 1e-12);
    }

    #[test]
    fn mollification_increases_with_delta(
        cx in -0.3..0.3f64, cy in -0.3..0.3f64, c in 0.1..3.0f64, d1 in 0.01..0.2f64, ratio in 1.1..3.0f64,
    ) {
        let k = &KERNELS[0];
        let pole = LogPole { center: vec![cx, cy], c };
        let glued = MaxGlued { first: Box::new(pole.clone()), second: Box::new(Quadratic { n: 1, c: 1.0 }) };
        let x = [0.05, -0.02];
        for phi in [&pole as &dyn Potential, &glued] {
            let small = mollify_at(phi, k, &x, d1);
            let large = mollify_at(phi, k, &x, d1 * ratio);
            prop_assert!(large >= small - 1e-8, "{} < {}", large, small);
        }
    }

    #[test]
    fn lelong_inequalities_hold_for_psh_models(
        cx in -0.2..0.2f64, cy in -0.2..0.2f64, c in 0.1..3.0f64, delta in 0.005..0.2f64, a in 1.2..4.0f64,
    ) {
        let k = &KERNELS[0];
        let pole = LogPole { center: vec![cx, cy], c };
        let est = lelong_level(&pole, k, &[0.0, 0.0], delta, 1.0, a).unwrap();
        prop_assert!(est.holds(k.a_n()), "{:?}", est);
        let glued = MaxGlued { first: Box::new(pole), second: Box::new(Quadratic { n: 1, c: 2.0 }) };
        let est = lelong_level(&glued, k, &[0.0, 0.0], delta, 1.0, a).unwrap();
        prop_assert!(est.mean_slack(k.a_n()) >= -1e-6, "{:?}", est);
    }
}
