use super::{run_suite, SuiteReport};
use crate::cone::PhaseSpec;
use crate::{DhymError, Result};
use nalgebra::{Matrix2, Vector2};
use num_traits::Num;
use rand::Rng;
use rayon::prelude::*;

/// A point on `λ₁λ₂λ₃ = csc²θ(λ₁+λ₂+λ₃+2z)` with `λᵢλⱼ > csc²θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintSample {
    pub lambdas: [f64; 3],
    pub z: f64,
    pub theta: f64,
}

impl ConstraintSample {
    pub fn new(lambdas: [f64; 3], z: f64, theta: f64) -> Result<Self> {
        let csc2 = PhaseSpec::new(theta)?.csc2();
        if lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) || !z.is_finite() {
            return Err(DhymError::Domain(format!("eigenvalues {lambdas:?} must be positive and finite")));
        }
        let [l1, l2, l3] = lambdas;
        let lhs = l1 * l2 * l3;
        let rhs = csc2 * (l1 + l2 + l3 + 2.0 * z);
        if (lhs - rhs).abs() > 1e-10 * lhs.abs().max(rhs.abs()) {
            return Err(DhymError::Domain(format!("off the constraint surface: {lhs} vs {rhs}")));
        }
        if l1 * l2 <= csc2 || l1 * l3 <= csc2 || l2 * l3 <= csc2 {
            return Err(DhymError::Domain(format!("pair products of {lambdas:?} not above csc^2 = {csc2}")));
        }
        Ok(Self { lambdas, z, theta })
    }

    /// Solves the constraint for `λ₁`; `None` when the result violates an invariant.
    pub fn solve(theta: f64, l2: f64, l3: f64, z: f64) -> Option<Self> {
        let csc2 = PhaseSpec::new(theta).ok()?.csc2();
        let l1 = csc2 * (l2 + l3 + 2.0 * z) / (l2 * l3 - csc2);
        Self::new([l1, l2, l3], z, theta).ok()
    }

    /// `Σλᵢ + 2z`.
    pub fn trace_shift(&self) -> f64 {
        self.lambdas.iter().sum::<f64>() + 2.0 * self.z
    }

    /// `g = Σ_{i<j} λᵢλⱼ + 2zΣλᵢ + 3z²`.
    pub fn g(&self) -> f64 {
        let [l1, l2, l3] = self.lambdas;
        let z = self.z;
        l1 * l2 + l1 * l3 + l2 * l3 + 2.0 * z * (l1 + l2 + l3) + 3.0 * z * z
    }
}

/// Upper end of the sampled range of `z`.
pub fn z_max(theta: f64) -> f64 {
    10.0 / theta.sin()
}

/// Draws a constraint sample with `λ₂λ₃ = csc²θ(1+η)` and the given `z`.
/// Small `η` pushes `λ₁` to infinity.
fn draw_surface(rng: &mut impl Rng, theta: f64, z: f64, log_eta: (f64, f64)) -> Option<ConstraintSample> {
    let csc = 1.0 / theta.sin();
    let l2 = csc * rng.random_range(-3.0..3.0f64).exp();
    let eta = rng.random_range(log_eta.0..log_eta.1).exp();
    let l3 = csc * csc * (1.0 + eta) / l2;
    ConstraintSample::solve(theta, l2, l3, z)
}

fn draw_z(rng: &mut impl Rng, theta: f64) -> Option<f64> {
    let csc = 1.0 / theta.sin();
    let z = rng.random_range(-csc..=z_max(theta));
    (z > -csc).then_some(z)
}

/// Samples the constraint surface with `z ∈ (−csc θ, 10 csc θ]` and checks
/// `g > 0`. The worst margin of the report is `inf g`.
pub fn sample_constraint_and_verify_g(theta: f64, samples: usize, seed: u64) -> Result<SuiteReport> {
    PhaseSpec::new(theta)?;
    Ok(run_suite(&format!("discpos_theta{theta:.4}"), samples, seed, |_, rng| {
        let z = draw_z(rng, theta)?;
        let sample = draw_surface(rng, theta, z, (1e-6f64.ln(), 1e3f64.ln()))?;
        Some(sample.g())
    }))
}

/// Coefficients of `av₁² + 2bv₁v₂ + cv₂² + dv₁ + ev₂ + constant`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoefficients<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
    pub e: T,
    pub constant: T,
}

/// The coefficient list as printed, x-branch `(a, b, c, d, e)` and y-branch `(d', e')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperCoefficients<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
    pub e: T,
    pub dprime: T,
    pub eprime: T,
}

pub fn paper_coefficients<T: Num + Copy>(lambdas: [T; 3], z: T, t: T, fx: T, fy: T) -> PaperCoefficients<T> {
    let two = T::one() + T::one();
    let four = two + two;
    let [l1, l2, l3] = lambdas;
    let s = l1 + l2 + l3 + two * z;
    PaperCoefficients {
        a: two * (l2 + l3 + two * z) * s,
        b: two * (l3 + z) * s,
        c: two * (l1 + l3 + two * z) * s,
        d: T::zero() - four * t * fx * s,
        e: T::zero() - four * t * fx * s,
        dprime: T::zero() - four * t * fy * s,
        eprime: T::zero() - four * t * fy * s,
    }
}

/// Rebuilds the quadratic from the second-derivative expansion.
///
/// Up to the common factor `1/(4 det A)`, the first-derivative terms sum to
/// `Σ_{μ,α} v_μ v_α (S − λ_μ − λ_α) + S Σ v_μ² − 4t f Σ v_μ` with `S = Σλ + 2z`.
/// The linear constraint `Σ v_μ (S − λ_μ) = 2t f` fixes `v₃`; multiplying by
/// `S − λ₃ = λ₁ + λ₂ + 2z` clears the denominator. The result is a quadratic in
/// `(v₁, v₂)` whose coefficients are read off by exact finite differences.
pub fn eliminated_quadratic<T: Num + Copy>(lambdas: [T; 3], z: T, t: T, f: T) -> QuadraticCoefficients<T> {
    eliminated_quadratic_with_steps(lambdas, z, t, f, T::one(), T::one())
}

/// As [`eliminated_quadratic`], differencing with steps `h₁, h₂`. Any nonzero
/// steps are exact in rational arithmetic; in floating point, steps near the
/// natural size of `v` limit cancellation.
pub fn eliminated_quadratic_with_steps<T: Num + Copy>(lambdas: [T; 3], z: T, t: T, f: T, h1: T, h2: T) -> QuadraticCoefficients<T> {
    let one = T::one();
    let two = one + one;
    let four = two + two;
    let s = lambdas[0] + lambdas[1] + lambdas[2] + two * z;
    let w = [s - lambdas[0], s - lambdas[1], s - lambdas[2]];
    let q = |v1: T, v2: T| -> T {
        let v3 = (two * t * f - w[0] * v1 - w[1] * v2) / w[2];
        let v = [v1, v2, v3];
        let mut acc = T::zero();
        for mu in 0..3 {
            for al in 0..3 {
                acc = acc + v[mu] * v[al] * (s - lambdas[mu] - lambdas[al]);
            }
            acc = acc + s * v[mu] * v[mu] - four * t * f * v[mu];
        }
        w[2] * acc
    };
    let zero = T::zero();
    let q00 = q(zero, zero);
    let (qp0, qm0) = (q(h1, zero), q(zero - h1, zero));
    let (q0p, q0m) = (q(zero, h2), q(zero, zero - h2));
    let q11 = q(h1, h2);
    QuadraticCoefficients {
        a: ((qp0 + qm0) / two - q00) / (h1 * h1),
        b: (q11 - qp0 - q0p + q00) / (two * h1 * h2),
        c: ((q0p + q0m) / two - q00) / (h2 * h2),
        d: (qp0 - qm0) / (two * h1),
        e: (q0p - q0m) / (two * h2),
        constant: q00,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticAudit {
    pub sample: ConstraintSample,
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub dprime: f64,
    pub eprime: f64,
    /// `ac − b²` from the coefficients.
    pub delta: f64,
    /// `4(Σλ + 2z)²·g`.
    pub delta_factored: f64,
    /// `(Σλ + 2z)²·g`, the other normalization in circulation.
    pub delta_unscaled: f64,
    pub g: f64,
    /// Numerator of the closed-form minimum, with `Δ = delta_factored`.
    pub num: f64,
    pub den: f64,
    pub min_closed: f64,
    /// Closed form evaluated with `Δ = delta_unscaled`.
    pub min_closed_unscaled: f64,
    /// Minimum of the x-branch quadratic from the stationarity system.
    pub min_direct: f64,
    /// Same for the y-branch with `(d', e')`.
    pub min_direct_y: f64,
    pub oracle_x: QuadraticCoefficients<f64>,
    pub oracle_y: QuadraticCoefficients<f64>,
}

fn rel_gap(x: f64, y: f64) -> f64 {
    (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE)
}

impl QuadraticAudit {
    pub fn closed_form_matches(&self, tol: f64) -> bool {
        (self.min_closed - self.min_direct).abs() <= tol * (1.0 + self.min_direct.abs())
    }

    pub fn unscaled_form_matches(&self, tol: f64) -> bool {
        (self.min_closed_unscaled - self.min_direct).abs() <= tol * (1.0 + self.min_direct.abs())
    }

    /// Relative gaps between the printed and the eliminated coefficients:
    /// `[a, b, c, d, e, d', e']`. The quadratic ones are measured against
    /// `√(ac)`, the scale of the form.
    pub fn coefficient_gaps(&self) -> [f64; 7] {
        let (x, y) = (&self.oracle_x, &self.oracle_y);
        let form = (self.a * self.c).abs().sqrt();
        let quad = |p: f64, q: f64| (p - q).abs() / p.abs().max(q.abs()).max(form);
        [
            quad(self.a, x.a),
            quad(self.b, x.b),
            quad(self.c, x.c),
            rel_gap(self.d, x.d),
            rel_gap(self.e, x.e),
            rel_gap(self.dprime, y.d),
            rel_gap(self.eprime, y.e),
        ]
    }

    /// Relative gap `|Δ − 4S²g| / Δ`.
    pub fn factorization_gap(&self) -> f64 {
        rel_gap(self.delta, self.delta_factored)
    }
}

/// Minimum of `av² + 2bvw + cw² + dv + ew` via its stationarity system.
pub fn quadratic_minimum(a: f64, b: f64, c: f64, d: f64, e: f64) -> Option<f64> {
    if !((a * c - b * b).abs() > 1e-14 * (a * c).abs().max(b * b)) {
        return None;
    }
    let hess = Matrix2::new(2.0 * a, 2.0 * b, 2.0 * b, 2.0 * c);
    let v = hess.lu().solve(&Vector2::new(-d, -e))?;
    Some(a * v.x * v.x + 2.0 * b * v.x * v.y + c * v.y * v.y + d * v.x + e * v.y)
}

/// The printed closed form `num/(4Δ²)` for a given `Δ`.
pub fn closed_form_minimum(a: f64, b: f64, c: f64, d: f64, e: f64, delta: f64) -> (f64, f64) {
    let num = a * c * c * d * d - a * b * b * e * e + a * a * c * e * e - b * b * c * d * d + 2.0 * b * b * b * d * e
        - 2.0 * a * b * c * d * e
        + 2.0 * delta * (2.0 * b * d * e - c * d * d - a * e * e);
    (num, 4.0 * delta * delta)
}

pub fn quadratic_min_audit(sample: &ConstraintSample, fx: f64, fy: f64, t: f64) -> Result<QuadraticAudit> {
    if !(0.0..=1.0).contains(&t) {
        return Err(DhymError::Precondition(format!("t = {t} not in [0, 1]")));
    }
    let sample = ConstraintSample::new(sample.lambdas, sample.z, sample.theta)?;
    let p = paper_coefficients(sample.lambdas, sample.z, t, fx, fy);
    let delta = p.a * p.c - p.b * p.b;
    let scale = (p.a * p.c).abs();
    if !(delta >= 1e-8 * scale) || scale == 0.0 {
        return Err(DhymError::Domain(format!("near-degenerate discriminant {delta:.3e} at scale {scale:.3e}")));
    }
    let g = sample.g();
    let s = sample.trace_shift();
    let delta_factored = 4.0 * s * s * g;
    let delta_unscaled = s * s * g;
    let (num, den) = closed_form_minimum(p.a, p.b, p.c, p.d, p.e, delta_factored);
    let (num_u, den_u) = closed_form_minimum(p.a, p.b, p.c, p.d, p.e, delta_unscaled);
    let degenerate = || DhymError::Domain("singular stationarity system".into());
    let min_direct = quadratic_minimum(p.a, p.b, p.c, p.d, p.e).ok_or_else(degenerate)?;
    let min_direct_y = quadratic_minimum(p.a, p.b, p.c, p.dprime, p.eprime).ok_or_else(degenerate)?;
    Ok(QuadraticAudit {
        sample,
        t,
        a: p.a,
        b: p.b,
        c: p.c,
        d: p.d,
        e: p.e,
        dprime: p.dprime,
        eprime: p.eprime,
        delta,
        delta_factored,
        delta_unscaled,
        g,
        num,
        den,
        min_closed: num / den,
        min_closed_unscaled: num_u / den_u,
        min_direct,
        min_direct_y,
        oracle_x: float_oracle(&sample, t, fx),
        oracle_y: float_oracle(&sample, t, fy),
    })
}

/// Quadratic coefficients from unit steps; linear ones from steps
/// `|2tf|/(S − λᵢ)`, the size of `vᵢ` forced by the linear constraint.
fn float_oracle(sample: &ConstraintSample, t: f64, f: f64) -> QuadraticCoefficients<f64> {
    let s = sample.trace_shift();
    let step = |l: f64| if t * f != 0.0 { (2.0 * t * f).abs() / (s - l) } else { 1.0 };
    let [l1, l2, _] = sample.lambdas;
    let unit = eliminated_quadratic(sample.lambdas, sample.z, t, f);
    let fine = eliminated_quadratic_with_steps(sample.lambdas, sample.z, t, f, step(l1), step(l2));
    QuadraticCoefficients { d: fine.d, e: fine.e, ..unit }
}

/// Random constraint samples with random `(t, f_x, f_y)`, audited. Degenerate
/// samples are dropped.
pub fn random_audits(theta: f64, samples: usize, seed: u64) -> Vec<QuadraticAudit> {
    (0..samples)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = super::trial_rng(seed, i);
            let z = draw_z(&mut rng, theta)?;
            let sample = draw_surface(&mut rng, theta, z, (1e-4f64.ln(), 1e2f64.ln()))?;
            let t = rng.random_range(0.0..=1.0);
            let fx = rng.random_range(-1.0..1.0);
            let fy = rng.random_range(-1.0..1.0);
            quadratic_min_audit(&sample, fx, fy, t).ok()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumBoundSurvey {
    pub theta: f64,
    pub kept: usize,
    pub lambda1_min: f64,
    pub lambda1_max: f64,
    /// `inf num/λ₁⁸` over the kept samples.
    pub inf_ratio: f64,
    /// `inf num/λ₁⁷`, the growth rate actually observed.
    pub inf_ratio7: f64,
    pub seed: u64,
}

/// Samples near the `λ₂λ₃ → csc²θ` edge, where `λ₁ ≥ 10³`, with `|f_x| ≤ 1`,
/// and records the infimum of `num/λ₁⁸`.
pub fn numbound_survey(theta: f64, samples: usize, seed: u64) -> Result<NumBoundSurvey> {
    PhaseSpec::new(theta)?;
    let found: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = super::trial_rng(seed, i);
            let z = draw_z(&mut rng, theta)?;
            let sample = draw_surface(&mut rng, theta, z, (1e-9f64.ln(), 1e-3f64.ln()))?;
            let l1 = sample.lambdas[0];
            if l1 < 1e3 {
                return None;
            }
            let t = rng.random_range(0.0..=1.0);
            let fx = rng.random_range(-1.0..=1.0);
            let audit = quadratic_min_audit(&sample, fx, 0.0, t).ok()?;
            Some((l1, audit.num))
        })
        .collect();
    let mut out = NumBoundSurvey {
        theta,
        kept: found.len(),
        lambda1_min: f64::INFINITY,
        lambda1_max: 0.0,
        inf_ratio: f64::INFINITY,
        inf_ratio7: f64::INFINITY,
        seed,
    };
    for (l1, num) in found {
        out.lambda1_min = out.lambda1_min.min(l1);
        out.lambda1_max = out.lambda1_max.max(l1);
        out.inf_ratio = out.inf_ratio.min(num / l1.powi(8));
        out.inf_ratio7 = out.inf_ratio7.min(num / l1.powi(7));
    }
    Ok(out)
}

/// Checks `λᵢ + λⱼ + 2z > 2δ` on constraint samples with `z = tf + d + cot θ`,
/// `f > −ε + δ`, `d ≥ 0`. The margin is `min_{i<j}(λᵢ + λⱼ + 2z) − 2δ`.
pub fn verify_sumbound(theta: f64, eps: f64, delta: f64, samples: usize, seed: u64) -> Result<SuiteReport> {
    let phase = PhaseSpec::new(theta)?;
    let limit = phase.csc() - phase.cot().abs();
    if !(delta > 0.0 && delta < eps && eps <= limit * (1.0 + 1e-15)) {
        return Err(DhymError::Precondition(format!(
            "need 0 < delta < eps <= csc - |cot| = {limit}, got delta = {delta}, eps = {eps}"
        )));
    }
    Ok(run_suite(&format!("sumbound_theta{theta:.4}"), samples, seed, |_, rng| {
        let t = rng.random_range(0.0..=1.0);
        let f = rng.random_range(-eps + delta..3.0);
        if f <= -eps + delta {
            return None;
        }
        let d = rng.random_range(0.0..2.0);
        let z = t * f + d + phase.cot();
        let sample = draw_surface(rng, theta, z, (1e-6f64.ln(), 1e3f64.ln()))?;
        Some(sumbound_margin(&sample) - 2.0 * delta)
    }))
}

/// `min_{i<j}(λᵢ + λⱼ + 2z)`.
pub fn sumbound_margin(sample: &ConstraintSample) -> f64 {
    let l = sample.lambdas;
    [(0, 1), (0, 2), (1, 2)]
        .iter()
        .map(|&(i, j)| l[i] + l[j] + 2.0 * sample.z)
        .fold(f64::INFINITY, f64::min)
}
