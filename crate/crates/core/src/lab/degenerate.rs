use super::{framed, random_frame, run_suite, sample_cone_spectrum, trial_rng, SuiteReport};
use crate::cone::{p_coefficients_from_omega_eigenvalues, PhaseSpec};
use crate::forms::{p_polynomial, BiForm, CMatrix};
use crate::numeric::{factorial, subsets};
use crate::{DhymError, Result};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

/// Parameters of the degenerate-to-nondegenerate propagation check:
/// `Ω_{s,A} = Ω + Asα`, `χ_s = χ + s^N α`, target `P^k ≥ aε·Ω_{s,A}^k` for `k ≤ m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegenConfig {
    pub theta: f64,
    pub n: usize,
    pub m: usize,
    pub big_a: f64,
    pub a: f64,
    pub big_n: u32,
}

impl DegenConfig {
    pub fn validate(&self) -> Result<PhaseSpec> {
        let phase = PhaseSpec::new(self.theta)?;
        if !(1..=3).contains(&self.n) {
            return Err(DhymError::Dimension(self.n));
        }
        if self.m == 0 || self.m > self.n {
            return Err(DhymError::OutOfRange { index: self.m, max: self.n });
        }
        if !(self.a > 0.0 && self.a < 1.0 && self.big_a > 0.0) || self.big_n as usize <= self.n {
            return Err(DhymError::Precondition(format!("need 0 < a < 1, A > 0, N > n: {self:?}")));
        }
        Ok(phase)
    }
}

/// One pointwise triple with its positivity constant `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenTriple {
    pub omega: CMatrix,
    pub chi: CMatrix,
    pub alpha: CMatrix,
    pub eps: f64,
}

/// Smallest ratio `P^k_K / Ω^k_K` over `|K| = k ≤ m` for a diagonal `Ω` with
/// entries `mu` against `χ = I`.
pub fn diagonal_ratio(mu: &[f64], phase: &PhaseSpec, m: usize) -> f64 {
    let mu = &sorted(mu);
    let mut worst = f64::INFINITY;
    for k in 1..=m {
        let p = p_coefficients_from_omega_eigenvalues(mu, phase, k);
        for (coeff, set) in p.iter().zip(subsets(mu.len(), k)) {
            let o = factorial(k) * set.iter().map(|&i| mu[i]).product::<f64>();
            worst = worst.min(coeff / o);
        }
    }
    worst
}

/// Draws `Ω, χ` sharing an eigenframe with `Ω ∈ Γ^m`, a random positive `α`,
/// and `ε = min(½·ratio, ½)`. `None` on rejection.
pub fn sample_triple(rng: &mut impl Rng, config: &DegenConfig, phase: &PhaseSpec) -> Option<DegenTriple> {
    let n = config.n;
    // eigenvalues of Ω = ω − cot θ·χ must be positive
    let spec = sample_cone_spectrum(rng, n, config.m, phase)?;
    let mu: Vec<f64> = spec.lambdas().iter().map(|l| l - phase.cot()).collect();
    if mu.iter().any(|&x| x <= 0.0) {
        return None;
    }
    let ratio = diagonal_ratio(&mu, phase, config.m);
    if !(ratio > 0.0) {
        return None;
    }
    let b = random_frame(rng, n);
    let c = random_frame(rng, n);
    let alpha_diag: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0f64).exp()).collect();
    Some(DegenTriple {
        omega: framed(&b, &mu),
        chi: framed(&b, &vec![1.0; n]),
        alpha: framed(&c, &alpha_diag),
        eps: (0.5 * ratio).min(0.5),
    })
}

/// Smallest eigenvalue of `P^k(Ω_{s,A}, χ_s) − aε·Ω_{s,A}^k` over `k ≤ m`,
/// relative to the size of `Ω_{s,A}^k`.
pub fn degentonon_margin(triple: &DegenTriple, config: &DegenConfig, s: f64) -> f64 {
    let re = |x: f64| Complex64::new(x, 0.0);
    let omega_s = &triple.omega + &triple.alpha * re(config.big_a * s);
    let chi_s = &triple.chi + &triple.alpha * re(s.powi(config.big_n as i32));
    let base = BiForm::from_matrix(&omega_s);
    let mut worst = f64::INFINITY;
    for k in 1..=config.m {
        let power = base.power(k);
        let p = p_polynomial(&omega_s, &chi_s, config.theta, k);
        let gap = p.add(&power.scale(-config.a * triple.eps));
        worst = worst.min(gap.min_eigenvalue() / power.max_abs());
    }
    worst
}

/// The same margin when `α = χ` and `Ω = diag(μ)`, `χ = I`: the relative
/// eigenvalues of `Ω_{s,A}` against `χ_s` are `(μᵢ + As)/(1 + s^N)`.
pub fn degentonon_margin_diagonal(mu: &[f64], eps: f64, config: &DegenConfig, s: f64) -> f64 {
    let phase = PhaseSpec::new(config.theta).expect("validated phase");
    let mu = &sorted(mu);
    let lift = 1.0 + s.powi(config.big_n as i32);
    let shifted: Vec<f64> = mu.iter().map(|m| m + config.big_a * s).collect();
    let relative: Vec<f64> = shifted.iter().map(|v| v / lift).collect();
    let mut worst = f64::INFINITY;
    for k in 1..=config.m {
        let p = p_coefficients_from_omega_eigenvalues(&relative, &phase, k);
        let sets = subsets(mu.len(), k);
        let scale = sets
            .iter()
            .map(|set| factorial(k) * set.iter().map(|&i| shifted[i]).product::<f64>())
            .fold(0.0, f64::max);
        for (coeff, set) in p.iter().zip(&sets) {
            let o = factorial(k) * set.iter().map(|&i| shifted[i]).product::<f64>();
            worst = worst.min((lift.powi(k as i32) * coeff - config.a * eps * o) / scale);
        }
    }
    worst
}

/// Descending, matching the subset order of the coefficient routines.
fn sorted(mu: &[f64]) -> Vec<f64> {
    let mut v = mu.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

pub const S_MAX: f64 = 1.0;
const HALVINGS: i32 = 60;
pub const RECHECKS: usize = 100;
/// Re-verification points span `[s₀·10⁻⁶, s₀)`.
const RECHECK_DECADES: f64 = 6.0;

/// Largest `s₀ = S_MAX·2^{−j}` at which `margin` is positive and stays
/// positive at `RECHECKS` log-spaced points below it.
pub fn scan_s0(margin: impl Fn(f64) -> f64) -> Option<f64> {
    (0..=HALVINGS).map(|j| S_MAX * 2f64.powi(-j)).find(|&s0| {
        margin(s0) > 0.0
            && (1..=RECHECKS).all(|i| margin(s0 * 10f64.powf(-RECHECK_DECADES * i as f64 / RECHECKS as f64)) > 0.0)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegenReport {
    /// Worst margin is the smallest `s₀`; a failed scan counts as a violation.
    pub suite: SuiteReport,
    pub s0: Vec<f64>,
}

pub fn verify_degentonon(config: &DegenConfig, trials: usize, seed: u64) -> Result<DegenReport> {
    let phase = config.validate()?;
    let name = format!("degentonon_n{}_m{}_theta{:.4}", config.n, config.m, config.theta);
    let found: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let triple = sample_triple(&mut rng, config, &phase)?;
            Some(scan_s0(|s| degentonon_margin(&triple, config, s)).unwrap_or(-1.0))
        })
        .collect();
    let s0: Vec<f64> = found.iter().flatten().copied().collect();
    let suite = super::merge(&name, trials, seed, found.into_iter());
    Ok(DegenReport { suite, s0 })
}

/// Checks the phase-lift step on spectra in `Γ_{χ,θ}`, `n ∈ {2, 3}`: where
/// `f > −sin((Θ−θ)/2)/sin θ` the full angle sum is below `Θ`, and where
/// `f ≥ 0` it is at most `θ`. The margin is `Θ − Σθᵢ`, or `θ + 1e−12 − Σθᵢ`
/// when `f ≥ 0`.
pub fn verify_phase_lift(theta: f64, upper: f64, trials: usize, seed: u64) -> Result<SuiteReport> {
    let phase = PhaseSpec::with_upper(theta, upper)?;
    if upper <= theta {
        return Err(DhymError::Phase(format!("upper phase {upper} must exceed theta {theta}")));
    }
    let threshold = crate::torus::phase_lift_threshold(2, theta, upper);
    let name = format!("phase_lift_theta{theta:.4}_upper{upper:.4}");
    Ok(run_suite(&name, trials, seed, |i, rng| {
        let n = 2 + i % 2;
        let spec = sample_cone_spectrum(rng, n, n - 1, &phase)?;
        let f = crate::cone::scalar_residual_from_spectrum(&spec, &phase);
        if f >= 0.0 {
            Some(theta + 1e-12 - spec.angle_sum())
        } else if f > -threshold {
            Some(upper - spec.angle_sum())
        } else {
            None
        }
    }))
}
