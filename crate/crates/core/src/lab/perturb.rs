use super::{framed, framed_matrix, random_frame, random_psd, run_suite, sample_cone_spectrum, SuiteReport};
use crate::cone::{cone_report_from_spectrum, generalized_spectrum, EigenSpectrum, HermitianPair, PhaseSpec};
use crate::numeric::{arccot, cot, factorial, golden_section_max, golden_section_min, subsets};
use crate::{DhymError, Result};
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

const BORDER: f64 = 1e-12;

/// Checks `Σθᵢ < θ ⇔ sin(θ − Σ_{i∈I} θᵢ) > 0 for every I ⊂ {1..k}` on random
/// angles in `(0, π)`. Samples within `1e−12` of either boundary are discarded.
pub fn verify_sinelem(k: usize, trials: usize, seed: u64) -> SuiteReport {
    assert!(k < usize::BITS as usize, "k = {k} too large for subset enumeration");
    run_suite(&format!("sinelem_k{k}"), trials, seed, |_, rng| {
        let theta = rng.random_range(0.0..PI);
        let angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..PI)).collect();
        if theta == 0.0 || angles.iter().any(|&a| a == 0.0) {
            return None;
        }
        sinelem_margin(theta, &angles)
    })
}

/// Signed distance from the nearest borderline: positive when both sides of
/// the equivalence agree, negative when they disagree. `None` on borderline input.
pub fn sinelem_margin(theta: f64, angles: &[f64]) -> Option<f64> {
    let total: f64 = angles.iter().sum();
    let mut closest = (theta - total).abs();
    let mut all_positive = true;
    for mask in 0u64..1 << angles.len() {
        let partial: f64 = angles.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, a)| a).sum();
        let s = (theta - partial).sin();
        closest = closest.min(s.abs());
        all_positive &= s > 0.0;
    }
    if closest < BORDER {
        return None;
    }
    let agree = (total < theta) == all_positive;
    Some(if agree { closest } else { -closest })
}

/// Constants from the background-perturbation lemma.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationBudget {
    pub theta: f64,
    pub eps1: f64,
    pub n: usize,
    pub m: u64,
    pub eps4: f64,
    pub eps3: f64,
    pub eps2: f64,
    /// Where the minimum defining `eps4` is attained.
    pub eps4_at: f64,
}

impl PerturbationBudget {
    pub fn cot_theta_m(&self) -> f64 {
        cot(self.theta / self.m as f64)
    }

    /// Rechecks the defining relations.
    pub fn validate(&self) -> Result<()> {
        let c = self.cot_theta_m();
        let m = self.m as f64;
        let ok = c > self.eps1
            && m > 2.0 * self.n as f64 * self.theta / self.eps3
            && self.eps3 == self.eps4.min(self.theta / 2.0)
            && self.eps2 == (self.eps1 / c).min(c / (c - self.eps1) - 1.0)
            && self.eps2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(DhymError::Precondition(format!("inconsistent perturbation budget {self:?}")))
        }
    }
}

/// Right end of the compact interval on which `ε₄` is minimized.
pub fn eps4_interval(theta: f64, n: usize) -> (f64, f64) {
    (cot(theta), cot(theta / (2.0 * (1.0 + (n * n) as f64))))
}

pub fn perturbation_constants(theta: f64, eps1: f64, n: usize) -> Result<PerturbationBudget> {
    PhaseSpec::new(theta)?;
    if !(eps1 > 0.0 && eps1.is_finite()) {
        return Err(DhymError::Precondition(format!("eps1 = {eps1} must be positive")));
    }
    if n < 2 {
        return Err(DhymError::Precondition(format!("perturbation lemma needs n >= 2, got {n}")));
    }
    let gap = |l: f64| arccot(l) - arccot(l + eps1);
    let (lo, hi) = eps4_interval(theta, n);
    let (eps4_at, eps4) = if hi <= lo { (lo, gap(lo)) } else { golden_section_min(gap, lo, hi, 1e-12) };
    let eps3 = eps4.min(theta / 2.0);

    let mut m = (2.0 * n as f64 * theta / eps3).floor() as u64 + 1;
    while cot(theta / m as f64) <= eps1 {
        m += 1;
    }
    let c = cot(theta / m as f64);
    let eps2 = (eps1 / c).min(c / (c - eps1) - 1.0);
    Ok(PerturbationBudget { theta, eps1, n, m, eps4, eps3, eps2, eps4_at })
}

/// How the upper comparison form is drawn in [`verify_perturb1`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundDraw {
    /// `χ = χ₀ + ε₂·Bᴴ H B` with random `0 ≤ H ≤ I`, a quarter of the time
    /// pinned to `H = 0` or `H = I`.
    Mixed,
    /// `χ = χ₀`.
    Lower,
    /// `χ = (1+ε₂)χ₀`.
    Upper,
}

/// Monte Carlo check that `ω + 2ε₁χ ∈ Γ_{χ,θ}` whenever `ω ∈ Γ_{χ₀,θ}` and
/// `χ₀ ≤ χ ≤ (1+ε₂)χ₀`. The margin is `θ` minus the top `n−1` angle sum.
pub fn verify_perturb1(budget: &PerturbationBudget, draw: BackgroundDraw, trials: usize, seed: u64) -> Result<SuiteReport> {
    budget.validate()?;
    let phase = PhaseSpec::new(budget.theta)?;
    let n = budget.n;
    let name = format!("perturb1_n{n}_theta{:.4}_eps{}", budget.theta, budget.eps1);
    Ok(run_suite(&name, trials, seed, |_, rng| {
        let spec = sample_cone_spectrum(rng, n, n - 1, &phase)?;
        let b = random_frame(rng, n);
        let ones = vec![1.0; n];
        let chi0 = framed(&b, &ones);
        let omega = framed(&b, spec.lambdas());
        let zero = framed(&b, &vec![0.0; n]);
        let increment = match draw {
            BackgroundDraw::Lower => zero,
            BackgroundDraw::Upper => chi0.clone(),
            BackgroundDraw::Mixed => {
                let r: f64 = rng.random_range(0.0..1.0);
                if r < 0.125 {
                    zero
                } else if r < 0.25 {
                    chi0.clone()
                } else {
                    let top = rng.random_range(0.0..=1.0);
                    framed_matrix(&b, &random_psd(rng, n, top))
                }
            }
        };
        let chi = &chi0 + increment * Complex64::new(budget.eps2, 0.0);
        let lifted = &omega + &chi * Complex64::new(2.0 * budget.eps1, 0.0);
        let pair = HermitianPair::new(lifted, chi).ok()?;
        let out = generalized_spectrum(&pair).ok()?;
        let report = cone_report_from_spectrum(&out, &phase, n - 1);
        Some(report.margins.angle[n - 2])
    }))
}

/// Constants from the comparison lemma for `(Ω_θ + χ)ⁿ` and `P^k_θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants {
    pub theta: f64,
    pub delta: f64,
    pub n: usize,
    /// `sup_{λ > cot θ} √(1+λ²)/(λ − cot θ + 1)`.
    pub c_a: f64,
    /// Offset `λ − cot θ` at which `c_a` is attained; infinite when the
    /// supremum is the limit 1.
    pub c_a_offset: f64,
    /// `C` with `C(Ω_θ + χ)ⁿ ≥ Gⁿ_θ(ω, χ)`, equal to `c_aⁿ / sin θ`.
    pub form_constant: f64,
    /// `inf_{λ > cot θ} √(1+λ²)/(λ − cot θ)`.
    pub c_b: f64,
    /// `ε` with `P^k_θ(Ω, χ) ≥ ε·Ω^k` for `k < n` on `Γ_{χ,θ−δ}`.
    pub eps_b: f64,
}

pub fn bound_constants(theta: f64, delta: f64, n: usize) -> Result<BoundConstants> {
    PhaseSpec::new(theta)?;
    if !(delta > 0.0 && delta < theta) {
        return Err(DhymError::Precondition(format!("delta = {delta} not in (0, theta)")));
    }
    if n == 0 {
        return Err(DhymError::Dimension(n));
    }
    let c = cot(theta);
    let ratio = |x: f64| (x + c).hypot(1.0) / (x + 1.0);
    // x = u/(1−u) compactifies (0, ∞)
    let (u, interior) = golden_section_max(|u| ratio(u / (1.0 - u)), 0.0, 1.0 - 1e-9, 1e-13);
    let (c_a, c_a_offset) = if interior >= 1.0 { (interior, u / (1.0 - u)) } else { (1.0, f64::INFINITY) };

    let c_b = if theta <= PI / 2.0 { 1.0 } else { theta.sin() };
    let eps_b = c_b.powi(n as i32 - 1) * delta.sin().min(theta.sin()) / theta.sin();
    Ok(BoundConstants {
        theta,
        delta,
        n,
        c_a,
        c_a_offset,
        form_constant: c_a.powi(n as i32) / theta.sin(),
        c_b,
        eps_b,
    })
}

impl BoundConstants {
    /// Relative slack of `C·n!Π(λᵢ − cot θ + 1) ≥ Gⁿ` for a spectrum with `λᵢ > cot θ`.
    pub fn part_a_margin(&self, spec: &EigenSpectrum) -> f64 {
        let c = cot(self.theta);
        let n = spec.n();
        let lhs = self.form_constant * factorial(n) * spec.lambdas().iter().map(|l| l - c + 1.0).product::<f64>();
        let modulus: f64 = spec.lambdas().iter().map(|l| l.hypot(1.0)).product();
        let rhs = factorial(n) * modulus * (self.theta - spec.angle_sum()).sin() / self.theta.sin();
        (lhs - rhs) / lhs
    }

    /// Smallest relative slack of `P^k ≥ ε_b·Ω^k` over `|K| = k < n`.
    pub fn part_b_margin(&self, spec: &EigenSpectrum) -> f64 {
        let c = cot(self.theta);
        let n = spec.n();
        let mut worst = f64::INFINITY;
        for k in 1..n {
            for set in subsets(n, k) {
                let modulus: f64 = set.iter().map(|&i| spec.lambdas()[i].hypot(1.0)).product();
                let angle: f64 = set.iter().map(|&i| spec.angles()[i]).sum();
                let p = modulus * (self.theta - angle).sin() / self.theta.sin();
                let o: f64 = set.iter().map(|&i| spec.lambdas()[i] - c).product();
                worst = worst.min((p - self.eps_b * o) / p.abs().max(f64::MIN_POSITIVE));
            }
        }
        worst
    }
}

/// Verifies both parts of the comparison lemma on random spectra.
/// Part a samples `Γ_{χ,θ}` (with `λ > cot θ` imposed when `n = 1`); part b
/// samples `Γ_{χ,θ−δ}`.
pub fn verify_bound_constants(bc: &BoundConstants, trials: usize, seed: u64) -> Result<(SuiteReport, SuiteReport)> {
    let phase = PhaseSpec::new(bc.theta)?;
    let inner = PhaseSpec::new(bc.theta - bc.delta)?;
    let n = bc.n;
    let m = (n.max(2) - 1).max(1);
    let c = phase.cot();
    let a = run_suite(&format!("bound_a_n{n}_theta{:.4}", bc.theta), trials, seed, |_, rng| {
        let spec = sample_cone_spectrum(rng, n, m, &phase)?;
        if spec.lambdas().iter().any(|&l| l <= c) {
            return None;
        }
        Some(bc.part_a_margin(&spec))
    });
    let b = run_suite(&format!("bound_b_n{n}_theta{:.4}", bc.theta), trials, seed ^ 0x5eed, |_, rng| {
        if n < 2 {
            return None;
        }
        let spec = sample_cone_spectrum(rng, n, n - 1, &inner)?;
        Some(bc.part_b_margin(&spec))
    });
    Ok((a, b))
}
