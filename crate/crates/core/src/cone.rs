//! Pointwise algebra of a Hermitian form `ω` against a positive comparison
//! form `χ`: generalized eigenvalues, Lagrangian angles `θᵢ = arccot(λᵢ)`,
//! the subset coefficients of `G^k_θ` and `P^k_θ`, and the cone predicates.
//!
//! Subset coefficients are always indexed by subsets of positions in the
//! descending eigenvalue list, enumerated by [`crate::numeric::subsets`].

use crate::error::{DhymError, Result};
use crate::forms::{g_polynomial, BiForm, CMatrix};
use crate::numeric::{arccot, binomial, cot, csc, factorial, subsets};
use nalgebra::Cholesky;
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Predicates closer than this to zero are reported as indeterminate.
pub const BORDERLINE_TOL: f64 = 1e-9;

const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianPair {
    omega: CMatrix,
    chi: CMatrix,
}

impl HermitianPair {
    pub fn new(omega: CMatrix, chi: CMatrix) -> Result<Self> {
        let n = omega.nrows();
        if !(1..=3).contains(&n) {
            return Err(DhymError::Dimension(n));
        }
        if omega.ncols() != n || chi.nrows() != n || chi.ncols() != n {
            return Err(DhymError::Shape(format!(
                "omega {}x{}, chi {}x{}",
                omega.nrows(),
                omega.ncols(),
                chi.nrows(),
                chi.ncols()
            )));
        }
        let dev = hermitian_deviation(&omega);
        if dev > HERMITIAN_TOL {
            return Err(DhymError::NotHermitian(dev));
        }
        if hermitian_deviation(&chi) > HERMITIAN_TOL {
            return Err(DhymError::ComparisonForm(f64::NAN));
        }
        let smallest = chi.clone().symmetric_eigenvalues().min();
        if smallest <= 0.0 {
            return Err(DhymError::ComparisonForm(smallest));
        }
        Ok(Self { omega, chi })
    }

    /// `ω = diag(λ)`, `χ = I`.
    pub fn diagonal(lambdas: &[f64]) -> Result<Self> {
        Self::new(real_diagonal(lambdas), CMatrix::identity(lambdas.len(), lambdas.len()))
    }

    pub fn n(&self) -> usize {
        self.omega.nrows()
    }

    pub fn omega(&self) -> &CMatrix {
        &self.omega
    }

    pub fn chi(&self) -> &CMatrix {
        &self.chi
    }

    /// The pair `(ω + s·χ, χ)`.
    pub fn shifted(&self, s: f64) -> Self {
        Self {
            omega: &self.omega + &self.chi * Complex64::new(s, 0.0),
            chi: self.chi.clone(),
        }
    }
}

pub fn real_diagonal(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|&x| Complex64::new(x, 0.0)),
    ))
}

pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Inverse Cholesky factor `L⁻¹` of `χ = L L^H`, so that `L⁻¹ χ L^{-H} = I`.
pub fn whitening(chi: &CMatrix) -> Result<CMatrix> {
    let n = chi.nrows();
    let chol = Cholesky::new(chi.clone()).ok_or_else(|| {
        DhymError::ComparisonForm(chi.clone().symmetric_eigenvalues().min())
    })?;
    chol.l()
        .solve_lower_triangular(&CMatrix::identity(n, n))
        .ok_or_else(|| DhymError::ComparisonForm(0.0))
}

/// `W m W^H`, symmetrised to remove rounding asymmetry.
pub fn congruence(w: &CMatrix, m: &CMatrix) -> CMatrix {
    let x = w * m * w.adjoint();
    (&x + x.adjoint()) * Complex64::new(0.5, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpec {
    theta: f64,
    upper: Option<f64>,
}

impl PhaseSpec {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < PI) {
            return Err(DhymError::Phase(format!("theta = {theta} not in (0, pi)")));
        }
        Ok(Self { theta, upper: None })
    }

    pub fn with_upper(theta: f64, upper: f64) -> Result<Self> {
        let mut spec = Self::new(theta)?;
        if !(upper > theta && upper < PI) {
            return Err(DhymError::Phase(format!(
                "upper phase {upper} not in (theta, pi) for theta = {theta}"
            )));
        }
        spec.upper = Some(upper);
        Ok(spec)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn upper(&self) -> Option<f64> {
        self.upper
    }

    pub fn cot(&self) -> f64 {
        cot(self.theta)
    }

    pub fn csc(&self) -> f64 {
        csc(self.theta)
    }

    pub fn csc2(&self) -> f64 {
        let c = self.csc();
        c * c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpectrum {
    lambdas: Vec<f64>,
    angles: Vec<f64>,
}

impl EigenSpectrum {
    /// Builds a spectrum from eigenvalues in any order.
    pub fn from_eigenvalues(mut lambdas: Vec<f64>) -> Self {
        lambdas.sort_by(|a, b| b.total_cmp(a));
        let angles = lambdas.iter().map(|&l| arccot(l)).collect();
        Self { lambdas, angles }
    }

    /// Descending.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Ascending; `angles[i] = arccot(lambdas[i])`.
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    pub fn angle_sum(&self) -> f64 {
        self.angles.iter().sum()
    }
}

/// Roots of `det(ω − λχ) = 0`, by reduction to `L⁻¹ ω L^{-H}`.
pub fn generalized_spectrum(pair: &HermitianPair) -> Result<EigenSpectrum> {
    let w = whitening(pair.chi())?;
    let reduced = congruence(&w, pair.omega());
    Ok(EigenSpectrum::from_eigenvalues(reduced.symmetric_eigenvalues().iter().copied().collect()))
}

/// Largest value of `Σ_{i∈I} arccot(λᵢ)` over `|I| = m`.
pub fn angle_sum_top_m(spec: &EigenSpectrum, m: usize) -> Result<f64> {
    if m == 0 || m > spec.n() {
        return Err(DhymError::OutOfRange { index: m, max: spec.n() });
    }
    // angles ascend, so the largest m sit at the tail
    Ok(spec.angles[spec.n() - m..].iter().sum())
}

/// `k!·Π_{i∈K}√(1+λᵢ²)·sin(θ − Σ_{i∈K}θᵢ)/sin θ` for every `|K| = k`.
pub fn g_coefficients_from_spectrum(spec: &EigenSpectrum, phase: &PhaseSpec, k: usize) -> Vec<f64> {
    let kf = factorial(k);
    let s = phase.theta.sin();
    subsets(spec.n(), k)
        .iter()
        .map(|set| {
            let modulus: f64 = set.iter().map(|&i| spec.lambdas[i].hypot(1.0)).product();
            let angle: f64 = set.iter().map(|&i| spec.angles[i]).sum();
            kf * modulus * (phase.theta - angle).sin() / s
        })
        .collect()
}

pub fn g_form_coefficients(pair: &HermitianPair, phase: &PhaseSpec, k: usize) -> Result<Vec<f64>> {
    check_order(k, pair.n())?;
    let spec = generalized_spectrum(pair)?;
    Ok(g_coefficients_from_spectrum(&spec, phase, k))
}

/// Coefficients of `P^k_θ(Ω, χ) = G^k_θ(Ω + cot θ·χ, χ)`; `omega_pair.omega()` holds `Ω`.
pub fn p_form_coefficients(omega_pair: &HermitianPair, phase: &PhaseSpec, k: usize) -> Result<Vec<f64>> {
    g_form_coefficients(&omega_pair.shifted(phase.cot()), phase, k)
}

/// `P^k` coefficients given the eigenvalues of `Ω` (not `ω`).
pub fn p_coefficients_from_omega_eigenvalues(mu: &[f64], phase: &PhaseSpec, k: usize) -> Vec<f64> {
    let c = phase.cot();
    let spec = EigenSpectrum::from_eigenvalues(mu.iter().map(|m| m + c).collect());
    g_coefficients_from_spectrum(&spec, phase, k)
}

/// `G^n_θ(ω,χ)/χⁿ = Π√(1+λᵢ²)·sin(θ − Σθᵢ)/sin θ`.
pub fn dhym_scalar_residual(pair: &HermitianPair, phase: &PhaseSpec) -> Result<f64> {
    let spec = generalized_spectrum(pair)?;
    Ok(scalar_residual_from_spectrum(&spec, phase))
}

pub fn scalar_residual_from_spectrum(spec: &EigenSpectrum, phase: &PhaseSpec) -> f64 {
    let modulus: f64 = spec.lambdas.iter().map(|l| l.hypot(1.0)).product();
    modulus * (phase.theta - spec.angle_sum()).sin() / phase.theta.sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Member,
    NonMember,
    Indeterminate,
}

impl Verdict {
    fn from_slack(slack: f64) -> Self {
        if slack.abs() < BORDERLINE_TOL || slack.is_nan() {
            Verdict::Indeterminate
        } else if slack > 0.0 {
            Verdict::Member
        } else {
            Verdict::NonMember
        }
    }

    pub fn is_member(self) -> Option<bool> {
        match self {
            Verdict::Member => Some(true),
            Verdict::NonMember => Some(false),
            Verdict::Indeterminate => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeMargins {
    /// `θ − angle_sum_top_m(m)` for m = 1..=n.
    pub angle: Vec<f64>,
    /// Smallest subset coefficient over all `|K| ≤ m`, for m = 1..=n.
    pub coefficient: Vec<f64>,
    /// `min(Θ − Σθᵢ, θ − top_{n−1})` when an upper phase is given.
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeReport {
    pub m: usize,
    /// Γ^m membership for m = 1..=n from the angle-sum predicate.
    pub by_angle: Vec<Verdict>,
    /// Γ^m membership for m = 1..=n from positivity of subset coefficients.
    pub by_coefficients: Vec<Verdict>,
    pub member_gamma_theta_upper: Option<Verdict>,
    pub subset_coefficients: BTreeMap<usize, Vec<f64>>,
    pub margins: ConeMargins,
}

impl ConeReport {
    /// Γ^m membership: determinate only when both predicates are clear of the
    /// borderline and agree.
    pub fn member_gamma(&self, m: usize) -> Verdict {
        let (a, c) = (self.by_angle[m - 1], self.by_coefficients[m - 1]);
        if a == c {
            a
        } else {
            Verdict::Indeterminate
        }
    }

    pub fn member(&self) -> Verdict {
        self.member_gamma(self.m)
    }

    /// Whether the two predicates disagree while both are determinate.
    pub fn predicates_conflict(&self, m: usize) -> bool {
        let (a, c) = (self.by_angle[m - 1], self.by_coefficients[m - 1]);
        a != Verdict::Indeterminate && c != Verdict::Indeterminate && a != c
    }
}

pub fn cone_membership(pair: &HermitianPair, phase: &PhaseSpec, m: usize) -> Result<ConeReport> {
    check_order(m, pair.n())?;
    let spec = generalized_spectrum(pair)?;
    Ok(cone_report_from_spectrum(&spec, phase, m))
}

pub fn cone_report_from_spectrum(spec: &EigenSpectrum, phase: &PhaseSpec, m: usize) -> ConeReport {
    let n = spec.n();
    let mut subset_coefficients = BTreeMap::new();
    let mut angle = Vec::with_capacity(n);
    let mut coefficient = Vec::with_capacity(n);
    let mut running_min = f64::INFINITY;
    for k in 1..=n {
        let coeffs = g_coefficients_from_spectrum(spec, phase, k);
        running_min = coeffs.iter().copied().fold(running_min, f64::min);
        coefficient.push(running_min);
        angle.push(phase.theta - spec.angles[n - k..].iter().sum::<f64>());
        subset_coefficients.insert(k, coeffs);
    }
    let upper = phase.upper.map(|big| {
        let top_lower = if n > 1 { angle[n - 2] } else { phase.theta };
        (big - spec.angle_sum()).min(top_lower)
    });
    ConeReport {
        m,
        by_angle: angle.iter().map(|&s| Verdict::from_slack(s)).collect(),
        by_coefficients: coefficient.iter().map(|&s| Verdict::from_slack(s)).collect(),
        member_gamma_theta_upper: upper.map(Verdict::from_slack),
        subset_coefficients,
        margins: ConeMargins { angle, coefficient, upper },
    }
}

#[derive(Debug, Clone)]
pub struct BinomialExpansion {
    /// Coefficients of `G^k_θ(α + δ, β)`.
    pub lhs: BiForm,
    /// Coefficients of `Σ_r C(k,r) G^r_θ(α, β) ∧ δ^{k−r}`.
    pub rhs: BiForm,
}

impl BinomialExpansion {
    pub fn max_relative_gap(&self) -> f64 {
        let scale = self.lhs.max_abs().max(self.rhs.max_abs()).max(1.0);
        self.lhs
            .coeffs()
            .iter()
            .zip(self.rhs.coeffs())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / scale
    }
}

/// Both sides of the binomial identity for `G^k_θ`, with all forms expressed
/// in a basis where `alpha.chi()` is the identity.
pub fn expand_binomial(
    alpha: &HermitianPair,
    delta: &CMatrix,
    phase: &PhaseSpec,
    k: usize,
) -> Result<BinomialExpansion> {
    let n = alpha.n();
    if delta.nrows() != n || delta.ncols() != n {
        return Err(DhymError::Shape(format!("delta must be {n}x{n}")));
    }
    if k > n {
        return Err(DhymError::OutOfRange { index: k, max: n });
    }
    let w = whitening(alpha.chi())?;
    let a = congruence(&w, alpha.omega());
    let d = congruence(&w, delta);
    let beta = CMatrix::identity(n, n);

    let lhs = g_polynomial(&(&a + &d), &beta, phase.theta, k);
    let d_form = BiForm::from_matrix(&d);
    let mut rhs = BiForm::zero(n, k);
    for r in 0..=k {
        let term = g_polynomial(&a, &beta, phase.theta, r).wedge(&d_form.power(k - r));
        rhs = rhs.add(&term.scale(binomial(k, r)));
    }
    Ok(BinomialExpansion { lhs, rhs })
}

fn check_order(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        Err(DhymError::OutOfRange { index: k, max: n })
    } else {
        Ok(())
    }
}
