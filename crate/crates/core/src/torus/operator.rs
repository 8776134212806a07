//! Pointwise nonlinearity of the twisted equation on the torus, its
//! linearization, and the cone guards.
//!
//! Everything is evaluated on the whitened matrix `Ω̃ = L⁻¹ Ω_φ L^{-H}`,
//! which has the eigenvalues of `χ₀⁻¹ Ω_φ`. With `f` in the original
//! normalization, `f_t = t·f + d_t` and `d_t = (1 − t)·mean(f)`:
//!
//! * `n = 1`: `R = Ω̃ − f_t`
//! * `n = 2`: `R = det Ω̃ − csc²θ − f_t`
//! * `n = 3`: `R = (tr Ω̃ + 2z_t)/det Ω̃ − sin²θ` with `z_t = t·f̃ + d̃_t + cot θ`,
//!   where `f̃ = f·sin²θ/2` is the rescaled twist.

use super::background::FlatBackground;
use super::field::{derivative_pairs, PeriodicField, SpectralGrid};
use crate::error::{DhymError, Result};
use crate::forms::CMatrix;
use crate::numeric::arccot;
use num_complex::Complex64;
use rayon::prelude::*;

/// Top-band energy fraction above which the Hessian is flagged as aliased.
pub const ALIASING_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct HessianField {
    pub matrices: Vec<CMatrix>,
    pub aliasing_fraction: f64,
}

impl HessianField {
    pub fn aliased(&self) -> bool {
        self.aliasing_fraction > ALIASING_THRESHOLD
    }
}

/// `∂²φ/∂z^j∂z̄^k` at every grid point, computed spectrally.
pub fn complex_hessian(phi: &PeriodicField, bg: &FlatBackground) -> Result<HessianField> {
    check_dimension(phi, bg)?;
    let grid = SpectralGrid::for_field(phi);
    let aliasing_fraction = grid.high_band_energy_fraction(phi.values());
    if aliasing_fraction > ALIASING_THRESHOLD {
        log::warn!("potential carries {aliasing_fraction:.2e} of its energy in the top third of the band");
    }
    let templates = hessian_templates(bg.n(), phi.active(), None);
    let derivs = grid.second_derivatives(phi.values());
    let matrices = (0..phi.len())
        .map(|idx| combine(&CMatrix::zeros(bg.n(), bg.n()), &templates, &derivs, idx))
        .collect();
    Ok(HessianField { matrices, aliasing_fraction })
}

/// Constant matrices `T_pq` with `i∂∂̄u = Σ_{p≤q} ∂_p∂_q u · T_pq` over the
/// active directions, optionally conjugated by a whitening matrix.
pub fn hessian_templates(n: usize, active: &[usize], whitening: Option<&CMatrix>) -> Vec<CMatrix> {
    let quarter = |a: usize, b: usize| match (a, b) {
        (0, 0) | (1, 1) => Complex64::new(0.25, 0.0),
        (0, 1) => Complex64::new(0.0, 0.25),
        _ => Complex64::new(0.0, -0.25),
    };
    let single = |r: usize, s: usize| {
        let mut t = CMatrix::zeros(n, n);
        t[(r / 2, s / 2)] += quarter(r % 2, s % 2);
        t
    };
    derivative_pairs(active.len())
        .into_iter()
        .map(|(p, q)| {
            let (r, s) = (active[p], active[q]);
            let t = if p == q { single(r, r) } else { single(r, s) + single(s, r) };
            match whitening {
                Some(w) => w * t * w.adjoint(),
                None => t,
            }
        })
        .collect()
}

fn combine(base: &CMatrix, templates: &[CMatrix], derivs: &[Vec<f64>], idx: usize) -> CMatrix {
    let mut m = base.clone();
    for (t, d) in templates.iter().zip(derivs) {
        m += t * Complex64::new(d[idx], 0.0);
    }
    m
}

fn check_dimension(phi: &PeriodicField, bg: &FlatBackground) -> Result<()> {
    if phi.n() != bg.n() {
        return Err(DhymError::Shape(format!(
            "field lives on a torus of dimension {}, background has dimension {}",
            phi.n(),
            bg.n()
        )));
    }
    Ok(())
}

/// Smallest eigenvalue and smallest `μᵢμⱼ − csc²θ` of one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMargins {
    /// Eigenvalues of `Ω̃`, descending.
    pub eigenvalues: Vec<f64>,
    pub eigen: f64,
    pub pair: f64,
}

impl PointMargins {
    fn new(mut eigenvalues: Vec<f64>, csc2: f64) -> Self {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let eigen = *eigenvalues.last().unwrap_or(&f64::INFINITY);
        let mut pair = f64::INFINITY;
        for i in 0..eigenvalues.len() {
            for j in i + 1..eigenvalues.len() {
                pair = pair.min(eigenvalues[i] * eigenvalues[j] - csc2);
            }
        }
        Self { eigenvalues, eigen, pair }
    }

    /// Slack of the cone condition for dimension `n`: positivity for `n = 2`,
    /// positivity and pairwise products for `n = 3`, vacuous for `n = 1`.
    pub fn cone_slack(&self, n: usize) -> f64 {
        match n {
            1 => f64::INFINITY,
            2 => self.eigen,
            _ => self.eigen.min(self.pair),
        }
    }
}

/// Per-point guard margins over a grid.
#[derive(Debug, Clone)]
pub struct ConeGuardField {
    pub n: usize,
    pub points: Vec<PointMargins>,
}

impl ConeGuardField {
    pub fn eigen_margin(&self) -> f64 {
        self.points.iter().map(|p| p.eigen).fold(f64::INFINITY, f64::min)
    }

    pub fn pair_margin(&self) -> f64 {
        self.points.iter().map(|p| p.pair).fold(f64::INFINITY, f64::min)
    }

    pub fn cone_margin(&self) -> f64 {
        self.points.iter().map(|p| p.cone_slack(self.n)).fold(f64::INFINITY, f64::min)
    }

    /// Half of `min(μᵢ + μⱼ + 2z)` over points and pairs, the `δ'` of the sum
    /// bound; `z` holds `z_t` per grid point.
    pub fn sum_bound(&self, z: &[f64]) -> f64 {
        let mut worst = f64::INFINITY;
        for (p, &zx) in self.points.iter().zip(z) {
            let e = &p.eigenvalues;
            for i in 0..e.len() {
                for j in i + 1..e.len() {
                    worst = worst.min(0.5 * (e[i] + e[j] + 2.0 * zx));
                }
            }
        }
        worst
    }

    /// Whether `μᵢ + μⱼ + 2z ≥ 2(√(μᵢμⱼ) + z)` holds everywhere (up to rounding).
    pub fn am_gm_holds(&self, z: &[f64]) -> bool {
        self.points.iter().zip(z).all(|(p, &zx)| {
            let e = &p.eigenvalues;
            (0..e.len()).all(|i| {
                (i + 1..e.len()).all(|j| {
                    let lhs = e[i] + e[j] + 2.0 * zx;
                    let rhs = 2.0 * ((e[i] * e[j]).max(0.0).sqrt() + zx);
                    lhs >= rhs - 1e-12 * lhs.abs().max(1.0)
                })
            })
        })
    }
}

/// The twisted equation for one background and twist, with cached FFT plans
/// and whitened Hessian templates.
#[derive(Debug)]
pub struct TwistedProblem {
    bg: FlatBackground,
    f: PeriodicField,
    f_mean: f64,
    grid: SpectralGrid,
    pairs: Vec<(usize, usize)>,
    templates: Vec<CMatrix>,
}

/// Pointwise data at one potential.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub residual: Vec<f64>,
    pub margins: ConeGuardField,
    /// Linearization coefficients `c_pq(x)` with `L u = Σ c_pq ∂_p∂_q u`.
    pub coefficients: Vec<Vec<f64>>,
}

impl TwistedProblem {
    pub fn new(bg: FlatBackground, f: PeriodicField) -> Result<Self> {
        check_dimension(&f, &bg)?;
        let grid = SpectralGrid::for_field(&f);
        let pairs = derivative_pairs(f.active().len());
        let templates = hessian_templates(bg.n(), f.active(), Some(bg.whitening()));
        let f_mean = f.mean();
        Ok(Self { bg, f, f_mean, grid, pairs, templates })
    }

    pub fn background(&self) -> &FlatBackground {
        &self.bg
    }

    pub fn twist(&self) -> &PeriodicField {
        &self.f
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n(&self) -> usize {
        self.bg.n()
    }

    /// `d_t = (1 − t)·mean(f)`, original normalization.
    pub fn d_t(&self, t: f64) -> f64 {
        (1.0 - t) * self.f_mean
    }

    /// `z_t = t·f̃ + d̃_t + cot θ` per grid point (rescaled twist).
    pub fn z_field(&self, t: f64) -> Vec<f64> {
        let phase = self.bg.phase();
        let half_sin2 = 0.5 / phase.csc2();
        let d = self.d_t(t);
        self.f
            .values()
            .iter()
            .map(|&fx| half_sin2 * (t * fx + d) + phase.cot())
            .collect()
    }

    pub fn check_field(&self, phi: &PeriodicField) -> Result<()> {
        if !phi.same_grid(&self.f) {
            return Err(DhymError::Shape("potential and twist live on different grids".into()));
        }
        Ok(())
    }

    pub fn derivatives(&self, phi: &PeriodicField) -> Vec<Vec<f64>> {
        self.grid.second_derivatives(phi.values())
    }

    pub fn omega_at(&self, derivs: &[Vec<f64>], idx: usize) -> CMatrix {
        combine(self.bg.omega0_whitened(), &self.templates, derivs, idx)
    }

    pub fn margins(&self, derivs: &[Vec<f64>]) -> ConeGuardField {
        let csc2 = self.bg.phase().csc2();
        let points = (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                let m = self.omega_at(derivs, idx);
                PointMargins::new(m.symmetric_eigenvalues().iter().copied().collect(), csc2)
            })
            .collect();
        ConeGuardField { n: self.n(), points }
    }

    /// Residual, guard margins and linearization coefficients at a potential
    /// given by its second derivatives. Fails if the cone condition is
    /// violated anywhere.
    pub fn evaluate(&self, derivs: &[Vec<f64>], t: f64) -> Result<Evaluation> {
        let n = self.n();
        let phase = *self.bg.phase();
        let csc2 = phase.csc2();
        let sin2 = 1.0 / csc2;
        let d = self.d_t(t);
        let z = if n == 3 { self.z_field(t) } else { Vec::new() };
        let fvals = self.f.values();
        let per_point: Vec<(f64, PointMargins, Vec<f64>)> = (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                let m = self.omega_at(derivs, idx);
                let eig: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
                let det: f64 = eig.iter().product();
                let tr: f64 = eig.iter().sum();
                let margins = PointMargins::new(eig, csc2);
                let f_t = t * fvals[idx] + d;
                let inverse_trace = |tmpl: &CMatrix, inv: &CMatrix| -> f64 {
                    let mut s = Complex64::new(0.0, 0.0);
                    for a in 0..n {
                        for b in 0..n {
                            s += inv[(a, b)] * tmpl[(b, a)];
                        }
                    }
                    s.re
                };
                let trace = |tmpl: &CMatrix| -> f64 { (0..n).map(|a| tmpl[(a, a)].re).sum() };
                let inv = if n > 1 && det > 0.0 { m.clone().try_inverse() } else { None };
                let (residual, coeffs) = match n {
                    1 => (tr - f_t, self.templates.iter().map(trace).collect()),
                    2 => {
                        let c = match &inv {
                            Some(inv) => self.templates.iter().map(|tm| det * inverse_trace(tm, inv)).collect(),
                            None => vec![f64::NAN; self.templates.len()],
                        };
                        (det - csc2 - f_t, c)
                    }
                    _ => {
                        let num = tr + 2.0 * z[idx];
                        let c = match &inv {
                            Some(inv) => self
                                .templates
                                .iter()
                                .map(|tm| (trace(tm) - num * inverse_trace(tm, inv)) / det)
                                .collect(),
                            None => vec![f64::NAN; self.templates.len()],
                        };
                        (num / det - sin2, c)
                    }
                };
                (residual, margins, coeffs)
            })
            .collect();

        let margins = ConeGuardField { n, points: per_point.iter().map(|p| p.1.clone()).collect() };
        let (worst, slack) = margins
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.cone_slack(n)))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        if slack <= 0.0 || slack.is_nan() {
            return Err(DhymError::ConeViolation {
                point: worst,
                eigenvalues: margins.points[worst].eigenvalues.clone(),
                margin: slack,
            });
        }
        let mut coefficients = vec![Vec::with_capacity(per_point.len()); self.pairs.len()];
        for (_, _, c) in &per_point {
            for (slot, v) in coefficients.iter_mut().zip(c) {
                slot.push(*v);
            }
        }
        Ok(Evaluation { residual: per_point.into_iter().map(|p| p.0).collect(), margins, coefficients })
    }

    /// `Σ c_pq ∂_p∂_q u` for given coefficients.
    pub fn apply_linear(&self, coefficients: &[Vec<f64>], u: &[f64]) -> Vec<f64> {
        let derivs = self.grid.second_derivatives(u);
        let mut out = vec![0.0; u.len()];
        for (c, d) in coefficients.iter().zip(&derivs) {
            for ((o, ci), di) in out.iter_mut().zip(c).zip(d) {
                *o += ci * di;
            }
        }
        out
    }

    /// Sum of Lagrangian angles of `ω_φ` against `χ₀` per grid point.
    pub fn phase_field(&self, derivs: &[Vec<f64>]) -> Vec<f64> {
        let c = self.bg.phase().cot();
        (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                self.omega_at(derivs, idx)
                    .symmetric_eigenvalues()
                    .iter()
                    .map(|mu| arccot(mu + c))
                    .sum()
            })
            .collect()
    }

    /// `G^n_θ(ω_φ, χ₀)/χ₀ⁿ` per grid point, i.e. the twist a potential induces.
    pub fn induced_twist(&self, derivs: &[Vec<f64>]) -> Vec<f64> {
        let n = self.n();
        let phase = *self.bg.phase();
        (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                let eig = self.omega_at(derivs, idx).symmetric_eigenvalues();
                scalar_from_omega_eigenvalues(eig.as_slice(), phase.csc2(), phase.cot(), n)
            })
            .collect()
    }
}

/// `P^n_θ(Ω, χ)/χⁿ` from the eigenvalues of `Ω`, as a polynomial.
pub fn scalar_from_omega_eigenvalues(mu: &[f64], csc2: f64, cot: f64, n: usize) -> f64 {
    let det: f64 = mu.iter().product();
    let tr: f64 = mu.iter().sum();
    match n {
        1 => tr,
        2 => det - csc2,
        _ => det - csc2 * tr - 2.0 * csc2 * cot,
    }
}

/// Residual of the path equation at `t`, with `d_t` in the original normalization.
pub fn residual_field(phi: &PeriodicField, t: f64, f: &PeriodicField, bg: &FlatBackground) -> Result<(PeriodicField, f64)> {
    let problem = TwistedProblem::new(bg.clone(), f.clone())?;
    problem.check_field(phi)?;
    let eval = problem.evaluate(&problem.derivatives(phi), t)?;
    Ok((phi.like(eval.residual)?, problem.d_t(t)))
}

/// Derivative of [`residual_field`] at `phi` in direction `u`.
pub fn linearized_apply(
    phi: &PeriodicField,
    u: &PeriodicField,
    t: f64,
    f: &PeriodicField,
    bg: &FlatBackground,
) -> Result<PeriodicField> {
    let problem = TwistedProblem::new(bg.clone(), f.clone())?;
    problem.check_field(phi)?;
    problem.check_field(u)?;
    let eval = problem.evaluate(&problem.derivatives(phi), t)?;
    phi.like(problem.apply_linear(&eval.coefficients, u.values()))
}

pub fn cone_guard(phi: &PeriodicField, bg: &FlatBackground) -> Result<ConeGuardField> {
    check_dimension(phi, bg)?;
    let problem = TwistedProblem::new(bg.clone(), phi.like(vec![0.0; phi.len()])?)?;
    Ok(problem.margins(&problem.derivatives(phi)))
}

/// Twist for which `phi_star` solves the path equation at `t = 1`.
pub fn manufactured_twist(phi_star: &PeriodicField, bg: &FlatBackground) -> Result<PeriodicField> {
    check_dimension(phi_star, bg)?;
    let problem = TwistedProblem::new(bg.clone(), phi_star.like(vec![0.0; phi_star.len()])?)?;
    phi_star.like(problem.induced_twist(&problem.derivatives(phi_star)))
}

/// Twist of the mass-concentration family, `f = det(χ_ψ)/det(χ₀) − 1 + A`
/// with `χ_ψ = χ₀ + i∂∂̄ψ` and `A` fixed by the compatibility condition.
pub fn mass_family_twist(psi: &PeriodicField, bg: &FlatBackground) -> Result<PeriodicField> {
    check_dimension(psi, bg)?;
    let grid = SpectralGrid::for_field(psi);
    let templates = hessian_templates(bg.n(), psi.active(), Some(bg.whitening()));
    let derivs = grid.second_derivatives(psi.values());
    let id = CMatrix::identity(bg.n(), bg.n());
    let mut ratio = Vec::with_capacity(psi.len());
    for idx in 0..psi.len() {
        let m = combine(&id, &templates, &derivs, idx);
        let eig = m.symmetric_eigenvalues();
        if eig.min() <= 0.0 {
            return Err(DhymError::Domain(format!("χ₀ + i∂∂̄ψ is not positive at grid point {idx}")));
        }
        ratio.push(eig.iter().product::<f64>() - 1.0);
    }
    let shift = bg.target_mean()? - ratio.iter().sum::<f64>() / ratio.len() as f64;
    psi.like(ratio.into_iter().map(|r| r + shift).collect())
}
