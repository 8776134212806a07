use crate::cone::{cone_membership, congruence, dhym_scalar_residual, real_diagonal, whitening, HermitianPair, PhaseSpec, Verdict};
use crate::error::{DhymError, Result};
use crate::forms::CMatrix;
use num_complex::Complex64;

/// Constant-coefficient data `(ω₀, χ₀, θ)` on a flat torus.
#[derive(Debug, Clone)]
pub struct FlatBackground {
    chi0: CMatrix,
    h0: CMatrix,
    phase: PhaseSpec,
    whitening: CMatrix,
    omega0: CMatrix,
}

impl FlatBackground {
    /// Requires `h0 ∈ Γ_{χ₀,θ}` (no condition when `n = 1`).
    pub fn new(h0: CMatrix, chi0: CMatrix, phase: PhaseSpec) -> Result<Self> {
        let pair = HermitianPair::new(h0.clone(), chi0.clone())?;
        let n = pair.n();
        if n > 1 {
            let report = cone_membership(&pair, &phase, n - 1)?;
            if report.member() != Verdict::Member {
                return Err(DhymError::Precondition(format!(
                    "background form is not in the cone (angle margin {:.3e})",
                    report.margins.angle[n - 2]
                )));
            }
        }
        let w = whitening(&chi0)?;
        let shifted = &h0 - &chi0 * Complex64::new(phase.cot(), 0.0);
        let omega0 = congruence(&w, &shifted);
        Ok(Self { chi0, h0, phase, whitening: w, omega0 })
    }

    /// Background with `χ₀ = I` and `Ω₀ = ω₀ − cot θ·χ₀ = diag(mu)`.
    pub fn diagonal(mu: &[f64], phase: PhaseSpec) -> Result<Self> {
        let c = phase.cot();
        let shifted: Vec<f64> = mu.iter().map(|m| m + c).collect();
        Self::new(real_diagonal(&shifted), CMatrix::identity(mu.len(), mu.len()), phase)
    }

    pub fn n(&self) -> usize {
        self.chi0.nrows()
    }

    pub fn chi0(&self) -> &CMatrix {
        &self.chi0
    }

    pub fn h0(&self) -> &CMatrix {
        &self.h0
    }

    pub fn phase(&self) -> &PhaseSpec {
        &self.phase
    }

    /// `L⁻¹` with `χ₀ = L L^H`.
    pub fn whitening(&self) -> &CMatrix {
        &self.whitening
    }

    /// `L⁻¹ (ω₀ − cot θ·χ₀) L^{-H}`.
    pub fn omega0_whitened(&self) -> &CMatrix {
        &self.omega0
    }

    /// `G^n_θ(ω₀, χ₀)/χ₀ⁿ`, the value every admissible twist must average to.
    pub fn target_mean(&self) -> Result<f64> {
        dhym_scalar_residual(&HermitianPair::new(self.h0.clone(), self.chi0.clone())?, &self.phase)
    }
}
