//! Continuity-method solver for the twisted equation on flat complex tori of
//! dimension 1, 2 and 3 with constant background data.

mod background;
mod field;
mod gmres;
mod operator;
mod solver;

pub use background::FlatBackground;
pub use field::{derivative_pairs, PeriodicField, SpectralGrid, MAX_ACTIVE};
pub use gmres::{gmres, GmresOutcome};
pub use operator::{
    complex_hessian, cone_guard, hessian_templates, linearized_apply, manufactured_twist, mass_family_twist,
    residual_field, scalar_from_omega_eigenvalues, ConeGuardField, Evaluation, HessianField, PointMargins,
    TwistedProblem, ALIASING_THRESHOLD,
};
pub use solver::{
    check_twist, continuity_run, newton_at_t, newton_solve, twist_lower_bound, ContinuitySolver, ContinuityState,
    PathEntry, SolveReport, SolverConfig,
};

use crate::error::{DhymError, Result};

/// Outcome of the phase-interval certification.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCheck {
    pub upper: f64,
    /// Twist level above which the solution must lie in `Γ_{χ,θ,Θ}`.
    pub threshold: f64,
    /// Whether `f > −threshold` everywhere.
    pub twist_admissible: bool,
    pub max_angle_sum: f64,
    /// Largest angle sum over points with `f ≥ 0`, if any.
    pub max_angle_sum_nonneg: Option<f64>,
    /// `Σθᵢ < Θ` at every grid point.
    pub below_upper: bool,
    /// `Σθᵢ ≤ θ + 1e−9` wherever `f ≥ 0`.
    pub nonneg_below_theta: bool,
}

impl PhaseCheck {
    /// The certificate: both conclusions hold, or the twist is outside the
    /// regime where they are promised.
    pub fn passed(&self) -> bool {
        self.nonneg_below_theta && (self.below_upper || !self.twist_admissible)
    }
}

/// `sin((Θ − θ)/2)/sin θ` for `n > 1`, `cot θ − cot Θ` for `n = 1`.
pub fn phase_lift_threshold(n: usize, theta: f64, upper: f64) -> f64 {
    if n == 1 {
        crate::numeric::cot(theta) - crate::numeric::cot(upper)
    } else {
        (0.5 * (upper - theta)).sin() / theta.sin()
    }
}

pub fn phase_interval_check(phi: &PeriodicField, f: &PeriodicField, bg: &FlatBackground, upper: f64) -> Result<PhaseCheck> {
    let theta = bg.phase().theta();
    if !(upper > theta && upper < std::f64::consts::PI) {
        return Err(DhymError::Phase(format!("upper phase {upper} not in (theta, pi)")));
    }
    let problem = TwistedProblem::new(bg.clone(), f.clone())?;
    problem.check_field(phi)?;
    let sums = problem.phase_field(&problem.derivatives(phi));
    let threshold = phase_lift_threshold(bg.n(), theta, upper);
    let max_angle_sum = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_angle_sum_nonneg = sums
        .iter()
        .zip(f.values())
        .filter(|(_, &fx)| fx >= 0.0)
        .map(|(&s, _)| s)
        .reduce(f64::max);
    Ok(PhaseCheck {
        upper,
        threshold,
        twist_admissible: f.values().iter().all(|&fx| fx > -threshold),
        max_angle_sum,
        max_angle_sum_nonneg,
        below_upper: max_angle_sum < upper,
        nonneg_below_theta: max_angle_sum_nonneg.is_none_or(|s| s <= theta + 1e-9),
    })
}
