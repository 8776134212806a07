//! Bordered Newton–Krylov steps and the continuity path in `t`.

use super::background::FlatBackground;
use super::field::PeriodicField;
use super::gmres::gmres;
use super::operator::{Evaluation, TwistedProblem};
use crate::error::{DhymError, Result};
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Sup norm of `R − mean R` at which a Newton solve is accepted.
    pub newton_tol: f64,
    /// Largest accepted `|mean R|`, the discrete compatibility defect.
    pub compat_tol: f64,
    pub max_newton_iters: usize,
    /// Relative GMRES tolerance far from convergence.
    pub linear_tol: f64,
    /// Relative GMRES tolerance once the residual drops below `tight_below`.
    pub linear_tol_tight: f64,
    pub tight_below: f64,
    pub gmres_restart: usize,
    pub gmres_max_iters: usize,
    /// Damped steps shorter than this count as a line-search failure.
    pub min_damping: f64,
    pub t_step_initial: f64,
    pub t_step_max: f64,
    pub t_step_min: f64,
    /// Newton solves finishing in at most this many iterations double the step.
    pub fast_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-11,
            compat_tol: 1e-10,
            max_newton_iters: 30,
            linear_tol: 1e-3,
            linear_tol_tight: 1e-10,
            tight_below: 1e-5,
            gmres_restart: 40,
            gmres_max_iters: 400,
            min_damping: 1e-6,
            t_step_initial: 0.25,
            t_step_max: 1.0,
            t_step_min: 1e-6,
            fast_iters: 4,
        }
    }
}

/// One accepted (or trial) point on the continuity path.
#[derive(Debug, Clone)]
pub struct ContinuityState {
    pub t: f64,
    /// Mean-zero potential.
    pub phi: PeriodicField,
    /// `d_t` in the original normalization of the twist.
    pub d_t: f64,
    /// Sup norm of `R − mean R`; the mean is absorbed by the bordering constant.
    pub residual_norm: f64,
    /// Grid average of the residual.
    pub residual_mean: f64,
    pub cone_margin: f64,
    /// Bordering constant of the last Newton step.
    pub slack: f64,
    pub newton_iters: usize,
    /// Residual sup norms before each Newton step and after the last.
    pub history: Vec<f64>,
    /// Damping factor accepted at each Newton step.
    pub dampings: Vec<f64>,
}

impl ContinuityState {
    /// State at `phi` without any Newton steps.
    pub fn at(problem: &TwistedProblem, phi: PeriodicField, t: f64) -> Result<Self> {
        problem.check_field(&phi)?;
        let eval = problem.evaluate(&problem.derivatives(&phi), t)?;
        Ok(Self::from_eval(problem, phi, t, &eval, 0.0, 0, Vec::new()))
    }

    fn from_eval(
        problem: &TwistedProblem,
        phi: PeriodicField,
        t: f64,
        eval: &Evaluation,
        slack: f64,
        newton_iters: usize,
        mut history: Vec<f64>,
    ) -> Self {
        let residual_norm = oscillation(&eval.residual);
        history.push(residual_norm);
        Self {
            t,
            phi,
            d_t: problem.d_t(t),
            residual_norm,
            residual_mean: eval.residual.iter().sum::<f64>() / eval.residual.len() as f64,
            cone_margin: eval.margins.cone_margin(),
            slack,
            newton_iters,
            history,
            dampings: Vec::new(),
        }
    }
}

/// Summary row of an accepted path state.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEntry {
    pub t: f64,
    pub d_t: f64,
    pub residual: f64,
    pub residual_mean: f64,
    pub cone_margin: f64,
    pub slack: f64,
    pub newton_iters: usize,
}

impl From<&ContinuityState> for PathEntry {
    fn from(s: &ContinuityState) -> Self {
        Self {
            t: s.t,
            d_t: s.d_t,
            residual: s.residual_norm,
            residual_mean: s.residual_mean,
            cone_margin: s.cone_margin,
            slack: s.slack,
            newton_iters: s.newton_iters,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub path: Vec<PathEntry>,
    pub final_state: ContinuityState,
    pub final_residual: f64,
    /// Sum of Lagrangian angles at the solution.
    pub phase_field: PeriodicField,
    /// Whether the solution lies in `Γ_{χ,θ,Θ}` everywhere, when `Θ` was given.
    pub in_theta_upper: Option<bool>,
    pub rejected_steps: usize,
}

/// Newton iteration for the path equation at `state.t`, started from `state.phi`.
pub fn newton_at_t(state: &ContinuityState, f: &PeriodicField, bg: &FlatBackground, config: &SolverConfig) -> Result<ContinuityState> {
    let problem = TwistedProblem::new(bg.clone(), f.clone())?;
    newton_solve(&problem, state.phi.clone(), state.t, config)
}

pub fn newton_solve(problem: &TwistedProblem, phi: PeriodicField, t: f64, config: &SolverConfig) -> Result<ContinuityState> {
    problem.check_field(&phi)?;
    let mut phi = phi.minus_mean();
    let mut derivs = problem.derivatives(&phi);
    let mut eval = problem.evaluate(&derivs, t)?;
    let mut history = Vec::new();
    let mut slack = 0.0;
    let mut dampings = Vec::new();
    for iter in 0..=config.max_newton_iters {
        let r = oscillation(&eval.residual);
        if r <= config.newton_tol {
            let mean = eval.residual.iter().sum::<f64>() / eval.residual.len() as f64;
            if mean.abs() > config.compat_tol {
                return Err(DhymError::NonConvergence {
                    t,
                    step: 0.0,
                    reason: format!("discrete compatibility defect {mean:.3e} exceeds {:.1e}", config.compat_tol),
                });
            }
            let mut state = ContinuityState::from_eval(problem, phi, t, &eval, slack, iter, history);
            state.dampings = dampings;
            return Ok(state);
        }
        if iter == config.max_newton_iters || !r.is_finite() {
            break;
        }
        history.push(r);
        let tol = if r < config.tight_below { config.linear_tol_tight } else { config.linear_tol };
        let (u, b) = bordered_solve(problem, &eval, tol, config)?;
        let u_field = phi.like(u)?;
        let u_derivs = problem.derivatives(&u_field);

        let mut s = 1.0;
        loop {
            let trial: Vec<Vec<f64>> = derivs
                .iter()
                .zip(&u_derivs)
                .map(|(d, du)| d.iter().zip(du).map(|(a, b)| a + s * b).collect())
                .collect();
            match problem.evaluate(&trial, t) {
                Ok(next) => {
                    phi = phi.axpy(s, &u_field);
                    derivs = trial;
                    eval = next;
                    break;
                }
                Err(DhymError::ConeViolation { .. }) => {
                    s *= 0.5;
                    if s < config.min_damping {
                        return Err(DhymError::StepFailure { step: s });
                    }
                }
                Err(e) => return Err(e),
            }
        }
        log::debug!("t = {t:.6}: newton step {iter} residual {r:.3e} damping {s} slack {b:.3e}");
        slack = b;
        dampings.push(s);
    }
    Err(DhymError::NonConvergence {
        t,
        step: 0.0,
        reason: format!("Newton iteration limit reached with residual {:.3e}", oscillation(&eval.residual)),
    })
}

/// Solves `L u + b = −R`, `mean(u) = 0` by right-preconditioned GMRES. The
/// preconditioner inverts the constant-coefficient operator with the
/// mean coefficients, sending the mean mode to `b`.
fn bordered_solve(problem: &TwistedProblem, eval: &Evaluation, tol: f64, config: &SolverConfig) -> Result<(Vec<f64>, f64)> {
    let grid = problem.grid();
    let len = grid.len();
    let means: Vec<f64> = eval.coefficients.iter().map(|c| c.iter().sum::<f64>() / len as f64).collect();
    let symbol: Vec<f64> = (0..len)
        .map(|idx| {
            problem
                .pairs()
                .iter()
                .zip(&means)
                .map(|(&(p, q), m)| m * grid.second_derivative_symbol(idx, p, q))
                .sum()
        })
        .collect();
    let scale = symbol.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let precondition = |y: &[f64]| -> (Vec<f64>, f64) {
        if len == 1 {
            return (vec![0.0], y[0]);
        }
        let mut spec = grid.forward(y);
        let b = spec[0].re / len as f64;
        spec[0] = Complex64::new(0.0, 0.0);
        for (c, s) in spec.iter_mut().zip(&symbol).skip(1) {
            if s.abs() > 1e-13 * scale {
                *c /= *s;
            } else {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        (grid.inverse_real(spec), b)
    };
    let op = |y: &[f64]| -> Vec<f64> {
        let (u, b) = precondition(y);
        let mut out = problem.apply_linear(&eval.coefficients, &u);
        out.iter_mut().for_each(|v| *v += b);
        out
    };
    let rhs: Vec<f64> = eval.residual.iter().map(|r| -r).collect();
    let (y, outcome) = gmres(op, &rhs, tol, config.gmres_restart, config.gmres_max_iters);
    if !outcome.converged {
        return Err(DhymError::LinearStagnation {
            residual: outcome.relative_residual,
            iterations: outcome.iterations,
        });
    }
    Ok(precondition(&y))
}

/// Continuity driver: marches `t` from 0 to 1 from `φ = 0`.
pub struct ContinuitySolver {
    problem: TwistedProblem,
    config: SolverConfig,
    upper_phase: Option<f64>,
    path: Vec<ContinuityState>,
    rejected: usize,
}

impl ContinuitySolver {
    /// Checks compatibility `mean f = G^n(ω₀,χ₀)/χ₀ⁿ`, `mean f ≥ 0` and the
    /// lower bound on `f` before anything is solved.
    pub fn new(f: PeriodicField, bg: FlatBackground, config: SolverConfig) -> Result<Self> {
        check_twist(&f, &bg)?;
        let upper_phase = bg.phase().upper();
        Ok(Self {
            problem: TwistedProblem::new(bg, f)?,
            config,
            upper_phase,
            path: Vec::new(),
            rejected: 0,
        })
    }

    pub fn problem(&self) -> &TwistedProblem {
        &self.problem
    }

    /// Accepted states so far.
    pub fn path(&self) -> &[ContinuityState] {
        &self.path
    }

    pub fn run(&mut self) -> Result<SolveReport> {
        let cfg = self.config.clone();
        let zero = self.problem.twist().like(vec![0.0; self.problem.twist().len()])?;
        let start = newton_solve(&self.problem, zero, 0.0, &cfg).map_err(|e| DhymError::NonConvergence {
            t: 0.0,
            step: 0.0,
            reason: format!("start of the path failed: {e}"),
        })?;
        self.path.push(start);
        let mut step = cfg.t_step_initial.min(cfg.t_step_max);
        loop {
            let current = self.path.last().expect("path has a start");
            if current.t >= 1.0 {
                break;
            }
            let t_next = (current.t + step).min(1.0);
            match newton_solve(&self.problem, current.phi.clone(), t_next, &cfg) {
                Ok(state) => {
                    if state.newton_iters <= cfg.fast_iters {
                        step = (2.0 * step).min(cfg.t_step_max);
                    }
                    self.path.push(state);
                }
                Err(e) => {
                    log::info!("step to t = {t_next:.6} rejected: {e}");
                    self.rejected += 1;
                    step *= 0.5;
                    if step < cfg.t_step_min {
                        return Err(DhymError::NonConvergence {
                            t: current.t,
                            step,
                            reason: e.to_string(),
                        });
                    }
                }
            }
        }
        let final_state = self.path.last().expect("path has a start").clone();
        let derivs = self.problem.derivatives(&final_state.phi);
        let phase_field = final_state.phi.like(self.problem.phase_field(&derivs))?;
        let in_theta_upper = self.upper_phase.map(|big| phase_field.values().iter().all(|&s| s < big));
        Ok(SolveReport {
            path: self.path.iter().map(PathEntry::from).collect(),
            final_residual: final_state.residual_norm,
            final_state,
            phase_field,
            in_theta_upper,
            rejected_steps: self.rejected,
        })
    }
}

pub fn continuity_run(f: &PeriodicField, bg: &FlatBackground, config: &SolverConfig) -> Result<SolveReport> {
    ContinuitySolver::new(f.clone(), bg.clone(), config.clone())?.run()
}

/// Lower bound the twist must exceed pointwise, in the original normalization.
pub fn twist_lower_bound(bg: &FlatBackground) -> Option<f64> {
    let phase = bg.phase();
    match bg.n() {
        1 => None,
        2 => Some(-phase.csc2()),
        // f̃ > −(csc θ − |cot θ|) with f = 2csc²θ·f̃
        _ => Some(-2.0 * phase.csc2() * (phase.csc() - phase.cot().abs())),
    }
}

pub fn check_twist(f: &PeriodicField, bg: &FlatBackground) -> Result<()> {
    if f.n() != bg.n() {
        return Err(DhymError::Shape("twist and background dimensions differ".into()));
    }
    let target = bg.target_mean()?;
    let mean = f.mean();
    if (mean - target).abs() > 1e-8 * (1.0 + target.abs()) {
        return Err(DhymError::Precondition(format!(
            "mean of the twist {mean:.12e} differs from the background integral {target:.12e}"
        )));
    }
    if mean < -1e-12 {
        return Err(DhymError::Precondition(format!("mean of the twist {mean:.3e} is negative")));
    }
    if let Some(bound) = twist_lower_bound(bg) {
        let low = f.min();
        if low <= bound {
            return Err(DhymError::Precondition(format!(
                "twist reaches {low:.6e}, not above the admissible bound {bound:.6e}"
            )));
        }
    }
    Ok(())
}

fn oscillation(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().fold(0.0f64, |m, x| m.max((x - mean).abs()))
}

