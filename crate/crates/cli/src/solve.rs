use std::fmt::Write as _;
use std::path::Path;

use dhym_core::cone::PhaseSpec;
use dhym_core::forms::CMatrix;
use dhym_core::torus::{
    continuity_run, manufactured_twist, mass_family_twist, phase_interval_check, FlatBackground, PeriodicField,
    SolveReport, SolverConfig,
};
use dhym_core::DhymError;
use num_complex::Complex64;

use crate::config::Config;
use crate::table::{read_field, write_csv, write_field};
use crate::{CliError, RunConfig};

pub const PATH_LOG: &str = "path_log.csv";
pub const PHI: &str = "phi.csv";
pub const PHASE: &str = "phase.csv";
pub const TWIST: &str = "twist.csv";
pub const ERROR_TABLE: &str = "error.csv";
pub const DIAGNOSTICS: &str = "diagnostics.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TwistMode {
    Manufactured,
    MassFamily,
    Csv,
}

struct Setup {
    bg: FlatBackground,
    upper: Option<f64>,
    active: Vec<usize>,
    sizes: Vec<usize>,
    mode: TwistMode,
    potential: String,
    amplitude: f64,
    twist_file: Option<std::path::PathBuf>,
    solver: SolverConfig,
    tolerance: f64,
    convergence_grids: Vec<usize>,
}

fn complex_matrix(cfg: &Config, key: &str, n: usize) -> Result<Option<CMatrix>, CliError> {
    let Some(re) = cfg.list::<f64>(key)? else {
        if cfg.raw(&format!("{key}_im")).is_some() {
            return Err(CliError::Config(format!("{key}_im given without {key}")));
        }
        return Ok(None);
    };
    let im = cfg.list::<f64>(&format!("{key}_im"))?.unwrap_or_else(|| vec![0.0; n * n]);
    if re.len() != n * n || im.len() != n * n {
        return Err(CliError::Config(format!("{key} needs {} row-major entries", n * n)));
    }
    let entries: Vec<Complex64> = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
    Ok(Some(CMatrix::from_row_slice(n, n, &entries)))
}

fn read_setup(cfg: &Config) -> Result<Setup, CliError> {
    let n: usize = cfg.require("n")?;
    let theta: f64 = cfg.require("theta")?;
    let upper: Option<f64> = cfg.get("Theta")?;
    let phase = match upper {
        Some(u) => PhaseSpec::with_upper(theta, u),
        None => PhaseSpec::new(theta),
    }
    .map_err(CliError::config)?;

    let mu = cfg.list::<f64>("mu")?;
    let omega0 = complex_matrix(cfg, "omega0", n)?;
    let chi0 = complex_matrix(cfg, "chi0", n)?;
    let bg = match (mu, omega0) {
        (Some(mu), None) => {
            if chi0.is_some() {
                return Err(CliError::Config("mu fixes chi0 = I; drop chi0 or give omega0".into()));
            }
            if mu.len() != n {
                return Err(CliError::Config(format!("mu needs {n} entries")));
            }
            FlatBackground::diagonal(&mu, phase)
        }
        (None, Some(h0)) => FlatBackground::new(h0, chi0.unwrap_or_else(|| CMatrix::identity(n, n)), phase),
        _ => return Err(CliError::Config("give exactly one of mu or omega0".into())),
    }
    .map_err(CliError::config)?;

    let active = cfg.list::<usize>("active")?.unwrap_or_else(|| vec![0, 1]);
    let grid = cfg.list::<usize>("grid")?.unwrap_or_else(|| vec![32]);
    let sizes = match grid.len() {
        1 => vec![grid[0]; active.len()],
        k if k == active.len() => grid,
        _ => return Err(CliError::Config("grid needs one size or one per active coordinate".into())),
    };

    let mode = match cfg.require::<String>("twist")?.as_str() {
        "manufactured" => TwistMode::Manufactured,
        "mass_family" => TwistMode::MassFamily,
        "csv" => TwistMode::Csv,
        other => return Err(CliError::Config(format!("unknown twist mode {other:?}"))),
    };
    let potential = cfg.get_or("potential", "smooth".to_string())?;
    let amplitude = cfg.get_or("amplitude", 0.3)?;
    let twist_file = cfg.path("twist_file");
    if (mode == TwistMode::Csv) != twist_file.is_some() {
        return Err(CliError::Config("twist_file is required for, and only for, twist = csv".into()));
    }

    let d = SolverConfig::default();
    let solver = SolverConfig {
        newton_tol: cfg.get_or("newton_tol", d.newton_tol)?,
        compat_tol: cfg.get_or("compat_tol", d.compat_tol)?,
        max_newton_iters: cfg.get_or("max_newton_iters", d.max_newton_iters)?,
        linear_tol: cfg.get_or("linear_tol", d.linear_tol)?,
        t_step_initial: cfg.get_or("t_step_initial", d.t_step_initial)?,
        t_step_max: cfg.get_or("t_step_max", d.t_step_max)?,
        t_step_min: cfg.get_or("t_step_min", d.t_step_min)?,
        ..d
    };
    let tolerance = cfg.get_or("tolerance", solver.newton_tol)?;
    let convergence_grids = cfg.list::<usize>("convergence_grids")?.unwrap_or_default();
    if !convergence_grids.is_empty() && mode != TwistMode::Manufactured {
        return Err(CliError::Config("convergence_grids needs twist = manufactured".into()));
    }
    Ok(Setup {
        bg,
        upper,
        active,
        sizes,
        mode,
        potential,
        amplitude,
        twist_file,
        solver,
        tolerance,
        convergence_grids,
    })
}

/// Potential catalogue for the manufactured and mass-family twists.
fn potential(id: &str, amp: f64) -> Result<impl Fn(&[f64]) -> f64, CliError> {
    let kind = match id {
        "smooth" => 0,
        "cosine" => 1,
        _ => return Err(CliError::Config(format!("unknown potential {id:?} (smooth, cosine)"))),
    };
    Ok(move |c: &[f64]| {
        let (x, y) = (c[0], c.get(1).copied().unwrap_or(0.0));
        match kind {
            0 => amp * (x.cos() + 0.5 * (y + 0.3).sin() + 0.25 * (x - 2.0 * y).cos()),
            _ => amp * (x.cos() + y.cos()),
        }
    })
}

fn sampled(setup: &Setup, sizes: &[usize]) -> Result<PeriodicField, CliError> {
    let g = potential(&setup.potential, setup.amplitude)?;
    PeriodicField::from_fn(setup.bg.n(), &setup.active, sizes, g).map_err(CliError::config)
}

/// Twist on `sizes`, and the exact solution when it is known.
fn twist(setup: &Setup, sizes: &[usize]) -> Result<(PeriodicField, Option<PeriodicField>), CliError> {
    match setup.mode {
        TwistMode::Manufactured => {
            let phi_star = sampled(setup, sizes)?;
            let f = manufactured_twist(&phi_star, &setup.bg).map_err(CliError::config)?;
            Ok((f, Some(phi_star.minus_mean())))
        }
        TwistMode::MassFamily => {
            let f = mass_family_twist(&sampled(setup, sizes)?, &setup.bg).map_err(CliError::config)?;
            Ok((f, None))
        }
        TwistMode::Csv => {
            let template = PeriodicField::zeros(setup.bg.n(), &setup.active, sizes).map_err(CliError::config)?;
            let path = setup.twist_file.as_ref().expect("checked in read_setup");
            Ok((read_field(path, &template)?, None))
        }
    }
}

fn solve_error(e: DhymError) -> CliError {
    match e {
        DhymError::Precondition(_) | DhymError::Phase(_) | DhymError::Shape(_) | DhymError::Dimension(_) => {
            CliError::Config(format!("rejected before solving: {e}"))
        }
        other => CliError::Failed(format!("solve failed: {other}")),
    }
}

fn write_path_log(dir: &Path, report: &SolveReport) -> Result<(), CliError> {
    let rows = report
        .path
        .iter()
        .map(|p| vec![p.t, p.d_t, p.residual, p.cone_margin, p.newton_iters as f64]);
    write_csv(&dir.join(PATH_LOG), &["t", "d_t", "residual", "cone_margin", "newton_iters"], rows)
}

fn write_diagnostics(dir: &Path, text: &str) -> Result<(), CliError> {
    let path = dir.join(DIAGNOSTICS);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

pub fn cmd_solve(run: &RunConfig) -> Result<(), CliError> {
    match solve_inner(run) {
        Ok(failures) if failures.is_empty() => Ok(()),
        Ok(failures) => Err(CliError::Failed(failures.join("; "))),
        Err(e) => {
            write_diagnostics(&run.out_dir, &format!("status: error\nexit_code: {}\nerror: {e}\n", e.code()))?;
            Err(e)
        }
    }
}

/// Solves and writes artifacts; returns the failed checks.
fn solve_inner(run: &RunConfig) -> Result<Vec<String>, CliError> {
    let dir = &run.out_dir;
    let setup = read_setup(&run.config)?;
    run.config.finish()?;

    let (f, exact) = twist(&setup, &setup.sizes)?;
    write_field(&dir.join(TWIST), &f, "f")?;
    let report = continuity_run(&f, &setup.bg, &setup.solver).map_err(solve_error)?;
    write_path_log(dir, &report)?;
    write_field(&dir.join(PHI), &report.final_state.phi, "phi")?;
    write_field(&dir.join(PHASE), &report.phase_field, "angle_sum")?;

    let mut diag = String::new();
    let mut failures = Vec::new();
    let _ = writeln!(diag, "n: {}", setup.bg.n());
    let _ = writeln!(diag, "grid: {:?} on coordinates {:?}", setup.sizes, setup.active);
    let _ = writeln!(diag, "path_states: {}", report.path.len());
    let _ = writeln!(diag, "rejected_steps: {}", report.rejected_steps);
    let _ = writeln!(diag, "final_residual: {:.6e} (tolerance {:.3e})", report.final_residual, setup.tolerance);
    let min_margin = report.path.iter().map(|p| p.cone_margin).fold(f64::INFINITY, f64::min);
    let _ = writeln!(diag, "min_cone_margin: {min_margin:.6e}");
    if !(report.final_residual <= setup.tolerance) {
        failures.push("final residual above tolerance".to_string());
    }

    if let Some(upper) = setup.upper {
        let check = phase_interval_check(&report.final_state.phi, &f, &setup.bg, upper).map_err(CliError::config)?;
        let _ = writeln!(
            diag,
            "phase_check: upper {:.6}, threshold {:.6e}, twist_admissible {}, max_angle_sum {:.12}, passed {}",
            check.upper,
            check.threshold,
            check.twist_admissible,
            check.max_angle_sum,
            check.passed()
        );
        if !check.passed() {
            failures.push("phase interval check failed".to_string());
        }
    }

    if let Some(exact) = exact {
        let mut table = vec![(setup.sizes[0], report.final_state.phi.axpy(-1.0, &exact).sup_norm())];
        for &m in &setup.convergence_grids {
            let sizes = vec![m; setup.active.len()];
            let (f, exact) = twist(&setup, &sizes)?;
            let r = continuity_run(&f, &setup.bg, &setup.solver).map_err(solve_error)?;
            let exact = exact.expect("manufactured twist has an exact solution");
            table.push((m, r.final_state.phi.axpy(-1.0, &exact).sup_norm()));
        }
        table.sort_by_key(|&(m, _)| m);
        table.dedup_by_key(|&mut (m, _)| m);
        for (m, err) in &table {
            let _ = writeln!(diag, "manufactured_error[{m}]: {err:.6e}");
        }
        write_csv(&run.out_dir.join(ERROR_TABLE), &["grid", "sup_error"], table.iter().map(|&(m, e)| vec![m as f64, e]))?;
    }

    let status = if failures.is_empty() { "ok" } else { "failed" };
    let _ = writeln!(diag, "status: {status}");
    for f in &failures {
        let _ = writeln!(diag, "failure: {f}");
    }
    write_diagnostics(dir, &diag)?;
    print!("{diag}");
    Ok(failures)
}
