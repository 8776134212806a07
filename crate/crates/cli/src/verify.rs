use std::f64::consts::PI;
use std::fmt::Write as _;

use dhym_core::lab::{
    bound_constants, perturbation_constants, random_audits, sample_constraint_and_verify_g, verify_bound_constants,
    verify_degentonon, verify_perturb1, verify_phase_lift, verify_sinelem, verify_sumbound, BackgroundDraw,
    DegenConfig, SuiteReport,
};
use dhym_core::mollify::{build_kernel, lelong_level, LogPole};
use dhym_core::numeric::cot;

use crate::table::write_csv;
use crate::{CliError, RunConfig};

pub const SUITES_CSV: &str = "suites.csv";
pub const INF_G_CSV: &str = "inf_g.csv";

pub const SUITES: [&str; 9] = [
    "sinelem",
    "perturb1",
    "bound",
    "discpos",
    "quadratic",
    "sumbound",
    "degentonon",
    "phase_lift",
    "lelong",
];

/// Suites whose outcome is recorded but never fails the run.
const REPORTED_ONLY: [&str; 1] = ["quadratic"];

/// Sums sub-runs of one suite into a single row.
fn combine(name: &str, seed: u64, parts: &[SuiteReport]) -> SuiteReport {
    SuiteReport {
        name: name.to_string(),
        trials: parts.iter().map(|p| p.trials).sum(),
        checked: parts.iter().map(|p| p.checked).sum(),
        violations: parts.iter().map(|p| p.violations).sum(),
        worst_margin: parts.iter().map(|p| p.worst_margin).fold(f64::INFINITY, f64::min),
        seed,
    }
}

fn core(e: dhym_core::DhymError) -> CliError {
    CliError::Failed(format!("suite setup failed: {e}"))
}

/// Twenty phases evenly spaced in `[0.1, π − 0.1]`.
pub fn theta_sweep() -> Vec<f64> {
    (0..20).map(|i| 0.1 + (PI - 0.2) * i as f64 / 19.0).collect()
}

struct Ctx<'a> {
    seed: u64,
    trials: usize,
    /// `(θ, inf g)` rows from the discriminant suite.
    inf_g: &'a mut Vec<Vec<f64>>,
}

impl Ctx<'_> {
    fn sub_seed(&self, j: usize) -> u64 {
        self.seed.wrapping_add(j as u64)
    }
}

fn run_suite(name: &str, ctx: &mut Ctx) -> Result<Vec<SuiteReport>, CliError> {
    let trials = ctx.trials;
    let mut parts = Vec::new();
    match name {
        "sinelem" => {
            for k in 0..=4 {
                parts.push(verify_sinelem(k, trials, ctx.sub_seed(k)));
            }
        }
        "perturb1" => {
            let mut j = 0;
            for theta in [PI / 3.0, PI / 2.0, 3.0 * PI / 4.0] {
                for eps1 in [0.05, 0.2] {
                    for n in [2, 3] {
                        let budget = perturbation_constants(theta, eps1, n).map_err(core)?;
                        parts.push(verify_perturb1(&budget, BackgroundDraw::Mixed, trials, ctx.sub_seed(j)).map_err(core)?);
                        j += 1;
                    }
                }
            }
        }
        "bound" => {
            for (j, theta) in [PI / 3.0, PI / 2.0, 3.0 * PI / 4.0].into_iter().enumerate() {
                let bc = bound_constants(theta, theta / 4.0, 3).map_err(core)?;
                let (a, b) = verify_bound_constants(&bc, trials, ctx.sub_seed(j)).map_err(core)?;
                parts.extend([a, b]);
            }
        }
        "discpos" => {
            for (j, theta) in theta_sweep().into_iter().enumerate() {
                let report = sample_constraint_and_verify_g(theta, trials, ctx.sub_seed(j)).map_err(core)?;
                ctx.inf_g.push(vec![theta, report.worst_margin]);
                parts.push(report);
            }
        }
        "quadratic" => {
            for (j, theta) in [0.4, 1.0, PI / 2.0, 2.2, 2.8].into_iter().enumerate() {
                let audits = random_audits(theta, trials, ctx.sub_seed(j));
                let margins = audits.iter().map(|a| {
                    let gap = (a.min_closed - a.min_direct).abs();
                    Some(1e-8 * (1.0 + a.min_direct.abs()) - gap)
                });
                let r = SuiteReport::from_margins(&format!("quadratic_theta{theta:.4}"), trials, ctx.sub_seed(j), margins);
                parts.push(r);
            }
        }
        "sumbound" => {
            for (j, theta) in [PI / 3.0, PI / 2.0, 2.0 * PI / 3.0].into_iter().enumerate() {
                let eps = 1.0 / theta.sin() - cot(theta).abs();
                parts.push(verify_sumbound(theta, eps, 0.25 * eps, trials, ctx.sub_seed(j)).map_err(core)?);
            }
        }
        "degentonon" => {
            let config = DegenConfig { theta: 2.0, n: 3, m: 2, big_a: 1.0, a: 0.5, big_n: 4 };
            parts.push(verify_degentonon(&config, trials, ctx.seed).map_err(core)?.suite);
        }
        "phase_lift" => {
            for (j, (theta, upper)) in [(PI / 2.0, 3.0 * PI / 4.0), (2.0, 2.6), (1.0, 1.5)].into_iter().enumerate() {
                parts.push(verify_phase_lift(theta, upper, trials, ctx.sub_seed(j)).map_err(core)?);
            }
        }
        "lelong" => parts.push(lelong_suite(ctx.seed)?),
        other => return Err(CliError::Usage(format!("unknown suite {other:?}; known: {}", SUITES.join(", ")))),
    }
    Ok(parts)
}

/// Lelong numbers of `c·log|z|` at levels `δ ∈ {1e−1, 1e−2}` and both
/// level inequalities. The margin is `1e−3 − |ν − c|` when the inequalities
/// hold, otherwise the most negative slack.
fn lelong_suite(seed: u64) -> Result<SuiteReport, CliError> {
    let mut margins = Vec::new();
    for n in 1..=3 {
        let kernel = build_kernel(n).map_err(core)?;
        for c in [0.5, 1.0, 1.7, 3.0] {
            let pole = LogPole::at_origin(n, c);
            for delta in [1e-1, 1e-2] {
                let est = lelong_level(&pole, &kernel, &vec![0.0; 2 * n], delta, 1.0, 2.0).map_err(core)?;
                // a pole saturates ν log a, so the inequalities carry a rounding allowance
                let margin = if est.holds(kernel.a_n()) {
                    1e-3 - (est.nu - c).abs()
                } else {
                    est.scale_slack().min(est.mean_slack(kernel.a_n()))
                };
                margins.push(Some(margin));
            }
        }
    }
    Ok(SuiteReport::from_margins("lelong", margins.len(), seed, margins))
}

/// Test-only harness check: flips the predicate, so every checked trial of
/// an asserted suite becomes a violation.
fn negate(mut r: SuiteReport) -> SuiteReport {
    r.violations = r.checked - r.violations;
    r.worst_margin = -r.worst_margin;
    r
}

pub fn cmd_verify(run: &RunConfig, requested: &[String]) -> Result<(), CliError> {
    let cfg = &run.config;
    let default_trials: usize = cfg.get_or("trials", 10_000)?;
    let per_suite: Vec<Option<usize>> =
        SUITES.iter().map(|s| cfg.get(&format!("trials_{s}"))).collect::<Result<_, _>>()?;
    let from_file = cfg.list::<String>("suites")?;
    let inject_fault = cfg.flag("inject_fault")?;
    cfg.finish()?;

    let names: Vec<String> = if !requested.is_empty() {
        requested.to_vec()
    } else {
        from_file.unwrap_or_else(|| SUITES.iter().map(|s| s.to_string()).collect())
    };
    for name in &names {
        if !SUITES.contains(&name.as_str()) {
            return Err(CliError::Usage(format!("unknown suite {name:?}; known: {}", SUITES.join(", "))));
        }
    }

    let mut inf_g = Vec::new();
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    let mut out = String::new();
    for name in &names {
        let idx = SUITES.iter().position(|s| s == name).expect("validated above");
        let trials = per_suite[idx].unwrap_or(default_trials);
        let mut ctx = Ctx { seed: run.seed, trials, inf_g: &mut inf_g };
        let parts = run_suite(name, &mut ctx)?;
        for p in &parts {
            log::info!("{p}");
        }
        let reported_only = REPORTED_ONLY.contains(&name.as_str());
        let mut report = combine(name, run.seed, &parts);
        if inject_fault && !reported_only {
            report = negate(report);
        }
        let verdict = match (reported_only, report.passed()) {
            (true, _) => "REPORTED",
            (false, true) => "PASS",
            (false, false) => {
                failed.push(name.clone());
                "FAIL"
            }
        };
        let _ = writeln!(out, "{verdict} {report} acceptance {:.3}", report.acceptance_rate());
        rows.push(report.csv_row());
    }

    let path = run.out_dir.join(SUITES_CSV);
    let mut text = format!("{}\n", SuiteReport::CSV_HEADER);
    for row in &rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    if !inf_g.is_empty() {
        write_csv(&run.out_dir.join(INF_G_CSV), &["theta", "inf_g"], inf_g)?;
    }
    print!("{out}");
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("violations in {}", failed.join(", "))))
    }
}
