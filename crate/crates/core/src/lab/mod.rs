//! Monte Carlo audits of the algebraic lemmas behind the cone conditions and
//! the Laplacian estimate.
//!
//! Every suite is deterministic given its 64-bit seed: trial `i` draws from a
//! ChaCha stream keyed by `(seed, i)`, so results do not depend on the number
//! of worker threads.

mod degenerate;
mod laplacian;
mod perturb;

pub use degenerate::*;
pub use laplacian::*;
pub use perturb::*;

use crate::cone::{cone_report_from_spectrum, EigenSpectrum, PhaseSpec, Verdict};
use crate::forms::CMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;

/// Summary of one seeded suite. A trial that checks something reports a
/// margin; a margin `≤ 0` is a violation.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub trials: usize,
    /// Trials that survived rejection and were checked.
    pub checked: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub seed: u64,
}

impl SuiteReport {
    pub const CSV_HEADER: &'static str = "name,trials,violations,worst_margin,seed";

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.checked > 0
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.checked as f64 / self.trials as f64
        }
    }

    /// Report over externally computed margins; `None` entries are discarded trials.
    pub fn from_margins(name: &str, trials: usize, seed: u64, margins: impl IntoIterator<Item = Option<f64>>) -> Self {
        merge(name, trials, seed, margins.into_iter())
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{:.6e},{}", self.name, self.trials, self.violations, self.worst_margin, self.seed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} trials, {} checked, {} violations, worst margin {:.3e} (seed {})",
            self.name, self.trials, self.checked, self.violations, self.worst_margin, self.seed
        )
    }
}

/// The generator for trial `index` of a suite seeded with `seed`.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs `trials` independent trials in parallel and merges them in index order.
/// `trial` returns `None` for a discarded sample.
pub(crate) fn run_suite<F>(name: &str, trials: usize, seed: u64, trial: F) -> SuiteReport
where
    F: Fn(usize, &mut ChaCha8Rng) -> Option<f64> + Sync,
{
    let margins: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| trial(i, &mut trial_rng(seed, i)))
        .collect();
    merge(name, trials, seed, margins.into_iter())
}

pub(crate) fn merge(name: &str, trials: usize, seed: u64, margins: impl Iterator<Item = Option<f64>>) -> SuiteReport {
    let mut report = SuiteReport {
        name: name.to_string(),
        trials,
        checked: 0,
        violations: 0,
        worst_margin: f64::INFINITY,
        seed,
    };
    for m in margins.flatten() {
        report.checked += 1;
        // NaN counts as a violation
        if !(m > 0.0) {
            report.violations += 1;
        }
        if m.is_nan() || m < report.worst_margin {
            report.worst_margin = m;
        }
    }
    report
}

/// Draws `±e^u` with `u` uniform in `[−span, span]`; negative with probability `negative`.
pub fn log_uniform_signed(rng: &mut impl Rng, span: f64, negative: f64) -> f64 {
    let magnitude = rng.random_range(-span..=span).exp();
    if rng.random_bool(negative) {
        -magnitude
    } else {
        magnitude
    }
}

/// Rejection sampler for spectra (eigenvalues of ω with respect to χ) whose
/// top-`m` angle sum is below `theta`. Returns `None` on rejection or when the
/// sample is too close to the cone boundary to classify.
pub fn sample_cone_spectrum(rng: &mut impl Rng, n: usize, m: usize, phase: &PhaseSpec) -> Option<EigenSpectrum> {
    let lambdas: Vec<f64> = (0..n).map(|_| log_uniform_signed(rng, 3.0, 0.25)).collect();
    let spec = EigenSpectrum::from_eigenvalues(lambdas);
    let report = cone_report_from_spectrum(&spec, phase, m);
    (report.member_gamma(m) == Verdict::Member).then_some(spec)
}

/// A random invertible complex matrix close to the identity in condition number.
pub fn random_frame(rng: &mut impl Rng, n: usize) -> CMatrix {
    let mut b = CMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] += Complex64::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
        }
    }
    b
}

/// A random Hermitian positive semidefinite matrix with largest eigenvalue `top`.
pub fn random_psd(rng: &mut impl Rng, n: usize, top: f64) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let h = &g * g.adjoint();
    let largest = h.clone().symmetric_eigenvalues().max();
    if largest <= 0.0 {
        return CMatrix::zeros(n, n);
    }
    h * Complex64::new(top / largest, 0.0)
}

/// `Bᴴ·diag(d)·B`.
pub fn framed(b: &CMatrix, d: &[f64]) -> CMatrix {
    let diag = crate::cone::real_diagonal(d);
    b.adjoint() * diag * b
}

/// `Bᴴ·H·B`.
pub fn framed_matrix(b: &CMatrix, h: &CMatrix) -> CMatrix {
    b.adjoint() * h * b
}
