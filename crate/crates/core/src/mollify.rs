//! Mollification of potentials on coordinate polydiscs in ℂⁿ, the cone
//! condition for currents, Lelong numbers at level δ and the regularized
//! maximum.
//!
//! Points of ℂⁿ are real vectors `(x₁, y₁, …, xₙ, yₙ)`. The spherical mean
//! `φ̂_r(x)` is the average of `φ` over the real sphere of radius `r` about `x`.

use crate::cone::{p_form_coefficients, HermitianPair, PhaseSpec};
use crate::error::{DhymError, Result};
use crate::forms::CMatrix;
use crate::numeric::{factorial, gauss_legendre_on, golden_section_max, Poly};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::{PI, TAU};
use std::io::{BufRead, Write};

/// Exponent of the bump `(1 − t²)^p` used for the kernel and the
/// regularized maximum.
const BUMP_POWER: usize = 3;
const RADIAL_PANELS: usize = 24;
const RADIAL_ORDER: usize = 10;

/// `|S^{2n−1}| = 2πⁿ/(n−1)!`.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * PI.powi(n as i32) / factorial(n - 1)
}

/// Quadrature nodes on the unit sphere of ℝ^{2n} with weights summing to 1.
#[derive(Debug, Clone)]
pub struct SphereRule {
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl SphereRule {
    /// Uses `|ωᵢ|² = uᵢ` uniform on the simplex and independent uniform phases.
    pub fn new(n: usize) -> Self {
        let (angles, simplex_order): (usize, usize) = match n {
            1 => (128, 1),
            2 => (32, 12),
            _ => (16, 6),
        };
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::new();
        match n {
            1 => simplex.push((vec![1.0], 1.0)),
            2 => {
                let (u, w) = gauss_legendre_on(simplex_order, 0.0, 1.0);
                for (ui, wi) in u.iter().zip(&w) {
                    simplex.push((vec![*ui, 1.0 - ui], *wi));
                }
            }
            _ => {
                // u₁ = s, (u₂, u₃) = (1 − s)(v, 1 − v); density 2(1 − s)
                let (s, ws) = gauss_legendre_on(simplex_order, 0.0, 1.0);
                let (v, wv) = gauss_legendre_on(simplex_order, 0.0, 1.0);
                for (si, wsi) in s.iter().zip(&ws) {
                    for (vi, wvi) in v.iter().zip(&wv) {
                        let rest = 1.0 - si;
                        simplex.push((vec![*si, rest * vi, rest * (1.0 - vi)], 2.0 * rest * wsi * wvi));
                    }
                }
            }
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let total_angles = angles.pow(n as u32);
        for (u, w) in &simplex {
            for a in 0..total_angles {
                let mut rest = a;
                let mut node = vec![0.0; 2 * n];
                for j in 0..n {
                    let alpha = TAU * (rest % angles) as f64 / angles as f64 + 0.5 * TAU / angles as f64 * j as f64;
                    rest /= angles;
                    let radius = u[j].max(0.0).sqrt();
                    node[2 * j] = radius * alpha.cos();
                    node[2 * j + 1] = radius * alpha.sin();
                }
                nodes.push(node);
                weights.push(w / total_angles as f64);
            }
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn mean<F: Fn(&[f64]) -> f64>(&self, x: &[f64], r: f64, g: F) -> f64 {
        let mut p = vec![0.0; x.len()];
        let mut acc = 0.0;
        for (node, w) in self.nodes.iter().zip(&self.weights) {
            for ((pi, xi), ni) in p.iter_mut().zip(x).zip(node) {
                *pi = xi + r * ni;
            }
            acc += w * g(&p);
        }
        acc
    }
}

/// A potential on (an open subset of) ℂⁿ.
pub trait Potential: Sync {
    fn n(&self) -> usize;

    /// Value at a point; `−∞` on the polar set.
    fn eval(&self, p: &[f64]) -> f64;

    /// Spherical mean; models with a closed form or a reduced quadrature
    /// override this.
    fn sphere_mean(&self, x: &[f64], r: f64, rule: &SphereRule) -> f64 {
        rule.mean(x, r, |p| self.eval(p))
    }

    /// Radii about `x` at which the spherical mean fails to be smooth.
    fn kinks(&self, _x: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    /// Isolated points of the polar set.
    fn poles(&self) -> Vec<Vec<f64>> {
        Vec::new()
    }
}

/// `c·log|z − center|`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPole {
    pub center: Vec<f64>,
    pub c: f64,
}

impl LogPole {
    pub fn at_origin(n: usize, c: f64) -> Self {
        Self { center: vec![0.0; 2 * n], c }
    }

    fn distance(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }
}

impl Potential for LogPole {
    fn n(&self) -> usize {
        self.center.len() / 2
    }

    fn eval(&self, p: &[f64]) -> f64 {
        self.c * self.distance(p).ln()
    }

    fn sphere_mean(&self, x: &[f64], r: f64, _rule: &SphereRule) -> f64 {
        let d = self.distance(x);
        let n = self.n();
        if n == 1 || d == 0.0 {
            return self.c * d.max(r).ln();
        }
        // With u = |ω₁|² along the pole direction, the phase average of
        // log(P + Q cos α) is log((P + √(P² − Q²))/2), and u has density
        // (n − 1)(1 − u)^{n−2}.
        let (u, w) = gauss_legendre_on(64, 0.0, 1.0);
        let p = d * d + r * r;
        let mut acc = 0.0;
        for (ui, wi) in u.iter().zip(&w) {
            let q = 2.0 * d * r * ui.sqrt();
            let inner = (0.5 * (p + (p * p - q * q).max(0.0).sqrt())).ln();
            acc += wi * (n - 1) as f64 * (1.0 - ui).powi(n as i32 - 2) * inner;
        }
        0.5 * self.c * acc
    }

    fn kinks(&self, x: &[f64]) -> Vec<f64> {
        vec![self.distance(x)]
    }

    fn poles(&self) -> Vec<Vec<f64>> {
        if self.c > 0.0 {
            vec![self.center.clone()]
        } else {
            Vec::new()
        }
    }
}

/// `c·|z|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub n: usize,
    pub c: f64,
}

impl Potential for Quadratic {
    fn n(&self) -> usize {
        self.n
    }

    fn eval(&self, p: &[f64]) -> f64 {
        self.c * p.iter().map(|v| v * v).sum::<f64>()
    }

    fn sphere_mean(&self, x: &[f64], r: f64, _rule: &SphereRule) -> f64 {
        self.eval(x) + self.c * r * r
    }
}

/// `b + Σ aᵢ pᵢ` over real coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub a: Vec<f64>,
    pub b: f64,
}

impl Potential for Affine {
    fn n(&self) -> usize {
        self.a.len() / 2
    }

    fn eval(&self, p: &[f64]) -> f64 {
        self.b + self.a.iter().zip(p).map(|(a, x)| a * x).sum::<f64>()
    }

    fn sphere_mean(&self, x: &[f64], _r: f64, _rule: &SphereRule) -> f64 {
        self.eval(x)
    }
}

/// `(c/2)·log(|z|² + ε²)`, smooth and plurisubharmonic.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedLog {
    pub n: usize,
    pub c: f64,
    pub eps: f64,
}

impl Potential for SmoothedLog {
    fn n(&self) -> usize {
        self.n
    }

    fn eval(&self, p: &[f64]) -> f64 {
        0.5 * self.c * (p.iter().map(|v| v * v).sum::<f64>() + self.eps * self.eps).ln()
    }
}

/// Pointwise maximum of two potentials.
pub struct MaxGlued {
    pub first: Box<dyn Potential + Send>,
    pub second: Box<dyn Potential + Send>,
}

impl Potential for MaxGlued {
    fn n(&self) -> usize {
        self.first.n()
    }

    fn eval(&self, p: &[f64]) -> f64 {
        self.first.eval(p).max(self.second.eval(p))
    }

    fn poles(&self) -> Vec<Vec<f64>> {
        let mut out = self.first.poles();
        out.extend(self.second.poles());
        out.retain(|p| self.eval(p) == f64::NEG_INFINITY);
        out
    }
}

/// Strictly concave model `−c|z|²`, used as a negative control.
#[derive(Debug, Clone, PartialEq)]
pub struct Concave {
    pub n: usize,
    pub c: f64,
}

impl Potential for Concave {
    fn n(&self) -> usize {
        self.n
    }

    fn eval(&self, p: &[f64]) -> f64 {
        -self.c * p.iter().map(|v| v * v).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct MollifierKernel {
    n: usize,
    /// `ρ(t) = scale·(1 − t²)³` on `[0, 1]`.
    profile: Poly,
    a_n: f64,
    a_n_origin: f64,
    sphere: SphereRule,
    radial_nodes: Vec<f64>,
    radial_weights: Vec<f64>,
}

pub fn build_kernel(n: usize) -> Result<MollifierKernel> {
    if !(1..=3).contains(&n) {
        return Err(DhymError::Dimension(n));
    }
    let bump = Poly(vec![1.0, 0.0, -1.0]).pow(BUMP_POWER);
    let mut moment = vec![0.0; 2 * n];
    moment[2 * n - 1] = 1.0;
    let unnormalized = bump.mul(&Poly(moment)).integral().eval(1.0) * sphere_area(n);
    let profile = bump.scale(1.0 / unnormalized);

    let mut radial_nodes = Vec::new();
    let mut radial_weights = Vec::new();
    for panel in 0..RADIAL_PANELS {
        let (a, b) = (panel as f64 / RADIAL_PANELS as f64, (panel + 1) as f64 / RADIAL_PANELS as f64);
        let (x, w) = panel_rule(a, b);
        radial_nodes.extend(x);
        radial_weights.extend(w);
    }
    let mut kernel = MollifierKernel {
        n,
        profile,
        a_n: 0.0,
        a_n_origin: 0.0,
        sphere: SphereRule::new(n),
        radial_nodes,
        radial_weights,
    };
    kernel.a_n_origin = -kernel.radial_integral(&[], |t| t.ln());
    kernel.a_n = kernel.maximize_mean_gap();
    Ok(kernel)
}

impl MollifierKernel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self, t: f64) -> f64 {
        if (0.0..=1.0).contains(&t) {
            self.profile.eval(t)
        } else {
            0.0
        }
    }

    /// Constant in `0 ≤ φ̂_δ − φ_{,δ} ≤ ν(x,δ)·a_n`.
    pub fn a_n(&self) -> f64 {
        self.a_n
    }

    /// `−∫ρ(t) log t · t^{2n−1}|S^{2n−1}| dt`, the gap ratio for a pole at `x`.
    pub fn a_n_origin(&self) -> f64 {
        self.a_n_origin
    }

    pub fn sphere_rule(&self) -> &SphereRule {
        &self.sphere
    }

    /// `∫₀¹ ρ(t)·t^{2n−1}|S^{2n−1}|·g(t) dt` on the composite rule, with panels
    /// also split at `kinks`.
    pub fn radial_integral<G: Fn(f64) -> f64>(&self, kinks: &[f64], g: G) -> f64 {
        let area = sphere_area(self.n);
        let weight = |t: f64| self.rho(t) * t.powi(2 * self.n as i32 - 1) * area;
        let inner: Vec<f64> = kinks.iter().copied().filter(|k| *k > 1e-12 && *k < 1.0 - 1e-12).collect();
        if inner.is_empty() {
            return self
                .radial_nodes
                .iter()
                .zip(&self.radial_weights)
                .map(|(&t, &w)| w * weight(t) * g(t))
                .sum();
        }
        let mut breaks = vec![0.0];
        breaks.extend(inner);
        breaks.push(1.0);
        breaks.sort_by(f64::total_cmp);
        let mut acc = 0.0;
        for pair in breaks.windows(2) {
            let panels = ((pair[1] - pair[0]) * RADIAL_PANELS as f64).ceil().max(1.0) as usize;
            for p in 0..panels {
                let a = pair[0] + (pair[1] - pair[0]) * p as f64 / panels as f64;
                let b = pair[0] + (pair[1] - pair[0]) * (p + 1) as f64 / panels as f64;
                let (x, w) = panel_rule(a, b);
                acc += x.iter().zip(&w).map(|(&t, &wi)| wi * weight(t) * g(t)).sum::<f64>();
            }
        }
        acc
    }

    /// Largest `(φ̂_δ − φ_{,δ})/ν(x,δ)` over log poles at distance `s·δ` from `x`.
    fn maximize_mean_gap(&self) -> f64 {
        let delta = 1.0;
        let x = vec![0.0; 2 * self.n];
        let ratio = |s: f64, r: f64| -> f64 {
            let mut center = vec![0.0; 2 * self.n];
            center[0] = s * delta;
            let pole = LogPole { center, c: 1.0 };
            let est = lelong_level(&pole, self, &x, delta, r, 2.0).expect("radii are valid");
            if est.nu > 0.0 {
                est.mean_gap / est.nu
            } else {
                0.0
            }
        };
        let mut best = self.a_n_origin;
        for r in [8.0, 32.0, 128.0] {
            let (_, v) = golden_section_max(|s| ratio(s, r), 0.0, 3.0, 1e-4);
            best = best.max(v);
        }
        best
    }
}

/// Gauss-Legendre on `[a, b]`, graded geometrically towards `0` when `a = 0`
/// to absorb the `t^k log t` endpoint behaviour of pole profiles.
fn panel_rule(a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    if a > 0.0 {
        return gauss_legendre_on(RADIAL_ORDER, a, b);
    }
    let (mut x, mut w) = (Vec::new(), Vec::new());
    let levels = 40;
    for j in 0..levels {
        let hi = b * 0.5f64.powi(j);
        let lo = if j + 1 == levels { 0.0 } else { 0.5 * hi };
        let (xs, ws) = gauss_legendre_on(RADIAL_ORDER, lo, hi);
        x.extend(xs);
        w.extend(ws);
    }
    (x, w)
}

/// Samples on a cell-centred uniform grid over a box in ℂⁿ, so that a pole
/// at the centre never sits on a node.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSample {
    n: usize,
    spacing: f64,
    center: Vec<f64>,
    points: usize,
    values: Vec<f64>,
    poles: Vec<Vec<f64>>,
}

impl PotentialSample {
    pub fn new(n: usize, spacing: f64, center: Vec<f64>, points: usize, values: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(DhymError::Dimension(n));
        }
        if !(spacing > 0.0) || center.len() != 2 * n || points < 2 {
            return Err(DhymError::Shape(format!(
                "spacing {spacing}, centre of length {}, {points} points per axis",
                center.len()
            )));
        }
        if values.len() != points.pow(2 * n as u32) {
            return Err(DhymError::Shape(format!("{} values for {points}^{} nodes", values.len(), 2 * n)));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(DhymError::Domain("samples must be finite or −∞".into()));
        }
        Ok(Self { n, spacing, center, points, values, poles: Vec::new() })
    }

    pub fn sample(phi: &dyn Potential, center: &[f64], spacing: f64, points: usize) -> Result<Self> {
        let n = phi.n();
        let total = points.pow(2 * n as u32);
        let mut out = Self::new(n, spacing, center.to_vec(), points, vec![0.0; total])?;
        let values: Vec<f64> = (0..total).into_par_iter().map(|i| phi.eval(&out.node(i))).collect();
        out.values = values;
        out.poles = phi.poles();
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Marks isolated singular points lying between nodes.
    pub fn with_poles(mut self, poles: Vec<Vec<f64>>) -> Self {
        self.poles = poles;
        self
    }

    /// Marked singular points, together with nodes holding `−∞`.
    pub fn poles(&self) -> Vec<Vec<f64>> {
        let mut out = self.poles.clone();
        out.extend(self.singular().into_iter().map(|i| self.node(i)));
        out
    }

    /// Nodes on the singular set.
    pub fn singular(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.values[i].is_finite()).collect()
    }

    /// Half-width of the sampled box.
    pub fn half_width(&self) -> f64 {
        0.5 * (self.points - 1) as f64 * self.spacing
    }

    fn offset(&self) -> f64 {
        0.5 * (self.points - 1) as f64
    }

    pub fn index_of(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &i| acc * self.points + i)
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; 2 * self.n];
        for d in (0..2 * self.n).rev() {
            out[d] = idx % self.points;
            idx /= self.points;
        }
        out
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .zip(&self.center)
            .map(|(&i, c)| c + (i as f64 - self.offset()) * self.spacing)
            .collect()
    }

    /// Same grid with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Ok(Self::new(self.n, self.spacing, self.center.clone(), self.points, values)?.with_poles(self.poles.clone()))
    }

    /// CSV: a header `n,spacing,points,c1,…,c2n`, one line with those numbers,
    /// then the values in row-major order, one line per run of the last axis.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let names: Vec<String> = (1..=2 * self.n).map(|i| format!("c{i}")).collect();
        writeln!(out, "n,spacing,points,{}", names.join(","))?;
        let centre: Vec<String> = self.center.iter().map(|c| format!("{c:e}")).collect();
        writeln!(out, "{},{:e},{},{}", self.n, self.spacing, self.points, centre.join(","))?;
        for row in self.values.chunks(self.points) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| DhymError::Parse(format!("missing {what}")))?
                .map_err(DhymError::from)
        };
        let header = next("header")?;
        if !header.starts_with("n,spacing,points") {
            return Err(DhymError::Parse(format!("unexpected header {header:?}")));
        }
        let meta = parse_row(&next("grid description")?)?;
        if meta.len() < 3 {
            return Err(DhymError::Parse("grid description too short".into()));
        }
        let n = meta[0] as usize;
        let mut values = Vec::new();
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                values.extend(parse_row(&line)?);
            }
        }
        Self::new(n, meta[1], meta[3..].to_vec(), meta[2] as usize, values)
    }
}

fn parse_row(line: &str) -> Result<Vec<f64>> {
    line.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| DhymError::Parse(format!("{s:?}: {e}"))))
        .collect()
}

impl Potential for PotentialSample {
    fn n(&self) -> usize {
        self.n
    }

    fn poles(&self) -> Vec<Vec<f64>> {
        PotentialSample::poles(self)
    }

    /// Multilinear interpolation; `−∞` outside the sampled box.
    fn eval(&self, p: &[f64]) -> f64 {
        let dims = 2 * self.n;
        let mut base = vec![0usize; dims];
        let mut frac = vec![0.0; dims];
        for d in 0..dims {
            let s = (p[d] - self.center[d]) / self.spacing + self.offset();
            if !(0.0..=(self.points - 1) as f64).contains(&s) {
                return f64::NEG_INFINITY;
            }
            let i = (s.floor() as usize).min(self.points - 2);
            base[d] = i;
            frac[d] = s - i as f64;
        }
        let mut acc = 0.0;
        let mut corner = vec![0usize; dims];
        for mask in 0..(1usize << dims) {
            let mut w = 1.0;
            for d in 0..dims {
                let bit = (mask >> d) & 1;
                corner[d] = base[d] + bit;
                w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
            }
            if w != 0.0 {
                acc += w * self.values[self.index_of(&corner)];
            }
        }
        acc
    }
}

/// `φ_{,δ}` on the nodes of `U_δ` by discrete convolution. The weights
/// `ρ(|y|/δ)` are renormalised to sum to one, which reproduces affine and
/// quadratic functions exactly up to a constant.
pub fn mollify_potential(phi: &PotentialSample, kernel: &MollifierKernel, delta: f64) -> Result<PotentialSample> {
    if kernel.n() != phi.n() {
        return Err(DhymError::Shape("kernel and potential dimensions differ".into()));
    }
    if !(delta > 0.0) {
        return Err(DhymError::Domain(format!("delta = {delta} must be positive")));
    }
    let h = phi.spacing();
    if h > delta / 8.0 + 1e-15 {
        return Err(DhymError::Domain(format!("spacing {h} exceeds delta/8 = {}", delta / 8.0)));
    }
    let reach = (delta / h - 1e-9).floor() as usize;
    let shrink = (delta / h - 1e-9).ceil() as usize;
    if phi.points() <= 2 * shrink + 1 {
        return Err(DhymError::Domain(format!(
            "delta = {delta} leaves no interior points on a box of half-width {}",
            phi.half_width()
        )));
    }
    let dims = 2 * phi.n();
    let side = 2 * reach + 1;
    let mut offsets: Vec<(Vec<isize>, f64)> = Vec::new();
    let mut total = 0.0;
    for flat in 0..side.pow(dims as u32) {
        let mut rest = flat;
        let mut off = vec![0isize; dims];
        for d in (0..dims).rev() {
            off[d] = (rest % side) as isize - reach as isize;
            rest /= side;
        }
        let dist = off.iter().map(|&o| (o as f64 * h).powi(2)).sum::<f64>().sqrt() / delta;
        let w = kernel.rho(dist);
        if w > 0.0 {
            total += w;
            offsets.push((off, w));
        }
    }
    offsets.iter_mut().for_each(|(_, w)| *w /= total);

    let out_points = phi.points() - 2 * shrink;
    let out_len = out_points.pow(dims as u32);
    let values: Vec<f64> = (0..out_len)
        .into_par_iter()
        .map(|idx| {
            let mut rest = idx;
            let mut multi = vec![0usize; dims];
            for d in (0..dims).rev() {
                multi[d] = rest % out_points + shrink;
                rest /= out_points;
            }
            let mut acc = 0.0;
            let mut probe = vec![0usize; dims];
            for (off, w) in &offsets {
                for d in 0..dims {
                    probe[d] = (multi[d] as isize + off[d]) as usize;
                }
                acc += w * phi.values[phi.index_of(&probe)];
            }
            acc
        })
        .collect();
    Ok(PotentialSample::new(phi.n(), h, phi.center().to_vec(), out_points, values)?.with_poles(phi.poles()))
}

/// `φ_{,δ}(x)` by radial quadrature of spherical means.
pub fn mollify_at(phi: &dyn Potential, kernel: &MollifierKernel, x: &[f64], delta: f64) -> f64 {
    let kinks: Vec<f64> = phi.kinks(x).iter().map(|k| k / delta).collect();
    kernel.radial_integral(&kinks, |t| phi.sphere_mean(x, t * delta, kernel.sphere_rule()))
}

/// Spherical mean `φ̂_r(x)`.
pub fn sphere_mean(phi: &dyn Potential, kernel: &MollifierKernel, x: &[f64], r: f64) -> f64 {
    phi.sphere_mean(x, r, kernel.sphere_rule())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LelongEstimate {
    pub x: Vec<f64>,
    pub delta: f64,
    pub r: f64,
    /// Ratio used in the first inequality.
    pub a: f64,
    /// `ν(x, δ)`.
    pub nu: f64,
    pub hat_quarter: f64,
    pub hat_delta: f64,
    pub hat_delta_over_a: f64,
    pub mollified: f64,
    /// `φ̂_δ − φ̂_{δ/a}`.
    pub scale_gap: f64,
    /// `φ̂_δ − φ_{,δ}`.
    pub mean_gap: f64,
}

impl LelongEstimate {
    /// Slack of `0 ≤ φ̂_δ − φ̂_{δ/a} ≤ ν log a`; negative means violated.
    pub fn scale_slack(&self) -> f64 {
        self.scale_gap.min(self.nu * self.a.ln() - self.scale_gap)
    }

    /// Slack of `0 ≤ φ̂_δ − φ_{,δ} ≤ ν a_n`.
    pub fn mean_slack(&self, a_n: f64) -> f64 {
        self.mean_gap.min(self.nu * a_n - self.mean_gap)
    }

    /// Both inequalities, with a relative rounding allowance.
    pub fn holds(&self, a_n: f64) -> bool {
        let scale = 1e-10 * (1.0 + self.hat_quarter.abs() + self.hat_delta.abs());
        self.scale_slack() >= -scale && self.mean_slack(a_n) >= -scale
    }
}

pub fn lelong_level(
    phi: &dyn Potential,
    kernel: &MollifierKernel,
    x: &[f64],
    delta: f64,
    r: f64,
    a: f64,
) -> Result<LelongEstimate> {
    if !(delta > 0.0 && delta < r / 4.0) || !(a > 1.0) {
        return Err(DhymError::Domain(format!("need 0 < delta < r/4 and a > 1 (delta {delta}, r {r}, a {a})")));
    }
    if x.len() != 2 * phi.n() {
        return Err(DhymError::Shape(format!("point has {} coordinates", x.len())));
    }
    let rule = kernel.sphere_rule();
    let hat_quarter = phi.sphere_mean(x, r / 4.0, rule);
    let hat_delta = phi.sphere_mean(x, delta, rule);
    let hat_delta_over_a = phi.sphere_mean(x, delta / a, rule);
    let mollified = mollify_at(phi, kernel, x, delta);
    let nu = (hat_quarter - hat_delta) / ((r / 4.0).ln() - delta.ln());
    Ok(LelongEstimate {
        x: x.to_vec(),
        delta,
        r,
        a,
        nu,
        hat_quarter,
        hat_delta,
        hat_delta_over_a,
        mollified,
        scale_gap: hat_delta - hat_delta_over_a,
        mean_gap: hat_delta - mollified,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurrentConeReport {
    /// Smallest `P^k` coefficient over checked points and `k ≤ m`.
    pub worst_margin: f64,
    pub worst_point: Option<Vec<f64>>,
    /// Largest `|P^k|` coefficient seen, the scale for the tolerance.
    pub scale: f64,
    pub checked: usize,
    /// Nodes whose Hessian estimate is unreliable: the stencil touches `−∞`,
    /// or the sphere `∂B_δ(x)` passes within `δ/2 + 2h` of a pole.
    pub masked: usize,
    /// Relative tolerance.
    pub tolerance: f64,
}

impl CurrentConeReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.worst_margin >= -self.tolerance * self.scale.max(1.0)
    }
}

/// Checks `P^k_θ(i∂∂̄φ_{,δ}, χ₀) ≥ 0` for `k ≤ m` at the nodes of `U_δ`, up to
/// `tolerance` relative to the largest coefficient. Here
/// `χ₀ = (1 − 10⁻⁶)·s·χ(x)` and `s` is the smallest eigenvalue of
/// `χ(x)⁻¹χ(y)` over sampled `y ∈ B_δ(x)`. The Hessian is the centred second
/// difference of the grid mollification, so its error is `O(h²)` away from
/// poles.
pub fn current_cone_check(
    phi: &PotentialSample,
    chi: &(dyn Fn(&[f64]) -> CMatrix + Sync),
    spec: &PhaseSpec,
    kernel: &MollifierKernel,
    delta: f64,
    m: usize,
    tolerance: f64,
) -> Result<CurrentConeReport> {
    let n = phi.n();
    if m == 0 || m > n {
        return Err(DhymError::OutOfRange { index: m, max: n });
    }
    let smooth = mollify_potential(phi, kernel, delta)?;
    let h = smooth.spacing();
    let pts = smooth.points();
    let dims = 2 * n;
    let ball = kernel.sphere_rule();
    let poles = phi.poles();
    let shell = 0.5 * delta + 2.0 * h;
    let results: Vec<Option<(f64, f64, usize)>> = (0..smooth.len())
        .into_par_iter()
        .map(|idx| -> Option<(f64, f64, usize)> {
            let multi = smooth.multi_index(idx);
            if multi.iter().any(|&i| i < 2 || i + 2 >= pts) {
                return None;
            }
            let at = |shift: &[(usize, isize)]| -> f64 {
                let mut probe = multi.clone();
                for &(d, s) in shift {
                    probe[d] = (probe[d] as isize + s) as usize;
                }
                smooth.values[smooth.index_of(&probe)]
            };
            let mut second = vec![vec![0.0; dims]; dims];
            for r in 0..dims {
                for s in r..dims {
                    second[r][s] = if r == s {
                        (at(&[(r, 1)]) - 2.0 * at(&[]) + at(&[(r, -1)])) / (h * h)
                    } else {
                        (at(&[(r, 1), (s, 1)]) - at(&[(r, 1), (s, -1)]) - at(&[(r, -1), (s, 1)])
                            + at(&[(r, -1), (s, -1)]))
                            / (4.0 * h * h)
                    };
                    second[s][r] = second[r][s];
                }
            }
            let x = smooth.node(idx);
            let near_pole = poles.iter().any(|p| {
                let d = p.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                (d - delta).abs() < shell
            });
            if near_pole || second.iter().flatten().any(|v| !v.is_finite()) {
                return Some((f64::NAN, 0.0, idx));
            }
            let hess = CMatrix::from_fn(n, n, |j, k| {
                let (xj, yj, xk, yk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
                Complex64::new(
                    0.25 * (second[xj][xk] + second[yj][yk]),
                    0.25 * (second[xj][yk] - second[yj][xk]),
                )
            });
            let hess = (&hess + hess.adjoint()) * Complex64::new(0.5, 0.0);
            let chi_x = chi(&x);
            let inv = chi_x.clone().try_inverse()?;
            let mut scale = f64::INFINITY;
            for frac in [0.5, 1.0] {
                let mut p = vec![0.0; dims];
                for node in ball.nodes.iter().step_by((ball.len() / 64).max(1)) {
                    for d in 0..dims {
                        p[d] = x[d] + frac * delta * node[d];
                    }
                    let rel = &inv * chi(&p);
                    let rel = (&rel + rel.adjoint()) * Complex64::new(0.5, 0.0);
                    scale = scale.min(rel.symmetric_eigenvalues().min());
                }
            }
            let chi0 = chi_x * Complex64::new((1.0 - 1e-6) * scale.min(1.0), 0.0);
            let pair = HermitianPair::new(hess, chi0).ok()?;
            let coeffs: Vec<f64> =
                (1..=m).filter_map(|k| p_form_coefficients(&pair, spec, k).ok()).flatten().collect();
            let worst = coeffs.iter().copied().fold(f64::INFINITY, f64::min);
            let largest = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
            Some((worst, largest, idx))
        })
        .collect();

    let mut report = CurrentConeReport {
        worst_margin: f64::INFINITY,
        worst_point: None,
        scale: 0.0,
        checked: 0,
        masked: 0,
        tolerance,
    };
    for (worst, largest, idx) in results.into_iter().flatten() {
        if worst.is_nan() {
            report.masked += 1;
            continue;
        }
        report.checked += 1;
        report.scale = report.scale.max(largest);
        if worst < report.worst_margin {
            report.worst_margin = worst;
            report.worst_point = Some(smooth.node(idx));
        }
    }
    Ok(report)
}

/// Second derivative profile `ψ(u) = C(1 − u²/4)³` on `[−2, 2]`, unit mass.
fn max_bump() -> (Poly, Poly, Poly) {
    let shape = Poly(vec![1.0, 0.0, -0.25]).pow(BUMP_POWER);
    let mass = 2.0 * shape.integral().eval(2.0);
    let psi = shape.scale(1.0 / mass);
    let first = psi.integral();
    let moment = psi.mul(&Poly(vec![0.0, 1.0])).integral();
    (psi, first, moment)
}

/// `M_η(a, b) = (a + b)/2 + η·m((a − b)/η)` with `m'' = ψ`, `m(u) = |u|/2`
/// for `|u| ≥ 2`.
pub fn regularized_max_scalar(a: f64, b: f64, eta: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return a.max(b);
    }
    let u = ((a - b) / eta).abs();
    let mid = 0.5 * (a + b);
    if u >= 2.0 {
        return mid + 0.5 * eta * u;
    }
    let (_, first, moment) = max_bump();
    let m0 = moment.eval(2.0);
    mid + eta * (m0 + u * first.eval(u) - moment.eval(u))
}

pub fn regularized_max(f: &PotentialSample, g: &PotentialSample, eta: f64) -> Result<PotentialSample> {
    if !(eta > 0.0) {
        return Err(DhymError::Domain(format!("eta = {eta} must be positive")));
    }
    if f.n() != g.n() || f.points() != g.points() || f.spacing() != g.spacing() || f.center() != g.center() {
        return Err(DhymError::Shape("regularized maximum needs a common grid".into()));
    }
    f.with_values(f.values().iter().zip(g.values()).map(|(&a, &b)| regularized_max_scalar(a, b, eta)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_rule_integrates_moments() {
        for n in 1..=3 {
            let rule = SphereRule::new(n);
            let total: f64 = rule.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "n = {n}: {total}");
            // E|ω₁|² = 1/n, E|ω₁|⁴ = 2/(n(n+1))
            let m2 = rule.mean(&vec![0.0; 2 * n], 1.0, |p| p[0] * p[0] + p[1] * p[1]);
            let m4 = rule.mean(&vec![0.0; 2 * n], 1.0, |p| (p[0] * p[0] + p[1] * p[1]).powi(2));
            assert!((m2 - 1.0 / n as f64).abs() < 1e-12, "n = {n}");
            assert!((m4 - 2.0 / (n * (n + 1)) as f64).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn bump_has_unit_mass_and_matching_ends() {
        let (psi, first, moment) = max_bump();
        assert!((2.0 * first.eval(2.0) - 1.0).abs() < 1e-14);
        assert!(psi.eval(2.0).abs() < 1e-14);
        let m0 = moment.eval(2.0);
        assert!(m0 > 0.0 && m0 < 1.0);
        // continuity at |u| = 2
        assert!((regularized_max_scalar(2.0, 0.0, 1.0) - 2.0).abs() < 1e-14);
        assert!((regularized_max_scalar(2.0 - 1e-12, 0.0, 1.0) - 2.0).abs() < 1e-11);
    }

    #[test]
    fn interpolation_reproduces_multilinear_data() {
        let affine = Affine { a: vec![0.5, -1.0], b: 2.0 };
        let s = PotentialSample::sample(&affine, &[0.0, 0.0], 0.1, 8).unwrap();
        let p = [0.123, -0.071];
        assert!((s.eval(&p) - affine.eval(&p)).abs() < 1e-13);
    }
}
