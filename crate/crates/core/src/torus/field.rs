//! Periodic sample grids on the flat torus `(ℝ/2πℤ)^{2n}` and their spectral
//! second derivatives.
//!
//! Real coordinate `2j` is `x_{j+1}` and `2j + 1` is `y_{j+1}`, where
//! `z^{j+1} = x_{j+1} + i y_{j+1}`. A field depends on at most two of these
//! ("active" coordinates) and is constant in the rest.

use crate::error::{DhymError, Result};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::TAU;
use std::sync::Arc;

pub const MAX_ACTIVE: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicField {
    n: usize,
    active: Vec<usize>,
    sizes: Vec<usize>,
    values: Vec<f64>,
}

impl PeriodicField {
    pub fn zeros(n: usize, active: &[usize], sizes: &[usize]) -> Result<Self> {
        validate_layout(n, active, sizes)?;
        let len = sizes.iter().product();
        Ok(Self {
            n,
            active: active.to_vec(),
            sizes: sizes.to_vec(),
            values: vec![0.0; len],
        })
    }

    pub fn from_values(n: usize, active: &[usize], sizes: &[usize], values: Vec<f64>) -> Result<Self> {
        let mut field = Self::zeros(n, active, sizes)?;
        if values.len() != field.values.len() {
            return Err(DhymError::Shape(format!(
                "{} values for a grid of {} points",
                values.len(),
                field.values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(DhymError::Domain(format!("non-finite sample at index {bad}")));
        }
        field.values = values;
        Ok(field)
    }

    /// Samples `g` at the grid nodes; `g` receives the active coordinates.
    pub fn from_fn<G: Fn(&[f64]) -> f64>(n: usize, active: &[usize], sizes: &[usize], g: G) -> Result<Self> {
        let mut field = Self::zeros(n, active, sizes)?;
        for idx in 0..field.values.len() {
            field.values[idx] = g(&field.coords(idx));
        }
        Ok(field)
    }

    /// A field on the same grid.
    pub fn like(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_values(self.n, &self.active, &self.sizes, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Grid average, which is exact quadrature for trigonometric polynomials
    /// resolved by the grid.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.n == other.n && self.active == other.active && self.sizes == other.sizes
    }

    /// Values of the active coordinates at flat index `idx`.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut rest = idx;
        let mut out = vec![0.0; self.sizes.len()];
        for d in (0..self.sizes.len()).rev() {
            let m = self.sizes[d];
            out[d] = TAU * (rest % m) as f64 / m as f64;
            rest /= m;
        }
        out
    }

    pub fn map<G: Fn(f64) -> f64>(&self, g: G) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = g(*v));
        out
    }

    /// `self + s·other` on a shared grid.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        debug_assert!(self.same_grid(other));
        let mut out = self.clone();
        for (v, o) in out.values.iter_mut().zip(&other.values) {
            *v += s * o;
        }
        out
    }

    pub fn minus_mean(&self) -> Self {
        let m = self.mean();
        self.map(|v| v - m)
    }
}

fn validate_layout(n: usize, active: &[usize], sizes: &[usize]) -> Result<()> {
    if !(1..=3).contains(&n) {
        return Err(DhymError::Dimension(n));
    }
    if active.len() > MAX_ACTIVE || active.len() != sizes.len() {
        return Err(DhymError::Shape(format!(
            "{} active coordinates with {} grid sizes (at most {MAX_ACTIVE})",
            active.len(),
            sizes.len()
        )));
    }
    if active.windows(2).any(|w| w[0] >= w[1]) || active.iter().any(|&a| a >= 2 * n) {
        return Err(DhymError::Shape(format!(
            "active coordinates {active:?} must be increasing and below {}",
            2 * n
        )));
    }
    if let Some(&bad) = sizes.iter().find(|&&m| m < 4 || !m.is_power_of_two()) {
        return Err(DhymError::Shape(format!("grid size {bad} is not a power of two >= 4")));
    }
    Ok(())
}

/// FFT plans and wavenumbers for one grid layout.
pub struct SpectralGrid {
    sizes: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    wavenumbers: Vec<Vec<f64>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("sizes", &self.sizes).finish()
    }
}

impl SpectralGrid {
    pub fn new(sizes: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            sizes: sizes.to_vec(),
            forward: sizes.iter().map(|&m| planner.plan_fft_forward(m)).collect(),
            inverse: sizes.iter().map(|&m| planner.plan_fft_inverse(m)).collect(),
            wavenumbers: sizes.iter().map(|&m| wavenumbers(m)).collect(),
        }
    }

    pub fn for_field(field: &PeriodicField) -> Self {
        Self::new(field.sizes())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Wavenumbers along active direction `d`; the Nyquist entry is positive.
    pub fn wavenumbers(&self, d: usize) -> &[f64] {
        &self.wavenumbers[d]
    }

    /// Wavenumber vector of flat spectral index `idx`.
    pub fn mode(&self, idx: usize) -> Vec<f64> {
        let mut rest = idx;
        let mut out = vec![0.0; self.sizes.len()];
        for d in (0..self.sizes.len()).rev() {
            out[d] = self.wavenumbers[d][rest % self.sizes[d]];
            rest /= self.sizes[d];
        }
        out
    }

    /// Whether `idx` sits on the Nyquist plane of direction `d`.
    pub fn is_nyquist(&self, idx: usize, d: usize) -> bool {
        let stride: usize = self.sizes[d + 1..].iter().product();
        (idx / stride) % self.sizes[d] == self.sizes[d] / 2
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse transform including the `1/N` normalisation; returns real parts.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spectrum, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        spectrum.iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        match self.sizes.len() {
            0 => {}
            1 => plans[0].process(data),
            _ => {
                let (rows, cols) = (self.sizes[0], self.sizes[1]);
                for row in data.chunks_exact_mut(cols) {
                    plans[1].process(row);
                }
                let mut column = vec![Complex64::new(0.0, 0.0); rows];
                for c in 0..cols {
                    for r in 0..rows {
                        column[r] = data[r * cols + c];
                    }
                    plans[0].process(&mut column);
                    for r in 0..rows {
                        data[r * cols + c] = column[r];
                    }
                }
            }
        }
    }

    /// Multiplier of `∂_p ∂_q` at spectral index `idx`. First derivatives of
    /// the Nyquist mode are ambiguous on an even grid, so mixed derivatives
    /// drop it.
    pub fn second_derivative_symbol(&self, idx: usize, p: usize, q: usize) -> f64 {
        let k = self.mode(idx);
        if p != q && (self.is_nyquist(idx, p) || self.is_nyquist(idx, q)) {
            return 0.0;
        }
        -k[p] * k[q]
    }

    /// All second derivatives `∂_p ∂_q u` for `p ≤ q` over active directions,
    /// in the order of [`derivative_pairs`].
    pub fn second_derivatives(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let spectrum = self.forward(values);
        derivative_pairs(self.sizes.len())
            .into_iter()
            .map(|(p, q)| {
                let scaled = spectrum
                    .iter()
                    .enumerate()
                    .map(|(idx, c)| c * self.second_derivative_symbol(idx, p, q))
                    .collect();
                self.inverse_real(scaled)
            })
            .collect()
    }

    /// Fraction of non-mean spectral energy carried by modes beyond two
    /// thirds of the resolvable band in any direction.
    pub fn high_band_energy_fraction(&self, values: &[f64]) -> f64 {
        let spectrum = self.forward(values);
        let (mut high, mut total) = (0.0, 0.0);
        for (idx, c) in spectrum.iter().enumerate().skip(1) {
            let e = c.norm_sqr();
            total += e;
            let k = self.mode(idx);
            if k.iter().zip(&self.sizes).any(|(k, &m)| k.abs() > m as f64 / 3.0) {
                high += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            high / total
        }
    }
}

/// Ordered pairs `(p, q)`, `p ≤ q`, over `d` active directions.
pub fn derivative_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for p in 0..d {
        for q in p..d {
            out.push((p, q));
        }
    }
    out
}

fn wavenumbers(m: usize) -> Vec<f64> {
    (0..m)
        .map(|j| if j <= m / 2 { j as f64 } else { j as f64 - m as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_validation() {
        assert!(PeriodicField::zeros(2, &[0, 2], &[16, 8]).is_ok());
        assert!(PeriodicField::zeros(2, &[2, 0], &[16, 8]).is_err());
        assert!(PeriodicField::zeros(1, &[0, 2], &[16, 8]).is_err());
        assert!(PeriodicField::zeros(2, &[0], &[12]).is_err());
        assert!(PeriodicField::zeros(4, &[0], &[16]).is_err());
        let constant = PeriodicField::zeros(3, &[], &[]).unwrap();
        assert_eq!(constant.len(), 1);
    }

    #[test]
    fn second_derivatives_of_trigonometric_polynomial() {
        let sizes = [16, 32];
        let f = PeriodicField::from_fn(2, &[0, 3], &sizes, |c| (2.0 * c[0]).sin() * (3.0 * c[1]).cos()).unwrap();
        let grid = SpectralGrid::for_field(&f);
        let d = grid.second_derivatives(f.values());
        for idx in 0..f.len() {
            let c = f.coords(idx);
            let (s, co) = ((2.0 * c[0]).sin(), (3.0 * c[1]).cos());
            let (cs, sn) = ((2.0 * c[0]).cos(), (3.0 * c[1]).sin());
            assert!((d[0][idx] + 4.0 * s * co).abs() < 1e-11);
            assert!((d[1][idx] + 6.0 * cs * sn).abs() < 1e-11);
            assert!((d[2][idx] + 9.0 * s * co).abs() < 1e-11);
        }
    }

    #[test]
    fn mean_is_exact_for_resolved_modes() {
        let f = PeriodicField::from_fn(1, &[0, 1], &[8, 8], |c| 0.3 + c[0].cos() * (3.0 * c[1]).sin()).unwrap();
        assert!((f.mean() - 0.3).abs() < 1e-15);
    }
}
