use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Real samples of a periodic field on a uniform grid over `[0, L)`.
///
/// Node `j` sits at `x_j = j * spacing`. The default spacing is `1/N`, i.e.
/// the unit torus; a different spacing is only used for lattice-unit
/// stencils.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    values: Vec<f64>,
    spacing: f64,
}

impl GridField {
    /// Field on the unit torus. Requires at least four finite samples.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let spacing = 1.0 / values.len().max(1) as f64;
        Self::with_spacing(values, spacing)
    }

    pub fn with_spacing(values: Vec<f64>, spacing: f64) -> Result<Self> {
        if values.len() < 4 {
            return Err(Error::BadGrid(format!("need at least 4 nodes, got {}", values.len())));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::BadGrid(format!("spacing must be positive, got {spacing}")));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::BadGrid(format!("non-finite sample at index {index}")));
        }
        Ok(Self { values, spacing })
    }

    /// Samples `f(x_j)` at the nodes of the unit torus with `n` points.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dx = 1.0 / n as f64;
        Self::new((0..n).map(|j| f(j as f64 * dx)).collect())
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub(crate) fn from_parts_unchecked(values: Vec<f64>, spacing: f64) -> Self {
        Self { values, spacing }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Domain length `N * spacing`.
    pub fn domain_length(&self) -> f64 {
        self.spacing * self.values.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.spacing
    }

    /// True for grids the pseudo-spectral solvers accept: a power of two
    /// with at least 16 nodes.
    pub fn is_spectral_grid(&self) -> bool {
        self.len() >= 16 && self.len().is_power_of_two()
    }

    pub(crate) fn require_spectral(&self) -> Result<()> {
        if self.is_spectral_grid() {
            Ok(())
        } else {
            Err(Error::BadGrid(format!(
                "spectral operations need a power-of-two grid with >= 16 nodes, got {}",
                self.len()
            )))
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// `∫ f dx` by the uniform-grid rule (exact for trigonometric
    /// polynomials resolved by the grid).
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spacing
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the smallest sample (first one on ties).
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (j, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = j;
            }
        }
        best
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect(), spacing: self.spacing }
    }

    /// Discrete L² norm `sqrt(∫ f² dx)`.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.spacing).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sqrt(∫ (f - g)² dx)`; both fields must share the grid.
    pub fn l2_distance(&self, other: &GridField) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::GridMismatch(format!("{} vs {} nodes", self.len(), other.len())));
        }
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok((s * self.spacing).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_and_non_finite_grids() {
        assert!(GridField::new(vec![0.0; 3]).is_err());
        assert!(GridField::new(vec![0.0, 1.0, f64::NAN, 2.0]).is_err());
        assert!(GridField::with_spacing(vec![0.0; 8], 0.0).is_err());
    }

    #[test]
    fn spectral_grid_predicate() {
        assert!(GridField::constant(16, 1.0).unwrap().is_spectral_grid());
        assert!(!GridField::constant(8, 1.0).unwrap().is_spectral_grid());
        assert!(!GridField::constant(24, 1.0).unwrap().is_spectral_grid());
    }

    #[test]
    fn integral_of_trig_polynomial_is_exact() {
        let f = GridField::from_fn(32, |x| 2.0 + (2.0 * std::f64::consts::PI * 3.0 * x).cos()).unwrap();
        assert!((f.integral() - 2.0).abs() < 1e-14);
        assert_eq!(f.argmin(), f.values().iter().enumerate().fold(0, |b, (j, &v)| if v < f.values()[b] { j } else { b }));
    }
}
