//! Finite probability spaces, claims over their atoms, and agent-type grids.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A finite sample space with strictly positive atom weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbSpace {
    weights: Vec<f64>,
}

impl ProbSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidSpace(format!(
                "need at least 2 atoms, got {}",
                weights.len()
            )));
        }
        if let Some((k, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w <= 0.0)
        {
            return Err(Error::InvalidSpace(format!(
                "atom {k} has non-positive weight {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidSpace(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Uniform weights `1/d` over `d` atoms.
    pub fn uniform(atoms: usize) -> Result<Self> {
        if atoms < 2 {
            return Err(Error::InvalidSpace(format!(
                "need at least 2 atoms, got {atoms}"
            )));
        }
        Ok(Self {
            weights: vec![1.0 / atoms as f64; atoms],
        })
    }

    pub fn atom_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when every atom carries the same weight.
    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|w| (w - w0).abs() <= 1e-15)
    }

    pub fn check(&self, claim: &[f64]) -> Result<()> {
        if claim.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: claim.len(),
            });
        }
        Ok(())
    }

    /// Weighted expectation `Σ w_k x_k`.
    pub fn mean(&self, claim: &[f64]) -> Result<f64> {
        self.check(claim)?;
        Ok(self.mean_unchecked(claim))
    }

    /// `E[X²] − E[X]²`, clamped at zero against roundoff.
    pub fn variance(&self, claim: &[f64]) -> Result<f64> {
        self.check(claim)?;
        Ok(self.variance_unchecked(claim))
    }

    pub fn second_moment(&self, claim: &[f64]) -> Result<f64> {
        self.check(claim)?;
        Ok(self.second_moment_unchecked(claim))
    }

    /// `‖X‖₂` under the atom weights.
    pub fn l2_norm(&self, claim: &[f64]) -> Result<f64> {
        Ok(self.second_moment(claim)?.sqrt())
    }

    pub(crate) fn mean_unchecked(&self, claim: &[f64]) -> f64 {
        self.weights.iter().zip(claim).map(|(w, x)| w * x).sum()
    }

    pub(crate) fn second_moment_unchecked(&self, claim: &[f64]) -> f64 {
        self.weights.iter().zip(claim).map(|(w, x)| w * x * x).sum()
    }

    pub(crate) fn variance_unchecked(&self, claim: &[f64]) -> f64 {
        // Centered form; the raw-moment difference loses digits for large means.
        let m = self.mean_unchecked(claim);
        self.weights
            .iter()
            .zip(claim)
            .map(|(w, x)| w * (x - m) * (x - m))
            .sum::<f64>()
            .max(0.0)
    }
}

/// A payoff vector over the atoms of a [`ProbSpace`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Claim(pub Vec<f64>);

impl Claim {
    pub fn new(payoffs: Vec<f64>) -> Self {
        Self(payoffs)
    }

    pub fn zeros(atoms: usize) -> Self {
        Self(vec![0.0; atoms])
    }

    pub fn constant(atoms: usize, value: f64) -> Self {
        Self(vec![value; atoms])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|x| x * factor).collect())
    }

    /// `self + factor · other`, componentwise.
    pub fn axpy(&self, factor: f64, other: &[f64]) -> Self {
        Self(
            self.0
                .iter()
                .zip(other)
                .map(|(x, y)| x + factor * y)
                .collect(),
        )
    }

    pub fn shifted(&self, cash: f64) -> Self {
        Self(self.0.iter().map(|x| x + cash).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Claim {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Claim {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Claim {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Uniform partition of the type interval `[a, 1]` into `n` cells, each
/// carrying a μ-mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeGrid {
    lower: f64,
    cell_weights: Vec<f64>,
}

impl TypeGrid {
    pub const DEFAULT_LOWER: f64 = 0.05;

    /// Lebesgue measure on `[a, 1]`: every cell weighs `(1 − a)/n`.
    pub fn uniform(lower: f64, cells: usize) -> Result<Self> {
        Self::check_lower(lower)?;
        if cells == 0 {
            return Err(Error::InvalidGrid("cell count must be positive".into()));
        }
        let width = (1.0 - lower) / cells as f64;
        Ok(Self {
            lower,
            cell_weights: vec![width; cells],
        })
    }

    /// Grid with caller-supplied μ-masses per cell.
    pub fn with_weights(lower: f64, cell_weights: Vec<f64>) -> Result<Self> {
        Self::check_lower(lower)?;
        if cell_weights.is_empty() {
            return Err(Error::InvalidGrid("cell count must be positive".into()));
        }
        if let Some((k, w)) = cell_weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w <= 0.0)
        {
            return Err(Error::InvalidGrid(format!(
                "cell {k} has non-positive weight {w}"
            )));
        }
        Ok(Self {
            lower,
            cell_weights,
        })
    }

    fn check_lower(lower: f64) -> Result<()> {
        if !(lower > 0.0 && lower < 1.0) {
            return Err(Error::InvalidGrid(format!(
                "lower type bound must lie in (0, 1), got {lower}"
            )));
        }
        Ok(())
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn cells(&self) -> usize {
        self.cell_weights.len()
    }

    pub fn cell_width(&self) -> f64 {
        (1.0 - self.lower) / self.cells() as f64
    }

    pub fn cell_weights(&self) -> &[f64] {
        &self.cell_weights
    }

    /// μ([a, 1]).
    pub fn total_mass(&self) -> f64 {
        self.cell_weights.iter().sum()
    }

    /// Left edge of cell `k`; `boundary(n)` is 1.
    pub fn boundary(&self, k: usize) -> f64 {
        if k == self.cells() {
            1.0
        } else {
            self.lower + k as f64 * self.cell_width()
        }
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        self.lower + (k as f64 + 0.5) * self.cell_width()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.cells()).map(|k| self.midpoint(k)).collect()
    }

    /// Cell containing `theta`; the right endpoint belongs to the last cell.
    pub fn cell_of(&self, theta: f64) -> Result<usize> {
        self.check_type(theta)?;
        let k = ((theta - self.lower) / self.cell_width()).floor() as usize;
        Ok(k.min(self.cells() - 1))
    }

    pub fn check_type(&self, theta: f64) -> Result<()> {
        if !(theta >= self.lower && theta <= 1.0) {
            return Err(Error::TypeOutOfRange {
                theta,
                lower: self.lower,
            });
        }
        Ok(())
    }

    pub fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.cells() {
            return Err(Error::DimensionMismatch {
                expected: self.cells(),
                actual: values.len(),
            });
        }
        Ok(())
    }

    /// Midpoint-rule integral `Σ g_k μ_k` of per-cell values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.cell_weights.iter().zip(values).map(|(m, g)| m * g).sum()
    }

    /// Mean–variance utility `E[X] − θ Var[X]` of an agent of type `theta`.
    pub fn mv_utility(&self, space: &ProbSpace, theta: f64, claim: &[f64]) -> Result<f64> {
        self.check_type(theta)?;
        Ok(space.mean(claim)? - theta * space.variance(claim)?)
    }
}

/// Unchecked `E[X] − θ Var[X]` on raw moments, for hot loops.
pub(crate) fn mv_value(mean: f64, variance: f64, theta: f64) -> f64 {
    mean - theta * variance
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w1() -> Vec<f64> {
        [-1.0, -3.0, -9.0, -3.0, -1.0, -0.2, -0.1, -0.1, -0.2, 1.0, -3.0, -9.0, -3.0, -1.0]
            .iter()
            .map(|x| 0.5 * x)
            .collect()
    }

    #[test]
    fn mean_of_constant_and_symmetric_claims() {
        let s14 = ProbSpace::uniform(14).unwrap();
        assert!((s14.mean(&vec![1.0; 14]).unwrap() - 1.0).abs() < 1e-15);
        let s2 = ProbSpace::uniform(2).unwrap();
        assert_eq!(s2.mean(&[-1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn mean_matches_direct_sum() {
        let s = ProbSpace::uniform(14).unwrap();
        let x = w1();
        let mut acc = 0.0;
        for v in &x {
            acc += v / 14.0;
        }
        assert!((s.mean(&x).unwrap() - acc).abs() < 1e-14);
        // 0.5 * (-32.6) / 14
        assert!((acc - (-16.3 / 14.0)).abs() < 1e-14);
    }

    #[test]
    fn variance_cases() {
        let s2 = ProbSpace::uniform(2).unwrap();
        assert_eq!(s2.variance(&[3.0, 3.0]).unwrap(), 0.0);
        assert!((s2.variance(&[-1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);

        // Two-pass oracle on W2.
        let s = ProbSpace::uniform(14).unwrap();
        let w2: Vec<f64> = [-0.03, -0.1, -0.18, -0.2, -1.0, -3.0, -9.0, -10.0, -3.0, -1.0, -0.2, -0.18, -0.1, -0.03]
            .iter()
            .map(|x| 0.5 * x)
            .collect();
        let m = w2.iter().sum::<f64>() / 14.0;
        let oracle = w2.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 14.0;
        assert!((s.variance(&w2).unwrap() - oracle).abs() < 1e-13);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = ProbSpace::uniform(3).unwrap();
        assert_eq!(
            s.mean(&[1.0, 2.0]),
            Err(Error::DimensionMismatch {
                expected: 3,
                actual: 2
            })
        );
        assert!(s.variance(&[1.0; 4]).is_err());
    }

    #[test]
    fn space_validation() {
        assert!(ProbSpace::new(vec![1.0]).is_err());
        assert!(ProbSpace::new(vec![0.5, 0.6]).is_err());
        assert!(ProbSpace::new(vec![1.0, 0.0]).is_err());
        assert!(ProbSpace::new(vec![0.25, 0.75]).is_ok());
        assert!(ProbSpace::uniform(1).is_err());
    }

    #[test]
    fn utility_cases() {
        let grid = TypeGrid::uniform(0.05, 6).unwrap();
        let s2 = ProbSpace::uniform(2).unwrap();
        assert_eq!(grid.mv_utility(&s2, 0.5, &[2.5, 2.5]).unwrap(), 2.5);
        assert!((grid.mv_utility(&s2, 1.0, &[-1.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(grid.mv_utility(&s2, 0.01, &[0.0, 0.0]).is_err());
        assert!(grid.mv_utility(&s2, 1.5, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn grid_geometry() {
        let g = TypeGrid::uniform(0.05, 6).unwrap();
        assert!((g.total_mass() - 0.95).abs() < 1e-15);
        assert!((g.boundary(6) - 1.0).abs() < 1e-15);
        assert!((g.midpoint(0) - (0.05 + 0.95 / 12.0)).abs() < 1e-15);
        assert_eq!(g.cell_of(1.0).unwrap(), 5);
        assert_eq!(g.cell_of(0.05).unwrap(), 0);
        assert!(TypeGrid::uniform(0.0, 3).is_err());
        assert!(TypeGrid::with_weights(0.1, vec![0.5, -0.1]).is_err());
    }
}
