//! Indirect-utility schedules, tie-breaking rules, market segmentation,
//! pricing and firm income.
//!
//! A schedule is parametrized by `α_k ≥ 0`, the per-cell value of
//! `−d/dθ √(−v′)`, and a tail slope `√(−v′(1)) ≥ 0`. Writing
//! `s = √(−v′)`, the root slope is continuous and piecewise linear:
//! `s(1)` is the tail slope and `s` grows by `α_k · width` across cell `k`
//! going left. Then `v′ = −s²` and `v(θ) = ∫_θ^1 s²`, so every nonnegative
//! parameter vector yields a convex, nonincreasing, nonnegative `v` with
//! `v(1) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{Claim, ProbSpace, TypeGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySchedule {
    alpha: Vec<f64>,
    tail_slope: f64,
    grid: TypeGrid,
}

/// Per-cell values of a reconstructed schedule, evaluated at cell midpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    /// `√(−v′)` at each midpoint.
    pub slope_root: Vec<f64>,
    /// `v′` at each midpoint.
    pub derivative: Vec<f64>,
    /// `v` at each midpoint.
    pub value: Vec<f64>,
}

impl UtilitySchedule {
    pub fn new(grid: TypeGrid, alpha: Vec<f64>, tail_slope: f64) -> Result<Self> {
        grid.check_len(&alpha)?;
        if let Some((k, a)) = alpha
            .iter()
            .enumerate()
            .find(|(_, a)| !a.is_finite() || **a < 0.0)
        {
            return Err(Error::InvalidSchedule(format!("alpha[{k}] = {a} is negative")));
        }
        if !tail_slope.is_finite() || tail_slope < 0.0 {
            return Err(Error::InvalidSchedule(format!(
                "tail slope {tail_slope} is negative"
            )));
        }
        Ok(Self {
            alpha,
            tail_slope,
            grid,
        })
    }

    /// The schedule of a market with no trade: `v ≡ 0`.
    pub fn zero(grid: TypeGrid) -> Self {
        let n = grid.cells();
        Self {
            alpha: vec![0.0; n],
            tail_slope: 0.0,
            grid,
        }
    }

    /// Flat layout `[α_0, …, α_{n−1}, tail]`.
    pub fn from_flat(grid: TypeGrid, flat: &[f64]) -> Result<Self> {
        let n = grid.cells();
        if flat.len() != n + 1 {
            return Err(Error::DimensionMismatch {
                expected: n + 1,
                actual: flat.len(),
            });
        }
        Self::new(grid, flat[..n].to_vec(), flat[n])
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = self.alpha.clone();
        flat.push(self.tail_slope);
        flat
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    pub fn grid(&self) -> &TypeGrid {
        &self.grid
    }

    /// `√(−v′)` at the cell boundaries `a, a+w, …, 1` (length `n + 1`).
    pub fn boundary_roots(&self) -> Vec<f64> {
        let n = self.grid.cells();
        let w = self.grid.cell_width();
        let mut roots = vec![0.0; n + 1];
        roots[n] = self.tail_slope;
        for k in (0..n).rev() {
            roots[k] = roots[k + 1] + self.alpha[k] * w;
        }
        roots
    }

    /// `√(−v′(θ))` at an arbitrary type.
    pub fn slope_root_at(&self, theta: f64) -> Result<f64> {
        let k = self.grid.cell_of(theta)?;
        let roots = self.boundary_roots();
        Ok(roots[k + 1] + self.alpha[k] * (self.grid.boundary(k + 1) - theta))
    }

    /// `v(θ) = ∫_θ^1 s(t)² dt`, integrated exactly on the piecewise-linear `s`.
    pub fn value_at(&self, theta: f64) -> Result<f64> {
        let k = self.grid.cell_of(theta)?;
        let roots = self.boundary_roots();
        let w = self.grid.cell_width();
        let right = self.grid.boundary(k + 1);
        let s = roots[k + 1] + self.alpha[k] * (right - theta);
        let b = roots[k + 1];
        let mut v = (right - theta) * (s * s + s * b + b * b) / 3.0;
        for j in (k + 1)..self.grid.cells() {
            v += cell_square_integral(w, roots[j], roots[j + 1]);
        }
        Ok(v)
    }

    /// `v`, `v′` and `√(−v′)` at every cell midpoint.
    pub fn reconstruct(&self) -> Reconstruction {
        let n = self.grid.cells();
        let w = self.grid.cell_width();
        let roots = self.boundary_roots();
        let mut slope_root = vec![0.0; n];
        let mut value = vec![0.0; n];
        let mut tail_integral = 0.0;
        for k in (0..n).rev() {
            let s = 0.5 * (roots[k] + roots[k + 1]);
            let b = roots[k + 1];
            slope_root[k] = s;
            value[k] = tail_integral + half_cell_square_integral(w, s, b);
            tail_integral += cell_square_integral(w, roots[k], roots[k + 1]);
        }
        let derivative = slope_root.iter().map(|s| -s * s).collect();
        Reconstruction {
            slope_root,
            derivative,
            value,
        }
    }

    /// Prices `p(θ) = θ v′(θ) − v(θ)` at the cell midpoints.
    pub fn prices(&self) -> Vec<f64> {
        let rec = self.reconstruct();
        self.grid
            .midpoints()
            .iter()
            .zip(rec.derivative.iter().zip(&rec.value))
            .map(|(theta, (dv, v))| theta * dv - v)
            .collect()
    }

    /// `v(a) − v(1) = v(a)`, the bound on `‖X‖₂²` of incentive-compatible
    /// products built on this schedule.
    pub fn norm_bound(&self) -> f64 {
        self.value_at(self.grid.lower()).unwrap_or(0.0)
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.grid == other.grid
    }
}

/// `∫` of `s²` over a full cell with linear `s` from `left` to `right`.
fn cell_square_integral(width: f64, left: f64, right: f64) -> f64 {
    width * (left * left + left * right + right * right) / 3.0
}

/// `∫` of `s²` over the right half of a cell, from midpoint value `mid` to `right`.
fn half_cell_square_integral(width: f64, mid: f64, right: f64) -> f64 {
    0.5 * width * (mid * mid + mid * right + right * right) / 3.0
}

/// Per-cell values of `v` and its root slope.
pub fn reconstruct_v(schedule: &UtilitySchedule) -> Reconstruction {
    schedule.reconstruct()
}

pub fn price_schedule(schedule: &UtilitySchedule) -> Vec<f64> {
    schedule.prices()
}

/// Firm 1's share of each type cell; firm 2 takes the complement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TieBreakRule {
    weights: Vec<f64>,
}

impl TieBreakRule {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some((k, f)) = weights
            .iter()
            .enumerate()
            .find(|(_, f)| !(**f >= 0.0 && **f <= 1.0))
        {
            return Err(Error::InvalidDecision(format!(
                "tie-break weight {k} = {f} outside [0, 1]"
            )));
        }
        Ok(Self { weights })
    }

    pub fn constant(cells: usize, share: f64) -> Result<Self> {
        Self::new(vec![share; cells])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Share of firm `firm` (0 or 1) in each cell.
    pub fn firm_share(&self, firm: usize) -> Vec<f64> {
        match firm {
            0 => self.weights.clone(),
            _ => self.weights.iter().map(|f| 1.0 - f).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    /// `v₁ = v₂` within tolerance.
    Tied,
    /// `v₁ > v₂`.
    FirmOne,
    /// `v₂ > v₁`.
    FirmTwo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSegmentation {
    pub theta0: Vec<usize>,
    pub theta1: Vec<usize>,
    pub theta2: Vec<usize>,
    /// Cell boundaries where `v₁ − v₂` changes sign between adjacent cells.
    pub shift_points: Vec<f64>,
    pub labels: Vec<Segment>,
}

impl MarketSegmentation {
    /// Per-firm shares: full on a firm's own segment, the TBR on ties.
    pub fn shares(&self, tbr: &TieBreakRule) -> Result<[Vec<f64>; 2]> {
        if tbr.len() != self.labels.len() {
            return Err(Error::DimensionMismatch {
                expected: self.labels.len(),
                actual: tbr.len(),
            });
        }
        let first: Vec<f64> = self
            .labels
            .iter()
            .zip(tbr.weights())
            .map(|(seg, f)| match seg {
                Segment::Tied => *f,
                Segment::FirmOne => 1.0,
                Segment::FirmTwo => 0.0,
            })
            .collect();
        let second = self
            .labels
            .iter()
            .zip(&first)
            .map(|(seg, f)| match seg {
                Segment::Tied => 1.0 - f,
                Segment::FirmOne => 0.0,
                Segment::FirmTwo => 1.0,
            })
            .collect();
        Ok([first, second])
    }
}

/// Default tie tolerance `1e-9 · (1 + ‖v₁‖∞ + ‖v₂‖∞)`.
pub fn default_tie_tolerance(v1: &[f64], v2: &[f64]) -> f64 {
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    1e-9 * (1.0 + sup(v1) + sup(v2))
}

/// Classifies each cell by the sign of `v₁ − v₂` at its midpoint.
///
/// Cells within `tol` are ties. A shift point is recorded at the boundary
/// between adjacent cells whose strict winners differ; a tie region in
/// between suppresses it, since the TBR governs there.
pub fn segment_market(
    v1: &UtilitySchedule,
    v2: &UtilitySchedule,
    tol: Option<f64>,
) -> Result<MarketSegmentation> {
    if !v1.same_grid(v2) {
        return Err(Error::GridMismatch);
    }
    let r1 = v1.reconstruct();
    let r2 = v2.reconstruct();
    Ok(segment_values(v1.grid(), &r1.value, &r2.value, tol))
}

pub(crate) fn segment_values(
    grid: &TypeGrid,
    v1: &[f64],
    v2: &[f64],
    tol: Option<f64>,
) -> MarketSegmentation {
    let tol = tol.unwrap_or_else(|| default_tie_tolerance(v1, v2));
    let labels: Vec<Segment> = v1
        .iter()
        .zip(v2)
        .map(|(a, b)| {
            let d = a - b;
            if d > tol {
                Segment::FirmOne
            } else if d < -tol {
                Segment::FirmTwo
            } else {
                Segment::Tied
            }
        })
        .collect();
    let pick = |s: Segment| -> Vec<usize> {
        labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == s)
            .map(|(k, _)| k)
            .collect()
    };
    let shift_points = labels
        .windows(2)
        .enumerate()
        .filter(|(_, pair)| {
            matches!(
                (pair[0], pair[1]),
                (Segment::FirmOne, Segment::FirmTwo) | (Segment::FirmTwo, Segment::FirmOne)
            )
        })
        .map(|(k, _)| grid.boundary(k + 1))
        .collect();
    MarketSegmentation {
        theta0: pick(Segment::Tied),
        theta1: pick(Segment::FirmOne),
        theta2: pick(Segment::FirmTwo),
        shift_points,
        labels,
    }
}

/// `I = Σ_k (θ_k v′_k − v_k) · share_k · μ_k`; nonpositive since prices are.
pub fn firm_income(schedule: &UtilitySchedule, share: &[f64]) -> Result<f64> {
    let grid = schedule.grid();
    grid.check_len(share)?;
    let prices = schedule.prices();
    Ok(grid
        .cell_weights()
        .iter()
        .zip(prices.iter().zip(share))
        .map(|(m, (p, f))| m * p * f)
        .sum())
}

/// `a = Σ_k √(−v′_k) · share_k · μ_k`, the scale of a firm's traded claim.
pub fn aggregator(schedule: &UtilitySchedule, share: &[f64]) -> Result<f64> {
    let grid = schedule.grid();
    grid.check_len(share)?;
    let rec = schedule.reconstruct();
    Ok(grid
        .cell_weights()
        .iter()
        .zip(rec.slope_root.iter().zip(share))
        .map(|(m, (s, f))| m * s * f)
        .sum())
}

/// Gradients of the aggregator and of the income with respect to the flat
/// schedule parameters `[α_0, …, α_{n−1}, tail]`, for fixed shares.
pub(crate) fn schedule_gradients(schedule: &UtilitySchedule, share: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let grid = schedule.grid();
    let n = grid.cells();
    let w = grid.cell_width();
    let roots = schedule.boundary_roots();
    let mids = grid.midpoints();
    let coef: Vec<f64> = grid
        .cell_weights()
        .iter()
        .zip(share)
        .map(|(m, f)| m * f)
        .collect();

    // Derivatives with respect to the boundary roots B_0..B_n.
    let mut d_agg = vec![0.0; n + 1];
    let mut d_inc = vec![0.0; n + 1];
    let mut prefix = 0.0;
    for k in 0..n {
        let c = coef[k];
        let s = 0.5 * (roots[k] + roots[k + 1]);
        let b = roots[k + 1];
        d_agg[k] += 0.5 * c;
        d_agg[k + 1] += 0.5 * c;

        // −θ s² term
        d_inc[k] -= c * mids[k] * s;
        d_inc[k + 1] -= c * mids[k] * s;

        // −v_k, half-cell part
        let dh_ds = w / 6.0 * (2.0 * s + b);
        let dh_db = w / 6.0 * (s + 2.0 * b);
        d_inc[k] -= c * 0.5 * dh_ds;
        d_inc[k + 1] -= c * (0.5 * dh_ds + dh_db);

        // −v_j for j < k picks up the full-cell integral of cell k.
        if prefix != 0.0 {
            d_inc[k] -= prefix * w / 3.0 * (2.0 * roots[k] + roots[k + 1]);
            d_inc[k + 1] -= prefix * w / 3.0 * (roots[k] + 2.0 * roots[k + 1]);
        }
        prefix += c;
    }

    // B_j = tail + w Σ_{l ≥ j} α_l.
    let chain = |d: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n + 1];
        let mut acc = 0.0;
        for l in 0..n {
            acc += d[l];
            out[l] = w * acc;
        }
        out[n] = acc + d[n];
        out
    };
    (chain(&d_agg), chain(&d_inc))
}

/// Pointwise maximum of two schedules on their common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperEnvelope {
    pub value: Vec<f64>,
    pub slope_root: Vec<f64>,
}

/// Upper envelope `max{v₁, v₂}`; on ties the steeper root slope is kept.
pub fn upper_envelope(v1: &UtilitySchedule, v2: &UtilitySchedule, tol: Option<f64>) -> Result<UpperEnvelope> {
    let seg = segment_market(v1, v2, tol)?;
    let r1 = v1.reconstruct();
    let r2 = v2.reconstruct();
    let mut value = Vec::with_capacity(seg.labels.len());
    let mut slope_root = Vec::with_capacity(seg.labels.len());
    for (k, label) in seg.labels.iter().enumerate() {
        let (v, s) = match label {
            Segment::FirmOne => (r1.value[k], r1.slope_root[k]),
            Segment::FirmTwo => (r2.value[k], r2.slope_root[k]),
            Segment::Tied => (r1.value[k].max(r2.value[k]), r1.slope_root[k].max(r2.slope_root[k])),
        };
        value.push(v);
        slope_root.push(s);
    }
    Ok(UpperEnvelope { value, slope_root })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

/// Checks the envelope identity `v′(θ) = −Var[X(θ)]` cell by cell.
pub fn envelope_check(
    schedule: &UtilitySchedule,
    space: &ProbSpace,
    contracts: &[Claim],
) -> Result<EnvelopeReport> {
    let rec = schedule.reconstruct();
    if contracts.len() != rec.derivative.len() {
        return Err(Error::DimensionMismatch {
            expected: rec.derivative.len(),
            actual: contracts.len(),
        });
    }
    let residuals = rec
        .derivative
        .iter()
        .zip(contracts)
        .map(|(dv, x)| Ok((dv + space.variance(x)?).abs()))
        .collect::<Result<Vec<f64>>>()?;
    let max_residual = residuals.iter().fold(0.0f64, |m, r| m.max(*r));
    Ok(EnvelopeReport {
        residuals,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TypeGrid {
        TypeGrid::uniform(0.05, n).unwrap()
    }

    #[test]
    fn zero_schedule_reconstructs_to_zero() {
        let rec = UtilitySchedule::zero(grid(6)).reconstruct();
        assert!(rec.value.iter().chain(&rec.derivative).all(|x| *x == 0.0));
        assert!(UtilitySchedule::zero(grid(6)).prices().iter().all(|p| *p == 0.0));
    }

    #[test]
    fn constant_slope_gives_linear_v_and_flat_price() {
        let g = grid(5);
        let s = 0.7;
        let sched = UtilitySchedule::new(g.clone(), vec![0.0; 5], s).unwrap();
        let rec = sched.reconstruct();
        for (k, theta) in g.midpoints().iter().enumerate() {
            assert!((rec.derivative[k] + s * s).abs() < 1e-15);
            assert!((rec.value[k] - s * s * (1.0 - theta)).abs() < 1e-14);
        }
        for p in sched.prices() {
            assert!((p + s * s).abs() < 1e-14);
        }
        assert_eq!(sched.value_at(1.0).unwrap(), 0.0);
    }

    #[test]
    fn single_cell_alpha_matches_hand_integration() {
        // a = 0.2, n = 4, width 0.2; α = 3 on cell 1 ([0.4, 0.6]), tail 0.5.
        let g = TypeGrid::uniform(0.2, 4).unwrap();
        let sched = UtilitySchedule::new(g, vec![0.0, 3.0, 0.0, 0.0], 0.5).unwrap();
        // s = 0.5 on [0.6, 1], 0.5 + 3(0.6 − θ) on [0.4, 0.6], 1.1 on [0.2, 0.4].
        let v_06 = 0.25 * 0.4;
        // ∫_θ^0.6 (0.5 + 3(0.6 − t))² dt = ((0.5 + 3(0.6 − θ))³ − 0.125)/9
        let v_mid = |theta: f64| v_06 + ((0.5 + 3.0 * (0.6 - theta)).powi(3) - 0.125) / 9.0;
        let v_04 = v_mid(0.4);
        let oracle = [v_04 + 1.21 * 0.1, v_mid(0.5), 0.25 * 0.3, 0.25 * 0.1];
        let rec = sched.reconstruct();
        for k in 0..4 {
            assert!((rec.value[k] - oracle[k]).abs() < 1e-14, "cell {k}: {} vs {}", rec.value[k], oracle[k]);
        }
        assert!((rec.slope_root[1] - 0.8).abs() < 1e-14);
        assert!((sched.value_at(0.45).unwrap() - v_mid(0.45)).abs() < 1e-14);
        assert!((sched.slope_root_at(0.45).unwrap() - 0.95).abs() < 1e-14);
        assert!((sched.norm_bound() - (v_04 + 1.21 * 0.2)).abs() < 1e-14);
    }

    #[test]
    fn schedule_validation_and_flat_layout() {
        let g = grid(3);
        assert!(UtilitySchedule::new(g.clone(), vec![0.0, -1.0, 0.0], 0.0).is_err());
        assert!(UtilitySchedule::new(g.clone(), vec![0.0; 3], -0.1).is_err());
        assert!(UtilitySchedule::new(g.clone(), vec![0.0; 2], 0.0).is_err());
        let s = UtilitySchedule::new(g.clone(), vec![1.0, 2.0, 3.0], 0.5).unwrap();
        assert_eq!(UtilitySchedule::from_flat(g, &s.to_flat()).unwrap(), s);
    }

    #[test]
    fn segmentation_cases() {
        let g = grid(6);
        let flat = UtilitySchedule::new(g.clone(), vec![0.0; 6], 1.0).unwrap();
        let seg = segment_market(&flat, &flat, None).unwrap();
        assert_eq!(seg.theta0.len(), 6);
        assert!(seg.shift_points.is_empty());

        let higher = UtilitySchedule::new(g.clone(), vec![0.0; 6], 1.2).unwrap();
        let seg = segment_market(&higher, &flat, None).unwrap();
        assert_eq!(seg.theta1, (0..6).collect::<Vec<_>>());

        // Linear v₂ = c(1 − θ) against a kinked v₁ that is steep only on the
        // leftmost cells: v₁ wins at low types and loses at high types.
        let linear = UtilitySchedule::new(g.clone(), vec![0.0; 6], 0.6).unwrap();
        let kinked = UtilitySchedule::new(g.clone(), vec![6.0, 6.0, 0.0, 0.0, 0.0, 0.0], 0.3).unwrap();
        let seg = segment_market(&kinked, &linear, None).unwrap();
        let r1 = kinked.reconstruct().value;
        let r2 = linear.reconstruct().value;
        // Sign-scan oracle.
        let signs: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| (a - b).signum()).collect();
        let oracle: Vec<f64> = (0..5)
            .filter(|&k| signs[k] * signs[k + 1] < 0.0)
            .map(|k| g.boundary(k + 1))
            .collect();
        assert_eq!(oracle.len(), 1);
        assert_eq!(seg.shift_points, oracle);
        assert!(!seg.theta1.is_empty() && !seg.theta2.is_empty());
        assert_eq!(seg.theta1.len() + seg.theta2.len() + seg.theta0.len(), 6);

        let other = UtilitySchedule::zero(grid(5));
        assert_eq!(segment_market(&flat, &other, None), Err(Error::GridMismatch));
    }

    #[test]
    fn income_cases() {
        let g = grid(4);
        let zero = UtilitySchedule::zero(g.clone());
        assert_eq!(firm_income(&zero, &[0.3; 4]).unwrap(), 0.0);
        let sched = UtilitySchedule::new(g.clone(), vec![1.0, 0.5, 0.0, 2.0], 0.4).unwrap();
        assert_eq!(firm_income(&sched, &[0.0; 4]).unwrap(), 0.0);
        assert!(firm_income(&sched, &[1.0; 4]).unwrap() < 0.0);
        assert!(firm_income(&sched, &[1.0; 3]).is_err());
    }

    #[test]
    fn aggregate_income_is_tbr_invariant_when_schedules_coincide() {
        let g = grid(6);
        let v = UtilitySchedule::new(g.clone(), vec![2.0, 1.0, 0.5, 0.0, 0.3, 0.1], 0.2).unwrap();
        let seg = segment_market(&v, &v, None).unwrap();
        let full = firm_income(&v, &[1.0; 6]).unwrap();
        for f in [0.0, 0.3, 0.77, 1.0] {
            let tbr = TieBreakRule::constant(6, f).unwrap();
            let [s1, s2] = seg.shares(&tbr).unwrap();
            let total = firm_income(&v, &s1).unwrap() + firm_income(&v, &s2).unwrap();
            assert!((total - full).abs() < 1e-12);
        }
    }

    #[test]
    fn tbr_validation() {
        assert!(TieBreakRule::new(vec![0.0, 1.0, 0.5]).is_ok());
        assert!(TieBreakRule::new(vec![1.1]).is_err());
        assert!(TieBreakRule::new(vec![f64::NAN]).is_err());
        let t = TieBreakRule::new(vec![0.25, 1.0]).unwrap();
        assert_eq!(t.firm_share(1), vec![0.75, 0.0]);
    }

    #[test]
    fn envelope_identity_for_collinear_contracts() {
        let g = grid(6);
        let space = ProbSpace::uniform(4).unwrap();
        let sched = UtilitySchedule::new(g, vec![1.5, 0.2, 0.0, 0.7, 0.1, 0.0], 0.3).unwrap();
        let z = [1.0, -1.0, 1.0, -1.0]; // mean 0, variance 1
        let rec = sched.reconstruct();
        let contracts: Vec<Claim> = rec.slope_root.iter().map(|s| Claim(z.iter().map(|x| s * x).collect())).collect();
        let report = envelope_check(&sched, &space, &contracts).unwrap();
        assert!(report.max_residual < 1e-9);

        let zero = UtilitySchedule::zero(TypeGrid::uniform(0.05, 6).unwrap());
        let report = envelope_check(&zero, &space, &vec![Claim::zeros(4); 6]).unwrap();
        assert_eq!(report.max_residual, 0.0);

        // Fault injection: scale one contract so its variance grows by δ.
        let delta = 0.037;
        let mut bad = contracts.clone();
        let s = rec.slope_root[3];
        let factor = ((s * s + delta) / (s * s)).sqrt();
        bad[3] = bad[3].scaled(factor);
        let report = envelope_check(&sched, &space, &bad).unwrap();
        assert!((report.max_residual - delta).abs() < 1e-12);
    }

    #[test]
    fn schedule_gradients_match_finite_differences() {
        let g = TypeGrid::uniform(0.1, 5).unwrap();
        let base = vec![1.3, 0.4, 2.0, 0.0, 0.8, 0.35];
        let share = [0.2, 1.0, 0.5, 0.9, 0.0];
        let sched = UtilitySchedule::from_flat(g.clone(), &base).unwrap();
        let (ga, gi) = schedule_gradients(&sched, &share);
        let h = 1e-6;
        for j in 0..base.len() {
            let mut up = base.clone();
            let mut dn = base.clone();
            up[j] += h;
            dn[j] = (dn[j] - h).max(0.0);
            let step = up[j] - dn[j];
            let su = UtilitySchedule::from_flat(g.clone(), &up).unwrap();
            let sd = UtilitySchedule::from_flat(g.clone(), &dn).unwrap();
            let fa = (aggregator(&su, &share).unwrap() - aggregator(&sd, &share).unwrap()) / step;
            let fi = (firm_income(&su, &share).unwrap() - firm_income(&sd, &share).unwrap()) / step;
            assert!((fa - ga[j]).abs() < 1e-7, "agg {j}: {fa} vs {}", ga[j]);
            assert!((fi - gi[j]).abs() < 1e-6, "inc {j}: {fi} vs {}", gi[j]);
        }
    }
}
