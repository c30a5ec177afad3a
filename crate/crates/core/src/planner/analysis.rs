use serde::{Deserialize, Serialize};

use super::{DecisionVector, Economy, FirmSpec, PlannerResult, ScheduleMode};
use crate::error::{Error, Result};
use crate::market::{upper_envelope, UpperEnvelope};
use crate::prob::{ProbSpace, TypeGrid};
use crate::risk::RiskMeasureSpec;

/// Constant share `K = ∫ s* f* dμ / ∫ s* dμ` over the envelope root slope
/// `s*`; `None` when nothing is traded.
pub fn extract_fix_mix(result: &PlannerResult, envelope: &UpperEnvelope, grid: &TypeGrid) -> Option<f64> {
    fix_mix_ratio(grid, &envelope.slope_root, &result.shares[0])
}

fn fix_mix_ratio(grid: &TypeGrid, slope_root: &[f64], share1: &[f64]) -> Option<f64> {
    let total = grid.integrate(slope_root);
    if total <= 1e-15 {
        return None;
    }
    let weighted: f64 = grid
        .cell_weights()
        .iter()
        .zip(slope_root.iter().zip(share1))
        .map(|(m, (s, f))| m * s * f)
        .sum();
    Some((weighted / total).clamp(0.0, 1.0))
}

pub(super) fn fix_mix_from_parts(economy: &Economy, d: &DecisionVector, share1: &[f64]) -> Result<Option<f64>> {
    let grid = economy.grid();
    let env = upper_envelope(&d.schedule(grid, 0)?, &d.schedule(grid, 1)?, None)?;
    Ok(fix_mix_ratio(grid, &env.slope_root, share1))
}

/// The solved decision with its TBR replaced by the constant `k`.
///
/// Only shared-schedule results qualify: there both firms already quote the
/// envelope on the whole market.
pub fn fix_mix_decision(result: &PlannerResult, k: f64) -> Result<DecisionVector> {
    if result.mode != ScheduleMode::Shared {
        return Err(Error::InvalidDecision(
            "fix-mix replacement needs a shared schedule".into(),
        ));
    }
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::InvalidDecision(format!("fix-mix share {k} outside [0, 1]")));
    }
    let mut d = result.decision.clone();
    d.tbr = vec![k; d.tbr.len()];
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmCollinearity {
    /// `max_θ |E[X(θ)]|`.
    pub mean_residual: f64,
    /// `max_θ |Var[X(θ)] + v′(θ)|`.
    pub variance_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollinearityReport {
    pub firms: [FirmCollinearity; 2],
    pub max_residual: f64,
}

/// Rebuilds `X_i(θ) = √(−v_i′(θ)) Z_i` per cell and checks the mean-zero
/// and envelope conditions.
pub fn collinearity_check(economy: &Economy, decision: &DecisionVector) -> Result<CollinearityReport> {
    let space = economy.space();
    let mut firms = [
        FirmCollinearity {
            mean_residual: 0.0,
            variance_residual: 0.0,
        },
        FirmCollinearity {
            mean_residual: 0.0,
            variance_residual: 0.0,
        },
    ];
    for (i, report) in firms.iter_mut().enumerate() {
        let rec = decision.schedule(economy.grid(), i)?.reconstruct();
        let z = decision.beta(i);
        let mean_z = space.mean(z)?;
        let var_z = space.variance(z)?;
        for (s, dv) in rec.slope_root.iter().zip(&rec.derivative) {
            report.mean_residual = report.mean_residual.max((s * mean_z).abs());
            report.variance_residual = report.variance_residual.max((s * s * var_z + dv).abs());
        }
    }
    let max_residual = firms
        .iter()
        .map(|f| f.mean_residual.max(f.variance_residual))
        .fold(0.0, f64::max);
    Ok(CollinearityReport { firms, max_residual })
}

/// `‖Z − Φ(Z)‖∞` with `Φ(Z) = −(e − E[e])/sd(e)`, `e = exp(−γ(W − aZ))`.
///
/// A constant exponential leaves `Φ` undefined; the residual is then taken
/// against `Z = 0`.
pub fn entropic_fixed_point_residual(firm: &FirmSpec, space: &ProbSpace, a: f64, z: &[f64]) -> Result<f64> {
    let RiskMeasureSpec::Entropic { risk_aversion } = firm.risk else {
        return Err(Error::InvalidRiskMeasure(
            "fixed-point residual needs an entropic firm".into(),
        ));
    };
    let phi = entropic_map(&firm.endowment, space, risk_aversion, a, z)?;
    Ok(z.iter().zip(&phi).map(|(z, p)| (z - p).abs()).fold(0.0, f64::max))
}

pub(crate) fn entropic_map(w: &[f64], space: &ProbSpace, gamma: f64, a: f64, z: &[f64]) -> Result<Vec<f64>> {
    space.check(w)?;
    space.check(z)?;
    let exponent: Vec<f64> = w.iter().zip(z).map(|(w, z)| -gamma * (w - a * z)).collect();
    let shift = exponent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = exponent.iter().map(|x| (x - shift).exp()).collect();
    let mean = space.mean(&e)?;
    let sd = space.variance(&e)?.sqrt();
    if sd <= 1e-300 || sd <= 1e-14 * mean {
        return Ok(vec![0.0; z.len()]);
    }
    Ok(e.iter().map(|e| -(e - mean) / sd).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferOutcome {
    /// `r = Σ ρ_i(W_i) − A`.
    pub rent: f64,
    /// Cash paid by firm 2 to firm 1, midpoint of the admissible interval.
    pub transfer: Option<f64>,
    pub interval: Option<(f64, f64)>,
    pub zero_admissible: bool,
}

/// Transfers `T` with `A₁ − T ≤ ρ₁(W₁)` and `A₂ + T ≤ ρ₂(W₂)`.
pub fn transfer_sea(result: &PlannerResult) -> TransferOutcome {
    let pre = result.initial_risks;
    let lo = result.assessments[0] - pre[0];
    let hi = pre[1] - result.assessments[1];
    let rent = pre[0] + pre[1] - result.aggregate;
    let admissible = lo <= hi + 1e-12;
    let interval = admissible.then_some((lo, hi.max(lo)));
    TransferOutcome {
        rent,
        transfer: interval.map(|(l, h)| 0.5 * (l + h)),
        interval,
        zero_admissible: admissible && lo <= 1e-12 && hi >= -1e-12,
    }
}
