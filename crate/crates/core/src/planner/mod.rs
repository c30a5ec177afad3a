//! The planner's aggregate risk-minimization program: decisions, objective
//! assembly with analytic gradients, and the block-descent solver.

mod analysis;
mod repair;
mod solve;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{self, MarketSegmentation, Segment, TieBreakRule, UtilitySchedule};
use crate::prob::{Claim, ProbSpace, TypeGrid};
use crate::risk::{RiskMeasure, RiskMeasureSpec};

pub use analysis::{
    collinearity_check, entropic_fixed_point_residual, extract_fix_mix, fix_mix_decision, transfer_sea,
    CollinearityReport, FirmCollinearity, TransferOutcome,
};
pub use repair::{feasibility_repair, AffineConstraint, Constraint};
pub use solve::{solve, Block, PlannerConfig, PlannerResult};

const MEAN_TOL: f64 = 1e-10;
const MOMENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmSpec {
    pub endowment: Claim,
    pub risk: RiskMeasureSpec,
}

impl FirmSpec {
    pub fn new(endowment: Claim, risk: RiskMeasureSpec) -> Self {
        Self { endowment, risk }
    }

    /// `ρ(W)`, the firm's pre-trade risk.
    pub fn initial_risk(&self, space: &ProbSpace) -> Result<f64> {
        self.risk.evaluate(space, &self.endowment)
    }
}

/// Whether both firms share one indirect-utility schedule (the TBR splits the
/// whole market) or each firm carries its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    #[default]
    Shared,
    PerFirm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub tail1: f64,
    pub tail2: f64,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub tbr: Vec<f64>,
}

impl DecisionVector {
    /// No trade: zero schedules, zero claims and an even TBR.
    pub fn zero(cells: usize, atoms: usize) -> Self {
        Self {
            alpha1: vec![0.0; cells],
            alpha2: vec![0.0; cells],
            tail1: 0.0,
            tail2: 0.0,
            beta1: vec![0.0; atoms],
            beta2: vec![0.0; atoms],
            tbr: vec![0.5; cells],
        }
    }

    pub fn alpha(&self, firm: usize) -> &[f64] {
        if firm == 0 {
            &self.alpha1
        } else {
            &self.alpha2
        }
    }

    pub fn tail(&self, firm: usize) -> f64 {
        if firm == 0 {
            self.tail1
        } else {
            self.tail2
        }
    }

    pub fn beta(&self, firm: usize) -> &[f64] {
        if firm == 0 {
            &self.beta1
        } else {
            &self.beta2
        }
    }

    pub fn schedule(&self, grid: &TypeGrid, firm: usize) -> Result<UtilitySchedule> {
        UtilitySchedule::new(grid.clone(), self.alpha(firm).to_vec(), self.tail(firm))
    }

    pub fn tie_break(&self) -> Result<TieBreakRule> {
        TieBreakRule::new(self.tbr.clone())
    }

    /// Lengths and finiteness only.
    pub fn check_shape(&self, space: &ProbSpace, grid: &TypeGrid) -> Result<()> {
        let n = grid.cells();
        for v in [&self.alpha1, &self.alpha2, &self.tbr] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: v.len(),
                });
            }
        }
        for b in [&self.beta1, &self.beta2] {
            space.check(b)?;
        }
        let all = self
            .alpha1
            .iter()
            .chain(&self.alpha2)
            .chain(&self.beta1)
            .chain(&self.beta2)
            .chain(&self.tbr)
            .chain([&self.tail1, &self.tail2]);
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("decision vector"));
        }
        Ok(())
    }

    /// `[α₁, α₂, tail₁, tail₂, β₁, β₂, tbr]`.
    pub fn flatten(&self) -> Vec<f64> {
        let layout = Layout {
            cells: self.tbr.len(),
            atoms: self.beta1.len(),
        };
        layout.flatten(self)
    }

    /// Inverse of [`DecisionVector::flatten`].
    pub fn from_flat(cells: usize, atoms: usize, x: &[f64]) -> Result<Self> {
        let layout = Layout { cells, atoms };
        if x.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                actual: x.len(),
            });
        }
        Ok(layout.unflatten(x))
    }

    /// Checks lengths, signs, the mean-zero and second-moment constraints on
    /// the claims, and schedule equality in shared mode.
    pub fn check(&self, space: &ProbSpace, grid: &TypeGrid, mode: ScheduleMode) -> Result<()> {
        self.check_shape(space, grid)?;
        if self.alpha1.iter().chain(&self.alpha2).any(|a| *a < 0.0) || self.tail1 < 0.0 || self.tail2 < 0.0 {
            return Err(Error::InvalidDecision("negative schedule parameter".into()));
        }
        if self.tbr.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidDecision("tie-break weight outside [0, 1]".into()));
        }
        for (i, b) in [&self.beta1, &self.beta2].into_iter().enumerate() {
            let mean = space.mean(b)?;
            if mean.abs() > MEAN_TOL {
                return Err(Error::InvalidDecision(format!("claim {} has mean {mean:e}", i + 1)));
            }
            let m2 = space.second_moment(b)?;
            if m2 > 1.0 + MOMENT_TOL {
                return Err(Error::InvalidDecision(format!(
                    "claim {} has second moment {m2}",
                    i + 1
                )));
            }
        }
        if mode == ScheduleMode::Shared && (self.alpha1 != self.alpha2 || self.tail1 != self.tail2) {
            return Err(Error::InvalidDecision(
                "shared mode requires identical schedules".into(),
            ));
        }
        Ok(())
    }
}

/// Index ranges of the flat decision layout
/// `[α₁, α₂, tail₁, tail₂, β₁, β₂, tbr]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub cells: usize,
    pub atoms: usize,
}

impl Layout {
    pub fn alpha(&self, firm: usize) -> Range<usize> {
        let start = firm * self.cells;
        start..start + self.cells
    }

    pub fn tail(&self, firm: usize) -> usize {
        2 * self.cells + firm
    }

    pub fn beta(&self, firm: usize) -> Range<usize> {
        let start = 2 * self.cells + 2 + firm * self.atoms;
        start..start + self.atoms
    }

    pub fn tbr(&self) -> Range<usize> {
        let start = 2 * self.cells + 2 + 2 * self.atoms;
        start..start + self.cells
    }

    pub fn len(&self) -> usize {
        3 * self.cells + 2 + 2 * self.atoms
    }

    pub fn flatten(&self, d: &DecisionVector) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        x.extend_from_slice(&d.alpha1);
        x.extend_from_slice(&d.alpha2);
        x.push(d.tail1);
        x.push(d.tail2);
        x.extend_from_slice(&d.beta1);
        x.extend_from_slice(&d.beta2);
        x.extend_from_slice(&d.tbr);
        x
    }

    pub fn unflatten(&self, x: &[f64]) -> DecisionVector {
        DecisionVector {
            alpha1: x[self.alpha(0)].to_vec(),
            alpha2: x[self.alpha(1)].to_vec(),
            tail1: x[self.tail(0)],
            tail2: x[self.tail(1)],
            beta1: x[self.beta(0)].to_vec(),
            beta2: x[self.beta(1)].to_vec(),
            tbr: x[self.tbr()].to_vec(),
        }
    }
}

/// Per-firm and aggregate values of the planner's objective at a decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    /// `a_i = Σ √(−v_i′) · share_i · μ`.
    pub aggregators: [f64; 2],
    /// `R_i = ρ_i(W_i − a_i Z_i)`.
    pub risks: [f64; 2],
    pub incomes: [f64; 2],
    /// `A_i = R_i − I_i`.
    pub assessments: [f64; 2],
    pub aggregate: f64,
    pub shares: [Vec<f64>; 2],
}

/// Two firms on a common probability space and type grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Economy {
    space: ProbSpace,
    grid: TypeGrid,
    firms: [FirmSpec; 2],
    mode: ScheduleMode,
    pre_trade: [f64; 2],
}

impl Economy {
    pub fn new(space: ProbSpace, grid: TypeGrid, firms: [FirmSpec; 2], mode: ScheduleMode) -> Result<Self> {
        let mut pre_trade = [0.0; 2];
        for (i, firm) in firms.iter().enumerate() {
            firm.risk.validate()?;
            space.check(&firm.endowment)?;
            if firm.endowment.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("endowment"));
            }
            pre_trade[i] = firm.initial_risk(&space)?;
        }
        Ok(Self {
            space,
            grid,
            firms,
            mode,
            pre_trade,
        })
    }

    pub fn space(&self) -> &ProbSpace {
        &self.space
    }

    pub fn grid(&self) -> &TypeGrid {
        &self.grid
    }

    pub fn firms(&self) -> &[FirmSpec; 2] {
        &self.firms
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    /// `ρ_i(W_i)` for both firms.
    pub fn pre_trade_risks(&self) -> [f64; 2] {
        self.pre_trade
    }

    pub fn pre_trade_aggregate(&self) -> f64 {
        self.pre_trade[0] + self.pre_trade[1]
    }

    pub fn zero_decision(&self) -> DecisionVector {
        DecisionVector::zero(self.grid.cells(), self.space.atom_count())
    }

    /// The same economy with the firms' roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            space: self.space.clone(),
            grid: self.grid.clone(),
            firms: [self.firms[1].clone(), self.firms[0].clone()],
            mode: self.mode,
            pre_trade: [self.pre_trade[1], self.pre_trade[0]],
        }
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout {
            cells: self.grid.cells(),
            atoms: self.space.atom_count(),
        }
    }

    pub fn segmentation(&self, d: &DecisionVector) -> Result<MarketSegmentation> {
        let s1 = d.schedule(&self.grid, 0)?;
        match self.mode {
            ScheduleMode::Shared => Ok(MarketSegmentation {
                theta0: (0..self.grid.cells()).collect(),
                theta1: Vec::new(),
                theta2: Vec::new(),
                shift_points: Vec::new(),
                labels: vec![Segment::Tied; self.grid.cells()],
            }),
            ScheduleMode::PerFirm => market::segment_market(&s1, &d.schedule(&self.grid, 1)?, None),
        }
    }

    /// Objective values at a decision after checking its invariants.
    pub fn assemble_objective(&self, d: &DecisionVector) -> Result<Assessment> {
        d.check(&self.space, &self.grid, self.mode)?;
        self.evaluate(d)
    }

    /// Objective values without the claim-constraint checks, for trial points.
    pub(crate) fn evaluate(&self, d: &DecisionVector) -> Result<Assessment> {
        let seg = self.segmentation(d)?;
        let shares = seg.shares(&d.tie_break()?)?;
        let mut out = Assessment {
            aggregators: [0.0; 2],
            risks: [0.0; 2],
            incomes: [0.0; 2],
            assessments: [0.0; 2],
            aggregate: 0.0,
            shares: [Vec::new(), Vec::new()],
        };
        for i in 0..2 {
            let sched = d.schedule(&self.grid, i)?;
            let a = market::aggregator(&sched, &shares[i])?;
            let income = market::firm_income(&sched, &shares[i])?;
            let position = self.firms[i].endowment.axpy(-a, d.beta(i));
            let risk = self.firms[i].risk.evaluate(&self.space, &position)?;
            out.aggregators[i] = a;
            out.risks[i] = risk;
            out.incomes[i] = income;
            out.assessments[i] = risk - income;
        }
        out.aggregate = out.assessments[0] + out.assessments[1];
        if !out.aggregate.is_finite() {
            return Err(Error::NonFinite("aggregate assessment"));
        }
        out.shares = shares;
        Ok(out)
    }

    /// Objective values at a trial point that may break the claim
    /// constraints; only shapes are checked.
    pub fn assess(&self, d: &DecisionVector) -> Result<Assessment> {
        d.check_shape(&self.space, &self.grid)?;
        self.evaluate(d)
    }

    /// Gradient of each `A_i` over [`DecisionVector::flatten`], holding the
    /// market segmentation fixed at `d`.
    pub fn assessment_gradients(&self, d: &DecisionVector) -> Result<[Vec<f64>; 2]> {
        d.check_shape(&self.space, &self.grid)?;
        Ok(self.gradients(d)?.1)
    }

    /// Objective values and the gradient of each `A_i` over the flat layout,
    /// holding the market segmentation fixed at `d`.
    pub(crate) fn gradients(&self, d: &DecisionVector) -> Result<(Assessment, [Vec<f64>; 2])> {
        let lin = self.linearize(d)?;
        Ok((lin.value, lin.assessment))
    }

    /// First-order data at `d` over the flat layout, for fixed segmentation.
    pub(crate) fn linearize(&self, d: &DecisionVector) -> Result<Linearization> {
        let value = self.evaluate(d)?;
        let seg = self.segmentation(d)?;
        let layout = self.layout();
        let mu = self.grid.cell_weights();
        let zeros = || [vec![0.0; layout.len()], vec![0.0; layout.len()]];
        let (mut agg, mut inc, mut assess) = (zeros(), zeros(), zeros());
        for i in 0..2 {
            let sched = d.schedule(&self.grid, i)?;
            let a = value.aggregators[i];
            let beta = d.beta(i);
            let position = self.firms[i].endowment.axpy(-a, beta);
            let g = self.firms[i].risk.subgradient(&self.space, &position)?;
            let dr_da: f64 = -g.iter().zip(beta).map(|(g, z)| g * z).sum::<f64>();

            let (ga, gi) = market::schedule_gradients(&sched, &value.shares[i]);
            for (k, idx) in layout.alpha(i).enumerate() {
                agg[i][idx] = ga[k];
                inc[i][idx] = gi[k];
            }
            agg[i][layout.tail(i)] = ga[layout.cells];
            inc[i][layout.tail(i)] = gi[layout.cells];

            let rec = sched.reconstruct();
            let prices = sched.prices();
            let sign = if i == 0 { 1.0 } else { -1.0 };
            for (k, idx) in layout.tbr().enumerate() {
                if seg.labels[k] == Segment::Tied {
                    agg[i][idx] = sign * mu[k] * rec.slope_root[k];
                    inc[i][idx] = sign * mu[k] * prices[k];
                }
            }

            for j in 0..layout.len() {
                assess[i][j] = dr_da * agg[i][j] - inc[i][j];
            }
            for (k, idx) in layout.beta(i).enumerate() {
                assess[i][idx] = -a * g[k];
            }
        }
        Ok(Linearization {
            value,
            aggregator: agg,
            income: inc,
            assessment: assess,
        })
    }
}

/// First-order data of the objective at a decision.
pub(crate) struct Linearization {
    pub value: Assessment,
    /// `∂a_i/∂x`.
    pub aggregator: [Vec<f64>; 2],
    /// `∂I_i/∂x`.
    pub income: [Vec<f64>; 2],
    /// `∂A_i/∂x`.
    pub assessment: [Vec<f64>; 2],
}
