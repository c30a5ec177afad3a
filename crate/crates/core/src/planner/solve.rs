use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::repair::{feasibility_repair, Constraint};
use super::{DecisionVector, Economy, Layout, Linearization, ScheduleMode};
use crate::error::{Error, Result};
use crate::lp::{lp_trust_region, LinearProgram, LpOutcome};
use crate::risk::{RiskMeasure, RiskMeasureSpec};

const IR_SLACK: f64 = 1e-12;
const REPAIR_BACKTRACKS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Block {
    /// Schedule increments; one block per firm in per-firm mode.
    Alpha,
    /// Tail slopes, moved jointly.
    Tail,
    Beta1,
    Beta2,
    Tbr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub max_iterations: usize,
    /// Half-width of the first trust cube of every block step.
    pub initial_cube: f64,
    /// A block is skipped for the sweep once its cube shrinks below this.
    pub min_cube: f64,
    /// Relative per-sweep improvement below which a sweep counts as stalled.
    pub tolerance: f64,
    /// Consecutive stalled sweeps before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Number of starts; starts after the first perturb the initial claims.
    pub starts: usize,
    /// Freezes the TBR at a constant share for firm 1.
    pub frozen_tbr: Option<f64>,
    pub enforce_ir: bool,
    pub block_order: Vec<Block>,
    /// Upper bound on each normalized schedule variable.
    pub schedule_bound: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3000,
            initial_cube: 0.25,
            min_cube: 1e-7,
            tolerance: 1e-10,
            patience: 5,
            seed: 0,
            starts: 1,
            frozen_tbr: None,
            enforce_ir: true,
            block_order: vec![Block::Alpha, Block::Tail, Block::Beta1, Block::Beta2, Block::Tbr],
            schedule_bound: 20.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidDecision(format!("solver config: {msg}")));
        if !(self.initial_cube > 0.0 && self.initial_cube.is_finite()) {
            return bad("initial cube must be positive");
        }
        if !(self.min_cube > 0.0 && self.min_cube <= self.initial_cube) {
            return bad("minimum cube must lie in (0, initial cube]");
        }
        if !(self.tolerance >= 0.0) {
            return bad("tolerance must be nonnegative");
        }
        if self.starts == 0 {
            return bad("at least one start is required");
        }
        if let Some(f) = self.frozen_tbr {
            if !(0.0..=1.0).contains(&f) {
                return bad("frozen tbr must lie in [0, 1]");
            }
        }
        if !(self.schedule_bound > 0.0 && self.schedule_bound.is_finite()) {
            return bad("schedule bound must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerResult {
    pub mode: ScheduleMode,
    pub decision: DecisionVector,
    pub initial_risks: [f64; 2],
    pub initial_aggregate: f64,
    pub aggregators: [f64; 2],
    pub risks: [f64; 2],
    pub incomes: [f64; 2],
    pub assessments: [f64; 2],
    pub aggregate: f64,
    /// Firm shares per cell at the solution.
    pub shares: [Vec<f64>; 2],
    pub fix_mix_k: Option<f64>,
    pub ir_satisfied: [bool; 2],
    pub iterations: usize,
    pub converged: bool,
    /// Aggregate after initialization and after every sweep.
    pub trace: Vec<f64>,
    pub log: Vec<String>,
}

/// LP variables of one block: each maps to one or more flat indices (shared
/// schedules write both firms' copies) with a normalizing scale.
struct BlockVars {
    name: &'static str,
    indices: Vec<Vec<usize>>,
    scale: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    beta_firm: Option<usize>,
}

impl BlockVars {
    fn read(&self, x: &[f64]) -> Vec<f64> {
        self.indices
            .iter()
            .zip(&self.scale)
            .map(|(idx, s)| x[idx[0]] / s)
            .collect()
    }

    fn write(&self, x: &mut [f64], u: &[f64]) {
        for ((idx, s), v) in self.indices.iter().zip(&self.scale).zip(u) {
            for &i in idx {
                x[i] = v * s;
            }
        }
    }

    fn project(&self, flat_grad: &[f64]) -> Vec<f64> {
        self.indices
            .iter()
            .zip(&self.scale)
            .map(|(idx, s)| s * idx.iter().map(|&i| flat_grad[i]).sum::<f64>())
            .collect()
    }
}

fn build_blocks(economy: &Economy, config: &PlannerConfig) -> Vec<BlockVars> {
    let layout = economy.layout();
    let width = economy.grid().cell_width();
    let weights = economy.space().weights();
    let shared = economy.mode() == ScheduleMode::Shared;
    let bound = config.schedule_bound;
    let mut blocks = Vec::new();
    for block in &config.block_order {
        match block {
            Block::Alpha => {
                let firms: &[usize] = if shared { &[0] } else { &[0, 1] };
                for &i in firms {
                    let indices = layout
                        .alpha(0)
                        .map(|k| {
                            if shared {
                                vec![k, layout.alpha(1).start + k]
                            } else {
                                vec![layout.alpha(i).start + k]
                            }
                        })
                        .collect::<Vec<_>>();
                    let n = indices.len();
                    blocks.push(BlockVars {
                        name: if shared || i == 0 { "alpha1" } else { "alpha2" },
                        indices,
                        scale: vec![1.0 / width; n],
                        lower: vec![0.0; n],
                        upper: vec![bound; n],
                        beta_firm: None,
                    });
                }
            }
            Block::Tail => {
                let indices = if shared {
                    vec![vec![layout.tail(0), layout.tail(1)]]
                } else {
                    vec![vec![layout.tail(0)], vec![layout.tail(1)]]
                };
                let n = indices.len();
                blocks.push(BlockVars {
                    name: "tail",
                    indices,
                    scale: vec![1.0; n],
                    lower: vec![0.0; n],
                    upper: vec![bound; n],
                    beta_firm: None,
                });
            }
            Block::Beta1 | Block::Beta2 => {
                let i = usize::from(*block == Block::Beta2);
                let indices = layout.beta(i).map(|j| vec![j]).collect();
                let radius: Vec<f64> = weights.iter().map(|w| 1.0 / w.sqrt()).collect();
                blocks.push(BlockVars {
                    name: if i == 0 { "beta1" } else { "beta2" },
                    indices,
                    scale: vec![1.0; layout.atoms],
                    lower: radius.iter().map(|r| -r).collect(),
                    upper: radius,
                    beta_firm: Some(i),
                });
            }
            Block::Tbr => {
                if config.frozen_tbr.is_none() {
                    blocks.push(BlockVars {
                        name: "tbr",
                        indices: layout.tbr().map(|j| vec![j]).collect(),
                        scale: vec![1.0; layout.cells],
                        lower: vec![0.0; layout.cells],
                        upper: vec![1.0; layout.cells],
                        beta_firm: None,
                    });
                }
            }
        }
    }
    blocks
}

/// Steepest first-order hedge at `a = 0`: `Z = −(q − 1)/sd(q)` with `q` the
/// pricing density of the risk subgradient at the endowment.
fn hedge_direction(economy: &Economy, firm: usize) -> Result<Vec<f64>> {
    let space = economy.space();
    let spec = &economy.firms()[firm];
    let g = spec.risk.subgradient(space, &spec.endowment)?;
    let q: Vec<f64> = g.iter().zip(space.weights()).map(|(g, w)| -g / w).collect();
    let mean = space.mean(&q)?;
    let sd = space.variance(&q)?.sqrt();
    if sd <= 1e-12 {
        return Ok(vec![0.0; q.len()]);
    }
    Ok(q.iter().map(|q| -(q - mean) / sd).collect())
}

/// Centers a claim and scales it into the unit second-moment ball.
fn normalize_claim(weights: &[f64], beta: &mut [f64]) {
    let mean: f64 = weights.iter().zip(beta.iter()).map(|(w, b)| w * b).sum();
    for b in beta.iter_mut() {
        *b -= mean;
    }
    let m2: f64 = weights.iter().zip(beta.iter()).map(|(w, b)| w * b * b).sum();
    if m2 > 1.0 {
        let s = m2.sqrt();
        for b in beta.iter_mut() {
            *b /= s;
        }
    }
}

fn initial_decision(economy: &Economy, config: &PlannerConfig, rng: Option<&mut ChaCha8Rng>) -> Result<DecisionVector> {
    let mut d = economy.zero_decision();
    d.tbr = vec![config.frozen_tbr.unwrap_or(0.5); economy.grid().cells()];
    d.beta1 = hedge_direction(economy, 0)?;
    d.beta2 = hedge_direction(economy, 1)?;
    if let Some(rng) = rng {
        for beta in [&mut d.beta1, &mut d.beta2] {
            for b in beta.iter_mut() {
                *b += rng.random_range(-0.5..0.5);
            }
            let weights = economy.space().weights();
            normalize_claim(weights, beta);
            let m2: f64 = weights.iter().zip(beta.iter()).map(|(w, b)| w * b * b).sum();
            if m2 > 0.0 {
                beta.iter_mut().for_each(|b| *b /= m2.sqrt());
            }
        }
    }
    let weights = economy.space().weights().to_vec();
    normalize_claim(&weights, &mut d.beta1);
    normalize_claim(&weights, &mut d.beta2);
    Ok(d)
}

/// `A_i(u) − ρ_i(W_i)` as a function of one block's variables.
struct IrConstraint<'a> {
    economy: &'a Economy,
    layout: Layout,
    block: &'a BlockVars,
    base: &'a [f64],
    firm: usize,
}

impl IrConstraint<'_> {
    fn decision(&self, u: &[f64]) -> DecisionVector {
        let mut x = self.base.to_vec();
        self.block.write(&mut x, u);
        self.layout.unflatten(&x)
    }
}

impl Constraint for IrConstraint<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        match self.economy.evaluate(&self.decision(u)) {
            Ok(a) => a.assessments[self.firm] - self.economy.pre_trade_risks()[self.firm],
            Err(_) => f64::INFINITY,
        }
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        match self.economy.gradients(&self.decision(u)) {
            Ok((_, g)) => self.block.project(&g[self.firm]),
            Err(_) => vec![0.0; u.len()],
        }
    }
}

struct RunOutcome {
    x: Vec<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    /// Accepted steps per block.
    steps: String,
}

struct Descent<'a> {
    economy: &'a Economy,
    config: &'a PlannerConfig,
    layout: Layout,
    pre: [f64; 2],
}

impl Descent<'_> {
    fn ir_ok(&self, assessments: &[f64; 2]) -> bool {
        !self.config.enforce_ir || (0..2).all(|i| assessments[i] <= self.pre[i] + IR_SLACK)
    }

    fn fix_claims(&self, block: &BlockVars, x: &mut [f64]) {
        if let Some(i) = block.beta_firm {
            normalize_claim(self.economy.space().weights(), &mut x[self.layout.beta(i)]);
        }
    }

    /// One LP trust-region step on `block`; returns the accepted point and
    /// its aggregate, or `None` when no improving step is found.
    fn step(&self, block: &BlockVars, x: &[f64], current: f64) -> Result<Option<(Vec<f64>, f64)>> {
        let d = self.layout.unflatten(x);
        let lin = self.economy.linearize(&d)?;
        let center = block.read(x);
        let model = BlockModel::new(self, block, &d, &lin, center);
        if model.grad.iter().all(|g| *g == 0.0) {
            return Ok(None);
        }
        let mut h = self.config.initial_cube;
        while h >= self.config.min_cube {
            if let Some(u) = model.minimize(h)? {
                if u.iter().zip(&model.center).all(|(a, b)| a == b) {
                    return Ok(None);
                }
                if let Some(accepted) = self.try_point(block, x, &u, current)? {
                    return Ok(Some(accepted));
                }
            }
            h *= 0.5;
        }
        Ok(None)
    }

    fn try_point(&self, block: &BlockVars, x: &[f64], u: &[f64], current: f64) -> Result<Option<(Vec<f64>, f64)>> {
        let mut cand = x.to_vec();
        block.write(&mut cand, u);
        self.fix_claims(block, &mut cand);
        let mut value = self.economy.evaluate(&self.layout.unflatten(&cand))?;
        if !self.ir_ok(&value.assessments) {
            let constraints: Vec<IrConstraint> = (0..2)
                .map(|firm| IrConstraint {
                    economy: self.economy,
                    layout: self.layout,
                    block,
                    base: &cand,
                    firm,
                })
                .collect();
            let refs: Vec<&dyn Constraint> = constraints.iter().map(|c| c as &dyn Constraint).collect();
            let start = block.read(&cand);
            let Some(repaired) = feasibility_repair(&start, &refs, &block.lower, &block.upper, REPAIR_BACKTRACKS)
            else {
                return Ok(None);
            };
            block.write(&mut cand, &repaired);
            self.fix_claims(block, &mut cand);
            value = self.economy.evaluate(&self.layout.unflatten(&cand))?;
            if !self.ir_ok(&value.assessments) {
                return Ok(None);
            }
        }
        if value.aggregate < current - 1e-15 * (1.0 + current.abs()) {
            Ok(Some((cand, value.aggregate)))
        } else {
            Ok(None)
        }
    }

    fn run(&self, start: DecisionVector) -> Result<RunOutcome> {
        let blocks = build_blocks(self.economy, self.config);
        let mut accepted = vec![0usize; blocks.len()];
        let mut x = self.layout.flatten(&start);
        let mut current = self.economy.evaluate(&start)?.aggregate;
        let mut trace = vec![current];
        let mut stalled = 0;
        let mut iterations = 0;
        let mut converged = false;
        for it in 1..=self.config.max_iterations {
            iterations = it;
            let before = current;
            for (b, block) in blocks.iter().enumerate() {
                if let Some((next, value)) = self.step(block, &x, current)? {
                    x = next;
                    current = value;
                    accepted[b] += 1;
                }
            }
            trace.push(current);
            if before - current <= self.config.tolerance * before.abs().max(1.0) {
                stalled += 1;
                if stalled >= self.config.patience {
                    converged = true;
                    break;
                }
            } else {
                stalled = 0;
            }
        }
        let steps = blocks
            .iter()
            .zip(&accepted)
            .map(|(b, n)| format!("{} {n}", b.name))
            .collect::<Vec<_>>()
            .join(", ");
        Ok(RunOutcome {
            x,
            trace,
            iterations,
            converged,
            steps,
        })
    }

    /// Rescales slack claims to unit second moment when that does not raise
    /// the aggregate.
    fn bind_claims(&self, x: &mut Vec<f64>, log: &mut Vec<String>) -> Result<()> {
        let weights = self.economy.space().weights();
        for i in 0..2 {
            let range = self.layout.beta(i);
            let m2: f64 = weights.iter().zip(&x[range.clone()]).map(|(w, b)| w * b * b).sum();
            if m2 >= 1.0 - 1e-9 {
                log.push(format!("claim {}: second moment binding ({m2:.12})", i + 1));
                continue;
            }
            if m2 <= 0.0 {
                log.push(format!("claim {}: zero claim left unscaled", i + 1));
                continue;
            }
            let before = self.economy.evaluate(&self.layout.unflatten(x))?;
            let mut cand = x.clone();
            let s = m2.sqrt();
            cand[range].iter_mut().for_each(|b| *b /= s);
            let after = self.economy.evaluate(&self.layout.unflatten(&cand))?;
            if after.aggregate <= before.aggregate && self.ir_ok(&after.assessments) {
                log.push(format!(
                    "claim {}: second moment {m2:.6} slack, rescaled to 1 (aggregate {:.12} -> {:.12})",
                    i + 1,
                    before.aggregate,
                    after.aggregate
                ));
                *x = cand;
            } else {
                log.push(format!(
                    "claim {}: second moment {m2:.6} slack, rescaling would raise the aggregate; kept",
                    i + 1
                ));
            }
        }
        Ok(())
    }
}

/// Local model of the objective on one block.
///
/// Positions `W_i − a_i Z_i` are affine in every block's variables once the
/// segmentation is fixed. Entropic risks enter through their gradient; AV@R
/// risks enter exactly through the epigraph `c + E[(−X − c)⁺]/λ`, which keeps
/// the step an LP.
struct BlockModel<'a> {
    descent: &'a Descent<'a>,
    block: &'a BlockVars,
    center: Vec<f64>,
    /// Gradient of the aggregate in block coordinates.
    grad: Vec<f64>,
    assess: [Vec<f64>; 2],
    income: [Vec<f64>; 2],
    values: [f64; 2],
    incomes: [f64; 2],
    /// Position at the center and its Jacobian for AV@R firms.
    epigraph: [Option<(f64, Vec<f64>, Vec<Vec<f64>>)>; 2],
}

impl<'a> BlockModel<'a> {
    fn new(descent: &'a Descent<'a>, block: &'a BlockVars, d: &DecisionVector, lin: &Linearization, center: Vec<f64>) -> Self {
        let assess = [block.project(&lin.assessment[0]), block.project(&lin.assessment[1])];
        let income = [block.project(&lin.income[0]), block.project(&lin.income[1])];
        let grad = assess[0].iter().zip(&assess[1]).map(|(a, b)| a + b).collect();
        let economy = descent.economy;
        let epigraph = [0, 1].map(|i| {
            let RiskMeasureSpec::Avar { tail_level } = economy.firms()[i].risk else {
                return None;
            };
            let agg = block.project(&lin.aggregator[i]);
            let a = lin.value.aggregators[i];
            let z = d.beta(i);
            let position: Vec<f64> = economy.firms()[i].endowment.iter().zip(z).map(|(w, z)| w - a * z).collect();
            let jacobian: Vec<Vec<f64>> = z
                .iter()
                .enumerate()
                .map(|(omega, zw)| {
                    (0..center.len())
                        .map(|j| {
                            let own = if block.beta_firm == Some(i) && j == omega { a } else { 0.0 };
                            -zw * agg[j] - own
                        })
                        .collect()
                })
                .collect();
            Some((tail_level, position, jacobian))
        });
        Self {
            descent,
            block,
            center,
            grad,
            assess,
            income,
            values: lin.value.assessments,
            incomes: lin.value.incomes,
            epigraph,
        }
    }

    /// Minimizes the model over the cube of half-width `h`.
    fn minimize(&self, h: f64) -> Result<Option<Vec<f64>>> {
        let config = self.descent.config;
        let pre = self.descent.pre;
        let block = self.block;
        let m = self.center.len();
        let mut less_equal = Vec::new();
        let mut equal = Vec::new();
        if block.beta_firm.is_some() {
            let w = self.descent.economy.space().weights();
            let m2: f64 = w.iter().zip(&self.center).map(|(w, b)| w * b * b).sum();
            less_equal.push((w.iter().zip(&self.center).map(|(w, b)| 2.0 * w * b).collect::<Vec<f64>>(), 1.0 + m2));
            equal.push((w.to_vec(), 0.0));
        }

        if self.epigraph.iter().all(Option::is_none) {
            if config.enforce_ir {
                for i in 0..2 {
                    let g = &self.assess[i];
                    less_equal.push((g.clone(), pre[i] - self.values[i] + dot(g, &self.center)));
                }
            }
            let radius = vec![h; m];
            return lp_trust_region(&self.grad, &self.center, &radius, &block.lower, &block.upper, &less_equal, &equal);
        }

        // Variables: u, then (c_i, t_i) for each AV@R firm.
        let atoms = self.descent.layout.atoms;
        let mut offsets = [None, None];
        let mut width = m;
        for (i, e) in self.epigraph.iter().enumerate() {
            if e.is_some() {
                offsets[i] = Some(width);
                width += 1 + atoms;
            }
        }
        let mut cost = vec![0.0; width];
        let mut lower = vec![0.0; width];
        let mut upper = vec![0.0; width];
        for j in 0..m {
            lower[j] = block.lower[j].max(self.center[j] - h);
            upper[j] = block.upper[j].min(self.center[j] + h);
        }
        let weights = self.descent.economy.space().weights();
        // Per-firm model rows: cost coefficients of A_i and the constant term.
        let mut firm_rows: [Vec<f64>; 2] = [vec![0.0; width], vec![0.0; width]];
        let mut firm_consts = [0.0; 2];
        for i in 0..2 {
            match (&self.epigraph[i], offsets[i]) {
                (Some((lambda, position, jac)), Some(off)) => {
                    for j in 0..m {
                        firm_rows[i][j] = -self.income[i][j];
                    }
                    firm_rows[i][off] = 1.0;
                    for (k, w) in weights.iter().enumerate() {
                        firm_rows[i][off + 1 + k] = w / lambda;
                    }
                    firm_consts[i] = -self.incomes[i] + dot(&self.income[i], &self.center);
                    let spread = position.iter().fold(0.0f64, |s, x| s.max(x.abs()))
                        + h * jac.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
                        + 1.0;
                    lower[off] = -spread;
                    upper[off] = spread;
                    for k in 0..atoms {
                        upper[off + 1 + k] = 2.0 * spread;
                    }
                    // t_ω ≥ −X_ω(u) − c
                    for (k, row) in jac.iter().enumerate() {
                        let mut r = vec![0.0; width];
                        for j in 0..m {
                            r[j] = -row[j];
                        }
                        r[off] = -1.0;
                        r[off + 1 + k] = -1.0;
                        less_equal.push((r, position[k] - dot(row, &self.center)));
                    }
                }
                _ => {
                    firm_rows[i][..m].copy_from_slice(&self.assess[i]);
                    firm_consts[i] = self.values[i] - dot(&self.assess[i], &self.center);
                }
            }
        }
        for j in 0..width {
            cost[j] = firm_rows[0][j] + firm_rows[1][j];
        }
        if config.enforce_ir {
            for i in 0..2 {
                less_equal.push((firm_rows[i].clone(), pre[i] - firm_consts[i]));
            }
        }
        let pad = |rows: Vec<(Vec<f64>, f64)>| -> Vec<(Vec<f64>, f64)> {
            rows.into_iter()
                .map(|(mut r, b)| {
                    r.resize(width, 0.0);
                    (r, b)
                })
                .collect()
        };
        let mut lp = LinearProgram::new(cost.clone(), lower, upper)?;
        for (r, b) in pad(less_equal) {
            lp.less_equal(r, b)?;
        }
        for (r, b) in pad(equal) {
            lp.equal(r, b)?;
        }
        let LpOutcome::Optimal { x, objective } = lp.solve() else {
            return Ok(None);
        };
        let at_center = self.values[0] + self.values[1] - firm_consts[0] - firm_consts[1];
        if objective >= at_center - 1e-14 * (1.0 + at_center.abs()) {
            return Ok(Some(self.center.clone()));
        }
        Ok(Some(x[..m].to_vec()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hybrid block descent on the aggregate assessment.
///
/// Each sweep visits the configured blocks in order. A block step linearizes
/// the objective and the IR constraints, minimizes the linear model over a
/// trust cube with the LP solver, repairs feasibility and accepts only a
/// strict decrease, halving the cube on rejection.
pub fn solve(economy: &Economy, config: &PlannerConfig) -> Result<PlannerResult> {
    config.validate()?;
    let layout = economy.layout();
    let descent = Descent {
        economy,
        config,
        layout,
        pre: economy.pre_trade_risks(),
    };
    let mut best: Option<(RunOutcome, usize)> = None;
    for s in 0..config.starts {
        let start = if s == 0 {
            initial_decision(economy, config, None)?
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(s as u64));
            initial_decision(economy, config, Some(&mut rng))?
        };
        let outcome = descent.run(start)?;
        let value = *outcome.trace.last().expect("trace starts with the initial point");
        let better = best
            .as_ref()
            .is_none_or(|(b, _)| value < *b.trace.last().expect("nonempty trace"));
        if better {
            best = Some((outcome, s));
        }
    }
    let (outcome, start) = best.expect("at least one start");
    let RunOutcome {
        mut x,
        mut trace,
        iterations,
        converged,
        steps,
    } = outcome;

    let mut log = Vec::new();
    if config.starts > 1 {
        log.push(format!("best of {} starts: start {start}", config.starts));
    }
    log.push(format!("accepted steps: {steps}"));
    descent.bind_claims(&mut x, &mut log)?;
    let decision = layout.unflatten(&x);
    let value = economy.assemble_objective(&decision)?;
    if value.aggregate < *trace.last().expect("nonempty trace") {
        trace.push(value.aggregate);
    }
    let pre = economy.pre_trade_risks();
    let fix_mix_k = super::analysis::fix_mix_from_parts(economy, &decision, &value.shares[0])?;
    Ok(PlannerResult {
        mode: economy.mode(),
        initial_risks: pre,
        initial_aggregate: pre[0] + pre[1],
        aggregators: value.aggregators,
        risks: value.risks,
        incomes: value.incomes,
        assessments: value.assessments,
        aggregate: value.aggregate,
        ir_satisfied: [0, 1].map(|i| value.assessments[i] <= pre[i] + IR_SLACK),
        shares: value.shares,
        decision,
        fix_mix_k,
        iterations,
        converged,
        trace,
        log,
    })
}
