//! Independent-oracle suites. Each suite recomputes something the solvers
//! produce by a different route and reports the residuals.

use std::fmt;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use riskshare_core::game::{
    certificate, payoff, payoff_table, per_type_profit, solve_bimatrix, Catalogue, CatalogueGrid, Contract,
    MixedProfile, NashConfig, NashMethod, PayoffTable, TbrMode,
};
use riskshare_core::lp::{LinearProgram, LpOutcome};
use riskshare_core::market::{envelope_check, TieBreakRule, UtilitySchedule};
use riskshare_core::planner::{
    entropic_fixed_point_residual, fix_mix_decision, solve, DecisionVector, Economy, FirmSpec, PlannerConfig,
    PlannerResult, ScheduleMode,
};
use riskshare_core::prob::{Claim, ProbSpace, TypeGrid};
use riskshare_core::risk::{axiom_battery, RiskMeasure, RiskMeasureSpec};

use crate::scenario::{Scenario, BUNDLED};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    FdGradients,
    TinyBruteForce,
    FixmixEquivalence,
    FixedPoint,
    SupportEnumeration,
    LpVertex,
    RiskAxioms,
    ScheduleProperties,
    EfficientTbr,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::FdGradients,
        Suite::TinyBruteForce,
        Suite::FixmixEquivalence,
        Suite::FixedPoint,
        Suite::SupportEnumeration,
        Suite::LpVertex,
        Suite::RiskAxioms,
        Suite::ScheduleProperties,
        Suite::EfficientTbr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::FdGradients => "fd-gradients",
            Suite::TinyBruteForce => "tiny-brute-force",
            Suite::FixmixEquivalence => "fixmix-equivalence",
            Suite::FixedPoint => "fixed-point",
            Suite::SupportEnumeration => "support-enumeration",
            Suite::LpVertex => "lp-vertex",
            Suite::RiskAxioms => "risk-axioms",
            Suite::ScheduleProperties => "schedule-properties",
            Suite::EfficientTbr => "efficient-tbr",
        }
    }

    pub fn run(self) -> Result<OracleReport, CliError> {
        let mut report = OracleReport::new(self.name());
        match self {
            Suite::FdGradients => fd_gradients(&mut report)?,
            Suite::TinyBruteForce => tiny_brute_force(&mut report)?,
            Suite::FixmixEquivalence => fixmix_equivalence(&mut report)?,
            Suite::FixedPoint => fixed_point(&mut report)?,
            Suite::SupportEnumeration => support_enumeration_suite(&mut report)?,
            Suite::LpVertex => lp_vertex(&mut report)?,
            Suite::RiskAxioms => risk_axioms(&mut report)?,
            Suite::ScheduleProperties => schedule_properties(&mut report)?,
            Suite::EfficientTbr => efficient_tbr(&mut report)?,
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Pass bound `value ≤ bound`; `None` for informational rows.
    pub bound: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl OracleReport {
    fn new(suite: &str) -> Self {
        Self {
            suite: suite.into(),
            checks: Vec::new(),
        }
    }

    fn bound(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.checks.push(Check {
            name: name.into(),
            value,
            bound: Some(bound),
            passed: value <= bound,
        });
    }

    fn flag(&mut self, name: impl Into<String>, ok: bool) {
        self.checks.push(Check {
            name: name.into(),
            value: if ok { 0.0 } else { 1.0 },
            bound: Some(0.0),
            passed: ok,
        });
    }

    fn info(&mut self, name: impl Into<String>, value: f64) {
        self.checks.push(Check {
            name: name.into(),
            value,
            bound: None,
            passed: true,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}] {}", if self.passed() { "PASS" } else { "FAIL" }, self.suite)?;
        for c in &self.checks {
            let status = match (c.bound, c.passed) {
                (None, _) => "info",
                (Some(_), true) => "ok",
                (Some(_), false) => "FAIL",
            };
            match c.bound {
                Some(b) => writeln!(f, "  {status:<5}{:<44}{:>14.6e}  <= {b:.1e}", c.name, c.value)?,
                None => writeln!(f, "  {status:<5}{:<44}{:>14.6e}", c.name, c.value)?,
            }
        }
        Ok(())
    }
}

/// `Φ(Z) = −(e − E e)/sd(e)` with `e = exp(−γ(W − aZ))` on atom weights
/// `p`; `None` when `e` is constant.
pub fn entropic_phi(p: &[f64], w: &[f64], gamma: f64, a: f64, z: &[f64]) -> Option<Vec<f64>> {
    let exps: Vec<f64> = w.iter().zip(z).map(|(w, z)| -gamma * (w - a * z)).collect();
    let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = exps.iter().map(|x| (x - top).exp()).collect();
    let mean: f64 = e.iter().zip(p).map(|(e, p)| e * p).sum();
    let sd = e.iter().zip(p).map(|(e, p)| p * (e - mean).powi(2)).sum::<f64>().sqrt();
    if sd <= 1e-14 * mean {
        return None;
    }
    Some(e.iter().map(|e| -(e - mean) / sd).collect())
}

fn bundled(name: &str) -> Scenario {
    let b = BUNDLED.iter().find(|b| b.name == name).expect("bundled scenario exists");
    Scenario::parse(b.source, b.name).expect("bundled scenarios are valid")
}

type Solved = std::result::Result<(Economy, PlannerResult), riskshare_core::Error>;

/// The bundled entropic duopoly, solved once per process.
fn entropic_duopoly() -> Result<&'static (Economy, PlannerResult), CliError> {
    static CELL: OnceLock<Solved> = OnceLock::new();
    let solved = CELL.get_or_init(|| {
        let s = bundled("entropic-duopoly");
        let e = s.economy().expect("bundled economy is valid");
        solve(&e, &s.planner_config()).map(|r| (e, r))
    });
    solved.as_ref().map_err(|e| CliError::Solver(e.clone()))
}

fn centered_unit(rng: &mut ChaCha8Rng, d: usize, norm: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let m = raw.iter().sum::<f64>() / d as f64;
    let c: Vec<f64> = raw.iter().map(|x| x - m).collect();
    let s = (c.iter().map(|x| x * x).sum::<f64>() / d as f64).sqrt();
    c.iter().map(|x| norm * x / s).collect()
}

fn random_shared_decision(e: &Economy, rng: &mut ChaCha8Rng) -> DecisionVector {
    let n = e.grid().cells();
    let d = e.space().atom_count();
    let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
    let tail = rng.random_range(0.1..1.0);
    DecisionVector {
        alpha1: alpha.clone(),
        alpha2: alpha,
        tail1: tail,
        tail2: tail,
        beta1: centered_unit(rng, d, 0.9),
        beta2: centered_unit(rng, d, 0.9),
        tbr: (0..n).map(|_| rng.random_range(0.1..0.9)).collect(),
    }
}

fn rel_err(fd: f64, g: f64) -> f64 {
    (fd - g).abs() / g.abs().max(1e-3)
}

fn fd_gradients(report: &mut OracleReport) -> Result<(), CliError> {
    let e = bundled("entropic-duopoly").economy()?;
    let (cells, atoms) = (e.grid().cells(), e.space().atom_count());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = random_shared_decision(&e, &mut rng);
        let grads = e.assessment_gradients(&d)?;
        let x = d.flatten();
        for j in 0..x.len() {
            let h = 1e-6 * (1.0 + x[j].abs());
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[j] += h;
            dn[j] -= h;
            let fu = e.assess(&DecisionVector::from_flat(cells, atoms, &up)?)?;
            let fl = e.assess(&DecisionVector::from_flat(cells, atoms, &dn)?)?;
            for i in 0..2 {
                let fd = (fu.assessments[i] - fl.assessments[i]) / (2.0 * h);
                worst = worst.max(rel_err(fd, grads[i][j]));
            }
        }
    }
    report.bound("assessment gradient max relative error", worst, 1e-5);

    let space = ProbSpace::new(vec![0.15, 0.05, 0.2, 0.1, 0.3, 0.2])?;
    let mut worst: f64 = 0.0;
    for rho in [
        RiskMeasureSpec::entropic(0.5)?,
        RiskMeasureSpec::entropic(2.0)?,
        RiskMeasureSpec::avar(0.05)?,
        RiskMeasureSpec::avar(0.3)?,
    ] {
        for _ in 0..200 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = rho.subgradient(&space, &x)?;
            let h = 1e-6 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            for k in 0..6 {
                let (mut up, mut dn) = (x.clone(), x.clone());
                up[k] += h;
                dn[k] -= h;
                let fd = (rho.evaluate(&space, &up)? - rho.evaluate(&space, &dn)?) / (2.0 * h);
                worst = worst.max(rel_err(fd, g[k]));
            }
        }
    }
    report.bound("risk subgradient max relative error", worst, 1e-5);
    Ok(())
}

/// The two-atom, two-cell instance searched exhaustively.
pub struct TinyInstance {
    pub economy: Economy,
    pub gamma: f64,
    pub alpha_max: f64,
    pub tail_max: f64,
}

impl TinyInstance {
    pub fn new() -> Self {
        let gamma = 1.0;
        let risk = RiskMeasureSpec::Entropic { risk_aversion: gamma };
        let economy = Economy::new(
            ProbSpace::uniform(2).expect("two atoms"),
            TypeGrid::uniform(0.05, 2).expect("two cells"),
            [
                FirmSpec::new(Claim(vec![-2.0, 0.0]), risk),
                FirmSpec::new(Claim(vec![0.0, -1.5]), risk),
            ],
            ScheduleMode::Shared,
        )
        .expect("tiny economy is valid");
        Self {
            economy,
            gamma,
            alpha_max: 4.0,
            tail_max: 1.0,
        }
    }

    fn entropic(&self, w: &[f64], a: f64, b: f64) -> f64 {
        let x = [w[0] - a * b, w[1] + a * b];
        let top = x.iter().map(|x| -self.gamma * x).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = x.iter().map(|x| 0.5 * (-self.gamma * x - top).exp()).sum();
        (s.ln() + top) / self.gamma
    }

    /// Aggregators and incomes of either firm for a shared schedule and an
    /// even split, by three-point Gauss–Legendre quadrature of `v`.
    pub fn schedule_terms(&self, alpha: [f64; 2], tail: f64) -> (f64, f64) {
        let grid = self.economy.grid();
        let lo = grid.lower();
        let w = (1.0 - lo) / 2.0;
        let roots = [tail + (alpha[0] + alpha[1]) * w, tail + alpha[1] * w, tail];
        let edges = [lo, lo + w, 1.0];
        let s = |t: f64| {
            let k = if t < edges[1] { 0 } else { 1 };
            let u = (t - edges[k]) / w;
            roots[k] + u * (roots[k + 1] - roots[k])
        };
        let nodes = [(-(0.6f64).sqrt(), 5.0 / 9.0), (0.0, 8.0 / 9.0), ((0.6f64).sqrt(), 5.0 / 9.0)];
        let integral = |from: f64, to: f64| -> f64 {
            let (c, r) = (0.5 * (from + to), 0.5 * (to - from));
            nodes.iter().map(|(x, q)| q * r * s(c + r * x).powi(2)).sum()
        };
        let v = |t: f64| {
            let mut total = 0.0;
            let mut from = t;
            for &edge in &edges[1..] {
                if edge > from {
                    total += integral(from, edge);
                    from = edge;
                }
            }
            total
        };
        let mu = grid.cell_weights();
        let (mut agg, mut inc) = (0.0, 0.0);
        for k in 0..2 {
            let t = lo + (k as f64 + 0.5) * w;
            let root = s(t);
            agg += 0.5 * mu[k] * root;
            inc += 0.5 * mu[k] * (-t * root * root - v(t));
        }
        (agg, inc)
    }

    /// Best aggregate over the claim grid at one schedule; `None` if no
    /// claim pair meets individual rationality.
    fn best_claims(&self, alpha: [f64; 2], tail: f64, bs: &[f64]) -> Option<(f64, f64, f64)> {
        let (a, inc) = self.schedule_terms(alpha, tail);
        let firms = self.economy.firms();
        let pre = self.economy.pre_trade_risks();
        let mut best = [(f64::INFINITY, 0.0); 2];
        for i in 0..2 {
            for &b in bs {
                let assess = self.entropic(&firms[i].endowment, a, b) - inc;
                if assess <= pre[i] + 1e-12 && assess < best[i].0 {
                    best[i] = (assess, b);
                }
            }
        }
        (best[0].0.is_finite() && best[1].0.is_finite()).then(|| (best[0].0 + best[1].0, best[0].1, best[1].1))
    }

    /// Exhaustive search with `points` values per axis over the given box.
    pub fn search(&self, lo: [f64; 5], hi: [f64; 5], points: usize) -> Option<(f64, [f64; 5])> {
        let axis = |k: usize| -> Vec<f64> {
            (0..points)
                .map(|j| lo[k] + (hi[k] - lo[k]) * j as f64 / (points - 1) as f64)
                .collect()
        };
        let (a1, a2, tails, b1, b2) = (axis(0), axis(1), axis(2), axis(3), axis(4));
        let mut combos = Vec::with_capacity(points.pow(3));
        for x in &a1 {
            for y in &a2 {
                for t in &tails {
                    combos.push((*x, *y, *t));
                }
            }
        }
        combos
            .par_iter()
            .filter_map(|&(x, y, t)| {
                let (a, inc) = self.schedule_terms([x, y], t);
                let firms = self.economy.firms();
                let pre = self.economy.pre_trade_risks();
                let pick = |i: usize, bs: &[f64]| {
                    bs.iter()
                        .map(|b| (self.entropic(&firms[i].endowment, a, *b) - inc, *b))
                        .filter(|(v, _)| *v <= pre[i] + 1e-12)
                        .min_by(|p, q| p.0.total_cmp(&q.0))
                };
                let (f1, z1) = pick(0, &b1)?;
                let (f2, z2) = pick(1, &b2)?;
                Some((f1 + f2, [x, y, t, z1, z2]))
            })
            .min_by(|p, q| p.0.total_cmp(&q.0))
    }

    pub fn solver_config() -> PlannerConfig {
        PlannerConfig {
            frozen_tbr: Some(0.5),
            ..PlannerConfig::default()
        }
    }
}

impl Default for TinyInstance {
    fn default() -> Self {
        Self::new()
    }
}

fn tiny_brute_force(report: &mut OracleReport) -> Result<(), CliError> {
    let tiny = TinyInstance::new();
    let lo = [0.0, 0.0, 0.0, -1.0, -1.0];
    let hi = [tiny.alpha_max, tiny.alpha_max, tiny.tail_max, 1.0, 1.0];
    let points = 21;
    let (coarse, at) = tiny
        .search(lo, hi, points)
        .ok_or_else(|| CliError::Oracle("no individually rational grid point".into()))?;
    let mut zlo = [0.0; 5];
    let mut zhi = [0.0; 5];
    for k in 0..5 {
        let step = (hi[k] - lo[k]) / (points - 1) as f64;
        zlo[k] = (at[k] - step).max(lo[k]);
        zhi[k] = (at[k] + step).min(hi[k]);
    }
    let (fine, at_fine) = tiny.search(zlo, zhi, points).expect("zoom box contains the coarse optimum");
    let at_edge = (0..3).any(|k| at_fine[k] >= hi[k] - 1e-12);

    let result = solve(&tiny.economy, &TinyInstance::solver_config())?;
    let d = &result.decision;
    let b = [d.beta1[0], d.beta2[0]];
    let (agg, inc) = tiny.schedule_terms([d.alpha1[0], d.alpha1[1]], d.tail1);
    let recomputed: f64 = (0..2)
        .map(|i| tiny.entropic(&tiny.economy.firms()[i].endowment, agg, b[i]) - inc)
        .sum();
    let independent = tiny.best_claims([d.alpha1[0], d.alpha1[1]], d.tail1, &[b[0], b[1]]);

    report.info("grid optimum (21 per axis)", coarse);
    report.info("zoomed grid optimum", fine);
    report.info("solver aggregate", result.aggregate);
    report.bound("independent evaluation at solver point", (recomputed - result.aggregate).abs(), 1e-9);
    report.flag("solver point individually rational", independent.is_some() && result.ir_satisfied.iter().all(|x| *x));
    report.flag("grid optimum inside the search box", !at_edge);
    report.bound(
        "solver excess over grid optimum (relative)",
        (result.aggregate - fine) / fine.abs(),
        0.02,
    );
    Ok(())
}

fn fixmix_equivalence(report: &mut OracleReport) -> Result<(), CliError> {
    let (e, r) = entropic_duopoly()?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mu = e.grid().cell_weights();
    for _ in 0..50 {
        let d = random_shared_decision(e, &mut rng);
        let s = d.schedule(e.grid(), 0)?.reconstruct().slope_root;
        let num: f64 = s.iter().zip(&d.tbr).zip(mu).map(|((s, f), m)| s * f * m).sum();
        let den: f64 = s.iter().zip(mu).map(|(s, m)| s * m).sum();
        let mut fixed = d.clone();
        fixed.tbr = vec![num / den; d.tbr.len()];
        let a = e.assess(&d)?;
        let b = e.assess(&fixed)?;
        for i in 0..2 {
            worst = worst.max((a.aggregators[i] - b.aggregators[i]).abs());
        }
    }
    report.bound("aggregator invariance residual (random schedules)", worst, 1e-9);

    let k = r.fix_mix_k.ok_or_else(|| CliError::Oracle("no fix-mix ratio at the duopoly solution".into()))?;
    report.info("fix-mix K", k);
    let d = fix_mix_decision(r, k)?;
    let a = e.assemble_objective(&d)?;
    let agg_gap = (0..2).map(|i| (a.aggregators[i] - r.aggregators[i]).abs()).fold(0.0, f64::max);
    report.bound("aggregator invariance residual (duopoly)", agg_gap, 1e-9);
    report.bound("aggregate change under constant K", (a.aggregate - r.aggregate).abs(), 1e-6);
    Ok(())
}

/// Damped iteration `Z ← (1 − λ)Z + λΦ(Z)` from zero, retried with smaller
/// `λ` when it cycles.
fn damped_fixed_point(p: &[f64], w: &[f64], gamma: f64, a: f64) -> Vec<f64> {
    let mut z = vec![0.0; w.len()];
    for lambda in [0.5, 0.2, 0.05, 0.01] {
        z = vec![0.0; w.len()];
        for _ in 0..20_000 {
            let Some(next) = entropic_phi(p, w, gamma, a, &z) else {
                return z;
            };
            let step = z.iter().zip(&next).map(|(z, n)| (z - n).abs()).fold(0.0, f64::max);
            if step < 1e-13 {
                return z;
            }
            z = z.iter().zip(&next).map(|(z, n)| (1.0 - lambda) * z + lambda * n).collect();
        }
    }
    z
}

fn fixed_point(report: &mut OracleReport) -> Result<(), CliError> {
    let (e, r) = entropic_duopoly()?;
    let p = e.space().weights();
    for (i, firm) in e.firms().iter().enumerate() {
        let RiskMeasureSpec::Entropic { risk_aversion } = firm.risk else {
            continue;
        };
        let z = r.decision.beta(i);
        let a = r.aggregators[i];
        let phi = entropic_phi(p, &firm.endowment, risk_aversion, a, z)
            .ok_or_else(|| CliError::Oracle("constant exponential at the solution".into()))?;
        let residual = z.iter().zip(&phi).map(|(z, f)| (z - f).abs()).fold(0.0, f64::max);
        let reported = entropic_fixed_point_residual(firm, e.space(), a, z)?;
        report.bound(format!("firm {} residual max|Z - Phi(Z)|", i + 1), residual, 0.05);
        report.bound(format!("firm {} agreement with solver residual", i + 1), (residual - reported).abs(), 1e-12);
        let target = damped_fixed_point(p, &firm.endowment, risk_aversion, a);
        let gap = target.iter().zip(z).map(|(t, z)| (t - z).abs()).fold(0.0, f64::max);
        report.info(format!("firm {} distance to damped fixed point", i + 1), gap);
        report.bound(
            format!("firm {} damped iterate residual", i + 1),
            entropic_fixed_point_residual(firm, e.space(), a, &target)?,
            1e-8,
        );
    }
    Ok(())
}

pub fn random_game(rng: &mut ChaCha8Rng) -> CatalogueGrid {
    let d = rng.random_range(3..=5);
    let n = rng.random_range(4..=8);
    let space = ProbSpace::uniform(d).expect("positive atoms");
    let types = TypeGrid::uniform(0.05, n).expect("positive cells");
    let claim = |rng: &mut ChaCha8Rng| Claim((0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
    let basics = [vec![claim(rng), claim(rng)], vec![claim(rng), claim(rng)]];
    let costs = [
        vec![rng.random_range(0.0..0.3), rng.random_range(0.0..0.3)],
        vec![rng.random_range(0.0..0.3), rng.random_range(0.0..0.3)],
    ];
    let prices = (0..3).map(|_| rng.random_range(-0.2..0.6)).collect();
    CatalogueGrid::new(space, types, basics, costs, 0.5, prices, 5.0).expect("random game is valid")
}

pub fn random_catalogue(game: &CatalogueGrid, firm: usize, rng: &mut ChaCha8Rng) -> Catalogue {
    let size = rng.random_range(1..=3);
    let contracts = (0..size)
        .map(|_| {
            let p = rng.random_range(0..game.products(firm).len());
            let price = game.prices()[rng.random_range(0..game.prices().len())];
            Contract::new(p, price)
        })
        .collect();
    Catalogue::new(contracts)
}

fn choose(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = choose(n - 1, k);
    for mut s in choose(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

/// Weights on `cols` making `m[r][cols]·w` constant over `rows`.
fn equalizer(m: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Option<(Vec<f64>, f64)> {
    let k = rows.len();
    let mut a = DMatrix::zeros(k + 1, k + 1);
    let mut b = DVector::zeros(k + 1);
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            a[(i, j)] = m[*r][*c];
        }
        a[(i, k)] = -1.0;
    }
    for j in 0..k {
        a[(k, j)] = 1.0;
    }
    b[k] = 1.0;
    let sol = a.lu().solve(&b)?;
    Some((sol.iter().take(k).copied().collect(), sol[k]))
}

/// Every equilibrium with equal-size supports.
pub fn support_enumeration(t: &PayoffTable) -> Vec<MixedProfile> {
    let (m, n) = t.shape();
    let bt: Vec<Vec<f64>> = (0..n).map(|c| (0..m).map(|r| t.second[r][c]).collect()).collect();
    let mut out = Vec::new();
    for k in 1..=m.min(n) {
        for rows in choose(m, k) {
            for cols in choose(n, k) {
                let (Some((y, u)), Some((x, v))) = (equalizer(&t.first, &rows, &cols), equalizer(&bt, &cols, &rows))
                else {
                    continue;
                };
                if x.iter().chain(&y).any(|p| *p < -1e-12) {
                    continue;
                }
                let mut px = vec![0.0; m];
                let mut py = vec![0.0; n];
                rows.iter().zip(&x).for_each(|(r, p)| px[*r] = *p);
                cols.iter().zip(&y).for_each(|(c, p)| py[*c] = *p);
                let row_ok = (0..m).all(|r| (0..n).map(|c| t.first[r][c] * py[c]).sum::<f64>() <= u + 1e-9);
                let col_ok = (0..n).all(|c| (0..m).map(|r| t.second[r][c] * px[r]).sum::<f64>() <= v + 1e-9);
                if row_ok && col_ok {
                    out.push(MixedProfile { first: px, second: py });
                }
            }
        }
    }
    out
}

fn is_pure(p: &MixedProfile) -> bool {
    p.first.iter().chain(&p.second).all(|x| *x == 0.0 || *x == 1.0)
}

/// Largest pure-deviation gain, recomputed cell by cell.
fn deviation_gain(t: &PayoffTable, p: &MixedProfile) -> f64 {
    let (m, n) = t.shape();
    let value = |r: usize, c: usize| (t.first[r][c], t.second[r][c]);
    let mut achieved = (0.0, 0.0);
    for r in 0..m {
        for c in 0..n {
            let (a, b) = value(r, c);
            achieved.0 += p.first[r] * p.second[c] * a;
            achieved.1 += p.first[r] * p.second[c] * b;
        }
    }
    let best_row = (0..m)
        .map(|r| (0..n).map(|c| p.second[c] * value(r, c).0).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let best_col = (0..n)
        .map(|c| (0..m).map(|r| p.first[r] * value(r, c).1).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    (best_row - achieved.0).max(best_col - achieved.1).max(0.0)
}

fn support_enumeration_suite(report: &mut OracleReport) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cases = 200;
    let (mut worst_cert, mut worst_gap): (f64, f64) = (0.0, 0.0);
    let (mut pure_cases, mut pure_matched, mut pure_mismatch) = (0usize, 0usize, 0usize);
    let mut uncertified = 0usize;
    for _ in 0..cases {
        let game = random_game(&mut rng);
        let cats1: Vec<Catalogue> = (0..3).map(|_| random_catalogue(&game, 0, &mut rng)).collect();
        let cats2: Vec<Catalogue> = (0..3).map(|_| random_catalogue(&game, 1, &mut rng)).collect();
        let table = payoff_table(&game, &cats1, &cats2, &TbrMode::Efficient)?;
        let out = solve_bimatrix(&table, &NashConfig::default());
        worst_cert = worst_cert.max(out.certificate);
        worst_gap = worst_gap.max((deviation_gain(&table, &out.profile) - out.certificate).abs());
        worst_gap = worst_gap.max((certificate(&table, &out.profile)? - out.certificate).abs());
        if !out.certified {
            uncertified += 1;
        }
        let oracle: Vec<MixedProfile> = support_enumeration(&table).into_iter().filter(is_pure).collect();
        if !oracle.is_empty() {
            pure_cases += 1;
            if out.method == NashMethod::PureScan && oracle.contains(&out.profile) {
                pure_matched += 1;
            } else {
                pure_mismatch += 1;
            }
        }
    }
    let mut mixed_only = 0usize;
    for _ in 0..cases {
        let mut m = || -> Vec<Vec<f64>> { (0..3).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect() };
        let table = PayoffTable::new(m(), m())?;
        let out = solve_bimatrix(&table, &NashConfig::default());
        worst_cert = worst_cert.max(out.certificate);
        worst_gap = worst_gap.max((deviation_gain(&table, &out.profile) - out.certificate).abs());
        if !out.certified {
            uncertified += 1;
        }
        let oracle: Vec<MixedProfile> = support_enumeration(&table).into_iter().filter(is_pure).collect();
        if oracle.is_empty() {
            mixed_only += 1;
        } else {
            pure_cases += 1;
            if oracle.contains(&out.profile) {
                pure_matched += 1;
            } else {
                pure_mismatch += 1;
            }
        }
    }
    report.info("tables (catalogue and dense)", 2.0 * cases as f64);
    report.info("tables with a pure equilibrium", pure_cases as f64);
    report.info("tables with mixed equilibria only", mixed_only as f64);
    report.bound("max certificate", worst_cert, 0.01);
    report.bound("certificate recomputation gap", worst_gap, 1e-12);
    report.bound("uncertified tables", uncertified as f64, 0.0);
    report.bound("pure instances not matching support enumeration", pure_mismatch as f64, 0.0);
    report.flag("pure instances present", pure_matched > 0);
    Ok(())
}

struct Lp {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    le: Vec<(Vec<f64>, f64)>,
    eq: Vec<(Vec<f64>, f64)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn vertex_optimum(p: &Lp) -> Option<f64> {
    let n = p.cost.len();
    let mut hyper: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        hyper.push((e.clone(), p.lower[j]));
        hyper.push((e, p.upper[j]));
    }
    hyper.extend(p.le.iter().cloned());
    let free = n - p.eq.len();
    let feasible = |x: &[f64]| {
        (0..n).all(|j| x[j] >= p.lower[j] - 1e-9 && x[j] <= p.upper[j] + 1e-9)
            && p.le.iter().all(|(a, b)| dot(a, x) <= b + 1e-9)
            && p.eq.iter().all(|(a, b)| (dot(a, x) - b).abs() <= 1e-9)
    };
    let mut best: Option<f64> = None;
    for sel in choose(hyper.len(), free) {
        let rows: Vec<&(Vec<f64>, f64)> = sel.iter().map(|&i| &hyper[i]).chain(p.eq.iter()).collect();
        let a = DMatrix::from_fn(n, n, |i, j| rows[i].0[j]);
        let b = DVector::from_fn(n, |i, _| rows[i].1);
        if let Some(x) = a.lu().solve(&b) {
            let x: Vec<f64> = x.iter().copied().collect();
            if x.iter().all(|v| v.is_finite()) && feasible(&x) {
                let f = dot(&p.cost, &x);
                best = Some(best.map_or(f, |b: f64| b.min(f)));
            }
        }
    }
    best
}

fn random_lp(rng: &mut ChaCha8Rng, n: usize) -> Lp {
    let cost = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.0)).collect();
    let upper = lower.iter().map(|l| l + rng.random_range(0.1..2.0)).collect();
    let le = (0..rng.random_range(0..4))
        .map(|_| ((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(-0.5..1.0)))
        .collect();
    let eq = if n > 1 && rng.random_bool(0.3) {
        vec![((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(-0.3..0.3))]
    } else {
        Vec::new()
    };
    Lp {
        cost,
        lower,
        upper,
        le,
        eq,
    }
}

fn lp_vertex(report: &mut OracleReport) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst, mut status_mismatch, mut solved) = (0.0f64, 0usize, 0usize);
    for _ in 0..300 {
        let n = rng.random_range(1..=4);
        let p = random_lp(&mut rng, n);
        let mut lp = LinearProgram::new(p.cost.clone(), p.lower.clone(), p.upper.clone())?;
        for (a, b) in &p.le {
            lp.less_equal(a.clone(), *b)?;
        }
        for (a, b) in &p.eq {
            lp.equal(a.clone(), *b)?;
        }
        match (lp.solve(), vertex_optimum(&p)) {
            (LpOutcome::Optimal { objective, .. }, Some(best)) => {
                worst = worst.max((objective - best).abs());
                solved += 1;
            }
            (LpOutcome::Infeasible, None) => {}
            _ => status_mismatch += 1,
        }
    }
    report.info("feasible programs", solved as f64);
    report.bound("max objective gap", worst, 1e-8);
    report.bound("feasibility status mismatches", status_mismatch as f64, 0.0);
    Ok(())
}

fn risk_axioms(report: &mut OracleReport) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let measures = [
        RiskMeasureSpec::entropic(0.5)?,
        RiskMeasureSpec::entropic(2.0)?,
        RiskMeasureSpec::avar(0.05)?,
        RiskMeasureSpec::avar(0.3)?,
        RiskMeasureSpec::avar(1.0)?,
    ];
    let mut violations = 0usize;
    let mut checks = 0usize;
    for space in [ProbSpace::uniform(14)?, ProbSpace::new(vec![0.1, 0.25, 0.05, 0.3, 0.2, 0.1])?] {
        for rho in &measures {
            let claims: Vec<Claim> = (0..500)
                .map(|k| {
                    let scale = [0.1, 1.0, 4.0][k % 3];
                    Claim((0..space.atom_count()).map(|_| scale * rng.random_range(-1.0..1.0)).collect())
                })
                .collect();
            let r = axiom_battery(rho, &space, &claims)?;
            violations += r.violations.len();
            checks += r.checks;
        }
    }
    report.info("axiom checks", checks as f64);
    report.bound("axiom violations (500 claims per measure)", violations as f64, 0.0);
    Ok(())
}

fn schedule_properties(report: &mut OracleReport) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_v1: f64 = 0.0;
    let (mut monotone, mut convex, mut nonneg) = (0usize, 0usize, 0usize);
    let mut worst_envelope: f64 = 0.0;
    let space = ProbSpace::uniform(5)?;
    for _ in 0..1000 {
        let n = rng.random_range(1..=10);
        let grid = TypeGrid::uniform(rng.random_range(0.01..0.5), n)?;
        let alpha = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let s = UtilitySchedule::new(grid.clone(), alpha, rng.random_range(0.0..2.0))?;
        worst_v1 = worst_v1.max(s.value_at(1.0)?.abs());
        let v: Vec<f64> = (0..=200)
            .map(|k| s.value_at((grid.lower() + (1.0 - grid.lower()) * k as f64 / 200.0).min(1.0)))
            .collect::<Result<_, _>>()?;
        let scale = 1.0 + v[0].abs();
        monotone += v.windows(2).filter(|w| w[1] > w[0] + 1e-12 * scale).count();
        convex += v.windows(3).filter(|w| w[0] - 2.0 * w[1] + w[2] < -1e-10 * scale).count();
        nonneg += v.iter().filter(|x| **x < -1e-12).count();

        let z = centered_unit(&mut rng, 5, 1.0);
        let contracts: Vec<Claim> = s.reconstruct().slope_root.iter().map(|r| Claim(z.iter().map(|x| r * x).collect())).collect();
        worst_envelope = worst_envelope.max(envelope_check(&s, &space, &contracts)?.max_residual);
    }
    report.bound("max |v(1)|", worst_v1, 1e-12);
    report.bound("monotonicity violations", monotone as f64, 0.0);
    report.bound("convexity violations", convex as f64, 0.0);
    report.bound("negativity violations", nonneg as f64, 0.0);
    report.bound("envelope residual", worst_envelope, 1e-9);
    Ok(())
}

fn margin_safe(game: &CatalogueGrid, firm: usize, cat: &Catalogue) -> Catalogue {
    Catalogue::new(cat.contracts().iter().filter(|c| c.price >= game.cost(firm, c)).copied().collect())
}

fn efficient_tbr(report: &mut OracleReport) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_quad, mut worst_excess): (f64, f64) = (0.0, f64::NEG_INFINITY);
    for _ in 0..50 {
        let game = random_game(&mut rng);
        let c1 = margin_safe(&game, 0, &random_catalogue(&game, 0, &mut rng));
        let c2 = margin_safe(&game, 1, &random_catalogue(&game, 1, &mut rng));
        let [e1, e2] = payoff(&game, &c1, &c2, &TbrMode::Efficient)?;
        let mut quad = 0.0;
        for (t, m) in game.types().midpoints().iter().zip(game.types().cell_weights()) {
            let (p1, p2) = per_type_profit(&game, *t, &c1, &c2)?;
            quad += m * p1.max(p2);
        }
        worst_quad = worst_quad.max((e1 + e2 - quad).abs());
        let n = game.types().cells();
        for _ in 0..100 {
            let rule = TieBreakRule::new((0..n).map(|_| rng.random_range(0.0..=1.0)).collect())?;
            let [f1, f2] = payoff(&game, &c1, &c2, &TbrMode::Fixed(rule))?;
            worst_excess = worst_excess.max(f1 + f2 - (e1 + e2));
        }
    }
    report.bound("efficient aggregate vs integral of max profit", worst_quad, 1e-12);
    report.bound("largest random-TBR excess over efficient", worst_excess, 1e-12);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_quadrature_matches_core_market() {
        let tiny = TinyInstance::new();
        let e = &tiny.economy;
        for (alpha, tail) in [([0.3, 1.2], 0.2), ([2.0, 0.0], 0.0), ([0.0, 0.0], 0.7)] {
            let (a, inc) = tiny.schedule_terms(alpha, tail);
            let d = DecisionVector {
                alpha1: alpha.to_vec(),
                alpha2: alpha.to_vec(),
                tail1: tail,
                tail2: tail,
                beta1: vec![0.4, -0.4],
                beta2: vec![-0.7, 0.7],
                tbr: vec![0.5, 0.5],
            };
            let got = e.assess(&d).unwrap();
            for i in 0..2 {
                assert!((got.aggregators[i] - a).abs() < 1e-12);
                assert!((got.incomes[i] - inc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn phi_fixed_point_is_centered_and_unit() {
        let p = [0.25; 4];
        let z = entropic_phi(&p, &[-1.0, 0.5, 0.0, 2.0], 2.0, 0.3, &[0.1, 0.2, -0.3, 0.0]).unwrap();
        let mean: f64 = z.iter().zip(&p).map(|(z, p)| z * p).sum();
        let m2: f64 = z.iter().zip(&p).map(|(z, p)| z * z * p).sum();
        assert!(mean.abs() < 1e-12 && (m2 - 1.0).abs() < 1e-12);
        assert!(entropic_phi(&p, &[1.0; 4], 2.0, 0.0, &[0.0; 4]).is_none());
    }

    #[test]
    fn support_enumeration_finds_matching_pennies() {
        let t = PayoffTable::new(vec![vec![1.0, -1.0], vec![-1.0, 1.0]], vec![vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let eq = support_enumeration(&t);
        assert_eq!(eq.len(), 1);
        assert!(eq[0].first.iter().all(|p| (p - 0.5).abs() < 1e-12));
        assert!(deviation_gain(&t, &eq[0]) < 1e-12);
    }

    #[test]
    fn lp_vertex_suite_passes() {
        assert!(Suite::LpVertex.run().unwrap().passed());
    }
}
