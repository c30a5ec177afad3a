//! Convex, law-invariant risk measures on finite probability spaces.
//!
//! Two measures ship: the entropic risk measure
//! `ρ(X) = (1/γ) ln E[exp(−γX)]` and average value at risk `AV@R_λ`, the
//! tail average of losses over the worst `λ` of probability mass. Both
//! expose a subgradient with respect to the atom payoffs, which the planner
//! uses to linearize its objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{Claim, ProbSpace};

/// Evaluation and first-order access required by the planner.
pub trait RiskMeasure {
    fn evaluate(&self, space: &ProbSpace, position: &[f64]) -> Result<f64>;

    /// `g_k = ∂ρ/∂x_k` (a subgradient where ρ is not differentiable).
    fn subgradient(&self, space: &ProbSpace, position: &[f64]) -> Result<Claim>;

    /// Whether `ρ(tX) = tρ(X)` should hold for `t ≥ 0`.
    fn positively_homogeneous(&self) -> bool {
        false
    }
}

/// The risk measures a firm may use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RiskMeasureSpec {
    Entropic { risk_aversion: f64 },
    Avar { tail_level: f64 },
}

impl RiskMeasureSpec {
    pub fn entropic(risk_aversion: f64) -> Result<Self> {
        let spec = Self::Entropic { risk_aversion };
        spec.validate()?;
        Ok(spec)
    }

    pub fn avar(tail_level: f64) -> Result<Self> {
        let spec = Self::Avar { tail_level };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Entropic { risk_aversion } if !(risk_aversion > 0.0 && risk_aversion.is_finite()) => {
                Err(Error::InvalidRiskMeasure(format!(
                    "entropic risk aversion must be positive, got {risk_aversion}"
                )))
            }
            Self::Avar { tail_level } if !(tail_level > 0.0 && tail_level <= 1.0) => {
                Err(Error::InvalidRiskMeasure(format!(
                    "AV@R tail level must lie in (0, 1], got {tail_level}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn is_entropic(&self) -> bool {
        matches!(self, Self::Entropic { .. })
    }

    pub fn label(&self) -> String {
        match *self {
            Self::Entropic { risk_aversion } => format!("entropic(gamma={risk_aversion})"),
            Self::Avar { tail_level } => format!("avar(lambda={tail_level})"),
        }
    }
}

impl RiskMeasure for RiskMeasureSpec {
    fn evaluate(&self, space: &ProbSpace, position: &[f64]) -> Result<f64> {
        self.validate()?;
        space.check(position)?;
        if position.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("risk position"));
        }
        Ok(match *self {
            Self::Entropic { risk_aversion } => entropic(space, risk_aversion, position),
            Self::Avar { tail_level } => avar(space, tail_level, position),
        })
    }

    fn subgradient(&self, space: &ProbSpace, position: &[f64]) -> Result<Claim> {
        self.validate()?;
        space.check(position)?;
        if position.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("risk position"));
        }
        Ok(match *self {
            Self::Entropic { risk_aversion } => entropic_gradient(space, risk_aversion, position),
            Self::Avar { tail_level } => avar_gradient(space, tail_level, position),
        })
    }

    fn positively_homogeneous(&self) -> bool {
        matches!(self, Self::Avar { .. })
    }
}

/// Log-sum-exp with a max shift so `γ‖X‖∞` up to several hundred stays finite.
fn entropic(space: &ProbSpace, gamma: f64, x: &[f64]) -> f64 {
    let shift = x.iter().map(|v| -gamma * v).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = space
        .weights()
        .iter()
        .zip(x)
        .map(|(w, v)| w * (-gamma * v - shift).exp())
        .sum();
    (shift + sum.ln()) / gamma
}

fn entropic_gradient(space: &ProbSpace, gamma: f64, x: &[f64]) -> Claim {
    let shift = x.iter().map(|v| -gamma * v).fold(f64::NEG_INFINITY, f64::max);
    let tilted: Vec<f64> = space
        .weights()
        .iter()
        .zip(x)
        .map(|(w, v)| w * (-gamma * v - shift).exp())
        .collect();
    let total: f64 = tilted.iter().sum();
    Claim(tilted.into_iter().map(|t| -t / total).collect())
}

/// Probability mass each atom contributes to the worst-`λ` tail.
///
/// Atoms are ordered by loss `−x`, largest first; equal losses keep index
/// order, which fixes the boundary selection at ties.
fn tail_masses(space: &ProbSpace, lambda: f64, x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut masses = vec![0.0; x.len()];
    let mut remaining = lambda;
    for k in order {
        if remaining <= 0.0 {
            break;
        }
        let take = space.weights()[k].min(remaining);
        masses[k] = take;
        remaining -= take;
    }
    masses
}

fn avar(space: &ProbSpace, lambda: f64, x: &[f64]) -> f64 {
    let masses = tail_masses(space, lambda, x);
    masses.iter().zip(x).map(|(m, v)| -m * v).sum::<f64>() / lambda
}

fn avar_gradient(space: &ProbSpace, lambda: f64, x: &[f64]) -> Claim {
    Claim(
        tail_masses(space, lambda, x)
            .into_iter()
            .map(|m| -m / lambda)
            .collect(),
    )
}

/// Axioms exercised by [`axiom_battery`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axiom {
    Monotonicity,
    CashInvariance,
    Convexity,
    LawInvariance,
    PositiveHomogeneity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomViolation {
    pub axiom: Axiom,
    /// Indices into the sample list of the claims involved.
    pub witnesses: Vec<usize>,
    /// Parameter of the failing check (t, m, or permutation id).
    pub parameter: f64,
    /// Amount by which the inequality or identity failed.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AxiomReport {
    pub checks: usize,
    pub violations: Vec<AxiomViolation>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, axiom: Axiom) -> usize {
        self.violations.iter().filter(|v| v.axiom == axiom).count()
    }
}

const MIXING: [f64; 3] = [0.25, 0.5, 0.75];
const CASH_SHIFTS: [f64; 4] = [-2.0, -0.5, 1.0, 5.0];
const SCALES: [f64; 3] = [1.0, 2.0, 3.5];
const AXIOM_TOL: f64 = 1e-9;

/// Checks the risk-measure axioms on consecutive sample pairs.
///
/// Monotonicity compares each `X` with `X ∨ Y`. Law invariance is only
/// meaningful on uniform spaces, where permuting atoms preserves the law; it
/// is skipped otherwise. Violations are collected, never raised.
pub fn axiom_battery<R: RiskMeasure + ?Sized>(
    measure: &R,
    space: &ProbSpace,
    samples: &[Claim],
) -> Result<AxiomReport> {
    if samples.len() < 2 {
        return Err(Error::InvalidRiskMeasure(
            "axiom battery needs at least two samples".into(),
        ));
    }
    let values: Vec<f64> = samples
        .iter()
        .map(|s| measure.evaluate(space, s))
        .collect::<Result<_>>()?;

    let mut report = AxiomReport::default();
    let tol = |scale: f64| AXIOM_TOL * (1.0 + scale.abs());
    let record = |report: &mut AxiomReport, axiom, witnesses: Vec<usize>, parameter, excess: f64, scale: f64| {
        report.checks += 1;
        if excess > tol(scale) {
            report.violations.push(AxiomViolation {
                axiom,
                witnesses,
                parameter,
                excess,
            });
        }
    };

    for i in 0..samples.len() {
        let j = (i + 1) % samples.len();
        let (x, y) = (&samples[i], &samples[j]);
        let (rx, ry) = (values[i], values[j]);

        let upper = Claim(x.iter().zip(y.iter()).map(|(a, b)| a.max(*b)).collect());
        let r_upper = measure.evaluate(space, &upper)?;
        record(&mut report, Axiom::Monotonicity, vec![i, j], 0.0, r_upper - rx, rx);

        for &m in &CASH_SHIFTS {
            let shifted = measure.evaluate(space, &x.shifted(m))?;
            record(&mut report, Axiom::CashInvariance, vec![i], m, (shifted - (rx - m)).abs(), rx);
        }

        for &t in &MIXING {
            let mix = Claim(x.iter().zip(y.iter()).map(|(a, b)| t * a + (1.0 - t) * b).collect());
            let r_mix = measure.evaluate(space, &mix)?;
            let bound = t * rx + (1.0 - t) * ry;
            record(&mut report, Axiom::Convexity, vec![i, j], t, r_mix - bound, bound);
        }

        if space.is_uniform() {
            let d = x.len();
            let reversed = Claim(x.iter().rev().copied().collect());
            let rotated = Claim((0..d).map(|k| x[(k + 1) % d]).collect());
            for (id, perm) in [reversed, rotated].iter().enumerate() {
                let r_perm = measure.evaluate(space, perm)?;
                record(&mut report, Axiom::LawInvariance, vec![i], id as f64, (r_perm - rx).abs(), rx);
            }
        }

        if measure.positively_homogeneous() {
            for &t in &SCALES {
                let r_scaled = measure.evaluate(space, &x.scaled(t))?;
                record(&mut report, Axiom::PositiveHomogeneity, vec![i], t, (r_scaled - t * rx).abs(), t * rx);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scaled(v: &[f64], s: f64) -> Vec<f64> {
        v.iter().map(|x| x * s).collect()
    }

    fn w1_entropic() -> Vec<f64> {
        scaled(&[-1.0, -3.0, -9.0, -3.0, -1.0, -0.2, -0.1, -0.1, -0.2, 1.0, -3.0, -9.0, -3.0, -1.0], 0.5)
    }

    fn w2_profile() -> [f64; 14] {
        [-0.03, -0.1, -0.18, -0.2, -1.0, -3.0, -9.0, -10.0, -3.0, -1.0, -0.2, -0.18, -0.1, -0.03]
    }

    fn random_claims(rng: &mut ChaCha8Rng, count: usize, d: usize) -> Vec<Claim> {
        (0..count)
            .map(|_| Claim((0..d).map(|_| rng.random_range(-3.0..3.0)).collect()))
            .collect()
    }

    #[test]
    fn entropic_initial_risks() {
        let space = ProbSpace::uniform(14).unwrap();
        let rho = RiskMeasureSpec::entropic(2.0).unwrap();
        let r1 = rho.evaluate(&space, &w1_entropic()).unwrap();
        let r2 = rho.evaluate(&space, &scaled(&w2_profile(), 0.5)).unwrap();
        assert!((r1 - 3.53).abs() < 0.01, "{r1}");
        assert!((r2 - 3.84).abs() < 0.01, "{r2}");
    }

    #[test]
    fn entropic_zero_claim_and_overflow_guard() {
        let space = ProbSpace::uniform(4).unwrap();
        for g in [0.1, 1.0, 50.0] {
            let rho = RiskMeasureSpec::entropic(g).unwrap();
            assert_eq!(rho.evaluate(&space, &[0.0; 4]).unwrap(), 0.0);
        }
        let rho = RiskMeasureSpec::entropic(1.0).unwrap();
        let r = rho.evaluate(&space, &[-690.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(r.is_finite());
        assert!((r - (690.0 - 4f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn avar_tail_average() {
        let space = ProbSpace::uniform(14).unwrap();
        let w2 = scaled(&w2_profile(), 0.05);
        let r = RiskMeasureSpec::avar(0.1).unwrap().evaluate(&space, &w2).unwrap();
        let oracle = (0.5 / 14.0 + 0.45 * (0.1 - 1.0 / 14.0)) / 0.1;
        assert!((r - oracle).abs() < 1e-12);
        assert!((r - 0.486).abs() < 1e-3);

        let w1 = scaled(&[-1.0, -2.0, -4.0, -10.0, -4.0, -2.0, -1.0, -0.8, -0.5, -0.3, 0.0, 0.0, 0.0, 0.0], 0.02);
        let r1 = RiskMeasureSpec::avar(0.05).unwrap().evaluate(&space, &w1).unwrap();
        assert!((r1 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn avar_level_one_is_expected_loss() {
        let space = ProbSpace::new(vec![0.2, 0.3, 0.5]).unwrap();
        let x = [1.0, -2.0, 4.0];
        let rho = RiskMeasureSpec::avar(1.0).unwrap();
        let expected = -space.mean(&x).unwrap();
        assert!((rho.evaluate(&space, &x).unwrap() - expected).abs() < 1e-14);
        let g = rho.subgradient(&space, &x).unwrap();
        for (gk, wk) in g.iter().zip(space.weights()) {
            assert!((gk + wk).abs() < 1e-15);
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(RiskMeasureSpec::entropic(0.0).is_err());
        assert!(RiskMeasureSpec::entropic(-1.0).is_err());
        assert!(RiskMeasureSpec::avar(0.0).is_err());
        assert!(RiskMeasureSpec::avar(1.2).is_err());
        let bad = RiskMeasureSpec::Avar { tail_level: -0.1 };
        let space = ProbSpace::uniform(2).unwrap();
        assert!(bad.evaluate(&space, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn entropic_gradient_of_constant_is_minus_weights() {
        let space = ProbSpace::new(vec![0.1, 0.2, 0.7]).unwrap();
        let g = RiskMeasureSpec::entropic(3.0)
            .unwrap()
            .subgradient(&space, &[2.0, 2.0, 2.0])
            .unwrap();
        for (gk, wk) in g.iter().zip(space.weights()) {
            assert!((gk + wk).abs() < 1e-15);
        }
    }

    fn central_difference(rho: &RiskMeasureSpec, space: &ProbSpace, x: &[f64], k: usize, h: f64) -> f64 {
        let mut up = x.to_vec();
        let mut dn = x.to_vec();
        up[k] += h;
        dn[k] -= h;
        (rho.evaluate(space, &up).unwrap() - rho.evaluate(space, &dn).unwrap()) / (2.0 * h)
    }

    #[test]
    fn entropic_gradient_matches_finite_differences_on_w1() {
        let space = ProbSpace::uniform(14).unwrap();
        let rho = RiskMeasureSpec::entropic(2.0).unwrap();
        let x = w1_entropic();
        let g = rho.subgradient(&space, &x).unwrap();
        for k in 0..14 {
            let fd = central_difference(&rho, &space, &x, k, 1e-6);
            let rel = (fd - g[k]).abs() / g[k].abs().max(1e-3);
            assert!(rel < 1e-6, "atom {k}: fd {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn avar_gradient_matches_finite_differences_away_from_ties() {
        let space = ProbSpace::uniform(7).unwrap();
        let rho = RiskMeasureSpec::avar(0.3).unwrap();
        let x = [0.4, -1.3, 2.2, -0.7, 0.05, -2.9, 1.1];
        let g = rho.subgradient(&space, &x).unwrap();
        for k in 0..7 {
            let fd = central_difference(&rho, &space, &x, k, 1e-7);
            assert!((fd - g[k]).abs() < 1e-6, "atom {k}: fd {fd} vs {}", g[k]);
        }
        // Mass of the subgradient is the full unit of probability.
        assert!((g.iter().sum::<f64>() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn avar_tiny_level_is_worst_loss() {
        let space = ProbSpace::uniform(5).unwrap();
        let rho = RiskMeasureSpec::avar(0.01).unwrap();
        let x = [0.3, -0.8, 0.1, -0.2, 0.0];
        assert!((rho.evaluate(&space, &x).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn batteries_pass_on_random_claims() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let space = ProbSpace::uniform(10).unwrap();
        let samples = random_claims(&mut rng, 60, 10);
        let ent = axiom_battery(&RiskMeasureSpec::entropic(2.0).unwrap(), &space, &samples).unwrap();
        assert!(ent.passed(), "{:?}", ent.violations.first());
        let av = axiom_battery(&RiskMeasureSpec::avar(0.3).unwrap(), &space, &samples).unwrap();
        assert!(av.passed(), "{:?}", av.violations.first());
        assert!(av.checks > ent.checks);
    }

    #[test]
    fn battery_reports_witnesses_for_a_broken_measure() {
        struct Negated;
        impl RiskMeasure for Negated {
            fn evaluate(&self, space: &ProbSpace, x: &[f64]) -> Result<f64> {
                space.mean(x)
            }
            fn subgradient(&self, space: &ProbSpace, _x: &[f64]) -> Result<Claim> {
                Ok(Claim(space.weights().to_vec()))
            }
        }
        let space = ProbSpace::uniform(3).unwrap();
        let samples = vec![Claim(vec![0.0, 1.0, 2.0]), Claim(vec![1.0, 1.0, 5.0])];
        let report = axiom_battery(&Negated, &space, &samples).unwrap();
        assert!(report.count(Axiom::Monotonicity) > 0);
        assert!(report.count(Axiom::CashInvariance) > 0);
        assert!(report.violations.iter().all(|v| !v.witnesses.is_empty()));
    }

    #[test]
    fn battery_needs_two_samples() {
        let space = ProbSpace::uniform(3).unwrap();
        let rho = RiskMeasureSpec::entropic(1.0).unwrap();
        assert!(axiom_battery(&rho, &space, &[Claim::zeros(3)]).is_err());
    }

    #[test]
    fn cash_invariance_of_zero_claim() {
        let space = ProbSpace::uniform(4).unwrap();
        for rho in [RiskMeasureSpec::entropic(2.0).unwrap(), RiskMeasureSpec::avar(0.3).unwrap()] {
            let r = rho.evaluate(&space, &Claim::constant(4, 5.0)).unwrap();
            assert!((r + 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn continuity_along_vanishing_perturbation() {
        let space = ProbSpace::uniform(6).unwrap();
        let x = [0.3, -1.0, 2.0, 0.0, -0.4, 1.5];
        let p = [1.0, -2.0, 0.5, 3.0, -1.0, 0.25];
        for rho in [RiskMeasureSpec::entropic(1.5).unwrap(), RiskMeasureSpec::avar(0.4).unwrap()] {
            let r = rho.evaluate(&space, &x).unwrap();
            let mut prev = f64::INFINITY;
            for n in [1.0, 10.0, 100.0, 1000.0, 1e5] {
                let xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b / n).collect();
                let gap = (rho.evaluate(&space, &xn).unwrap() - r).abs();
                assert!(gap <= prev + 1e-15);
                prev = gap;
            }
            assert!(prev < 1e-4);
        }
    }

    #[test]
    fn small_risk_aversion_approaches_expected_loss() {
        let space = ProbSpace::uniform(5).unwrap();
        let x = [0.3, -1.0, 2.0, 0.0, -0.4];
        let el = -space.mean(&x).unwrap();
        let var = space.variance(&x).unwrap();
        for g in [1e-1, 1e-2, 1e-3] {
            let r = RiskMeasureSpec::entropic(g).unwrap().evaluate(&space, &x).unwrap();
            assert!((r - el).abs() <= g * var, "gamma {g}");
        }
    }
}
