use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskshare_core::prob::{Claim, ProbSpace, TypeGrid};
use riskshare_core::risk::{axiom_battery, Axiom, RiskMeasure, RiskMeasureSpec};

fn samples(rng: &mut ChaCha8Rng, count: usize, d: usize) -> Vec<Claim> {
    (0..count)
        .map(|k| {
            let scale = [0.1, 1.0, 4.0][k % 3];
            Claim((0..d).map(|_| scale * rng.random_range(-1.0..1.0)).collect())
        })
        .collect()
}

fn measures() -> Vec<RiskMeasureSpec> {
    vec![
        RiskMeasureSpec::entropic(0.5).unwrap(),
        RiskMeasureSpec::entropic(2.0).unwrap(),
        RiskMeasureSpec::avar(0.05).unwrap(),
        RiskMeasureSpec::avar(0.3).unwrap(),
        RiskMeasureSpec::avar(1.0).unwrap(),
    ]
}

#[test]
fn axioms_hold_on_500_claims_per_measure() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for space in [ProbSpace::uniform(14).unwrap(), ProbSpace::new(vec![0.1, 0.25, 0.05, 0.3, 0.2, 0.1]).unwrap()] {
        for rho in measures() {
            let claims = samples(&mut rng, 500, space.atom_count());
            let report = axiom_battery(&rho, &space, &claims).unwrap();
            assert!(report.passed(), "{rho:?}: {:?}", &report.violations[..report.violations.len().min(3)]);
            assert!(report.checks >= 500 * 8);
        }
    }
}

#[test]
fn battery_flags_a_broken_measure() {
    // Variance penalty: not monotone, not cash invariant.
    struct MeanVariance;
    impl RiskMeasure for MeanVariance {
        fn evaluate(&self, space: &ProbSpace, x: &[f64]) -> riskshare_core::Result<f64> {
            Ok(-space.mean(x)? + space.variance(x)?)
        }
        fn subgradient(&self, space: &ProbSpace, x: &[f64]) -> riskshare_core::Result<Claim> {
            Ok(Claim::zeros(space.atom_count()).axpy(1.0, x))
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let space = ProbSpace::uniform(5).unwrap();
    let report = axiom_battery(&MeanVariance, &space, &samples(&mut rng, 60, 5)).unwrap();
    assert!(report.count(Axiom::Monotonicity) > 0);
    assert_eq!(report.count(Axiom::CashInvariance), 0);
    assert_eq!(report.count(Axiom::Convexity), 0);
}

#[test]
fn subgradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let space = ProbSpace::new(vec![0.15, 0.05, 0.2, 0.1, 0.3, 0.2]).unwrap();
    let mut worst: f64 = 0.0;
    for rho in measures() {
        for x in samples(&mut rng, 200, 6) {
            let g = rho.subgradient(&space, &x).unwrap();
            let h = 1e-6 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            for k in 0..6 {
                let mut up = x.0.clone();
                let mut dn = x.0.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (rho.evaluate(&space, &up).unwrap() - rho.evaluate(&space, &dn).unwrap()) / (2.0 * h);
                worst = worst.max((fd - g[k]).abs() / g[k].abs().max(1e-3));
            }
        }
    }
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn utility_bounds_and_equicontinuity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let space = ProbSpace::uniform(8).unwrap();
    let grid = TypeGrid::uniform(0.05, 6).unwrap();
    for _ in 0..1000 {
        // The lower bound −M² needs M ≥ 1: a constant −M has utility −M.
        let m = rng.random_range(1.0..5.0);
        let ball = |rng: &mut ChaCha8Rng| {
            let raw = Claim((0..8).map(|_| rng.random_range(-1.0..1.0)).collect());
            let r = rng.random_range(0.0..=1.0) * m / space.l2_norm(&raw).unwrap();
            raw.scaled(r)
        };
        let (x, y) = (ball(&mut rng), ball(&mut rng));
        let theta = rng.random_range(0.05..=1.0);
        let u = grid.mv_utility(&space, grid.lower(), &x).unwrap();
        assert!(u >= -m * m - 1e-12 && u <= m + 1e-12);
        let ux = grid.mv_utility(&space, theta, &x).unwrap();
        let uy = grid.mv_utility(&space, theta, &y).unwrap();
        let dist = space.l2_norm(&x.axpy(-1.0, &y)).unwrap();
        assert!((ux - uy).abs() <= (1.0 + 4.0 * m) * dist + 1e-12);
    }
}
