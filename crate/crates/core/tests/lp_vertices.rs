//! Simplex against brute-force vertex enumeration on small random programs.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskshare_core::lp::{LinearProgram, LpOutcome};

struct Problem {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    le: Vec<(Vec<f64>, f64)>,
    eq: Vec<(Vec<f64>, f64)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Enumerates every choice of `n` active constraints among bounds, rows and
/// equalities, keeps the feasible vertices, returns the best objective.
fn vertex_optimum(p: &Problem) -> Option<f64> {
    let n = p.cost.len();
    let mut hyper: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        hyper.push((e.clone(), p.lower[j]));
        hyper.push((e, p.upper[j]));
    }
    hyper.extend(p.le.iter().cloned());
    let eq_count = p.eq.len();
    let free = n - eq_count;
    let feasible = |x: &[f64]| {
        (0..n).all(|j| x[j] >= p.lower[j] - 1e-9 && x[j] <= p.upper[j] + 1e-9)
            && p.le.iter().all(|(a, b)| dot(a, x) <= b + 1e-9)
            && p.eq.iter().all(|(a, b)| (dot(a, x) - b).abs() <= 1e-9)
    };
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; free];
    fn rec(
        start: usize,
        depth: usize,
        pick: &mut Vec<usize>,
        hyper: &[(Vec<f64>, f64)],
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if depth == pick.len() {
            visit(pick);
            return;
        }
        for i in start..hyper.len() {
            pick[depth] = i;
            rec(i + 1, depth + 1, pick, hyper, visit);
        }
    }
    let mut visit = |sel: &[usize]| {
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
    };
    rec(0, 0, &mut pick, &hyper, &mut visit);
    best
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> Problem {
    let cost = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.0)).collect();
    let upper = lower.iter().map(|l| l + rng.random_range(0.1..2.0)).collect();
    let le = (0..rng.random_range(0..4))
        .map(|_| {
            let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            (row, rng.random_range(-0.5..1.0))
        })
        .collect();
    let eq = if n > 1 && rng.random_bool(0.3) {
        vec![((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(-0.3..0.3))]
    } else {
        Vec::new()
    };
    Problem {
        cost,
        lower,
        upper,
        le,
        eq,
    }
}

#[test]
fn simplex_matches_vertex_enumeration() {
    check_against_vertices(11, 400, |rng| rng.random_range(1..=3));
}

#[test]
fn five_dimensional_instances_match_vertices() {
    check_against_vertices(12, 200, |_| 5);
}

fn check_against_vertices(seed: u64, cases: usize, dim: impl Fn(&mut ChaCha8Rng) -> usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut solved = 0;
    let mut infeasible = 0;
    for case in 0..cases {
        let n = dim(&mut rng);
        let p = random_problem(&mut rng, n);
        let mut lp = LinearProgram::new(p.cost.clone(), p.lower.clone(), p.upper.clone()).unwrap();
        for (a, b) in &p.le {
            lp.less_equal(a.clone(), *b).unwrap();
        }
        for (a, b) in &p.eq {
            lp.equal(a.clone(), *b).unwrap();
        }
        let oracle = vertex_optimum(&p);
        match (lp.solve(), oracle) {
            (LpOutcome::Optimal { objective, x }, Some(best)) => {
                assert!((objective - best).abs() < 1e-8, "case {case}: {objective} vs {best}");
                assert!(p.le.iter().all(|(a, b)| dot(a, &x) <= b + 1e-8));
                solved += 1;
            }
            (LpOutcome::Infeasible, None) => infeasible += 1,
            (got, want) => panic!("case {case}: simplex {got:?}, vertices {want:?}"),
        }
    }
    assert!(solved > cases / 2 && infeasible > 0, "solved {solved}, infeasible {infeasible}");
}
