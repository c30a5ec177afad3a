/// A constraint `value(x) ≤ 0` with a (sub)gradient.
pub trait Constraint {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// `normal · x ≤ offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Constraint for AffineConstraint {
    fn value(&self, x: &[f64]) -> f64 {
        self.normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.offset
    }

    fn gradient(&self, _x: &[f64]) -> Vec<f64> {
        self.normal.clone()
    }
}

/// Moves `point` back into `{x : c(x) ≤ 0 for all c}` within the box.
///
/// Each round takes the minimum-norm step that zeroes the linearizations of
/// every violated or active constraint, doubling it up to `max_backtracks`
/// times until the worst violation drops. When those gradients are linearly
/// dependent the round falls back to a step on the most violated constraint
/// alone. Returns `None` when no progress can be made.
pub fn feasibility_repair(
    point: &[f64],
    constraints: &[&dyn Constraint],
    lower: &[f64],
    upper: &[f64],
    max_backtracks: usize,
) -> Option<Vec<f64>> {
    let clamp = |x: &mut Vec<f64>| {
        for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
            *v = v.clamp(*l, *u);
        }
    };
    let worst = |x: &[f64]| constraints.iter().map(|c| c.value(x)).fold(f64::NEG_INFINITY, f64::max);
    let mut x = point.to_vec();
    clamp(&mut x);
    let rounds = 20 * (constraints.len() + 1);
    for _ in 0..rounds {
        let values: Vec<f64> = constraints.iter().map(|c| c.value(&x)).collect();
        let violation = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if violation <= 0.0 {
            return Some(x);
        }
        let working: Vec<usize> = (0..constraints.len()).filter(|j| values[*j] > -1e-9).collect();
        let grads: Vec<Vec<f64>> = working.iter().map(|j| constraints[*j].gradient(&x)).collect();
        let targets: Vec<f64> = working.iter().map(|j| values[*j] * (1.0 + 1e-9) + 1e-15).collect();
        let direction = min_norm_step(&grads, &targets).or_else(|| {
            let j = (0..constraints.len()).max_by(|a, b| values[*a].total_cmp(&values[*b]))?;
            let g = constraints[j].gradient(&x);
            let gg: f64 = g.iter().map(|v| v * v).sum();
            (gg > 0.0).then(|| g.iter().map(|v| v * (values[j] * (1.0 + 1e-9) + 1e-15) / gg).collect())
        })?;
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..=max_backtracks {
            let mut y: Vec<f64> = x.iter().zip(&direction).map(|(v, d)| v - t * d).collect();
            clamp(&mut y);
            if worst(&y) < violation {
                next = Some(y);
                break;
            }
            t *= 2.0;
        }
        x = next?;
    }
    (worst(&x) <= 0.0).then_some(x)
}

/// `Gᵀλ` with `G Gᵀ λ = c`, or `None` for a singular Gram matrix.
fn min_norm_step(grads: &[Vec<f64>], targets: &[f64]) -> Option<Vec<f64>> {
    let k = grads.len();
    let dim = grads.first()?.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut m: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut row: Vec<f64> = (0..k).map(|j| dot(&grads[i], &grads[j])).collect();
            row.push(targets[i]);
            row
        })
        .collect();
    let scale = (0..k).map(|i| m[i][i]).fold(0.0, f64::max);
    for col in 0..k {
        let piv = (col..k).max_by(|a, b| m[*a][col].abs().total_cmp(&m[*b][col].abs()))?;
        if m[piv][col].abs() <= 1e-10 * scale {
            return None;
        }
        m.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=k {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let lambda: Vec<f64> = (0..k).map(|i| m[i][k] / m[i][i]).collect();
    Some((0..dim).map(|d| grads.iter().zip(&lambda).map(|(g, l)| g[d] * l).sum()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Ball;

    impl Constraint for Ball {
        fn value(&self, x: &[f64]) -> f64 {
            x.iter().map(|v| v * v).sum::<f64>() - 1.0
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            x.iter().map(|v| 2.0 * v).collect()
        }
    }

    #[test]
    fn feasible_point_is_unchanged() {
        let p = [0.3, -0.4];
        let out = feasibility_repair(&p, &[&Ball], &[-5.0; 2], &[5.0; 2], 10).unwrap();
        assert_eq!(out, p.to_vec());
    }

    #[test]
    fn second_moment_violation_is_repaired() {
        // Second moment 1.2 on two atoms of weight 1/2 each.
        let b = 1.2f64.sqrt();
        let p = [b, -b];
        let out = feasibility_repair(&p, &[&Ball], &[-5.0; 2], &[5.0; 2], 10).unwrap();
        assert!(Ball.value(&out) <= 0.0);
        // Moves along −p, so the direction is preserved.
        assert!((out[0] / out[1] - p[0] / p[1]).abs() < 1e-12);
    }

    #[test]
    fn unrepairable_constraint_fails() {
        let c = AffineConstraint {
            normal: vec![1.0],
            offset: -10.0,
        };
        assert!(feasibility_repair(&[0.0], &[&c], &[-1.0], &[1.0], 5).is_none());
        let flat = AffineConstraint {
            normal: vec![0.0],
            offset: -1.0,
        };
        assert!(feasibility_repair(&[0.0], &[&flat], &[-1.0], &[1.0], 5).is_none());
    }
}
