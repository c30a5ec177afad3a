//! Small dense linear programs with finite bounds, solved by a two-phase
//! tableau simplex under Bland's rule.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    le: Vec<(Vec<f64>, f64)>,
    eq: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
}

impl LpOutcome {
    pub fn solution(&self) -> Option<&[f64]> {
        match self {
            LpOutcome::Optimal { x, .. } => Some(x),
            LpOutcome::Infeasible => None,
        }
    }
}

impl LinearProgram {
    /// `min cost·x` subject to `lower ≤ x ≤ upper`.
    pub fn new(cost: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = cost.len();
        for v in [&lower, &upper] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: v.len(),
                });
            }
        }
        if cost.iter().chain(&lower).chain(&upper).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("linear program"));
        }
        Ok(Self {
            cost,
            lower,
            upper,
            le: Vec::new(),
            eq: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.cost.len()
    }

    /// Adds `row·x ≤ rhs`.
    pub fn less_equal(&mut self, row: Vec<f64>, rhs: f64) -> Result<&mut Self> {
        self.check_row(&row, rhs)?;
        self.le.push((row, rhs));
        Ok(self)
    }

    /// Adds `row·x = rhs`.
    pub fn equal(&mut self, row: Vec<f64>, rhs: f64) -> Result<&mut Self> {
        self.check_row(&row, rhs)?;
        self.eq.push((row, rhs));
        Ok(self)
    }

    fn check_row(&self, row: &[f64], rhs: f64) -> Result<()> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: row.len(),
            });
        }
        if !rhs.is_finite() || row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("constraint row"));
        }
        Ok(())
    }

    pub fn solve(&self) -> LpOutcome {
        let n = self.dim();
        if self.lower.iter().zip(&self.upper).any(|(l, u)| l > u) {
            return LpOutcome::Infeasible;
        }
        // Shift to y = x − lower so that 0 ≤ y ≤ span.
        let span: Vec<f64> = self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).collect();
        let shift = |row: &[f64], rhs: f64| rhs - dot(row, &self.lower);

        let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
        for (row, rhs) in &self.le {
            rows.push((row.clone(), shift(row, *rhs), false));
        }
        for (j, s) in span.iter().enumerate() {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            rows.push((row, *s, false));
        }
        for (row, rhs) in &self.eq {
            rows.push((row.clone(), shift(row, *rhs), true));
        }

        let Some(y) = Tableau::solve(n, &rows, &self.cost) else {
            return LpOutcome::Infeasible;
        };
        let x: Vec<f64> = y
            .iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .map(|((y, l), u)| (l + y).clamp(*l, *u))
            .collect();
        let objective = dot(&self.cost, &x);
        LpOutcome::Optimal { x, objective }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Tableau {
    cells: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    /// Minimizes `cost·y` over `y ≥ 0` and the given rows, where each row is
    /// `a·y ≤ b` or, when flagged, `a·y = b`.
    fn solve(n: usize, rows: &[(Vec<f64>, f64, bool)], cost: &[f64]) -> Option<Vec<f64>> {
        let m = rows.len();
        let slack_count = rows.iter().filter(|r| !r.2).count();
        let art_start = n + slack_count;
        let needs_art: Vec<bool> = rows.iter().map(|(_, b, is_eq)| *is_eq || *b < 0.0).collect();
        let art_count = needs_art.iter().filter(|x| **x).count();
        let width = art_start + art_count;

        let mut cells = vec![vec![0.0; width + 1]; m];
        let mut basis = vec![0; m];
        let mut slack = n;
        let mut art = art_start;
        for (i, (a, b, is_eq)) in rows.iter().enumerate() {
            let sign = if *b < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                cells[i][j] = sign * a[j];
            }
            cells[i][width] = sign * b;
            if !is_eq {
                cells[i][slack] = sign;
                if !needs_art[i] {
                    basis[i] = slack;
                }
                slack += 1;
            }
            if needs_art[i] {
                cells[i][art] = 1.0;
                basis[i] = art;
                art += 1;
            }
        }
        let mut t = Tableau { cells, basis, width };

        if art_count > 0 {
            let mut phase1 = vec![0.0; width];
            for c in phase1.iter_mut().skip(art_start) {
                *c = 1.0;
            }
            t.optimize(&phase1, width);
            let infeas: f64 = t
                .basis
                .iter()
                .enumerate()
                .filter(|(_, b)| **b >= art_start)
                .map(|(i, _)| t.cells[i][width])
                .sum();
            let scale = 1.0 + rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
            if infeas > FEAS_EPS * scale {
                return None;
            }
            // Drive remaining artificials out of the basis where possible.
            for i in 0..m {
                if t.basis[i] >= art_start {
                    if let Some(j) = (0..art_start).find(|&j| t.cells[i][j].abs() > 1e-9) {
                        t.pivot(i, j);
                    }
                }
            }
        }

        let mut phase2 = vec![0.0; width];
        phase2[..n].copy_from_slice(cost);
        t.optimize(&phase2, art_start);

        let mut y = vec![0.0; n];
        for (i, b) in t.basis.iter().enumerate() {
            if *b < n {
                y[*b] = t.cells[i][width].max(0.0);
            }
        }
        Some(y)
    }

    /// Runs Bland-rule pivots; only columns below `allowed` may enter.
    fn optimize(&mut self, cost: &[f64], allowed: usize) {
        let m = self.basis.len();
        let max_pivots = 50 * (m + self.width) + 1000;
        for _ in 0..max_pivots {
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced = cost[j]
                    - (0..m)
                        .map(|i| cost[self.basis[i]] * self.cells[i][j])
                        .sum::<f64>();
                reduced < -PIVOT_EPS
            });
            let Some(j) = entering else { return };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.cells[i][j];
                if a > PIVOT_EPS {
                    let ratio = self.cells[i][self.width] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, r)) => {
                            if ratio < r - 1e-12 || (ratio <= r + 1e-12 && self.basis[i] < self.basis[k]) {
                                Some((i, ratio))
                            } else {
                                Some((k, r))
                            }
                        }
                    };
                }
            }
            // Bounded variables rule out unboundedness.
            let Some((i, _)) = leave else { return };
            self.pivot(i, j);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.cells[row][col];
        for v in self.cells[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.cells[row].clone();
        for (i, r) in self.cells.iter_mut().enumerate() {
            if i != row {
                let f = r[col];
                if f != 0.0 {
                    for (v, pv) in r.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        self.basis[row] = col;
    }
}

/// Minimizes the linear model `gradient·(x − center)` over the trust region
/// `|x_j − center_j| ≤ radius_j` intersected with the box and the given
/// linear constraints. With a zero gradient and a feasible center, the
/// center is returned unchanged.
pub fn lp_trust_region(
    gradient: &[f64],
    center: &[f64],
    radius: &[f64],
    lower: &[f64],
    upper: &[f64],
    less_equal: &[(Vec<f64>, f64)],
    equal: &[(Vec<f64>, f64)],
) -> Result<Option<Vec<f64>>> {
    let n = gradient.len();
    for v in [center, radius, lower, upper] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: v.len(),
            });
        }
    }
    if gradient.iter().all(|g| *g == 0.0) {
        let in_box = center
            .iter()
            .zip(lower.iter().zip(upper))
            .all(|(c, (l, u))| c >= l && c <= u);
        let rows_ok = less_equal.iter().all(|(a, b)| dot(a, center) <= b + FEAS_EPS)
            && equal.iter().all(|(a, b)| (dot(a, center) - b).abs() <= FEAS_EPS);
        if in_box && rows_ok {
            return Ok(Some(center.to_vec()));
        }
    }
    let lo: Vec<f64> = (0..n).map(|j| lower[j].max(center[j] - radius[j])).collect();
    let hi: Vec<f64> = (0..n).map(|j| upper[j].min(center[j] + radius[j])).collect();
    let mut lp = LinearProgram::new(gradient.to_vec(), lo, hi)?;
    for (a, b) in less_equal {
        lp.less_equal(a.clone(), *b)?;
    }
    for (a, b) in equal {
        lp.equal(a.clone(), *b)?;
    }
    Ok(lp.solve().solution().map(<[f64]>::to_vec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_only_picks_corner() {
        let lp = LinearProgram::new(vec![1.0, -2.0], vec![-1.0, 0.0], vec![3.0, 4.0]).unwrap();
        match lp.solve() {
            LpOutcome::Optimal { x, objective } => {
                assert_eq!(x, vec![-1.0, 4.0]);
                assert!((objective + 9.0).abs() < 1e-12);
            }
            LpOutcome::Infeasible => panic!("feasible"),
        }
    }

    #[test]
    fn equality_and_inequality() {
        // min -x - y, x + y ≤ 1.5, x - y = 0.5, 0 ≤ x, y ≤ 1
        let mut lp = LinearProgram::new(vec![-1.0, -1.0], vec![0.0; 2], vec![1.0; 2]).unwrap();
        lp.less_equal(vec![1.0, 1.0], 1.5).unwrap();
        lp.equal(vec![1.0, -1.0], 0.5).unwrap();
        let x = lp.solve().solution().unwrap().to_vec();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        let mut lp = LinearProgram::new(vec![1.0], vec![0.0], vec![1.0]).unwrap();
        lp.less_equal(vec![-1.0], -2.0).unwrap();
        assert_eq!(lp.solve(), LpOutcome::Infeasible);
        let lp = LinearProgram::new(vec![1.0], vec![1.0], vec![0.0]).unwrap();
        assert_eq!(lp.solve(), LpOutcome::Infeasible);
    }

    #[test]
    fn trust_region_zero_gradient_returns_center() {
        let c = [0.3, -0.2];
        let x = lp_trust_region(&[0.0, 0.0], &c, &[0.1; 2], &[-1.0; 2], &[1.0; 2], &[], &[]).unwrap();
        assert_eq!(x.unwrap(), c.to_vec());
    }

    #[test]
    fn trust_region_moves_against_gradient() {
        let x = lp_trust_region(&[1.0, -1.0], &[0.0, 0.0], &[0.25; 2], &[-0.1, -1.0], &[1.0; 2], &[], &[])
            .unwrap()
            .unwrap();
        assert_eq!(x, vec![-0.1, 0.25]);
    }

    #[test]
    fn dimension_errors() {
        assert!(LinearProgram::new(vec![1.0], vec![0.0; 2], vec![1.0]).is_err());
        let mut lp = LinearProgram::new(vec![1.0], vec![0.0], vec![1.0]).unwrap();
        assert!(lp.less_equal(vec![1.0, 2.0], 0.0).is_err());
        assert!(lp.equal(vec![f64::NAN], 0.0).is_err());
    }
}
