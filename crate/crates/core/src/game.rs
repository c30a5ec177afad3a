//! The profit-maximization catalogue game on a finite skeleton: products on a
//! convex-combination grid, price grids, per-type profits, tie-breaking
//! payoffs, the ε-shift transform and a mixed-strategy equilibrium search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::TieBreakRule;
use crate::prob::{mv_value, Claim, ProbSpace, TypeGrid};

const TIE_TOL: f64 = 1e-12;

/// A grid product: a convex combination of a firm's basic products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub weights: Vec<f64>,
    pub claim: Claim,
    pub cost: f64,
    mean: f64,
    variance: f64,
}

impl Product {
    fn utility(&self, theta: f64) -> f64 {
        mv_value(self.mean, self.variance, theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogueGrid {
    space: ProbSpace,
    types: TypeGrid,
    basic_products: [Vec<Claim>; 2],
    basic_costs: [Vec<f64>; 2],
    hull_step: f64,
    prices: Vec<f64>,
    bound: f64,
    products: [Vec<Product>; 2],
}

impl CatalogueGrid {
    /// Builds the product hulls. `hull_step` must divide 1; prices must lie
    /// in `[−M², M]` for the bound `M`.
    pub fn new(
        space: ProbSpace,
        types: TypeGrid,
        basic_products: [Vec<Claim>; 2],
        basic_costs: [Vec<f64>; 2],
        hull_step: f64,
        prices: Vec<f64>,
        bound: f64,
    ) -> Result<Self> {
        let steps = (1.0 / hull_step).round();
        if !(hull_step > 0.0 && hull_step <= 1.0) || ((steps * hull_step) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidGame(format!("hull step {hull_step} must divide 1")));
        }
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidGame(format!("price bound {bound} must be positive")));
        }
        if prices.is_empty() {
            return Err(Error::InvalidGame("price grid is empty".into()));
        }
        if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p >= -bound * bound && **p <= bound)) {
            return Err(Error::InvalidGame(format!(
                "price {p} outside [{}, {bound}]",
                -bound * bound
            )));
        }
        let mut products = [Vec::new(), Vec::new()];
        for firm in 0..2 {
            let basics = &basic_products[firm];
            if basics.is_empty() {
                return Err(Error::InvalidGame(format!("firm {} has no basic products", firm + 1)));
            }
            if basic_costs[firm].len() != basics.len() {
                return Err(Error::DimensionMismatch {
                    expected: basics.len(),
                    actual: basic_costs[firm].len(),
                });
            }
            for b in basics {
                space.check(b)?;
            }
            if basic_costs[firm].iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("basic product cost"));
            }
            for weights in simplex_grid(basics.len(), steps as usize) {
                let mut claim = Claim::zeros(space.atom_count());
                for (w, b) in weights.iter().zip(basics) {
                    claim = claim.axpy(*w, b);
                }
                let cost = weights.iter().zip(&basic_costs[firm]).map(|(w, c)| w * c).sum();
                let mean = space.mean(&claim)?;
                let variance = space.variance(&claim)?;
                products[firm].push(Product {
                    weights,
                    claim,
                    cost,
                    mean,
                    variance,
                });
            }
        }
        Ok(Self {
            space,
            types,
            basic_products,
            basic_costs,
            hull_step,
            prices,
            bound,
            products,
        })
    }

    pub fn space(&self) -> &ProbSpace {
        &self.space
    }

    pub fn types(&self) -> &TypeGrid {
        &self.types
    }

    pub fn products(&self, firm: usize) -> &[Product] {
        &self.products[firm]
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn hull_step(&self) -> f64 {
        self.hull_step
    }

    pub fn basic_products(&self, firm: usize) -> &[Claim] {
        &self.basic_products[firm]
    }

    pub fn basic_costs(&self, firm: usize) -> &[f64] {
        &self.basic_costs[firm]
    }

    fn check_catalogue(&self, firm: usize, cat: &Catalogue) -> Result<()> {
        let count = self.products[firm].len();
        if let Some(c) = cat.contracts.iter().find(|c| c.product.is_some_and(|p| p >= count)) {
            return Err(Error::InvalidGame(format!(
                "contract refers to product {:?} of firm {}, which has {count}",
                c.product,
                firm + 1
            )));
        }
        Ok(())
    }

    /// `K_i(X)` of a contract; the null contract costs nothing.
    pub fn cost(&self, firm: usize, contract: &Contract) -> f64 {
        contract.product.map_or(0.0, |p| self.products[firm][p].cost)
    }
}

/// All weight vectors with entries in `{0, 1/steps, …, 1}` summing to one.
fn simplex_grid(dim: usize, steps: usize) -> Vec<Vec<f64>> {
    fn fill(prefix: &mut Vec<usize>, dim: usize, left: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == dim {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            fill(prefix, dim, left - k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    fill(&mut Vec::new(), dim, steps, &mut out);
    out.into_iter()
        .map(|v| v.into_iter().map(|k| k as f64 / steps as f64).collect())
        .collect()
}

/// A product (or the null claim) offered at a price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub product: Option<usize>,
    pub price: f64,
}

impl Contract {
    pub const NULL: Contract = Contract {
        product: None,
        price: 0.0,
    };

    pub fn new(product: usize, price: f64) -> Self {
        Self {
            product: Some(product),
            price,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalogue {
    contracts: Vec<Contract>,
}

impl Catalogue {
    /// A catalogue holding `contracts` and the null contract.
    pub fn new(mut contracts: Vec<Contract>) -> Self {
        if !contracts.contains(&Contract::NULL) {
            contracts.insert(0, Contract::NULL);
        }
        Self { contracts }
    }

    pub fn null() -> Self {
        Self::new(Vec::new())
    }

    pub fn contracts(&self) -> &[Contract] {
        &self.contracts
    }

    pub fn is_null(&self) -> bool {
        self.contracts.iter().all(|c| *c == Contract::NULL)
    }
}

/// A type's best indirect utility from one catalogue and the best profit
/// among the contracts attaining it.
fn best_offer(game: &CatalogueGrid, firm: usize, cat: &Catalogue, theta: f64) -> (f64, f64) {
    let products = &game.products[firm];
    let value = |c: &Contract| match c.product {
        Some(p) => products[p].utility(theta) - c.price,
        None => -c.price,
    };
    let v = cat.contracts.iter().map(value).fold(f64::NEG_INFINITY, f64::max);
    let profit = cat
        .contracts
        .iter()
        .filter(|c| value(c) >= v - TIE_TOL)
        .map(|c| c.price - game.cost(firm, c))
        .fold(f64::NEG_INFINITY, f64::max);
    (v, profit)
}

/// Per-type profits `π_i = max{p − K_i(X) : (X, p) best for θ}` when
/// `v_i ≥ v_{−i}`, else zero. Types with no positive utility stay out.
pub fn per_type_profit(game: &CatalogueGrid, theta: f64, cat1: &Catalogue, cat2: &Catalogue) -> Result<(f64, f64)> {
    game.types.check_type(theta)?;
    game.check_catalogue(0, cat1)?;
    game.check_catalogue(1, cat2)?;
    Ok(profit_pair(game, theta, cat1, cat2))
}

fn profit_pair(game: &CatalogueGrid, theta: f64, cat1: &Catalogue, cat2: &Catalogue) -> (f64, f64) {
    let (v1, p1) = best_offer(game, 0, cat1, theta);
    let (v2, p2) = best_offer(game, 1, cat2, theta);
    if v1.max(v2) <= TIE_TOL {
        return (0.0, 0.0);
    }
    let pi1 = if v1 >= v2 - TIE_TOL { p1 } else { 0.0 };
    let pi2 = if v2 >= v1 - TIE_TOL { p2 } else { 0.0 };
    (pi1, pi2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TbrMode {
    /// Ties go to the firm with the larger profit, split evenly on equal profits.
    Efficient,
    /// Ties go against the firm whose payoff is reported.
    WorstCase,
    Fixed(TieBreakRule),
}

/// `Π_i = Σ_k π_i(θ_k) f_i(θ_k) μ_k` over the type-grid midpoints.
pub fn payoff(game: &CatalogueGrid, cat1: &Catalogue, cat2: &Catalogue, mode: &TbrMode) -> Result<[f64; 2]> {
    game.check_catalogue(0, cat1)?;
    game.check_catalogue(1, cat2)?;
    if let TbrMode::Fixed(rule) = mode {
        game.types.check_len(rule.weights())?;
    }
    Ok(payoff_unchecked(game, cat1, cat2, mode))
}

fn payoff_unchecked(game: &CatalogueGrid, cat1: &Catalogue, cat2: &Catalogue, mode: &TbrMode) -> [f64; 2] {
    let mut total = [0.0; 2];
    for (k, (theta, mu)) in game
        .types
        .midpoints()
        .into_iter()
        .zip(game.types.cell_weights())
        .enumerate()
    {
        let (pi1, pi2) = profit_pair(game, theta, cat1, cat2);
        let (v1, _) = best_offer(game, 0, cat1, theta);
        let (v2, _) = best_offer(game, 1, cat2, theta);
        if v1.max(v2) <= TIE_TOL {
            continue;
        }
        let tied = (v1 - v2).abs() <= TIE_TOL;
        let (f1, f2) = if !tied {
            if v1 > v2 {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            }
        } else {
            match mode {
                TbrMode::Efficient => {
                    if pi1 > pi2 {
                        (1.0, 0.0)
                    } else if pi2 > pi1 {
                        (0.0, 1.0)
                    } else {
                        (0.5, 0.5)
                    }
                }
                TbrMode::WorstCase => (0.0, 0.0),
                TbrMode::Fixed(rule) => (rule.weights()[k], 1.0 - rule.weights()[k]),
            }
        };
        total[0] += mu * pi1 * f1;
        total[1] += mu * pi2 * f2;
    }
    total
}

/// `{(X, p − ε) : (X, p) ∈ C, p − ε ≥ K(X)} ∪ {(0, 0)}`.
pub fn epsilon_shift(game: &CatalogueGrid, firm: usize, cat: &Catalogue, eps: f64) -> Result<Catalogue> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidGame(format!("shift {eps} must be positive")));
    }
    game.check_catalogue(firm, cat)?;
    let kept = cat
        .contracts
        .iter()
        .filter(|c| c.product.is_some())
        .filter(|c| c.price - eps >= game.cost(firm, c))
        .map(|c| Contract {
            product: c.product,
            price: c.price - eps,
        })
        .collect();
    Ok(Catalogue::new(kept))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MenuSize {
    /// The null catalogue and every single contract with the null option.
    Single,
    /// Additionally every pair of contracts.
    Pairs,
}

/// Finite strategy set of one firm, refused beyond `cap` catalogues.
pub fn enumerate_catalogues(game: &CatalogueGrid, firm: usize, menus: MenuSize, cap: usize) -> Result<Vec<Catalogue>> {
    let singles: Vec<Contract> = (0..game.products[firm].len())
        .flat_map(|p| game.prices.iter().map(move |price| Contract::new(p, *price)))
        .collect();
    let s = singles.len();
    let count = 1 + s + if menus == MenuSize::Pairs { s * s.saturating_sub(1) / 2 } else { 0 };
    if count > cap {
        return Err(Error::EnumerationCap { firm: firm + 1, count, cap });
    }
    let mut out = Vec::with_capacity(count);
    out.push(Catalogue::null());
    out.extend(singles.iter().map(|c| Catalogue::new(vec![*c])));
    if menus == MenuSize::Pairs {
        for i in 0..s {
            for j in (i + 1)..s {
                out.push(Catalogue::new(vec![singles[i], singles[j]]));
            }
        }
    }
    Ok(out)
}

/// Bimatrix of payoffs: `first[r][c]` and `second[r][c]` for row catalogue
/// `r` of firm 1 against column catalogue `c` of firm 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffTable {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl PayoffTable {
    pub fn new(first: Vec<Vec<f64>>, second: Vec<Vec<f64>>) -> Result<Self> {
        let rows = first.len();
        let cols = first.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGame("empty payoff table".into()));
        }
        let rect = |m: &Vec<Vec<f64>>| m.len() == rows && m.iter().all(|r| r.len() == cols);
        if !rect(&first) || !rect(&second) {
            return Err(Error::InvalidGame("payoff tables must share one rectangular shape".into()));
        }
        if first.iter().chain(&second).flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("payoff table"));
        }
        Ok(Self { first, second })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.first.len(), self.first[0].len())
    }
}

/// Payoffs of every catalogue pair, computed in parallel over rows.
pub fn payoff_table(game: &CatalogueGrid, cats1: &[Catalogue], cats2: &[Catalogue], mode: &TbrMode) -> Result<PayoffTable> {
    for c in cats1 {
        game.check_catalogue(0, c)?;
    }
    for c in cats2 {
        game.check_catalogue(1, c)?;
    }
    if let TbrMode::Fixed(rule) = mode {
        game.types.check_len(rule.weights())?;
    }
    let rows: Vec<Vec<[f64; 2]>> = cats1
        .par_iter()
        .map(|c1| cats2.iter().map(|c2| payoff_unchecked(game, c1, c2, mode)).collect())
        .collect();
    let first = rows.iter().map(|r| r.iter().map(|p| p[0]).collect()).collect();
    let second = rows.iter().map(|r| r.iter().map(|p| p[1]).collect()).collect();
    PayoffTable::new(first, second)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedProfile {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl MixedProfile {
    pub fn pure(rows: usize, cols: usize, r: usize, c: usize) -> Self {
        let mut first = vec![0.0; rows];
        let mut second = vec![0.0; cols];
        first[r] = 1.0;
        second[c] = 1.0;
        Self { first, second }
    }

    pub fn check(&self, table: &PayoffTable) -> Result<()> {
        let (rows, cols) = table.shape();
        for (p, len) in [(&self.first, rows), (&self.second, cols)] {
            if p.len() != len {
                return Err(Error::DimensionMismatch {
                    expected: len,
                    actual: p.len(),
                });
            }
            if p.iter().any(|x| !(*x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidGame("mixed strategy must be a probability vector".into()));
            }
        }
        Ok(())
    }
}

/// Largest gain from a pure deviation by either firm.
pub fn certificate(table: &PayoffTable, profile: &MixedProfile) -> Result<f64> {
    profile.check(table)?;
    Ok(certificate_unchecked(table, &profile.first, &profile.second))
}

fn certificate_unchecked(table: &PayoffTable, x: &[f64], y: &[f64]) -> f64 {
    let (rows, cols) = table.shape();
    let row_values: Vec<f64> = (0..rows).map(|r| (0..cols).map(|c| table.first[r][c] * y[c]).sum()).collect();
    let col_values: Vec<f64> = (0..cols).map(|c| (0..rows).map(|r| table.second[r][c] * x[r]).sum()).collect();
    let achieved1: f64 = row_values.iter().zip(x).map(|(v, p)| v * p).sum();
    let achieved2: f64 = col_values.iter().zip(y).map(|(v, p)| v * p).sum();
    let best1 = row_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best2 = col_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (best1 - achieved1).max(best2 - achieved2).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NashConfig {
    pub max_iterations: usize,
    pub threshold: f64,
    /// Run the complementary-pivoting fallback when fictitious play does not
    /// certify the threshold.
    pub pivot_fallback: bool,
}

impl Default for NashConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            threshold: 0.01,
            pivot_fallback: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NashMethod {
    PureScan,
    FictitiousPlay,
    LemkeHowson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashOutcome {
    pub profile: MixedProfile,
    pub certificate: f64,
    pub certified: bool,
    pub method: NashMethod,
    pub iterations: usize,
}

/// All pure equilibria, row-major.
pub fn pure_equilibria(table: &PayoffTable) -> Vec<(usize, usize)> {
    let (rows, cols) = table.shape();
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let best_row = (0..rows).all(|r2| table.first[r2][c] <= table.first[r][c] + TIE_TOL);
            let best_col = (0..cols).all(|c2| table.second[r][c2] <= table.second[r][c] + TIE_TOL);
            if best_row && best_col {
                out.push((r, c));
            }
        }
    }
    out
}

/// Equilibrium search on a bimatrix: pure scan, then fictitious play, then
/// Lemke–Howson when play has not reached the threshold.
pub fn solve_bimatrix(table: &PayoffTable, config: &NashConfig) -> NashOutcome {
    let (rows, cols) = table.shape();
    if let Some(&(r, c)) = pure_equilibria(table).first() {
        let profile = MixedProfile::pure(rows, cols, r, c);
        let eps = certificate_unchecked(table, &profile.first, &profile.second);
        return NashOutcome {
            profile,
            certificate: eps,
            certified: eps <= config.threshold,
            method: NashMethod::PureScan,
            iterations: 0,
        };
    }

    let (mut best, iterations) = fictitious_play(table, config);
    if best.certificate > config.threshold && config.pivot_fallback {
        if let Some(profile) = lemke_howson_best(table) {
            let eps = certificate_unchecked(table, &profile.first, &profile.second);
            if eps < best.certificate {
                best = NashOutcome {
                    profile,
                    certificate: eps,
                    certified: false,
                    method: NashMethod::LemkeHowson,
                    iterations,
                };
            }
        }
    }
    best.certified = best.certificate <= config.threshold;
    best
}

fn fictitious_play(table: &PayoffTable, config: &NashConfig) -> (NashOutcome, usize) {
    let (rows, cols) = table.shape();
    let mut counts_x = vec![0.0; rows];
    let mut counts_y = vec![0.0; cols];
    counts_x[0] = 1.0;
    counts_y[0] = 1.0;
    // Running payoffs against the opponent's counts.
    let mut row_score: Vec<f64> = (0..rows).map(|r| table.first[r][0]).collect();
    let mut col_score: Vec<f64> = (0..cols).map(|c| table.second[0][c]).collect();
    let argmax = |v: &[f64]| {
        v.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, x)| if *x > b.1 + 1e-15 { (i, *x) } else { b })
            .0
    };
    let normalize = |c: &[f64]| {
        let t: f64 = c.iter().sum();
        c.iter().map(|v| v / t).collect::<Vec<f64>>()
    };
    let mut best = NashOutcome {
        profile: MixedProfile::pure(rows, cols, 0, 0),
        certificate: f64::INFINITY,
        certified: false,
        method: NashMethod::FictitiousPlay,
        iterations: 0,
    };
    let check_every = 16;
    let mut it = 0;
    while it < config.max_iterations {
        it += 1;
        let r = argmax(&row_score);
        let c = argmax(&col_score);
        counts_x[r] += 1.0;
        counts_y[c] += 1.0;
        for (rr, s) in row_score.iter_mut().enumerate() {
            *s += table.first[rr][c];
        }
        for (cc, s) in col_score.iter_mut().enumerate() {
            *s += table.second[r][cc];
        }
        if it % check_every == 0 || it == config.max_iterations {
            let x = normalize(&counts_x);
            let y = normalize(&counts_y);
            let eps = certificate_unchecked(table, &x, &y);
            if eps < best.certificate {
                best.profile = MixedProfile { first: x, second: y };
                best.certificate = eps;
                best.iterations = it;
            }
            if eps <= config.threshold {
                break;
            }
        }
    }
    (best, it)
}

/// Runs Lemke–Howson from every initially dropped label and keeps the profile
/// with the smallest certificate.
fn lemke_howson_best(table: &PayoffTable) -> Option<MixedProfile> {
    let (rows, cols) = table.shape();
    (0..rows + cols)
        .filter_map(|label| lemke_howson(table, label))
        .map(|p| {
            let eps = certificate_unchecked(table, &p.first, &p.second);
            (p, eps)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(p, _)| p)
}

struct LhTableau {
    cells: Vec<Vec<f64>>,
    basis: Vec<usize>,
}

impl LhTableau {
    fn pivot_in(&mut self, col: usize) -> Option<usize> {
        let rhs = self.cells[0].len() - 1;
        let mut pick: Option<(usize, f64)> = None;
        for (i, row) in self.cells.iter().enumerate() {
            if row[col] > 1e-12 {
                let ratio = row[rhs] / row[col];
                if pick.is_none_or(|(_, r)| ratio < r - 1e-14) {
                    pick = Some((i, ratio));
                }
            }
        }
        let (row, _) = pick?;
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
        Some(std::mem::replace(&mut self.basis[row], col))
    }

    fn value(&self, var: usize) -> f64 {
        let rhs = self.cells[0].len() - 1;
        self.basis
            .iter()
            .position(|b| *b == var)
            .map_or(0.0, |row| self.cells[row][rhs])
    }
}

/// Complementary pivoting on the polytopes `{x ≥ 0 : Bᵀx ≤ 1}` and
/// `{y ≥ 0 : Ay ≤ 1}` with labels `0..m` for rows and `m..m+n` for columns.
fn lemke_howson(table: &PayoffTable, dropped: usize) -> Option<MixedProfile> {
    let (m, n) = table.shape();
    let shift = |t: &Vec<Vec<f64>>| {
        let min = t.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        1.0 - min.min(0.0)
    };
    let (sa, sb) = (shift(&table.first), shift(&table.second));

    // P: variables x_0..x_m (labels 0..m), slacks s_0..s_n (labels m..m+n).
    let mut p = LhTableau {
        cells: (0..n)
            .map(|j| {
                let mut row = vec![0.0; m + n + 1];
                for i in 0..m {
                    row[i] = table.second[i][j] + sb;
                }
                row[m + j] = 1.0;
                row[m + n] = 1.0;
                row
            })
            .collect(),
        basis: (m..m + n).collect(),
    };
    // Q: variables y_0..y_n (labels m..m+n), slacks r_0..r_m (labels 0..m).
    let mut q = LhTableau {
        cells: (0..m)
            .map(|i| {
                let mut row = vec![0.0; n + m + 1];
                for j in 0..n {
                    row[j] = table.first[i][j] + sa;
                }
                row[n + i] = 1.0;
                row[n + m] = 1.0;
                row
            })
            .collect(),
        basis: (n..n + m).collect(),
    };
    let p_label = |var: usize| var; // x_i → i, s_j → m + j
    let q_label = |var: usize| if var < n { m + var } else { var - n };
    let p_var = |label: usize| label;
    let q_var = |label: usize| if label >= m { label - m } else { n + label };

    let mut in_p = dropped < m;
    let mut label = dropped;
    for _ in 0..(10 * (m + n) * (m + n) + 100) {
        let left = if in_p {
            p_label(p.pivot_in(p_var(label))?)
        } else {
            q_label(q.pivot_in(q_var(label))?)
        };
        if left == dropped {
            let x: Vec<f64> = (0..m).map(|i| p.value(i).max(0.0)).collect();
            let y: Vec<f64> = (0..n).map(|j| q.value(j).max(0.0)).collect();
            let (tx, ty) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
            if tx <= 0.0 || ty <= 0.0 {
                return None;
            }
            return Some(MixedProfile {
                first: x.iter().map(|v| v / tx).collect(),
                second: y.iter().map(|v| v / ty).collect(),
            });
        }
        label = left;
        in_p = !in_p;
    }
    None
}

/// Enumerates both firms' catalogues, tabulates efficient-TBR payoffs and
/// searches for an equilibrium.
pub fn mixed_nash(
    game: &CatalogueGrid,
    menus: MenuSize,
    enumeration_cap: usize,
    config: &NashConfig,
) -> Result<(Vec<Catalogue>, Vec<Catalogue>, PayoffTable, NashOutcome)> {
    let cats1 = enumerate_catalogues(game, 0, menus, enumeration_cap)?;
    let cats2 = enumerate_catalogues(game, 1, menus, enumeration_cap)?;
    let table = payoff_table(game, &cats1, &cats2, &TbrMode::Efficient)?;
    let outcome = solve_bimatrix(&table, config);
    Ok((cats1, cats2, table, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_game() -> CatalogueGrid {
        let space = ProbSpace::uniform(3).unwrap();
        let types = TypeGrid::uniform(0.05, 5).unwrap();
        let basics = [
            vec![Claim(vec![1.0, 0.0, -0.5]), Claim(vec![0.3, 0.3, 0.2])],
            vec![Claim(vec![0.0, 1.2, -0.4]), Claim(vec![0.2, 0.1, 0.4])],
        ];
        CatalogueGrid::new(space, types, basics, [vec![0.1, 0.2], vec![0.15, 0.1]], 0.5, vec![0.05, 0.15, 0.3], 2.0)
            .unwrap()
    }

    #[test]
    fn simplex_grid_counts() {
        assert_eq!(simplex_grid(2, 2).len(), 3);
        assert_eq!(simplex_grid(3, 4).len(), 15);
        assert!(simplex_grid(3, 4).iter().all(|w| (w.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn hull_products_and_costs() {
        let g = small_game();
        assert_eq!(g.products(0).len(), 3);
        let mid = &g.products(0)[1];
        assert_eq!(mid.weights, vec![0.5, 0.5]);
        assert!((mid.cost - 0.15).abs() < 1e-15);
        assert!((mid.claim[0] - 0.65).abs() < 1e-15);
    }

    #[test]
    fn grid_validation() {
        let space = ProbSpace::uniform(2).unwrap();
        let types = TypeGrid::uniform(0.05, 2).unwrap();
        let basics = || [vec![Claim(vec![1.0, 0.0])], vec![Claim(vec![0.0, 1.0])]];
        let costs = || [vec![0.0], vec![0.0]];
        assert!(CatalogueGrid::new(space.clone(), types.clone(), basics(), costs(), 0.3, vec![0.1], 1.0).is_err());
        assert!(CatalogueGrid::new(space.clone(), types.clone(), basics(), costs(), 0.5, vec![1.5], 1.0).is_err());
        assert!(CatalogueGrid::new(space.clone(), types.clone(), basics(), costs(), 0.5, vec![], 1.0).is_err());
        assert!(CatalogueGrid::new(space.clone(), types.clone(), basics(), [vec![], vec![0.0]], 0.5, vec![0.1], 1.0).is_err());
        assert!(CatalogueGrid::new(space, types, basics(), costs(), 0.5, vec![-1.0, 1.0], 1.0).is_ok());
    }

    #[test]
    fn null_catalogues_earn_nothing() {
        let g = small_game();
        let n = Catalogue::null();
        assert_eq!(per_type_profit(&g, 0.5, &n, &n).unwrap(), (0.0, 0.0));
        assert_eq!(payoff(&g, &n, &n, &TbrMode::Efficient).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn strictly_better_offer_wins() {
        let g = small_game();
        // Same product, firm 1 cheaper: firm 1 serves every participating type.
        let c1 = Catalogue::new(vec![Contract::new(2, 0.05)]);
        let c2 = Catalogue::new(vec![Contract::new(2, 0.15)]);
        for theta in [0.1, 0.5, 0.9] {
            let (_, p2) = per_type_profit(&g, theta, &c1, &c2).unwrap();
            assert_eq!(p2, 0.0);
        }
    }

    #[test]
    fn symmetric_catalogues_split_evenly() {
        let space = ProbSpace::uniform(2).unwrap();
        let types = TypeGrid::uniform(0.05, 4).unwrap();
        let b = vec![Claim(vec![1.0, 0.2])];
        let g = CatalogueGrid::new(space, types, [b.clone(), b], [vec![0.1], vec![0.1]], 1.0, vec![0.2, 0.4], 1.0).unwrap();
        let c = Catalogue::new(vec![Contract::new(0, 0.2)]);
        let [p1, p2] = payoff(&g, &c, &c, &TbrMode::Efficient).unwrap();
        assert!(p1 > 0.0);
        assert_eq!(p1, p2);
        let [w1, w2] = payoff(&g, &c, &c, &TbrMode::WorstCase).unwrap();
        assert_eq!((w1, w2), (0.0, 0.0));
    }

    #[test]
    fn outside_option_when_utility_is_not_positive() {
        let g = small_game();
        let pricey = Catalogue::new(vec![Contract::new(0, 0.3)]);
        // Product 0 of firm 1 is the second basic (weights (0, 1)): mean 0.2667 < 0.3.
        assert_eq!(g.products(0)[0].weights, vec![0.0, 1.0]);
        assert_eq!(per_type_profit(&g, 0.05, &pricey, &Catalogue::null()).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn epsilon_shift_cases() {
        let g = small_game();
        assert!(epsilon_shift(&g, 0, &Catalogue::null(), 0.1).unwrap().is_null());
        let c = Catalogue::new(vec![Contract::new(1, 0.15), Contract::new(2, 0.3)]);
        let s = epsilon_shift(&g, 0, &c, 0.1).unwrap();
        // Product 1 costs 0.15, so 0.05 < K drops it; product 2 costs 0.1 and stays at 0.2.
        assert_eq!(s.contracts(), &[Contract::NULL, Contract { product: Some(2), price: 0.3 - 0.1 }]);
        assert!(epsilon_shift(&g, 0, &c, 1.0).unwrap().is_null());
        assert!(epsilon_shift(&g, 0, &c, 0.0).is_err());
    }

    #[test]
    fn enumeration_and_cap() {
        let g = small_game();
        let singles = enumerate_catalogues(&g, 0, MenuSize::Single, 100).unwrap();
        assert_eq!(singles.len(), 1 + 3 * 3);
        let pairs = enumerate_catalogues(&g, 0, MenuSize::Pairs, 100).unwrap();
        assert_eq!(pairs.len(), 1 + 9 + 36);
        assert_eq!(
            enumerate_catalogues(&g, 1, MenuSize::Pairs, 20),
            Err(Error::EnumerationCap { firm: 2, count: 46, cap: 20 })
        );
    }

    #[test]
    fn bad_catalogue_rejected() {
        let g = small_game();
        let bad = Catalogue::new(vec![Contract::new(7, 0.1)]);
        assert!(payoff(&g, &bad, &Catalogue::null(), &TbrMode::Efficient).is_err());
        assert!(per_type_profit(&g, 2.0, &Catalogue::null(), &Catalogue::null()).is_err());
    }

    #[test]
    fn matching_pennies_has_mixed_equilibrium() {
        let t = PayoffTable::new(vec![vec![1.0, -1.0], vec![-1.0, 1.0]], vec![vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        assert!(pure_equilibria(&t).is_empty());
        let out = solve_bimatrix(&t, &NashConfig::default());
        assert!(out.certified);
        assert!((out.profile.first[0] - 0.5).abs() < 0.01);
        let exact = lemke_howson(&t, 0).unwrap();
        assert!((exact.first[0] - 0.5).abs() < 1e-12 && (exact.second[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pivoting_solves_cyclic_game() {
        let a = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        let b = vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let t = PayoffTable::new(a, b).unwrap();
        assert!(pure_equilibria(&t).is_empty());
        for label in 0..6 {
            let p = lemke_howson(&t, label).unwrap();
            assert!(certificate(&t, &p).unwrap() < 1e-12, "label {label}");
        }
        let out = solve_bimatrix(&t, &NashConfig::default());
        assert!(out.certified, "{out:?}");
    }

    #[test]
    fn certificate_of_pure_profile() {
        let t = PayoffTable::new(vec![vec![2.0, 0.0], vec![3.0, 1.0]], vec![vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let p = MixedProfile::pure(2, 2, 0, 0);
        assert!((certificate(&t, &p).unwrap() - 1.0).abs() < 1e-15);
        assert!(certificate(&t, &MixedProfile { first: vec![1.0], second: vec![1.0, 0.0] }).is_err());
        assert_eq!(pure_equilibria(&t), vec![(1, 1)]);
    }
}
