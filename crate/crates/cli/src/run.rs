//! `run`: solve one scenario, persist the record and its artifacts.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use riskshare_core::game::{mixed_nash, pure_equilibria};
use riskshare_core::planner::{collinearity_check, entropic_fixed_point_residual, solve, transfer_sea};
use riskshare_core::risk::RiskMeasureSpec;

use crate::oracle::entropic_phi;
use crate::plot::{Chart, Series};
use crate::record::{Outcome, ProfitOutcome, Record, RiskOutcome};
use crate::scenario::{GameKind, Scenario};
use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    /// `Some(None)` unfreezes a scenario that freezes the TBR.
    pub freeze_tbr: Option<Option<f64>>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub game: Option<GameKind>,
}

impl Overrides {
    pub fn apply(&self, scenario: &mut Scenario) -> Result<(), CliError> {
        if let Some(g) = self.game {
            if g != scenario.game {
                return Err(CliError::Usage(format!(
                    "--game {} does not match scenario `{}` (game = \"{}\")",
                    g.as_str(),
                    scenario.name,
                    scenario.game.as_str()
                )));
            }
        }
        match scenario.game {
            GameKind::Risk => {
                let mut cfg = scenario.planner_config();
                if let Some(f) = self.freeze_tbr {
                    cfg.frozen_tbr = f;
                }
                if let Some(s) = self.seed {
                    cfg.seed = s;
                }
                if let Some(m) = self.max_iter {
                    cfg.max_iterations = m;
                }
                cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                scenario.solver = Some(cfg);
            }
            GameKind::Profit => {
                if self.freeze_tbr.is_some() {
                    return Err(CliError::Usage("--freeze-tbr applies to risk scenarios only".into()));
                }
                if self.seed.is_some() {
                    return Err(CliError::Usage(
                        "--seed applies to risk scenarios only; the equilibrium search is deterministic".into(),
                    ));
                }
                if let Some(m) = self.max_iter {
                    let mut cfg = scenario.nash_config();
                    cfg.max_iterations = m;
                    scenario.nash = Some(cfg);
                }
            }
        }
        scenario.validate()
    }

    pub fn out_dir(&self, scenario: &Scenario) -> PathBuf {
        if let Some(d) = &self.out_dir {
            return d.clone();
        }
        let base = match &scenario.output {
            Some(o) => PathBuf::from(&o.dir),
            None => Path::new("runs").join(&scenario.name),
        };
        match scenario.run_label() {
            "duopoly" | "catalogue-game" => base,
            label => {
                let mut name = base.file_name().map(|s| s.to_os_string()).unwrap_or_default();
                name.push(format!("-{label}"));
                base.with_file_name(name)
            }
        }
    }
}

/// Solves the scenario; `source` is the scenario text as read.
pub fn execute(scenario: &Scenario, source: &str) -> Result<Record, CliError> {
    scenario.validate()?;
    let outcome = match scenario.game {
        GameKind::Risk => Outcome::Risk(Box::new(run_risk(scenario)?)),
        GameKind::Profit => Outcome::Profit(Box::new(run_profit(scenario)?)),
    };
    Ok(Record::new(scenario.clone(), source, outcome))
}

fn run_risk(scenario: &Scenario) -> Result<RiskOutcome, CliError> {
    let economy = scenario.economy()?;
    let result = solve(&economy, &scenario.planner_config())?;
    let transfer = transfer_sea(&result);
    let collinearity = collinearity_check(&economy, &result.decision)?;
    let mut fixed_point_residuals = [None, None];
    let mut endowments: [Vec<f64>; 2] = Default::default();
    let mut positions: [Vec<f64>; 2] = Default::default();
    for (i, firm) in economy.firms().iter().enumerate() {
        if firm.risk.is_entropic() {
            fixed_point_residuals[i] = Some(entropic_fixed_point_residual(
                firm,
                economy.space(),
                result.aggregators[i],
                result.decision.beta(i),
            )?);
        }
        let a = result.aggregators[i];
        endowments[i] = firm.endowment.0.clone();
        positions[i] = firm.endowment.iter().zip(result.decision.beta(i)).map(|(w, z)| w - a * z).collect();
    }
    Ok(RiskOutcome {
        result,
        transfer,
        collinearity,
        fixed_point_residuals,
        endowments,
        positions,
    })
}

fn run_profit(scenario: &Scenario) -> Result<ProfitOutcome, CliError> {
    let game = scenario.catalogue_grid()?;
    let spec = scenario.catalogue_spec()?;
    let (c1, c2, table, nash) = mixed_nash(&game, spec.menus, spec.enumeration_cap, &scenario.nash_config())?;
    let pure = pure_equilibria(&table);
    let (x, y) = (&nash.profile.first, &nash.profile.second);
    let expected = |m: &Vec<Vec<f64>>| -> f64 {
        m.iter()
            .zip(x)
            .map(|(row, p)| p * row.iter().zip(y).map(|(v, q)| v * q).sum::<f64>())
            .sum()
    };
    let payoffs = [expected(&table.first), expected(&table.second)];
    Ok(ProfitOutcome {
        catalogues: [c1, c2],
        table,
        pure_equilibria: pure,
        nash,
        payoffs,
    })
}

fn write(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(CliError::io(format!("writing {}", path.display())))?;
    written.push(path);
    Ok(())
}

/// Writes the record, CSVs and plots into `dir` and appends to `runs.log`.
pub fn write_artifacts(record: &Record, dir: &Path, wall: Duration) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    let mut written = Vec::new();
    write(dir, "record.json", &record.to_json(), &mut written)?;
    match &record.outcome {
        Outcome::Risk(r) => risk_artifacts(record, r, dir, &mut written)?,
        Outcome::Profit(p) => profit_artifacts(p, dir, &mut written)?,
    }
    let log_path = dir.join("runs.log");
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(CliError::io(format!("opening {}", log_path.display())))?;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    writeln!(
        log,
        "{stamp}\t{}\t{}\tscenario={}\trecord={}\twall_ms={}",
        record.scenario.name,
        record.label,
        &record.scenario_sha256[..16],
        &record.digest()[..16],
        wall.as_millis()
    )
    .map_err(CliError::io(format!("appending {}", log_path.display())))?;
    written.push(log_path);
    Ok(written)
}

fn risk_artifacts(record: &Record, r: &RiskOutcome, dir: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let scenario = &record.scenario;
    let grid = scenario.type_grid()?;
    let res = &r.result;

    let mut trace = String::from("sweep,aggregate\n");
    for (k, v) in res.trace.iter().enumerate() {
        let _ = writeln!(trace, "{k},{v}");
    }
    write(dir, "trace.csv", &trace, written)?;

    let mut claims = String::from("event,endowment_1,position_1,endowment_2,position_2\n");
    for k in 0..r.endowments[0].len() {
        let _ = writeln!(
            claims,
            "{},{},{},{},{}",
            k + 1,
            r.endowments[0][k],
            r.positions[0][k],
            r.endowments[1][k],
            r.positions[1][k]
        );
    }
    write(dir, "claims.csv", &claims, written)?;

    let schedules = [res.decision.schedule(&grid, 0)?, res.decision.schedule(&grid, 1)?];
    let recs = [schedules[0].reconstruct(), schedules[1].reconstruct()];
    let prices = [schedules[0].prices(), schedules[1].prices()];
    let mut cells = String::from("cell,theta,v_1,v_2,price_1,price_2,share_1,share_2\n");
    for (k, theta) in grid.midpoints().iter().enumerate() {
        let _ = writeln!(
            cells,
            "{},{theta},{},{},{},{},{},{}",
            k + 1,
            recs[0].value[k],
            recs[1].value[k],
            prices[0][k],
            prices[1][k],
            res.shares[0][k],
            res.shares[1][k]
        );
    }
    write(dir, "schedule.csv", &cells, written)?;

    for i in 0..2 {
        let chart = Chart::new(
            format!("Firm {} claim before and after trading", i + 1),
            "elementary event",
            "payoff",
        )
        .with(Series::indexed(format!("W{}", i + 1), &r.endowments[i]).with_markers())
        .with(Series::indexed(format!("W{0} - a{0} Z{0}", i + 1), &r.positions[i]).with_markers());
        write(dir, &format!("claims-firm{}.svg", i + 1), &chart.render(), written)?;
    }

    let samples = 100;
    let thetas: Vec<f64> = (0..=samples)
        .map(|k| (grid.lower() + (1.0 - grid.lower()) * k as f64 / samples as f64).min(1.0))
        .collect();
    let mut utilities = Chart::new("Indirect utilities", "type", "v(type)");
    for (i, s) in schedules.iter().enumerate() {
        let pts = thetas.iter().map(|t| Ok((*t, s.value_at(*t)?))).collect::<Result<Vec<_>, riskshare_core::Error>>()?;
        utilities = utilities.with(Series::line(format!("v{}", i + 1), pts));
    }
    write(dir, "utilities.svg", &utilities.render(), written)?;

    let mut steps: Vec<(f64, f64)> = (0..grid.cells()).map(|k| (grid.boundary(k), res.decision.tbr[k])).collect();
    steps.push((1.0, *res.decision.tbr.last().unwrap_or(&0.0)));
    let tbr = Chart::new("Tie-break rule", "type", "share of firm 1").with(Series::step("f", steps));
    write(dir, "tbr.svg", &tbr.render(), written)?;

    let trace_chart = Chart::new("Aggregate assessment per sweep", "sweep", "aggregate")
        .with(Series::line("aggregate", res.trace.iter().enumerate().map(|(k, v)| (k as f64, *v)).collect()));
    write(dir, "trace.svg", &trace_chart.render(), written)?;

    let space = scenario.probability_space()?;
    for (i, firm) in scenario.firms.iter().enumerate() {
        if let RiskMeasureSpec::Entropic { risk_aversion } = firm.risk {
            let z = res.decision.beta(i);
            if let Some(phi) = entropic_phi(space.weights(), &r.endowments[i], risk_aversion, res.aggregators[i], z) {
                let chart = Chart::new(
                    format!("Firm {} numerical Z against fixed-point map", i + 1),
                    "elementary event",
                    "Z",
                )
                .with(Series::indexed("Z numerical", z).with_markers())
                .with(Series::indexed("Phi(Z)", &phi).with_markers());
                write(dir, &format!("fixed-point-firm{}.svg", i + 1), &chart.render(), written)?;
            }
        }
    }
    Ok(())
}

fn profit_artifacts(p: &ProfitOutcome, dir: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut table = String::from("row,column,payoff_1,payoff_2\n");
    for (r, (a, b)) in p.table.first.iter().zip(&p.table.second).enumerate() {
        for c in 0..a.len() {
            let _ = writeln!(table, "{r},{c},{},{}", a[c], b[c]);
        }
    }
    write(dir, "payoffs.csv", &table, written)?;

    let mut profile = String::from("firm,catalogue,probability,contracts\n");
    for (i, probs) in [&p.nash.profile.first, &p.nash.profile.second].into_iter().enumerate() {
        for (k, q) in probs.iter().enumerate() {
            let contracts: Vec<String> = p.catalogues[i][k]
                .contracts()
                .iter()
                .map(|c| match c.product {
                    None => "null".into(),
                    Some(j) => format!("{j}@{}", c.price),
                })
                .collect();
            let _ = writeln!(profile, "{},{k},{q},{}", i + 1, contracts.join(" "));
        }
    }
    write(dir, "profile.csv", &profile, written)?;

    let chart = Chart::new("Equilibrium mixed strategies", "catalogue index", "probability")
        .with(Series::line("firm 1", p.nash.profile.first.iter().enumerate().map(|(k, q)| (k as f64, *q)).collect()).with_markers())
        .with(Series::line("firm 2", p.nash.profile.second.iter().enumerate().map(|(k, q)| (k as f64, *q)).collect()).with_markers());
    write(dir, "profile.svg", &chart.render(), written)
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Plain-text summary printed after a run.
pub fn summary(record: &Record) -> String {
    let s = &record.scenario;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} [{}]: {} atoms, {} type cells",
        s.name, record.label, s.space.atoms, s.types.cells
    );
    match &record.outcome {
        Outcome::Risk(r) => {
            let res = &r.result;
            let _ = writeln!(out, "{:<16}{:>12}{:>12}{:>12}", "", "firm 1", "firm 2", "aggregate");
            let row = |out: &mut String, name: &str, v: [f64; 2], total: Option<f64>| {
                let total = total.map(|t| format!("{t:>12.4}")).unwrap_or_default();
                let _ = writeln!(out, "{name:<16}{:>12.4}{:>12.4}{total}", v[0], v[1]);
            };
            row(&mut out, "initial risk", res.initial_risks, Some(res.initial_aggregate));
            row(&mut out, "position risk", res.risks, None);
            row(&mut out, "income", res.incomes, None);
            row(&mut out, "final risk", res.assessments, Some(res.aggregate));
            row(&mut out, "aggregator", res.aggregators, None);
            let _ = writeln!(
                out,
                "{:<16}{:>12}{:>12}",
                "IR",
                yes(res.ir_satisfied[0]),
                yes(res.ir_satisfied[1])
            );
            match res.fix_mix_k {
                Some(k) => {
                    let _ = writeln!(out, "fix-mix K       {k:.4}");
                }
                None => {
                    let _ = writeln!(out, "fix-mix K       n/a");
                }
            }
            match (r.transfer.transfer, r.transfer.interval) {
                (Some(t), Some((lo, hi))) => {
                    let _ = writeln!(
                        out,
                        "transfer        {t:.4} in [{lo:.4}, {hi:.4}], zero admissible: {}",
                        yes(r.transfer.zero_admissible)
                    );
                }
                _ => {
                    let _ = writeln!(out, "transfer        no admissible transfer");
                }
            }
            let _ = writeln!(out, "rent            {:.4}", r.transfer.rent);
            for (i, f) in r.fixed_point_residuals.iter().enumerate() {
                if let Some(f) = f {
                    let _ = writeln!(out, "fixed point {}   {f:.2e}", i + 1);
                }
            }
            let _ = writeln!(out, "sweeps          {} (converged: {})", res.iterations, yes(res.converged));
        }
        Outcome::Profit(p) => {
            let (rows, cols) = p.table.shape();
            let _ = writeln!(out, "catalogues      {rows} x {cols}");
            let _ = writeln!(out, "pure equilibria {}", p.pure_equilibria.len());
            let _ = writeln!(
                out,
                "method          {:?} after {} iterations",
                p.nash.method, p.nash.iterations
            );
            let _ = writeln!(
                out,
                "certificate     {:.3e} (certified: {})",
                p.nash.certificate,
                yes(p.nash.certified)
            );
            let _ = writeln!(out, "payoffs         {:.6} {:.6}", p.payoffs[0], p.payoffs[1]);
        }
    }
    out
}
