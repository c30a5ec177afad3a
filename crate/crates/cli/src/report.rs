//! `report`: side-by-side comparison of run records.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::plot::{Chart, Series};
use crate::record::Record;
use crate::CliError;

const ORDER: [&str; 3] = ["monopoly-1", "monopoly-2", "duopoly"];

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub markdown: String,
    /// `(file name, svg)`.
    pub charts: Vec<(String, String)>,
    /// Whether all records share one probability space.
    pub consistent: bool,
}

fn space_key(r: &Record) -> (usize, Vec<u64>) {
    let s = &r.scenario.space;
    let weights = s
        .weights
        .clone()
        .unwrap_or_else(|| vec![1.0 / s.atoms as f64; s.atoms]);
    (s.atoms, weights.iter().map(|w| w.to_bits()).collect())
}

fn column_name(r: &Record, all: &[&Record]) -> String {
    let clashes = all.iter().filter(|o| o.label == r.label).count() > 1;
    if clashes {
        format!("{} ({})", r.label, r.scenario.name)
    } else {
        r.label.clone()
    }
}

fn arrow(from: f64, to: f64) -> String {
    format!("{from:.2} → {to:.2}")
}

fn risk_table(records: &[&Record]) -> String {
    let mut out = String::new();
    let names: Vec<String> = records.iter().map(|r| column_name(r, records)).collect();
    let _ = writeln!(out, "| | {} |", names.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(records.len()));
    let mut row = |label: &str, cell: &dyn Fn(&Record) -> String| {
        let cells: Vec<String> = records.iter().map(|r| cell(r)).collect();
        let _ = writeln!(out, "| {label} | {} |", cells.join(" | "));
    };
    let res = |r: &Record| r.risk().map(|o| o.result.clone()).expect("risk records only");
    row("firm 1 risk", &|r| {
        let x = res(r);
        arrow(x.initial_risks[0], x.assessments[0])
    });
    row("firm 2 risk", &|r| {
        let x = res(r);
        arrow(x.initial_risks[1], x.assessments[1])
    });
    row("aggregate", &|r| {
        let x = res(r);
        arrow(x.initial_aggregate, x.aggregate)
    });
    row("fix-mix K", &|r| res(r).fix_mix_k.map_or("n/a".into(), |k| format!("{k:.3}")));
    row("IR satisfied", &|r| {
        let x = res(r);
        format!("{} / {}", x.ir_satisfied[0], x.ir_satisfied[1])
    });
    row("transfer", &|r| {
        let t = &r.risk().expect("risk records only").transfer;
        match (t.transfer, t.interval) {
            (Some(v), Some((lo, hi))) => format!("{v:.3} in [{lo:.3}, {hi:.3}]"),
            _ => "none admissible".into(),
        }
    });
    row("rent", &|r| format!("{:.3}", r.risk().expect("risk records only").transfer.rent));
    out
}

fn profit_table(records: &[&Record]) -> String {
    let mut out = String::new();
    let names: Vec<String> = records.iter().map(|r| r.scenario.name.clone()).collect();
    let _ = writeln!(out, "| | {} |", names.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(records.len()));
    let p = |r: &Record| r.profit().cloned().expect("profit records only");
    let rows: [(&str, Box<dyn Fn(&Record) -> String>); 4] = [
        ("catalogues", Box::new(|r| {
            let (a, b) = p(r).table.shape();
            format!("{a} x {b}")
        })),
        ("method", Box::new(|r| format!("{:?}", p(r).nash.method))),
        ("certificate", Box::new(|r| format!("{:.2e}", p(r).nash.certificate))),
        ("payoffs", Box::new(|r| {
            let x = p(r).payoffs;
            format!("{:.4} / {:.4}", x[0], x[1])
        })),
    ];
    for (label, f) in rows {
        let cells: Vec<String> = records.iter().map(|r| f(r)).collect();
        let _ = writeln!(out, "| {label} | {} |", cells.join(" | "));
    }
    out
}

fn rank(r: &Record) -> usize {
    ORDER.iter().position(|l| *l == r.label).unwrap_or(ORDER.len())
}

pub fn build(records: &[Record]) -> Report {
    let mut md = String::from("# Risk-sharing comparison\n\n");
    let keys: Vec<_> = records.iter().map(space_key).collect();
    let consistent = keys.windows(2).all(|w| w[0] == w[1]);
    if !consistent {
        md.push_str(
            "> **Warning:** these records use different probability spaces. \
             Each record is tabulated on its own and nothing is compared across them.\n\n",
        );
    }
    let mut risk: Vec<&Record> = records.iter().filter(|r| r.risk().is_some()).collect();
    risk.sort_by_key(|r| rank(r));
    let profit: Vec<&Record> = records.iter().filter(|r| r.profit().is_some()).collect();

    let mut charts = Vec::new();
    if consistent {
        if !risk.is_empty() {
            md.push_str("## Risk minimization\n\n");
            md.push_str(&risk_table(&risk));
            md.push('\n');
            let duo = risk.iter().find(|r| r.label == "duopoly");
            let best_mono = risk
                .iter()
                .filter(|r| r.label.starts_with("monopoly"))
                .map(|r| r.risk().expect("risk").result.aggregate)
                .fold(f64::INFINITY, f64::min);
            if let (Some(d), true) = (duo, best_mono.is_finite()) {
                let agg = d.risk().expect("risk").result.aggregate;
                let _ = writeln!(
                    md,
                    "Duopoly aggregate {agg:.3} against best monopoly {best_mono:.3}: gain {:.3}.\n",
                    best_mono - agg
                );
            }
            for i in 0..2 {
                let first = risk[0].risk().expect("risk");
                let mut chart = Chart::new(
                    format!("Firm {} claim profiles", i + 1),
                    "elementary event",
                    "payoff",
                )
                .with(Series::indexed(format!("W{}", i + 1), &first.endowments[i]).with_markers());
                for r in &risk {
                    let o = r.risk().expect("risk");
                    chart = chart.with(Series::indexed(column_name(r, &risk), &o.positions[i]).with_markers());
                }
                let name = format!("claims-firm{}.svg", i + 1);
                let _ = writeln!(md, "![Firm {} claim profiles]({name})\n", i + 1);
                charts.push((name, chart.render()));
            }
        }
        if !profit.is_empty() {
            md.push_str("## Catalogue game\n\n");
            md.push_str(&profit_table(&profit));
            md.push('\n');
        }
    } else {
        for r in records {
            let _ = writeln!(md, "## {} ({} atoms)\n", r.scenario.name, r.scenario.space.atoms);
            md.push_str(&if r.risk().is_some() { risk_table(&[r]) } else { profit_table(&[r]) });
            md.push('\n');
        }
    }
    Report {
        markdown: md,
        charts,
        consistent,
    }
}

pub fn write(report: &Report, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    let mut paths = Vec::new();
    let md = dir.join("report.md");
    std::fs::write(&md, &report.markdown).map_err(CliError::io(format!("writing {}", md.display())))?;
    paths.push(md);
    for (name, svg) in &report.charts {
        let p = dir.join(name);
        std::fs::write(&p, svg).map_err(CliError::io(format!("writing {}", p.display())))?;
        paths.push(p);
    }
    Ok(paths)
}
