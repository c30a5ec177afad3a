//! One PASS/FAIL line per acceptance criterion.

use std::time::{Duration, Instant};

use riskshare_cli::oracle::{OracleReport, Suite};
use riskshare_cli::record::Record;
use riskshare_cli::run::{execute, Overrides};
use riskshare_cli::scenario::{Scenario, BUNDLED};
use riskshare_core::planner::fix_mix_decision;

const RUNTIME_LIMIT: Duration = Duration::from_secs(60);

struct Ledger {
    lines: Vec<(usize, bool, String)>,
}

impl Ledger {
    fn record(&mut self, criterion: usize, pass: bool, detail: String) {
        println!("criterion {criterion}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((criterion, pass, detail));
    }
}

fn bundled(name: &str) -> (Scenario, &'static str) {
    let b = BUNDLED.iter().find(|b| b.name == name).unwrap();
    (Scenario::parse(b.source, b.name).unwrap(), b.source)
}

fn timed_run(name: &str, freeze: Option<Option<f64>>) -> (Record, Duration) {
    let (mut s, src) = bundled(name);
    Overrides {
        freeze_tbr: freeze,
        ..Overrides::default()
    }
    .apply(&mut s)
    .unwrap();
    let start = Instant::now();
    let record = execute(&s, src).unwrap();
    (record, start.elapsed())
}

fn suite(s: Suite) -> OracleReport {
    let r = s.run().unwrap();
    if !r.passed() {
        eprint!("{r}");
    }
    r
}

fn value(r: &OracleReport, name: &str) -> f64 {
    r.check(name).unwrap_or_else(|| panic!("{}: no check `{name}`", r.suite)).value
}

#[test]
fn acceptance_criteria() {
    let mut ledger = Ledger { lines: Vec::new() };

    let (entropic, _) = bundled("entropic-duopoly");
    let pre = entropic.economy().unwrap().pre_trade_risks();
    let agg = pre[0] + pre[1];
    ledger.record(
        1,
        (pre[0] - 3.53).abs() <= 0.01 && (pre[1] - 3.84).abs() <= 0.01 && (agg - 7.36).abs() <= 0.02,
        format!("initial risks {:.4}, {:.4}, aggregate {agg:.4}", pre[0], pre[1]),
    );

    let (m1, t1) = timed_run("entropic-duopoly", Some(Some(1.0)));
    let (m2, t2) = timed_run("entropic-duopoly", Some(Some(0.0)));
    let (r1, r2) = (&m1.risk().unwrap().result, &m2.risk().unwrap().result);
    ledger.record(
        2,
        r1.assessments[0] <= 2.25
            && r1.aggregate <= 6.10
            && r2.assessments[1] <= 2.40
            && r2.aggregate <= 5.85
            && t1 <= RUNTIME_LIMIT
            && t2 <= RUNTIME_LIMIT,
        format!(
            "TBR=1: firm 1 {:.4}, aggregate {:.4} ({:.1?}); TBR=0: firm 2 {:.4}, aggregate {:.4} ({:.1?})",
            r1.assessments[0], r1.aggregate, t1, r2.assessments[1], r2.aggregate, t2
        ),
    );

    let (duo, td) = timed_run("entropic-duopoly", None);
    let rd = &duo.risk().unwrap().result;
    ledger.record(
        3,
        rd.aggregate <= 5.55 && rd.aggregate < r1.aggregate && rd.aggregate < r2.aggregate && td <= RUNTIME_LIMIT,
        format!(
            "duopoly aggregate {:.4} against monopolies {:.4}, {:.4} ({td:.1?})",
            rd.aggregate, r1.aggregate, r2.aggregate
        ),
    );

    let economy = entropic.economy().unwrap();
    let (k_ok, detail) = match rd.fix_mix_k {
        Some(k) => {
            let d = fix_mix_decision(rd, k).unwrap();
            let fixed = economy.assemble_objective(&d).unwrap();
            let change = (fixed.aggregate - rd.aggregate).abs();
            (
                (0.34..=0.50).contains(&k) && change < 1e-6,
                format!("K = {k:.4}, aggregate change under constant K {change:.2e}"),
            )
        }
        None => (false, "no fix-mix ratio".into()),
    };
    ledger.record(4, k_ok, detail);

    let (avar, ta) = timed_run("avar-duopoly", None);
    let ra = &avar.risk().unwrap().result;
    ledger.record(
        5,
        (ra.initial_aggregate - 0.68).abs() <= 0.01 && ra.aggregate <= 0.30 && ta <= RUNTIME_LIMIT,
        format!("initial {:.4}, final {:.4} ({ta:.1?})", ra.initial_aggregate, ra.aggregate),
    );

    let props = [
        suite(Suite::RiskAxioms),
        suite(Suite::FdGradients),
        suite(Suite::ScheduleProperties),
        suite(Suite::EfficientTbr),
    ];
    ledger.record(
        6,
        props.iter().all(|r| r.passed()),
        format!(
            "axiom violations {}, subgradient error {:.1e}, schedule violations {}, envelope residual {:.1e}, efficient gap {:.1e}",
            value(&props[0], "axiom violations (500 claims per measure)"),
            value(&props[1], "risk subgradient max relative error"),
            value(&props[2], "monotonicity violations")
                + value(&props[2], "convexity violations")
                + value(&props[2], "negativity violations"),
            value(&props[2], "envelope residual"),
            value(&props[3], "efficient aggregate vs integral of max profit"),
        ),
    );

    let tiny = suite(Suite::TinyBruteForce);
    let nash = suite(Suite::SupportEnumeration);
    ledger.record(
        7,
        tiny.passed() && nash.passed(),
        format!(
            "solver {:.6} vs grid {:.6}; max certificate {:.2e}, pure mismatches {}",
            value(&tiny, "solver aggregate"),
            value(&tiny, "zoomed grid optimum"),
            value(&nash, "max certificate"),
            value(&nash, "pure instances not matching support enumeration"),
        ),
    );

    let fp = duo.risk().unwrap().fixed_point_residuals;
    let fp_suite = suite(Suite::FixedPoint);
    let residuals: Vec<f64> = fp.iter().map(|r| r.unwrap_or(f64::INFINITY)).collect();
    ledger.record(
        8,
        residuals.iter().all(|r| *r <= 0.05) && fp_suite.passed(),
        format!("residuals {:.2e}, {:.2e}", residuals[0], residuals[1]),
    );

    let mut identical = true;
    let mut digests = Vec::new();
    for b in &BUNDLED {
        let s = Scenario::parse(b.source, b.name).unwrap();
        let first = execute(&s, b.source).unwrap().to_json();
        let second = execute(&s, b.source).unwrap().to_json();
        identical &= first.as_bytes() == second.as_bytes();
        digests.push(format!("{} {}", b.name, &riskshare_cli::record::sha256_hex(first.as_bytes())[..12]));
    }
    ledger.record(9, identical, digests.join(", "));

    let failed: Vec<usize> = ledger.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    assert_eq!(ledger.lines.len(), 9);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
