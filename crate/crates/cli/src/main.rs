use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use riskshare_cli::oracle::Suite;
use riskshare_cli::record::Record;
use riskshare_cli::run::{self, Overrides};
use riskshare_cli::scenario::{GameKind, Scenario, BUNDLED};
use riskshare_cli::{report, CliError};

/// Prints to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "riskshare", version, about = "Risk-sharing planner and catalogue-game experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario (bundled name or TOML path) and write its artifacts.
    Run {
        scenario: String,
        /// Freeze firm 1's tie-break share: 1, 0 or none.
        #[arg(long, value_enum)]
        freeze_tbr: Option<Freeze>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        game: Option<GameKind>,
    },
    /// Run an independent-oracle suite.
    Oracle {
        /// Suite name, or `all`.
        suite: String,
    },
    /// Compare run records side by side.
    Report {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out_dir: PathBuf,
    },
    /// List the bundled scenarios.
    ListScenarios {
        #[arg(long, value_enum)]
        game: Option<GameKind>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Freeze {
    #[value(name = "0")]
    Zero,
    #[value(name = "1")]
    One,
    None,
}

impl Freeze {
    fn share(self) -> Option<f64> {
        match self {
            Freeze::Zero => Some(0.0),
            Freeze::One => Some(1.0),
            Freeze::None => None,
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            scenario,
            freeze_tbr,
            seed,
            max_iter,
            out_dir,
            game,
        } => {
            let source = Scenario::source(&scenario)?;
            let mut parsed = Scenario::parse(&source, &scenario)?;
            let overrides = Overrides {
                freeze_tbr: freeze_tbr.map(Freeze::share),
                seed,
                max_iter,
                out_dir,
                game,
            };
            overrides.apply(&mut parsed)?;
            let dir = overrides.out_dir(&parsed);
            let start = Instant::now();
            let record = run::execute(&parsed, &source)?;
            let wall = start.elapsed();
            let written = run::write_artifacts(&record, &dir, wall)?;
            say!("{}wall time       {:.2} s", run::summary(&record), wall.as_secs_f64());
            say!("wrote {} files to {}", written.len(), dir.display());
            Ok(())
        }
        Command::Oracle { suite } => {
            let suites: Vec<Suite> = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                let found = Suite::ALL.iter().find(|s| s.name() == suite).copied();
                vec![found.ok_or_else(|| {
                    CliError::Usage(format!(
                        "unknown suite `{suite}`; choose one of: all, {}",
                        Suite::ALL.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ")
                    ))
                })?]
            };
            let mut failed = Vec::new();
            for s in suites {
                let r = s.run()?;
                say!("{}", r.to_string().trim_end());
                if !r.passed() {
                    failed.push(s.name());
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Oracle(failed.join(", ")))
            }
        }
        Command::Report { records, out_dir } => {
            let loaded = records.iter().map(|p| Record::load(p)).collect::<Result<Vec<_>, _>>()?;
            let rep = report::build(&loaded);
            let paths = report::write(&rep, &out_dir)?;
            say!("{}", rep.markdown.trim_end());
            say!("wrote {} files to {}", paths.len(), out_dir.display());
            Ok(())
        }
        Command::ListScenarios { game } => {
            for b in &BUNDLED {
                let s = Scenario::parse(b.source, b.name)?;
                if game.is_none_or(|g| g == s.game) {
                    say!("{:<20}{:<8}{}", b.name, s.game.as_str(), s.description);
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
