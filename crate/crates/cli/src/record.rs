//! Run records: everything a run produced, minus wall time, so reruns of an
//! identical scenario compare byte for byte.

use std::path::Path;

use riskshare_core::game::{Catalogue, NashOutcome, PayoffTable};
use riskshare_core::planner::{CollinearityReport, PlannerResult, TransferOutcome};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::scenario::Scenario;
use crate::CliError;

pub const TOOL: &str = "riskshare";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskOutcome {
    pub result: PlannerResult,
    pub transfer: TransferOutcome,
    pub collinearity: CollinearityReport,
    /// Per firm; `None` for non-entropic firms.
    pub fixed_point_residuals: [Option<f64>; 2],
    pub endowments: [Vec<f64>; 2],
    /// `W_i − a_i Z_i`.
    pub positions: [Vec<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitOutcome {
    pub catalogues: [Vec<Catalogue>; 2],
    pub table: PayoffTable,
    pub pure_equilibria: Vec<(usize, usize)>,
    pub nash: NashOutcome,
    /// Expected payoffs under the reported profile.
    pub payoffs: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "lowercase")]
pub enum Outcome {
    Risk(Box<RiskOutcome>),
    Profit(Box<ProfitOutcome>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub tool: String,
    pub version: String,
    pub label: String,
    /// SHA-256 of the effective scenario in canonical TOML.
    pub scenario_sha256: String,
    /// Git-style blob digest (SHA-256) of the scenario source as read.
    pub input_digest: String,
    pub scenario: Scenario,
    pub outcome: Outcome,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// `sha256("blob <len>\0" ‖ content)`.
pub fn blob_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Record {
    pub fn new(scenario: Scenario, source: &str, outcome: Outcome) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            label: scenario.run_label().into(),
            scenario_sha256: sha256_hex(scenario.to_toml().as_bytes()),
            input_digest: blob_digest(source.as_bytes()),
            scenario,
            outcome,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("records serialize");
        s.push('\n');
        s
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{} is not a run record: {e}", path.display())))
    }

    pub fn risk(&self) -> Option<&RiskOutcome> {
        match &self.outcome {
            Outcome::Risk(r) => Some(r),
            Outcome::Profit(_) => None,
        }
    }

    pub fn profit(&self) -> Option<&ProfitOutcome> {
        match &self.outcome {
            Outcome::Profit(p) => Some(p),
            Outcome::Risk(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_digest_matches_git_sha256_format() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(
            blob_digest(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
