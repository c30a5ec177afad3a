//! Scenario files: one TOML document per experiment.

use std::path::Path;

use riskshare_core::game::{CatalogueGrid, MenuSize, NashConfig};
use riskshare_core::planner::{Economy, FirmSpec, PlannerConfig, ScheduleMode};
use riskshare_core::prob::{Claim, ProbSpace, TypeGrid};
use riskshare_core::risk::RiskMeasureSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GameKind {
    /// Risk minimization: the social planner's allocation.
    Risk,
    /// Profit maximization: the catalogue game.
    Profit,
}

impl GameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GameKind::Risk => "risk",
            GameKind::Profit => "profit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub atoms: usize,
    /// Omitted for a uniform space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeSpec {
    pub lower: f64,
    pub cells: usize,
    /// μ-mass per cell; omitted for the uniform distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmEntry {
    /// Multiplies every endowment entry.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: f64,
    pub endowment: Vec<f64>,
    pub risk: RiskMeasureSpec,
}

impl FirmEntry {
    pub fn claim(&self) -> Claim {
        Claim(self.endowment.iter().map(|x| self.scale * x).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogueFirm {
    pub basic_products: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogueSpec {
    pub hull_step: f64,
    pub prices: Vec<f64>,
    pub price_bound: f64,
    pub menus: MenuSize,
    pub enumeration_cap: usize,
    pub firms: Vec<CatalogueFirm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub game: GameKind,
    #[serde(default)]
    pub schedule: ScheduleMode,
    /// The claim-norm bound `M`; metadata for property checks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_bound: Option<f64>,
    pub space: SpaceSpec,
    pub types: TypeSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub firms: Vec<FirmEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<PlannerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalogue: Option<CatalogueSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nash: Option<NashConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

pub struct Bundled {
    pub name: &'static str,
    pub source: &'static str,
}

pub const BUNDLED: [Bundled; 3] = [
    Bundled {
        name: "entropic-duopoly",
        source: include_str!("../scenarios/entropic-duopoly.toml"),
    },
    Bundled {
        name: "avar-duopoly",
        source: include_str!("../scenarios/avar-duopoly.toml"),
    },
    Bundled {
        name: "catalogue-demo",
        source: include_str!("../scenarios/catalogue-demo.toml"),
    },
];

fn invalid(key: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Scenario(format!("`{key}`: {message}"))
}

impl Scenario {
    /// Parses and validates a scenario; `origin` names the source in errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| CliError::Scenario(format!("{origin}: {e}")))?;
        scenario.validate().map_err(|e| match e {
            CliError::Scenario(m) => CliError::Scenario(format!("{origin}: {m}")),
            other => other,
        })?;
        Ok(scenario)
    }

    /// Text of a bundled scenario by name, or of a TOML file.
    pub fn source(reference: &str) -> Result<String, CliError> {
        if let Some(b) = BUNDLED.iter().find(|b| b.name == reference) {
            return Ok(b.source.to_string());
        }
        std::fs::read_to_string(Path::new(reference)).map_err(|e| {
            CliError::Usage(format!(
                "cannot read scenario `{reference}` ({e}); bundled scenarios: {}",
                BUNDLED.iter().map(|b| b.name).collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn load(reference: &str) -> Result<Self, CliError> {
        Self::parse(&Self::source(reference)?, reference)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario values are always representable in TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        self.probability_space()?;
        self.type_grid()?;
        if let Some(m) = self.claim_bound {
            if !(m > 0.0 && m.is_finite()) {
                return Err(invalid("claim_bound", format!("{m} must be positive")));
            }
        }
        match self.game {
            GameKind::Risk => {
                for key in [("catalogue", self.catalogue.is_some()), ("nash", self.nash.is_some())] {
                    if key.1 {
                        return Err(invalid(key.0, "not allowed when game = \"risk\""));
                    }
                }
                self.economy()?;
                self.planner_config().validate().map_err(|e| invalid("solver", e))?;
            }
            GameKind::Profit => {
                if !self.firms.is_empty() {
                    return Err(invalid("firms", "not allowed when game = \"profit\"; use `catalogue.firms`"));
                }
                if self.solver.is_some() {
                    return Err(invalid("solver", "not allowed when game = \"profit\"; use `nash`"));
                }
                self.catalogue_grid()?;
                let nash = self.nash_config();
                if !(nash.threshold > 0.0) || nash.max_iterations == 0 {
                    return Err(invalid("nash", "threshold and max_iterations must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn probability_space(&self) -> Result<ProbSpace, CliError> {
        match &self.space.weights {
            None => ProbSpace::uniform(self.space.atoms).map_err(|e| invalid("space.atoms", e)),
            Some(w) => {
                if w.len() != self.space.atoms {
                    return Err(invalid(
                        "space.weights",
                        format!("has {} entries, space.atoms is {}", w.len(), self.space.atoms),
                    ));
                }
                ProbSpace::new(w.clone()).map_err(|e| invalid("space.weights", e))
            }
        }
    }

    pub fn type_grid(&self) -> Result<TypeGrid, CliError> {
        match &self.types.weights {
            None => TypeGrid::uniform(self.types.lower, self.types.cells).map_err(|e| invalid("types", e)),
            Some(w) => {
                if w.len() != self.types.cells {
                    return Err(invalid(
                        "types.weights",
                        format!("has {} entries, types.cells is {}", w.len(), self.types.cells),
                    ));
                }
                TypeGrid::with_weights(self.types.lower, w.clone()).map_err(|e| invalid("types.weights", e))
            }
        }
    }

    pub fn economy(&self) -> Result<Economy, CliError> {
        if self.firms.len() != 2 {
            return Err(invalid("firms", format!("needs exactly two entries, found {}", self.firms.len())));
        }
        let space = self.probability_space()?;
        let mut specs = Vec::with_capacity(2);
        for (i, f) in self.firms.iter().enumerate() {
            if f.endowment.len() != space.atom_count() {
                return Err(invalid(
                    &format!("firms[{i}].endowment"),
                    format!("has {} entries, space.atoms is {}", f.endowment.len(), space.atom_count()),
                ));
            }
            f.risk.validate().map_err(|e| invalid(&format!("firms[{i}].risk"), e))?;
            specs.push(FirmSpec::new(f.claim(), f.risk));
        }
        let firms: [FirmSpec; 2] = specs.try_into().expect("two firms checked above");
        Economy::new(space, self.type_grid()?, firms, self.schedule).map_err(|e| invalid("firms", e))
    }

    pub fn planner_config(&self) -> PlannerConfig {
        self.solver.clone().unwrap_or_default()
    }

    pub fn nash_config(&self) -> NashConfig {
        self.nash.clone().unwrap_or_default()
    }

    pub fn catalogue_spec(&self) -> Result<&CatalogueSpec, CliError> {
        self.catalogue
            .as_ref()
            .ok_or_else(|| invalid("catalogue", "required when game = \"profit\""))
    }

    pub fn catalogue_grid(&self) -> Result<CatalogueGrid, CliError> {
        let spec = self.catalogue_spec()?;
        if spec.firms.len() != 2 {
            return Err(invalid(
                "catalogue.firms",
                format!("needs exactly two entries, found {}", spec.firms.len()),
            ));
        }
        let space = self.probability_space()?;
        for (i, f) in spec.firms.iter().enumerate() {
            if let Some(p) = f.basic_products.iter().find(|p| p.len() != space.atom_count()) {
                return Err(invalid(
                    &format!("catalogue.firms[{i}].basic_products"),
                    format!("a product has {} entries, space.atoms is {}", p.len(), space.atom_count()),
                ));
            }
        }
        let products = |i: usize| spec.firms[i].basic_products.iter().cloned().map(Claim).collect::<Vec<_>>();
        CatalogueGrid::new(
            space,
            self.type_grid()?,
            [products(0), products(1)],
            [spec.firms[0].costs.clone(), spec.firms[1].costs.clone()],
            spec.hull_step,
            spec.prices.clone(),
            spec.price_bound,
        )
        .map_err(|e| invalid("catalogue", e))
    }

    /// Label of a risk run by its tie-break setting.
    pub fn run_label(&self) -> &'static str {
        match (self.game, self.planner_config().frozen_tbr) {
            (GameKind::Profit, _) => "catalogue-game",
            (GameKind::Risk, Some(f)) if f == 1.0 => "monopoly-1",
            (GameKind::Risk, Some(f)) if f == 0.0 => "monopoly-2",
            (GameKind::Risk, Some(_)) => "frozen-tbr",
            (GameKind::Risk, None) => "duopoly",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse_and_round_trip() {
        for b in &BUNDLED {
            let s = Scenario::parse(b.source, b.name).unwrap();
            assert_eq!(s.name, b.name);
            let again = Scenario::parse(&s.to_toml(), "round trip").unwrap();
            assert_eq!(again, s);
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let text = BUNDLED[0].source.replace("max_iterations", "max_iteration");
        let err = Scenario::parse(&text, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("max_iteration"), "{err}");
        assert!(err.contains("bad.toml"));
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn dimension_errors_name_the_key() {
        let text = BUNDLED[0].source.replace("-0.03, -0.1, -0.18, -0.2, -1, -3", "-0.1, -0.18, -0.2, -1, -3");
        let err = Scenario::parse(&text, "x").unwrap_err().to_string();
        assert!(err.contains("firms[1].endowment"), "{err}");
    }

    #[test]
    fn game_kinds_are_exclusive() {
        let mut s = Scenario::parse(BUNDLED[0].source, "x").unwrap();
        s.nash = Some(NashConfig::default());
        assert!(s.validate().unwrap_err().to_string().contains("`nash`"));
        let mut p = Scenario::parse(BUNDLED[2].source, "x").unwrap();
        p.solver = Some(PlannerConfig::default());
        assert!(p.validate().unwrap_err().to_string().contains("`solver`"));
    }

    #[test]
    fn labels_follow_frozen_tbr() {
        let mut s = Scenario::parse(BUNDLED[0].source, "x").unwrap();
        assert_eq!(s.run_label(), "duopoly");
        s.solver.as_mut().unwrap().frozen_tbr = Some(1.0);
        assert_eq!(s.run_label(), "monopoly-1");
        s.solver.as_mut().unwrap().frozen_tbr = Some(0.0);
        assert_eq!(s.run_label(), "monopoly-2");
    }
}
