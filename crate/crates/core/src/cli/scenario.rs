use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{AssetSet, MarketModel, Scenario, WeightFunction};
use crate::optimizer_continuous::{ContinuousAsset, DensityModel, Quadrature};
use crate::optimizer_discrete::RootPolicy;

use super::CliError;

type Matrix = Vec<Vec<f64>>;

/// One risky asset of a discrete scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSpec {
    pub name: String,
    /// Return per unit stake on each transition `i -> k` (`m x m`).
    pub returns: Matrix,
}

/// Simulation settings stored in a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub horizon: usize,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "unit_capital")]
    pub z0: f64,
}

fn unit_capital() -> f64 {
    1.0
}

/// A scenario file: either a finite-state market (`states`, `transition`,
/// `assets`) or IID trials from a density (`density`, `asset`).
///
/// ```json
/// {
///   "states": ["lose", "win"],
///   "transition": [[0.4, 0.6], [0.4, 0.6]],
///   "assets": [{"name": "coin", "returns": [[-1, 1], [-1, 1]]}],
///   "b": 0.5
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Matrix>,
    /// Law of the first state; defaults to the first transition row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assets: Option<Vec<AssetSpec>>,
    /// Outcome weights; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Matrix>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset: Option<ContinuousAsset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<Quadrature>,

    /// Ruin threshold on every one-step gross factor.
    pub b: f64,
    /// Riskless rate; its presence switches on the riskless recursion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_policy: Option<RootPolicy>,
    /// Fractions to simulate or check instead of the solved optimum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<Matrix>,
    /// Calibrating function to check or simulate against instead of the
    /// one built from the optimal fractions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrating: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSpec>,
}

/// The market form of a validated config.
#[derive(Debug, Clone, PartialEq)]
pub enum Market {
    Discrete(Scenario),
    Continuous {
        density: DensityModel,
        asset: ContinuousAsset,
        b: f64,
        rho_eff: f64,
    },
}

impl ScenarioConfig {
    fn is_discrete(&self) -> bool {
        self.states.is_some() || self.transition.is_some() || self.assets.is_some()
    }

    fn is_continuous(&self) -> bool {
        self.density.is_some() || self.asset.is_some()
    }

    /// Builds and validates the market described by the config.
    pub fn market(&self) -> Result<Market, CliError> {
        match (self.is_discrete(), self.is_continuous()) {
            (true, true) => Err(CliError::Lib(Error::InvalidInput(
                "give either states/transition/assets or density/asset, not both".into(),
            ))),
            (false, false) => Err(CliError::Lib(Error::InvalidInput(
                "no market: give states/transition/assets or density/asset".into(),
            ))),
            (true, false) => self.discrete().map(Market::Discrete),
            (false, true) => self.continuous(),
        }
    }

    fn discrete(&self) -> Result<Scenario, CliError> {
        let missing =
            |field: &str| CliError::Lib(Error::InvalidInput(format!("missing field `{field}`")));
        let transition = self
            .transition
            .clone()
            .ok_or_else(|| missing("transition"))?;
        let specs = self.assets.as_ref().ok_or_else(|| missing("assets"))?;
        let m = transition.len();
        let states = self
            .states
            .clone()
            .unwrap_or_else(|| (0..m).map(|i| i.to_string()).collect());
        let initial = match &self.initial {
            Some(v) => v.clone(),
            None => transition.first().cloned().unwrap_or_default(),
        };
        let iid = transition.windows(2).all(|w| w[0] == w[1]);
        let model = MarketModel {
            states,
            transition,
            initial,
            iid,
        };
        let assets = AssetSet {
            names: specs.iter().map(|a| a.name.clone()).collect(),
            returns: specs.iter().map(|a| a.returns.clone()).collect(),
            riskless_rate: self.rho,
        };
        let weights = match &self.weights {
            Some(w) => WeightFunction { weights: w.clone() },
            None => WeightFunction::ones(m),
        };
        Ok(Scenario::new(model, assets, weights, self.b)?)
    }

    fn continuous(&self) -> Result<Market, CliError> {
        let missing =
            |field: &str| CliError::Lib(Error::InvalidInput(format!("missing field `{field}`")));
        let density = self
            .density
            .clone()
            .ok_or_else(|| missing("density"))?
            .normalized()?;
        let asset = self.asset.ok_or_else(|| missing("asset"))?;
        if self.policy.is_some() || self.calibrating.is_some() || self.weights.is_some() {
            return Err(CliError::Lib(Error::InvalidInput(
                "policy, calibrating and weights apply to discrete scenarios only".into(),
            )));
        }
        let (lo, hi) = density.support();
        asset.weight.check_nonnegative(lo, hi)?;
        asset.returns.infimum(lo, hi)?;
        Ok(Market::Continuous {
            density,
            asset,
            b: self.b,
            rho_eff: self.rho.unwrap_or(0.0),
        })
    }
}

/// Parses and validates a scenario document.
///
/// Syntax and schema errors carry the line and column; model errors name
/// the broken invariant.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, CliError> {
    let config: ScenarioConfig = serde_json::from_str(text).map_err(|e| CliError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    config.market()?;
    Ok(config)
}

/// Pretty JSON that [`parse_scenario`] reads back to an equal config.
pub fn serialize_scenario(config: &ScenarioConfig) -> String {
    serde_json::to_string_pretty(config).expect("scenario configs always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    const COIN: &str = r#"{
        "states": ["lose", "win"],
        "transition": [[0.4, 0.6], [0.4, 0.6]],
        "assets": [{"name": "coin", "returns": [[-1, 1], [-1, 1]]}],
        "b": 0.5
    }"#;

    #[test]
    fn coin_file_parses() {
        let c = parse_scenario(COIN).unwrap();
        match c.market().unwrap() {
            Market::Discrete(s) => {
                assert_eq!(s.num_states(), 2);
                assert_eq!(s.assets.num_assets(), 1);
                assert!(s.model.iid);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_threshold_is_named() {
        let text = COIN.replace(",\n        \"b\": 0.5", "");
        match parse_scenario(&text) {
            Err(CliError::Parse { message, line, .. }) => {
                assert!(message.contains("`b`"), "{message}");
                assert!(line > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_probability_names_invariant() {
        let text = COIN.replace("[[0.4, 0.6], [0.4, 0.6]]", "[[-0.4, 1.4], [0.4, 0.6]]");
        match parse_scenario(&text) {
            Err(CliError::Lib(Error::Validation(r))) => {
                assert!(r
                    .violations
                    .iter()
                    .any(|v| v.invariant.starts_with("MarketModel")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn both_market_forms_rejected() {
        let text = COIN.replace(
            "\"b\": 0.5",
            "\"b\": 0.5, \"density\": {\"kind\": \"gaussian\", \"params\": {\"sigma\": 1}}",
        );
        assert!(matches!(
            parse_scenario(&text),
            Err(CliError::Lib(Error::InvalidInput(_)))
        ));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = COIN.replace("\"b\": 0.5", "\"b\": 0.5, \"bee\": 1");
        assert!(matches!(parse_scenario(&text), Err(CliError::Parse { .. })));
    }

    #[test]
    fn round_trip() {
        let c = parse_scenario(COIN).unwrap();
        assert_eq!(parse_scenario(&serialize_scenario(&c)).unwrap(), c);
    }

    #[test]
    fn continuous_file_parses() {
        let text = r#"{
            "density": {"kind": "uniform", "params": {"lower": -1, "upper": 1}},
            "asset": {"returns": {"form": "linear", "params": {"gamma": -1}}},
            "b": 0.1
        }"#;
        let c = parse_scenario(text).unwrap();
        assert!(matches!(c.market().unwrap(), Market::Continuous { .. }));
        assert_eq!(parse_scenario(&serialize_scenario(&c)).unwrap(), c);
    }
}
