use serde::{Deserialize, Serialize};

use super::PolicyFractions;
use crate::error::{Error, Result};
use crate::model::{step_distribution, AssetSet, MarketModel, Scenario, WeightFunction};

/// Expected weighted log growth over a horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// One-step expected weighted growth from each state.
    pub per_state_beta: Vec<f64>,
    /// Sum over steps `1..=n` of the expected one-step growth.
    pub expected_total: f64,
    pub horizon: usize,
}

fn beta_for(
    model: &MarketModel,
    assets: &AssetSet,
    weights: &WeightFunction,
    i: usize,
    fractions: &[f64],
) -> Result<f64> {
    let mut total = 0.0;
    for (k, &p) in model.row(i).iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let factor = assets.growth_factor(i, k, fractions);
        if !(factor > 0.0) {
            return Err(Error::InvalidInput(format!(
                "state {i}, outcome {k}: gross factor {factor} is not positive"
            )));
        }
        total += weights.weights[i][k] * p * factor.ln();
    }
    Ok(total)
}

/// One-step expected weighted growth from state `i` under `fractions`.
pub fn state_growth(scenario: &Scenario, i: usize, fractions: &[f64]) -> Result<f64> {
    beta_for(
        &scenario.model,
        &scenario.assets,
        &scenario.weights,
        i,
        fractions,
    )
}

/// Propagates `start` through `n` steps and sums the expected growth.
pub fn expected_growth(
    policy: &PolicyFractions,
    model: &MarketModel,
    assets: &AssetSet,
    weights: &WeightFunction,
    start: &[f64],
    n: usize,
) -> Result<GrowthReport> {
    let m = model.num_states();
    if start.len() != m || policy.fractions.len() != m {
        return Err(Error::InvalidInput(format!(
            "start distribution and policy must have {m} entries"
        )));
    }
    let per_state_beta = (0..m)
        .map(|i| beta_for(model, assets, weights, i, &policy.fractions[i]))
        .collect::<Result<Vec<_>>>()?;
    let mut dist = start.to_vec();
    let mut total = 0.0;
    for _ in 0..n {
        total += dist
            .iter()
            .zip(&per_state_beta)
            .map(|(a, b)| a * b)
            .sum::<f64>();
        dist = step_distribution(model, &dist);
    }
    Ok(GrowthReport {
        per_state_beta,
        expected_total: total,
        horizon: n,
    })
}
